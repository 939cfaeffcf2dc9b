#pragma once

/*
 * Disagreement discrepancy on finite shift instances, surrogates, the per-point
 * pseudo-loss recast and the closed-form pointwise optima of the surrogates.
 *
 * Point x carries source mass pS, target mass pT and a reference label pair
 * (y1, y2). With r = pS / (alpha pT) the two pseudo-loss sides weight the
 * agreement loss and the disagreement loss as
 *
 *   side 1 (pS >= pT):  1 * l_agr(y1)   + (alpha pT / pS) * l_dis(y2)
 *   side 2 (pS <  pT):  (pS / pT) * l_agr(y1) + alpha * l_dis(y2)
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "disco/error.hpp"
#include "disco/losses.hpp"
#include "disco/numeric.hpp"

namespace disco {

enum class SurrogateKind { RG23, GLK23, Ours };

inline constexpr SurrogateKind kAllSurrogates[] = {SurrogateKind::RG23, SurrogateKind::GLK23,
                                                   SurrogateKind::Ours};

inline std::string_view to_string(SurrogateKind k)
{
    switch (k) {
    case SurrogateKind::RG23: return "RG23";
    case SurrogateKind::GLK23: return "GLK23";
    case SurrogateKind::Ours: return "OURS";
    }
    return "?";
}

inline SurrogateKind parse_surrogate(std::string_view name)
{
    if (name == "RG23" || name == "rg23" || name == "RG") return SurrogateKind::RG23;
    if (name == "GLK23" || name == "glk23" || name == "GLK") return SurrogateKind::GLK23;
    if (name == "OURS" || name == "ours") return SurrogateKind::Ours;
    throw InvalidInput("unknown surrogate kind '" + std::string(name) + "'");
}

inline LossKind disagreement_loss(SurrogateKind k)
{
    switch (k) {
    case SurrogateKind::RG23: return LossKind::RG;
    case SurrogateKind::GLK23: return LossKind::GLK;
    case SurrogateKind::Ours: return LossKind::Ours;
    }
    return LossKind::Ours;
}

struct LabelPair {
    int y1 = 0;
    int y2 = 0;
    bool agree() const { return y1 == y2; }
};

struct PointMass {
    double pS = 0.0;
    double pT = 0.0;
    LabelPair ref;
};

/* Immutable finite input space with exact source/target masses. */
class FiniteShiftInstance {
public:
    FiniteShiftInstance(int K, double alpha, std::vector<PointMass> points)
        : K_(K), alpha_(alpha), points_(std::move(points))
    {
        if (K_ < 2) throw InvalidInput("instance needs K >= 2");
        if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw InvalidInput("alpha must be > 0");
        if (points_.empty()) throw InvalidInput("instance needs at least one point");
        CompensatedSum s, t;
        for (const auto& p : points_) {
            if (!(p.pS >= 0.0) || !(p.pT >= 0.0) || !std::isfinite(p.pS) || !std::isfinite(p.pT))
                throw InvalidInput("point masses must be finite and >= 0");
            check_label(p.ref.y1, static_cast<std::size_t>(K_));
            check_label(p.ref.y2, static_cast<std::size_t>(K_));
            s.add(p.pS);
            t.add(p.pT);
        }
        if (std::abs(s.value() - 1.0) > 1e-12 || std::abs(t.value() - 1.0) > 1e-12)
            throw InvalidInput("source and target masses must each sum to 1");
    }

    int K() const { return K_; }
    double alpha() const { return alpha_; }
    std::size_t size() const { return points_.size(); }
    const PointMass& operator[](std::size_t i) const { return points_[i]; }
    const std::vector<PointMass>& points() const { return points_; }

private:
    int K_;
    double alpha_;
    std::vector<PointMass> points_;
};

inline void to_json(nlohmann::json& j, const FiniteShiftInstance& inst)
{
    j = nlohmann::json{{"K", inst.K()}, {"alpha", inst.alpha()}, {"points", nlohmann::json::array()}};
    for (const auto& p : inst.points())
        j["points"].push_back({{"pS", p.pS}, {"pT", p.pT}, {"y1", p.ref.y1}, {"y2", p.ref.y2}});
}

inline FiniteShiftInstance instance_from_json(const nlohmann::json& j)
{
    try {
        std::vector<PointMass> pts;
        for (const auto& p : j.at("points"))
            pts.push_back({p.at("pS").get<double>(), p.at("pT").get<double>(),
                           {p.at("y1").get<int>(), p.at("y2").get<int>()}});
        return FiniteShiftInstance(j.at("K").get<int>(), j.at("alpha").get<double>(), std::move(pts));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed instance JSON: ") + e.what());
    }
}

/* The same instance seen with the roles of S and T exchanged and alpha inverted. */
inline FiniteShiftInstance swap_roles(const FiniteShiftInstance& inst)
{
    std::vector<PointMass> pts;
    for (const auto& p : inst.points()) pts.push_back({p.pT, p.pS, {p.ref.y2, p.ref.y1}});
    return FiniteShiftInstance(inst.K(), 1.0 / inst.alpha(), std::move(pts));
}

/* sum_i weights_i * losses_i with compensated accumulation. */
inline double risk(std::span<const double> weights, std::span<const double> losses)
{
    if (weights.size() != losses.size()) throw InvalidInput("risk: length mismatch");
    CompensatedSum acc;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw InvalidInput("risk: weights must be >= 0");
        acc.add(weights[i] * losses[i]);
    }
    return acc.value();
}

template <class LossAt>
double risk(std::span<const double> weights, LossAt&& lossAt)
{
    CompensatedSum acc;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw InvalidInput("risk: weights must be >= 0");
        acc.add(weights[i] * lossAt(i));
    }
    return acc.value();
}

namespace detail {

inline void check_assignment(const FiniteShiftInstance& inst, std::size_t n)
{
    if (n != inst.size()) throw InvalidInput("critic assignment length must match instance size");
}

inline std::vector<double> source_masses(const FiniteShiftInstance& inst)
{
    std::vector<double> w;
    for (const auto& p : inst.points()) w.push_back(p.pS);
    return w;
}

inline std::vector<double> target_masses(const FiniteShiftInstance& inst)
{
    std::vector<double> w;
    for (const auto& p : inst.points()) w.push_back(p.pT);
    return w;
}

} // namespace detail

inline std::vector<int> labels_from_logits(const std::vector<std::vector<double>>& logits)
{
    std::vector<int> out;
    out.reserve(logits.size());
    for (const auto& s : logits) out.push_back(score_to_class(s));
    return out;
}

/* alpha * R[01, y2](T) - R[01, y1](S) for a labelled critic. */
inline double dd_true(const FiniteShiftInstance& inst, std::span<const int> labels)
{
    detail::check_assignment(inst, labels.size());
    for (int c : labels) check_label(c, static_cast<std::size_t>(inst.K()));
    const auto pS = detail::source_masses(inst);
    const auto pT = detail::target_masses(inst);
    const double target = risk(pT, [&](std::size_t i) { return inst[i].ref.y2 != labels[i] ? 1.0 : 0.0; });
    const double source = risk(pS, [&](std::size_t i) { return inst[i].ref.y1 != labels[i] ? 1.0 : 0.0; });
    return inst.alpha() * target - source;
}

/* R[CE, y1](S) + alpha * R[l_dis, y2](T). */
inline double dd_surrogate(const FiniteShiftInstance& inst,
                           const std::vector<std::vector<double>>& logits, SurrogateKind kind)
{
    detail::check_assignment(inst, logits.size());
    const auto pS = detail::source_masses(inst);
    const auto pT = detail::target_masses(inst);
    const LossKind dis = disagreement_loss(kind);
    const double agree = risk(pS, [&](std::size_t i) { return loss_eval(LossKind::CE, inst[i].ref.y1, logits[i]); });
    const double disagree = risk(pT, [&](std::size_t i) { return loss_eval(dis, inst[i].ref.y2, logits[i]); });
    return agree + inst.alpha() * disagree;
}

enum class Side { One = 1, Two = 2 };

inline bool side_active(Side side, double pS, double pT)
{
    return side == Side::One ? pS >= pT : pS < pT;
}

/* Eq.-5 style functional L_side[ell1, ell2] at one point. */
inline double pseudo_loss(Side side, double ell1, double ell2, double pS, double pT)
{
    if (!(pS >= 0.0) || !(pT >= 0.0)) throw InvalidInput("pseudo_loss: masses must be >= 0");
    if (pS == 0.0 && pT == 0.0) throw InvalidInput("pseudo_loss: point has zero source and target mass");
    if (!side_active(side, pS, pT)) return 0.0;
    return side == Side::One ? ell1 + (pT / pS) * ell2 : (pS / pT) * ell1 + ell2;
}

/*
 * Sign convention of the zero-one recast. Ascent uses L_i[-l01, alpha l01] and
 * sums to +dd_true; Descent uses L_i[l01, -alpha l01] and sums to -dd_true.
 */
enum class RecastConvention { Ascent, Descent };

/* R[M1](S) + R[M2](T); points with zero mass on both sides contribute nothing. */
inline double dd_true_recast(const FiniteShiftInstance& inst, std::span<const int> labels,
                             RecastConvention conv = RecastConvention::Ascent)
{
    detail::check_assignment(inst, labels.size());
    const double sign = conv == RecastConvention::Ascent ? 1.0 : -1.0;
    CompensatedSum s1, s2;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& p = inst[i];
        if (p.pS == 0.0 && p.pT == 0.0) continue;
        const double l1 = -sign * (p.ref.y1 != labels[i] ? 1.0 : 0.0);
        const double l2 = sign * inst.alpha() * (p.ref.y2 != labels[i] ? 1.0 : 0.0);
        s1.add(p.pS * pseudo_loss(Side::One, l1, l2, p.pS, p.pT));
        s2.add(p.pT * pseudo_loss(Side::Two, l1, l2, p.pS, p.pT));
    }
    return s1.value() + s2.value();
}

/* R[M1^](S) + R[M2^](T) with M_i^ = L_i[CE, alpha l_dis]. */
inline double dd_surr_recast(const FiniteShiftInstance& inst,
                             const std::vector<std::vector<double>>& logits, SurrogateKind kind)
{
    detail::check_assignment(inst, logits.size());
    const LossKind dis = disagreement_loss(kind);
    CompensatedSum s1, s2;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& p = inst[i];
        if (p.pS == 0.0 && p.pT == 0.0) continue;
        const double l1 = loss_eval(LossKind::CE, p.ref.y1, logits[i]);
        const double l2 = inst.alpha() * loss_eval(dis, p.ref.y2, logits[i]);
        s1.add(p.pS * pseudo_loss(Side::One, l1, l2, p.pS, p.pT));
        s2.add(p.pT * pseudo_loss(Side::Two, l1, l2, p.pS, p.pT));
    }
    return s1.value() + s2.value();
}

/*
 * Per-point weights on the agreement loss (agree) and on the disagreement loss
 * (dis, alpha included). r = agree / dis.
 */
struct PseudoWeights {
    double agree = 0.0;
    double dis = 0.0;
    double ratio() const
    {
        return dis == 0.0 ? std::numeric_limits<double>::infinity() : agree / dis;
    }
};

/* Weights of the side at a point, zero when that side is inactive. */
inline PseudoWeights pseudo_weights(Side side, double pS, double pT, double alpha)
{
    if (!(pS >= 0.0) || !(pT >= 0.0)) throw InvalidInput("masses must be >= 0");
    if (pS == 0.0 && pT == 0.0) throw InvalidInput("point has zero source and target mass");
    if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
    if (!side_active(side, pS, pT)) return {0.0, 0.0};
    if (side == Side::One) return {1.0, alpha * pT / pS};
    return {pS / pT, alpha};
}

/*
 * Weights of a side parametrised by r = pS / (alpha pT), ignoring the side's
 * activity indicator: side 1 gives (1, 1/r), side 2 gives (alpha r, alpha).
 */
inline PseudoWeights side_weights(Side side, double r, double alpha)
{
    if (!(r >= 0.0)) throw InvalidInput("r must be >= 0");
    if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
    if (side == Side::One) {
        if (r == 0.0) throw InvalidInput("side 1 undefined at r = 0");
        return {1.0, std::isinf(r) ? 0.0 : 1.0 / r};
    }
    if (std::isinf(r)) throw InvalidInput("side 2 undefined at r = infinity");
    return {alpha * r, alpha};
}

inline double b_K(int K, double r)
{
    if (K < 3) throw InvalidInput("b_K needs K >= 3");
    if (!(r >= 0.0)) throw InvalidInput("b_K needs r >= 0");
    const double km1 = K - 1;
    return 0.5 * (r - 1.0) * km1 + std::sqrt(km1 * r + 0.25 * km1 * km1 * (r - 1.0) * (r - 1.0));
}

/* Whether score_to_class of the surrogate optimum equals y1. */
enum class Relation { Agree, Disagree, Tie, Either };

inline std::string_view to_string(Relation r)
{
    switch (r) {
    case Relation::Agree: return "agree";
    case Relation::Disagree: return "disagree";
    case Relation::Tie: return "tie";
    case Relation::Either: return "either";
    }
    return "?";
}

struct PointwiseOptimum {
    double value = 0.0;       // infimum of the weighted surrogate pseudo-loss
    std::vector<double> q;    // a minimiser (or the limit point when not attained)
    bool unique = true;       // false when the minimiser set is larger than q
    bool attained = true;     // false when the infimum is a limit
    Relation relation = Relation::Agree;
};

namespace detail {

inline Relation compare_threshold(double r, double lambda)
{
    if (r > lambda) return Relation::Agree;
    if (r < lambda) return Relation::Disagree;
    return Relation::Tie;
}

inline std::vector<double> spread(int K, int y, double qy)
{
    std::vector<double> q(static_cast<std::size_t>(K), (1.0 - qy) / (K - 1));
    q[static_cast<std::size_t>(y)] = qy;
    return q;
}

inline std::vector<double> one_hot(int K, int y)
{
    std::vector<double> q(static_cast<std::size_t>(K), 0.0);
    q[static_cast<std::size_t>(y)] = 1.0;
    return q;
}

} // namespace detail

/*
 * Minimum over logits of  w.agree * CE(y1, s) + w.dis * l_dis(y2, s).
 * Tie relations are resolved by the caller through the labels' indices.
 */
inline PointwiseOptimum pointwise_opt(SurrogateKind kind, int K, PseudoWeights w, LabelPair y)
{
    if (K < 2) throw InvalidInput("pointwise_opt needs K >= 2");
    check_label(y.y1, static_cast<std::size_t>(K));
    check_label(y.y2, static_cast<std::size_t>(K));
    if (!(w.agree >= 0.0) || !(w.dis >= 0.0)) throw InvalidInput("weights must be >= 0");
    if (w.agree == 0.0 && w.dis == 0.0) throw InvalidInput("r undefined: both weights zero");

    PointwiseOptimum out;
    if (w.dis == 0.0) {
        out.q = detail::one_hot(K, y.y1);
        out.attained = false;
        out.relation = Relation::Agree;
        return out;
    }
    if (w.agree == 0.0) {
        // only q_{y2} -> 0 is forced
        out.q = detail::spread(K, y.y2, 0.0);
        out.attained = false;
        out.unique = K == 2;
        out.relation = y.agree() ? Relation::Disagree : (K == 2 ? Relation::Agree : Relation::Either);
        return out;
    }

    const double r = w.agree / w.dis;
    const double km1 = K - 1;

    if (!y.agree()) {
        switch (kind) {
        case SurrogateKind::Ours:
        case SurrogateKind::RG23:
            out.q = detail::one_hot(K, y.y1);
            out.attained = false;
            out.value = 0.0;
            out.relation = Relation::Agree;
            return out;
        case SurrogateKind::GLK23: {
            if (K == 2) {
                out.q = detail::one_hot(K, y.y1);
                out.attained = false;
                out.value = 0.0;
                return out;
            }
            const double denom = km1 * (r + 1.0);
            out.q.assign(static_cast<std::size_t>(K), 1.0 / denom);
            out.q[static_cast<std::size_t>(y.y1)] = (r * km1 + 1.0) / denom;
            out.q[static_cast<std::size_t>(y.y2)] = 0.0;
            out.attained = false;
            out.value = (w.agree + w.dis) * std::log(denom) -
                        (w.agree + w.dis / km1) * std::log(km1 * r + 1.0);
            out.relation = Relation::Agree;
            return out;
        }
        }
    }

    const int yy = y.y1;
    switch (kind) {
    case SurrogateKind::Ours: {
        out.q = detail::spread(K, yy, r / (r + 1.0));
        out.unique = K == 2;
        out.value = w.agree * std::log1p(1.0 / r) + w.dis * std::log1p(r);
        if (K == 2) out.relation = detail::compare_threshold(r, 1.0);
        else if (r > 1.0) out.relation = Relation::Agree;
        else if (r < 1.0 / km1) out.relation = Relation::Disagree;
        else out.relation = Relation::Either;
        return out;
    }
    case SurrogateKind::RG23: {
        // s_y - s_other = log b with the remaining logits equal
        const double b = K == 2 ? r : b_K(K, r);
        out.q = detail::spread(K, yy, b / (b + km1));
        out.value = w.agree * std::log1p(km1 / b) + w.dis * std::log1p(b);
        out.relation = detail::compare_threshold(r, static_cast<double>(K) / (2.0 * km1));
        return out;
    }
    case SurrogateKind::GLK23: {
        out.q = detail::spread(K, yy, r / (r + 1.0));
        out.value = w.agree * std::log1p(1.0 / r) + w.dis * std::log(km1 * (r + 1.0));
        out.relation = detail::compare_threshold(r, 1.0 / km1);
        return out;
    }
    }
    return out;
}

/* Shorthand with weights (r, 1) and canonical labels (0, 0) or (0, 1). */
inline PointwiseOptimum pointwise_opt(SurrogateKind kind, int K, double r, bool agree)
{
    if (!(r >= 0.0)) throw InvalidInput("r must be >= 0");
    const PseudoWeights w = std::isinf(r) ? PseudoWeights{1.0, 0.0} : PseudoWeights{r, 1.0};
    return pointwise_opt(kind, K, w, agree ? LabelPair{0, 0} : LabelPair{0, 1});
}

/* Weighted zero-one pseudo-loss w.agree 1[y1 != c] - w.dis 1[y2 != c]. */
inline double true_pseudo_loss(PseudoWeights w, LabelPair y, int c)
{
    return w.agree * (y.y1 != c ? 1.0 : 0.0) - w.dis * (y.y2 != c ? 1.0 : 0.0);
}

inline double excess_true(PseudoWeights w, int K, LabelPair y, int c)
{
    check_label(c, static_cast<std::size_t>(K));
    const double best = y.agree() ? std::min(0.0, w.agree - w.dis) : -w.dis;
    return std::max(0.0, true_pseudo_loss(w, y, c) - best);
}

inline double excess_true(Side side, double pS, double pT, double alpha, int K, LabelPair y, int c)
{
    return excess_true(pseudo_weights(side, pS, pT, alpha), K, y, c);
}

inline double surrogate_pseudo_loss(SurrogateKind kind, PseudoWeights w, LabelPair y,
                                    std::span<const double> s)
{
    double v = 0.0;
    if (w.agree != 0.0) v += w.agree * loss_eval(LossKind::CE, y.y1, s);
    if (w.dis != 0.0) v += w.dis * loss_eval(disagreement_loss(kind), y.y2, s);
    return v;
}

inline double excess_surrogate(SurrogateKind kind, PseudoWeights w, LabelPair y,
                               std::span<const double> s)
{
    if (w.agree == 0.0 && w.dis == 0.0) return 0.0;
    const int K = static_cast<int>(s.size());
    return surrogate_pseudo_loss(kind, w, y, s) - pointwise_opt(kind, K, w, y).value;
}

inline double excess_surrogate(SurrogateKind kind, Side side, double pS, double pT, double alpha,
                               LabelPair y, std::span<const double> s)
{
    return excess_surrogate(kind, pseudo_weights(side, pS, pT, alpha), y, s);
}

} // namespace disco

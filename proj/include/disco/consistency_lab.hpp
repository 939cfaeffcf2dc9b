#pragma once

/*
 * Brute-force oracles over the probability simplex and the gap functionals
 * built on them.
 *
 * brute_min scans a regular simplex grid, maps each grid point q to logits
 * s = log q (zeros floored at -60), then refines the best point with
 * golden-section line searches in logit space along every proper subset
 * direction, every pairwise difference e_i - e_j and the last sweep's step.
 * Objectives and constraints therefore see logits.
 *
 * The true pseudo-loss depends on the critic only through its predicted label,
 * so Delta_G and Delta_H reduce to per-label quantities: for each label c the
 * minimum surrogate excess m_c over the closed region {argmax = c} and the true
 * excess e_c of predicting c. Then
 *
 *   Delta_G(eps) = min { e_c : m_c <= eps },  Delta_H(eps) = min { m_c : e_c >= eps }.
 */

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "disco/discrepancy.hpp"
#include "disco/error.hpp"
#include "disco/instances.hpp"
#include "disco/losses.hpp"
#include "disco/parallel.hpp"

namespace disco {

struct SimplexGrid {
    int K = 3;
    int resolution = 201;
    int refineSteps = 5;

    void validate() const
    {
        if (K < 2) throw InvalidInput("grid needs K >= 2");
        if (resolution < 11) throw InvalidInput("grid resolution must be >= 11");
        if (refineSteps < 0) throw InvalidInput("refineSteps must be >= 0");
    }
};

inline SimplexGrid default_grid(int K)
{
    switch (K) {
    case 2: return {2, 2001, 5};
    case 3: return {3, 201, 5};
    case 4: return {4, 61, 5};
    case 5: return {5, 31, 5};
    default: return {K, 15, 5};
    }
}

inline constexpr double kLogFloor = 60.0;
inline constexpr double kGapTol = 1e-8;

using LogitObjective = std::function<double(std::span<const double>)>;
using LogitConstraint = std::function<bool(std::span<const double>)>;

struct MinResult {
    bool feasible = false;
    double value = std::numeric_limits<double>::infinity();
    std::vector<double> s;
    std::vector<double> q;
};

namespace detail {

inline std::vector<double> grid_logits(const std::vector<int>& counts, int total)
{
    std::vector<double> s(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        s[k] = counts[k] == 0 ? -kLogFloor : std::log(static_cast<double>(counts[k]) / total);
    return s;
}

inline std::vector<std::vector<double>> search_directions(int K)
{
    std::vector<std::vector<double>> dirs;
    const unsigned full = (1u << K) - 1u;
    for (unsigned mask = 1; mask < full; ++mask) {
        std::vector<double> d(static_cast<std::size_t>(K), 0.0);
        for (int k = 0; k < K; ++k)
            if (mask & (1u << k)) d[static_cast<std::size_t>(k)] = 1.0;
        dirs.push_back(std::move(d));
    }
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) {
            std::vector<double> d(static_cast<std::size_t>(K), 0.0);
            d[static_cast<std::size_t>(i)] = 1.0;
            d[static_cast<std::size_t>(j)] = -1.0;
            dirs.push_back(std::move(d));
        }
    return dirs;
}

class Refiner {
public:
    Refiner(const LogitObjective& f, const LogitConstraint& g, int K)
        : f_(f), g_(g), buf_(static_cast<std::size_t>(K))
    {
    }

    double eval(std::span<const double> s)
    {
        if (g_ && !g_(s)) return std::numeric_limits<double>::infinity();
        const double v = f_(s);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    }

    /* Minimise along s + t d; s and fs are updated in place when t improves. */
    void line_search(std::vector<double>& s, double& fs, const std::vector<double>& d)
    {
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        bool moving = false;
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (d[k] == 0.0) continue;
            moving = true;
            const double a = (-kLogFloor - s[k]) / d[k];
            const double b = (kLogFloor - s[k]) / d[k];
            lo = std::max(lo, std::min(a, b));
            hi = std::min(hi, std::max(a, b));
        }
        if (!moving || !(hi > lo)) return;
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);

        auto at = [&](double t) {
            for (std::size_t k = 0; k < s.size(); ++k) buf_[k] = s[k] + t * d[k];
            return eval(buf_);
        };
        constexpr double g = 0.6180339887498949;
        double bestT = 0.0, bestF = fs;
        for (int it = 0; it < 72 && hi - lo > 1e-12; ++it) {
            const double c = hi - g * (hi - lo);
            const double e = lo + g * (hi - lo);
            const double fc = at(c);
            const double fe = at(e);
            if (fc < bestF) { bestF = fc; bestT = c; }
            if (fe < bestF) { bestF = fe; bestT = e; }
            if (std::isinf(fc) && std::isinf(fe)) {
                if (0.0 <= c) hi = c;
                else if (0.0 >= e) lo = e;
                else { lo = c; hi = e; }
            } else if (fc <= fe) {
                hi = e;
            } else {
                lo = c;
            }
        }
        if (bestT != 0.0 && bestF < fs) {
            for (std::size_t k = 0; k < s.size(); ++k) s[k] += bestT * d[k];
            const double mx = *std::max_element(s.begin(), s.end());
            for (double& v : s) v -= mx;
            fs = eval(s);
            if (fs > bestF) fs = bestF;
        }
    }

private:
    const LogitObjective& f_;
    const LogitConstraint& g_;
    std::vector<double> buf_;
};

} // namespace detail

/*
 * Minimum of objective over logits satisfying constraint (empty constraint =
 * unconstrained). Deterministic: grid ties resolve to the lexicographically
 * first grid point.
 */
inline MinResult brute_min(const LogitObjective& objective, const LogitConstraint& constraint,
                           const SimplexGrid& grid)
{
    grid.validate();
    const int K = grid.K;
    const int N = grid.resolution - 1;

    struct Slot {
        double value = std::numeric_limits<double>::infinity();
        std::vector<int> counts;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(N + 1));
    parallel_for(slots.size(), [&](std::size_t first) {
        std::vector<int> counts(static_cast<std::size_t>(K), 0);
        counts[0] = static_cast<int>(first);
        Slot& slot = slots[first];
        std::function<void(int, int)> rec = [&](int k, int left) {
            if (k == K - 1) {
                counts[static_cast<std::size_t>(k)] = left;
                const auto s = detail::grid_logits(counts, N);
                if (constraint && !constraint(s)) return;
                const double v = objective(s);
                if (v < slot.value) {
                    slot.value = v;
                    slot.counts = counts;
                }
                return;
            }
            for (int c = 0; c <= left; ++c) {
                counts[static_cast<std::size_t>(k)] = c;
                rec(k + 1, left - c);
            }
        };
        rec(1, N - static_cast<int>(first));
    });

    MinResult out;
    const Slot* best = nullptr;
    for (const auto& slot : slots)
        if (!slot.counts.empty() && (!best || slot.value < best->value)) best = &slot;
    if (!best) return out;

    std::vector<double> s = detail::grid_logits(best->counts, N);
    detail::Refiner refiner(objective, constraint, K);
    double fs = refiner.eval(s);
    const auto dirs = detail::search_directions(K);
    for (int pass = 0; pass < grid.refineSteps; ++pass) {
        const double before = fs;
        const std::vector<double> start = s;
        for (const auto& d : dirs) refiner.line_search(s, fs, d);
        std::vector<double> step(s.size());
        for (std::size_t k = 0; k < s.size(); ++k) step[k] = s[k] - start[k];
        refiner.line_search(s, fs, step);
        if (before - fs <= 1e-16 * (1.0 + std::abs(fs))) break;
    }
    out.feasible = true;
    out.value = fs;
    out.q = softmax(s);
    out.s = std::move(s);
    return out;
}

/* Closed region {s : s_c >= s_j for all j} of logits predicting c up to ties. */
inline LogitConstraint predicts_region(int c)
{
    return [c](std::span<const double> s) {
        const double sc = s[static_cast<std::size_t>(c)];
        for (double v : s)
            if (v > sc) return false;
        return true;
    };
}

struct LabelGap {
    int label = 0;
    double trueExcess = 0.0;
    double surrogateExcess = 0.0; // minimum over the label's region
    std::vector<double> q;
};

struct GapProfile {
    SurrogateKind kind = SurrogateKind::Ours;
    int K = 3;
    PseudoWeights weights;
    LabelPair y;
    double unconstrainedMin = 0.0;
    std::vector<LabelGap> labels;
};

/* Brute-force per-label minima of the surrogate pseudo-loss. */
inline GapProfile gap_profile(SurrogateKind kind, int K, PseudoWeights w, LabelPair y,
                              const SimplexGrid& grid)
{
    if (grid.K != K) throw InvalidInput("grid K does not match");
    GapProfile prof{kind, K, w, y, 0.0, {}};
    const LogitObjective f = [&](std::span<const double> s) {
        return surrogate_pseudo_loss(kind, w, y, s);
    };
    std::vector<MinResult> mins(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) mins[static_cast<std::size_t>(c)] = brute_min(f, predicts_region(c), grid);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : mins) best = std::min(best, m.value);
    prof.unconstrainedMin = best;
    for (int c = 0; c < K; ++c) {
        const auto& m = mins[static_cast<std::size_t>(c)];
        prof.labels.push_back({c, excess_true(w, K, y, c), std::max(0.0, m.value - best), m.q});
    }
    return prof;
}

struct GapEstimate {
    double epsilon = 0.0;
    double value = 0.0;
    std::vector<double> q;
    std::string method;
};

inline std::string grid_method(const SimplexGrid& g)
{
    std::ostringstream os;
    os << "simplex-grid K=" << g.K << " resolution=" << g.resolution << " refine=" << g.refineSteps;
    return os.str();
}

/* min true excess over critics whose surrogate excess is at most eps. */
inline GapEstimate delta_G(const GapProfile& prof, double eps)
{
    if (!(eps >= 0.0)) throw InvalidInput("epsilon must be >= 0");
    GapEstimate out{eps, std::numeric_limits<double>::infinity(), {}, "per-label brute force"};
    for (const auto& l : prof.labels) {
        if (l.surrogateExcess > eps + kGapTol) continue;
        if (l.trueExcess < out.value) {
            out.value = l.trueExcess;
            out.q = l.q;
        }
    }
    return out;
}

/* min surrogate excess over critics whose true excess is at least eps; +inf if none. */
inline GapEstimate delta_H(const GapProfile& prof, double eps)
{
    if (!(eps >= 0.0)) throw InvalidInput("epsilon must be >= 0");
    GapEstimate out{eps, std::numeric_limits<double>::infinity(), {}, "per-label brute force"};
    for (const auto& l : prof.labels) {
        if (l.trueExcess < eps) continue;
        if (l.surrogateExcess < out.value) {
            out.value = l.surrogateExcess;
            out.q = l.q;
        }
    }
    return out;
}

inline GapEstimate delta_G(SurrogateKind kind, Side side, int K, double r, double alpha, double eps,
                           const SimplexGrid& grid, LabelPair y = {0, 0})
{
    auto est = delta_G(gap_profile(kind, K, side_weights(side, r, alpha), y, grid), eps);
    est.method = grid_method(grid);
    return est;
}

inline GapEstimate delta_H(SurrogateKind kind, Side side, int K, double r, double alpha, double eps,
                           const SimplexGrid& grid, LabelPair y = {0, 0})
{
    auto est = delta_H(gap_profile(kind, K, side_weights(side, r, alpha), y, grid), eps);
    est.method = grid_method(grid);
    return est;
}

/* Largest eps up to which Delta_G stays at Delta_G(0): least m_c over labels beating it. */
inline double persistence_threshold(const GapProfile& prof)
{
    const double g0 = delta_G(prof, 0.0).value;
    double out = std::numeric_limits<double>::infinity();
    for (const auto& l : prof.labels)
        if (l.trueExcess < g0 - kGapTol) out = std::min(out, l.surrogateExcess);
    return out;
}

inline double band_lambda(SurrogateKind kind, int K)
{
    if (K <= 2) throw InvalidInput("inconsistency band needs K > 2");
    switch (kind) {
    case SurrogateKind::RG23: return static_cast<double>(K) / (2.0 * (K - 1));
    case SurrogateKind::GLK23: return 1.0 / (K - 1);
    case SurrogateKind::Ours: break;
    }
    throw InvalidInput("OURS has no inconsistency band");
}

inline double inconsistency_floor(double delta, double alpha, bool sourceMassPositive,
                                  bool targetMassPositive)
{
    if (!(delta >= 0.0 && delta < 0.5)) throw InvalidInput("delta must lie in [0, 1/2)");
    return (sourceMassPositive ? delta / (1.0 - delta) : 0.0) +
           (targetMassPositive ? alpha * delta : 0.0);
}

/* Threshold of the RG / GLK floor-persistence lemmas. */
inline double epsilon_star(SurrogateKind kind, Side side, int K, double delta, double alpha)
{
    if (K <= 2) throw InvalidInput("epsilon_star needs K > 2");
    const double km1 = K - 1;
    if (!(delta > 0.0 && delta < (K - 2) / (2.0 * km1)))
        throw InvalidInput("delta must lie in (0, (K-2)/(2K-2))");
    const double Kd = K;
    switch (kind) {
    case SurrogateKind::RG23: {
        const double b = b_K(K, Kd / (2.0 * km1) + delta);
        const double la = std::log(Kd * b / (b + km1));
        const double lb = std::log(2.0 / (1.0 + b));
        const double c = Kd + 2.0 * delta * km1;
        if (side == Side::One) return la + (2.0 * km1) / c * lb;
        return alpha * c / (2.0 * km1) * la + alpha * lb;
    }
    case SurrogateKind::GLK23: {
        const double dk = delta * km1;
        const double la = std::log(Kd / (dk + Kd));
        const double lb = std::log((delta * Kd * km1 + Kd) / (dk + Kd));
        if (side == Side::One) return km1 / (dk + 1.0) * la + lb;
        return alpha * la + alpha * (dk + 1.0) / km1 * lb;
    }
    case SurrogateKind::Ours: break;
    }
    throw InvalidInput("OURS has no epsilon_star");
}

struct ScanRow {
    double r = 0.0;
    Relation relation = Relation::Agree;   // closed-form optimum vs y
    std::vector<double> qstar;             // closed-form optimum
    std::vector<int> minimizerLabels;      // labels reachable by surrogate minimisers
    bool relationConsistent = true;        // closed form agrees with brute force
    double gapInf = 0.0;                   // true-DD gap, best minimiser
    double gapSup = 0.0;                   // true-DD gap, worst minimiser
    double restrictedGap = 0.0;            // true excess at the band point, best minimiser
    bool inBand = false;
    double delta = 0.0;
    double floorPaper = 0.0;               // both mass indicators as in the theorem
    double floorSideAware = 0.0;           // indicator only for the active side
    bool floorOk = true;
};

namespace detail {

inline bool relation_matches(Relation rel, const std::vector<int>& labels, int y)
{
    const bool hasY = std::find(labels.begin(), labels.end(), y) != labels.end();
    const bool hasOther = std::any_of(labels.begin(), labels.end(), [y](int c) { return c != y; });
    switch (rel) {
    case Relation::Agree: return hasY && !hasOther;
    case Relation::Disagree: return !hasY && hasOther;
    case Relation::Tie:
    case Relation::Either: return hasY && hasOther;
    }
    return false;
}

} // namespace detail

/*
 * One row per r: band point with pS / (alpha pT) = r and agreeing references
 * (label 0), plus the filler point of ratio_instance when alpha r != 1.
 */
inline std::vector<ScanRow> scan_band(SurrogateKind kind, int K, double alpha,
                                      const std::vector<double>& rs, const SimplexGrid& grid)
{
    std::vector<ScanRow> rows(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const double r = rs[i];
        if (!(r > 0.0) || std::isinf(r)) throw InvalidInput("scan ratios must lie in (0, inf)");
        const auto inst = ratio_instance(K, alpha, {r});
        const PointMass& band = inst[0];
        const Side side = band.pS >= band.pT ? Side::One : Side::Two;
        const PseudoWeights w = pseudo_weights(side, band.pS, band.pT, alpha);
        const LabelPair y{0, 0};

        ScanRow row;
        row.r = r;
        const auto opt = pointwise_opt(kind, K, w, y);
        row.relation = opt.relation;
        row.qstar = opt.q;
        const auto prof = gap_profile(kind, K, w, y, grid);
        for (const auto& l : prof.labels)
            if (l.surrogateExcess <= kGapTol) row.minimizerLabels.push_back(l.label);
        row.relationConsistent = detail::relation_matches(opt.relation, row.minimizerLabels, 0);

        // sup over labellings point by point; filler is predicted at its y1
        std::vector<int> labels(inst.size());
        double sup = 0.0;
        for (std::size_t p = 0; p < inst.size(); ++p) {
            double best = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < K; ++c) {
                const double v = alpha * inst[p].pT * (inst[p].ref.y2 != c ? 1.0 : 0.0) -
                                 inst[p].pS * (inst[p].ref.y1 != c ? 1.0 : 0.0);
                best = std::max(best, v);
            }
            sup += best;
            labels[p] = inst[p].ref.y1;
        }
        row.gapInf = std::numeric_limits<double>::infinity();
        row.gapSup = -std::numeric_limits<double>::infinity();
        row.restrictedGap = std::numeric_limits<double>::infinity();
        for (int c : row.minimizerLabels) {
            labels[0] = c;
            const double gap = sup - dd_true(inst, labels);
            row.gapInf = std::min(row.gapInf, gap);
            row.gapSup = std::max(row.gapSup, gap);
            row.restrictedGap = std::min(row.restrictedGap, excess_true(w, K, y, c));
        }

        if (kind != SurrogateKind::Ours && K > 2) {
            const double lambda = band_lambda(kind, K);
            row.inBand = r > lambda && r < 1.0;
            if (row.inBand) {
                row.delta = std::min(r - lambda, 1.0 - r);
                const double d = std::min(row.delta, 0.4999999);
                row.floorPaper = inconsistency_floor(d, alpha, band.pS > 0.0, band.pT > 0.0);
                row.floorSideAware = inconsistency_floor(d, alpha, side == Side::One, side == Side::Two);
                row.floorOk = row.restrictedGap >= row.floorSideAware - 1e-9;
            }
        }
        rows[i] = std::move(row);
    }
    return rows;
}

inline std::string lab_csv_header(int K)
{
    std::string h = "kind,K,alpha,r,epsilon,value";
    for (int k = 0; k < K; ++k) h += ",q" + std::to_string(k);
    return h + ",relation\n";
}

inline std::string format_double(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string lab_csv_row(SurrogateKind kind, int K, double alpha, double r, double eps,
                               double value, const std::vector<double>& q, std::string_view relation)
{
    std::string line = std::string(to_string(kind)) + "," + std::to_string(K) + "," +
                       format_double(alpha) + "," + format_double(r) + "," + format_double(eps) +
                       "," + format_double(value);
    for (int k = 0; k < K; ++k)
        line += "," + (static_cast<std::size_t>(k) < q.size() ? format_double(q[static_cast<std::size_t>(k)]) : "");
    return line + "," + std::string(relation) + "\n";
}

/* scan_band table in the lab CSV layout; value is the inf-over-minimisers gap. */
inline std::string scan_csv(SurrogateKind kind, int K, double alpha, const std::vector<ScanRow>& rows)
{
    std::string out = lab_csv_header(K);
    for (const auto& row : rows)
        out += lab_csv_row(kind, K, alpha, row.r, 0.0, row.gapInf, row.qstar, to_string(row.relation));
    return out;
}

} // namespace disco

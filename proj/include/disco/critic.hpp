#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "disco/data.hpp"
#include "disco/discrepancy.hpp"
#include "disco/error.hpp"
#include "disco/losses.hpp"
#include "disco/numeric.hpp"
#include "disco/parallel.hpp"
#include "disco/rng.hpp"

namespace disco {

enum class FeatureMap { RawInput, ReferenceLogits };

inline std::string_view to_string(FeatureMap m)
{
    return m == FeatureMap::RawInput ? "raw_input" : "reference_logits";
}

inline FeatureMap parse_feature_map(std::string_view s)
{
    if (s == "raw_input" || s == "RAW_INPUT") return FeatureMap::RawInput;
    if (s == "reference_logits" || s == "REFERENCE_LOGITS") return FeatureMap::ReferenceLogits;
    throw InvalidInput("unknown feature map '" + std::string(s) + "'");
}

/* x -> W x + b applied to the rows of X. */
struct Affine {
    RowMatrix W; // out x in
    Eigen::VectorXd b;

    RowMatrix apply(const RowMatrix& X) const
    {
        RowMatrix out = X * W.transpose();
        out.rowwise() += b.transpose();
        return out;
    }
};

/*
 * Affine critic on raw inputs, or on the logits of a frozen base affine map
 * (the reference) when featureMap is ReferenceLogits.
 */
class LinearCritic {
public:
    LinearCritic() = default;
    LinearCritic(Affine head, FeatureMap map = FeatureMap::RawInput, std::optional<Affine> base = {})
        : head_(std::move(head)), map_(map), base_(std::move(base))
    {
        if (head_.W.rows() < 2) throw InvalidInput("critic needs K >= 2 outputs");
        if (head_.b.size() != head_.W.rows()) throw InvalidInput("critic bias size mismatch");
        if ((map_ == FeatureMap::ReferenceLogits) != base_.has_value())
            throw InvalidInput("reference-logit critics need exactly one base map");
        if (base_ && base_->W.rows() != head_.W.cols()) throw InvalidInput("critic base/head dimension mismatch");
        if (!head_.W.allFinite() || !head_.b.allFinite()) throw InvalidInput("critic weights must be finite");
    }

    int K() const { return static_cast<int>(head_.W.rows()); }
    int input_dim() const { return static_cast<int>(base_ ? base_->W.cols() : head_.W.cols()); }
    FeatureMap feature_map() const { return map_; }
    const Affine& head() const { return head_; }
    const std::optional<Affine>& base() const { return base_; }

    RowMatrix features(const RowMatrix& X) const
    {
        if (X.cols() != input_dim()) throw InvalidInput("feature dimension mismatch");
        return base_ ? base_->apply(X) : X;
    }

    RowMatrix logits(const RowMatrix& X) const { return head_.apply(features(X)); }

    std::vector<int> predict(const RowMatrix& X) const
    {
        const RowMatrix S = logits(X);
        std::vector<int> out(static_cast<std::size_t>(S.rows()));
        for (Eigen::Index i = 0; i < S.rows(); ++i)
            out[static_cast<std::size_t>(i)] = score_to_class(std::span<const double>(S.row(i).data(), S.cols()));
        return out;
    }

    RowMatrix probabilities(const RowMatrix& X) const
    {
        RowMatrix P = logits(X);
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            std::span<double> row(P.row(i).data(), static_cast<std::size_t>(P.cols()));
            const double lse = log_sum_exp(row);
            for (double& v : row) v = std::exp(v - lse);
        }
        return P;
    }

    /* d logits / d input, K x input_dim. */
    RowMatrix input_jacobian() const { return base_ ? RowMatrix(head_.W * base_->W) : head_.W; }

private:
    Affine head_;
    FeatureMap map_ = FeatureMap::RawInput;
    std::optional<Affine> base_;
};

namespace detail {

inline nlohmann::json matrix_json(const RowMatrix& M)
{
    auto j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
        j.push_back(std::move(row));
    }
    return j;
}

inline RowMatrix matrix_from_json(const nlohmann::json& j)
{
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    RowMatrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(i)).size()) != cols)
            throw InvalidInput("ragged matrix in JSON");
        for (Eigen::Index c = 0; c < cols; ++c)
            M(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
    }
    return M;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace detail

inline nlohmann::json critic_to_json(const LinearCritic& c)
{
    nlohmann::json j{{"type", "linear"},
                     {"K", c.K()},
                     {"d", c.head().W.cols()},
                     {"featureMap", std::string(to_string(c.feature_map()))},
                     {"W", detail::matrix_json(c.head().W)},
                     {"b", detail::vector_json(c.head().b)}};
    if (c.base()) j["base"] = {{"W", detail::matrix_json(c.base()->W)}, {"b", detail::vector_json(c.base()->b)}};
    return j;
}

inline LinearCritic linear_critic_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("type").get<std::string>() != "linear") throw InvalidInput("not a linear critic");
        Affine head{detail::matrix_from_json(j.at("W")), detail::vector_from_json(j.at("b"))};
        const FeatureMap map = parse_feature_map(j.at("featureMap").get<std::string>());
        std::optional<Affine> base;
        if (j.contains("base"))
            base = Affine{detail::matrix_from_json(j["base"].at("W")), detail::vector_from_json(j["base"].at("b"))};
        if (head.W.rows() != j.at("K").get<int>() || head.W.cols() != j.at("d").get<int>())
            throw InvalidInput("critic K/d disagree with W");
        return LinearCritic(std::move(head), map, std::move(base));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed critic JSON: ") + e.what());
    }
}

struct TrainConfig {
    int epochs = 100;
    double learningRate = 3e-3;
    double weightDecay = 5e-4;
    int restarts = 30;
    int batchSize = 0; // 0 = full batch
    std::uint64_t seed = 0;
    double alpha = 1.0;
    FeatureMap featureMap = FeatureMap::RawInput;

    void validate() const
    {
        if (epochs < 1) throw InvalidInput("epochs must be >= 1");
        if (!(learningRate > 0.0)) throw InvalidInput("learningRate must be > 0");
        if (!(weightDecay >= 0.0)) throw InvalidInput("weightDecay must be >= 0");
        if (restarts < 1) throw InvalidInput("restarts must be >= 1");
        if (batchSize < 0) throw InvalidInput("batchSize must be >= 0");
        if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
    }
};

struct TrainTrace {
    std::vector<std::vector<double>> surrogate; // [restart][epoch], full training data
    std::vector<std::vector<double>> ddTrue;    // [restart][epoch]
    std::vector<bool> failed;
    std::vector<double> finalDD;
    int selected = -1;
};

/* alpha * mean_T 1[c != y2] - mean_S 1[c != y1]. */
inline double empirical_dd(const std::vector<int>& predS, const std::vector<int>& y1,
                           const std::vector<int>& predT, const std::vector<int>& y2, double alpha = 1.0)
{
    if (predS.size() != y1.size() || predT.size() != y2.size()) throw InvalidInput("empirical_dd: size mismatch");
    if (predS.empty() || predT.empty()) throw InvalidInput("empirical_dd: empty split");
    std::size_t dS = 0, dT = 0;
    for (std::size_t i = 0; i < predS.size(); ++i) dS += predS[i] != y1[i];
    for (std::size_t i = 0; i < predT.size(); ++i) dT += predT[i] != y2[i];
    return alpha * static_cast<double>(dT) / static_cast<double>(predT.size()) -
           static_cast<double>(dS) / static_cast<double>(predS.size());
}

namespace detail {

struct AdamW {
    RowMatrix mW, vW;
    Eigen::VectorXd mb, vb;
    int t = 0;

    AdamW(Eigen::Index K, Eigen::Index d)
        : mW(RowMatrix::Zero(K, d)), vW(RowMatrix::Zero(K, d)), mb(Eigen::VectorXd::Zero(K)),
          vb(Eigen::VectorXd::Zero(K))
    {
    }

    void step(Affine& p, const RowMatrix& gW, const Eigen::VectorXd& gb, double lr, double wd)
    {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        p.W *= 1.0 - lr * wd;
        p.b *= 1.0 - lr * wd;
        mW = b1 * mW + (1.0 - b1) * gW;
        vW = b2 * vW + (1.0 - b2) * gW.cwiseAbs2();
        mb = b1 * mb + (1.0 - b1) * gb;
        vb = b2 * vb + (1.0 - b2) * gb.cwiseAbs2();
        p.W.array() -= lr * (mW.array() / c1) / ((vW.array() / c2).sqrt() + eps);
        p.b.array() -= lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
};

/* One weighted loss term: rows of F with labels y, per-row weight `weight`. */
struct Term {
    const RowMatrix* F = nullptr;
    const std::vector<int>* y = nullptr;
    LossKind loss = LossKind::CE;
    double weight = 1.0;
};

/* Accumulates the gradient of sum_rows weight * loss into gW, gb; returns the objective. */
inline double accumulate(const Affine& p, const Term& term, const std::vector<std::size_t>* rows,
                         RowMatrix& gW, Eigen::VectorXd& gb)
{
    const Eigen::Index K = p.W.rows();
    RowMatrix Fsub;
    if (rows) {
        Fsub.resize(static_cast<Eigen::Index>(rows->size()), term.F->cols());
        for (std::size_t k = 0; k < rows->size(); ++k)
            Fsub.row(static_cast<Eigen::Index>(k)) = term.F->row(static_cast<Eigen::Index>((*rows)[k]));
    }
    const RowMatrix& F = rows ? Fsub : *term.F;
    const RowMatrix S = p.apply(F);
    RowMatrix G(S.rows(), K);
    CompensatedSum total;
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        const int y = (*term.y)[rows ? (*rows)[static_cast<std::size_t>(i)] : static_cast<std::size_t>(i)];
        std::span<const double> s(S.row(i).data(), static_cast<std::size_t>(K));
        total.add(term.weight * loss_eval(term.loss, y, s));
        loss_grad_into(term.loss, y, s, std::span<double>(G.row(i).data(), static_cast<std::size_t>(K)));
    }
    G *= term.weight;
    gW.noalias() += G.transpose() * F;
    gb += G.colwise().sum().transpose();
    return total.value();
}

struct RunResult {
    Affine params;
    std::vector<double> surrogate;
    std::vector<double> dd;
    bool failed = false;
};

inline std::vector<int> predict_rows(const Affine& p, const RowMatrix& F)
{
    const RowMatrix S = p.apply(F);
    std::vector<int> out(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < S.cols(); ++c)
            if (S(i, c) > S(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

/*
 * AdamW on sum over terms of weight * mean loss. With batchSize > 0 every step
 * draws one batch from each term, cycling through a fresh permutation per epoch.
 */
inline RunResult optimise(Affine init, const std::vector<Term>& terms, const TrainConfig& cfg, Rng& rng,
                          int epochs, const std::vector<int>* ddY1 = nullptr,
                          const std::vector<int>* ddY2 = nullptr)
{
    RunResult out{std::move(init), {}, {}, false};
    const Eigen::Index K = out.params.W.rows(), d = out.params.W.cols();
    AdamW opt(K, d);
    RowMatrix gW(K, d);
    Eigen::VectorXd gb(K);

    auto full_objective = [&](RowMatrix& w, Eigen::VectorXd& b) {
        w.setZero();
        b.setZero();
        double v = 0.0;
        for (const auto& t : terms) {
            Term scaled = t;
            scaled.weight = t.weight / static_cast<double>(t.F->rows());
            v += accumulate(out.params, scaled, nullptr, w, b);
        }
        return v;
    };

    std::size_t maxN = 0;
    for (const auto& t : terms) maxN = std::max(maxN, static_cast<std::size_t>(t.F->rows()));
    const std::size_t batch = cfg.batchSize > 0 ? static_cast<std::size_t>(cfg.batchSize) : maxN;
    const std::size_t stepsPerEpoch = (maxN + batch - 1) / batch;

    RowMatrix tmpW(K, d);
    Eigen::VectorXd tmpB(K);
    const bool fullBatch = cfg.batchSize <= 0;
    if (fullBatch) full_objective(gW, gb);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        if (fullBatch) {
            opt.step(out.params, gW, gb, cfg.learningRate, cfg.weightDecay);
        } else {
            std::vector<std::vector<std::size_t>> perms;
            for (const auto& t : terms) perms.push_back(rng.permutation(static_cast<std::size_t>(t.F->rows())));
            for (std::size_t step = 0; step < stepsPerEpoch; ++step) {
                gW.setZero();
                gb.setZero();
                for (std::size_t ti = 0; ti < terms.size(); ++ti) {
                    const auto& perm = perms[ti];
                    const std::size_t nb = std::min(batch, perm.size());
                    std::vector<std::size_t> rows(nb);
                    for (std::size_t k = 0; k < nb; ++k) rows[k] = perm[(step * batch + k) % perm.size()];
                    Term scaled = terms[ti];
                    scaled.weight = terms[ti].weight / static_cast<double>(nb);
                    accumulate(out.params, scaled, &rows, gW, gb);
                }
                opt.step(out.params, gW, gb, cfg.learningRate, cfg.weightDecay);
            }
        }
        // full batch: the gradient at the new parameters feeds the next step
        const double v = fullBatch ? full_objective(gW, gb) : full_objective(tmpW, tmpB);
        if (!std::isfinite(v) || !out.params.W.allFinite() || !out.params.b.allFinite()) {
            out.failed = true;
            return out;
        }
        out.surrogate.push_back(v);
        if (ddY1 && ddY2)
            out.dd.push_back(empirical_dd(predict_rows(out.params, *terms[0].F), *ddY1,
                                          predict_rows(out.params, *terms[1].F), *ddY2, cfg.alpha));
    }
    return out;
}

inline Affine random_affine(Eigen::Index K, Eigen::Index d, Rng& rng)
{
    const double a = 1.0 / std::sqrt(static_cast<double>(d));
    Affine p{RowMatrix(K, d), Eigen::VectorXd(K)};
    for (Eigen::Index i = 0; i < K; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) p.W(i, j) = rng.uniform(-a, a);
        p.b(i) = rng.uniform(-a, a);
    }
    return p;
}

} // namespace detail

/* Multinomial linear classifier on raw inputs trained with CE only. */
inline LinearCritic train_reference(const RowMatrix& X, const std::vector<int>& y, int K, const TrainConfig& cfg)
{
    cfg.validate();
    if (X.rows() == 0) throw InvalidInput("train_reference: empty data");
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw InvalidInput("train_reference: label count mismatch");
    for (int c : y) check_label(c, static_cast<std::size_t>(K));
    Rng rng(cfg.seed, "critic", "reference");
    const auto init = detail::random_affine(K, X.cols(), rng);
    const std::vector<detail::Term> terms{{&X, &y, LossKind::CE, 1.0}};
    auto res = detail::optimise(init, terms, cfg, rng, cfg.epochs);
    if (res.failed) throw TrainingError("reference training diverged");
    return LinearCritic(std::move(res.params));
}

/*
 * Minimises mean_S CE(y1) + alpha mean_T l_dis(y2) from cfg.restarts random
 * starts and keeps the restart with the highest training dd_true (ties: lowest
 * restart index). ReferenceLogits critics need the reference.
 */
inline LinearCritic train_critic(const RowMatrix& XS, const std::vector<int>& y1, const RowMatrix& XT,
                                 const std::vector<int>& y2, SurrogateKind kind, const TrainConfig& cfg,
                                 const LinearCritic* reference = nullptr, TrainTrace* trace = nullptr,
                                 int K = 0)
{
    cfg.validate();
    if (XS.rows() == 0 || XT.rows() == 0) throw InvalidInput("train_critic: empty split");
    if (XS.cols() != XT.cols()) throw InvalidInput("train_critic: feature dimensions differ");
    if (static_cast<std::size_t>(XS.rows()) != y1.size() || static_cast<std::size_t>(XT.rows()) != y2.size())
        throw InvalidInput("train_critic: label count mismatch");
    if (K == 0) K = reference ? reference->K() : 1 + std::max(*std::max_element(y1.begin(), y1.end()),
                                                             *std::max_element(y2.begin(), y2.end()));
    if (K < 2) K = 2;
    for (int c : y1) check_label(c, static_cast<std::size_t>(K));
    for (int c : y2) check_label(c, static_cast<std::size_t>(K));

    std::optional<Affine> base;
    if (cfg.featureMap == FeatureMap::ReferenceLogits) {
        if (!reference || reference->feature_map() != FeatureMap::RawInput)
            throw InvalidInput("reference-logit critics need a raw-input reference");
        base = reference->head();
    }
    const RowMatrix FS = base ? base->apply(XS) : XS;
    const RowMatrix FT = base ? base->apply(XT) : XT;
    const std::vector<detail::Term> terms{{&FS, &y1, LossKind::CE, 1.0},
                                          {&FT, &y2, disagreement_loss(kind), cfg.alpha}};

    const auto R = static_cast<std::size_t>(cfg.restarts);
    std::vector<detail::RunResult> runs(R);
    parallel_for(R, [&](std::size_t r) {
        Rng rng(cfg.seed, "critic", "restart", r);
        auto init = detail::random_affine(K, FS.cols(), rng);
        runs[r] = detail::optimise(std::move(init), terms, cfg, rng, cfg.epochs, &y1, &y2);
    });

    int best = -1;
    double bestDD = -std::numeric_limits<double>::infinity();
    TrainTrace local;
    for (std::size_t r = 0; r < R; ++r) {
        local.failed.push_back(runs[r].failed);
        local.surrogate.push_back(runs[r].surrogate);
        local.ddTrue.push_back(runs[r].dd);
        const double dd = runs[r].failed ? std::numeric_limits<double>::quiet_NaN() : runs[r].dd.back();
        local.finalDD.push_back(dd);
        if (!runs[r].failed && dd > bestDD) {
            bestDD = dd;
            best = static_cast<int>(r);
        }
    }
    if (best < 0) throw TrainingError("all critic restarts diverged");
    local.selected = best;
    if (trace) *trace = std::move(local);
    return LinearCritic(std::move(runs[static_cast<std::size_t>(best)].params), cfg.featureMap, std::move(base));
}

/* Continues training an existing critic for `epochs` epochs on new data (one run). */
inline LinearCritic refine_critic(const LinearCritic& critic, const RowMatrix& XS, const std::vector<int>& y1,
                                  const RowMatrix& XT, const std::vector<int>& y2, SurrogateKind kind,
                                  const TrainConfig& cfg, int epochs, std::uint64_t stream)
{
    const RowMatrix FS = critic.features(XS);
    const RowMatrix FT = critic.features(XT);
    const std::vector<detail::Term> terms{{&FS, &y1, LossKind::CE, 1.0},
                                          {&FT, &y2, disagreement_loss(kind), cfg.alpha}};
    Rng rng(cfg.seed, "critic", "refine", stream);
    auto res = detail::optimise(critic.head(), terms, cfg, rng, epochs);
    if (res.failed) return critic;
    return LinearCritic(std::move(res.params), critic.feature_map(), critic.base());
}

} // namespace disco

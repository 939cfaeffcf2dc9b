#pragma once

/*
 * l_inf PGD on target inputs against the error bound. Per selected instance the
 * attacker descends
 *
 *   A(x) = -sum_y pt_y dis_y(critic(x)) - CE(y*, ref(x)),
 *   pt = softmax((log softmax(ref(x)) + g) / tau),  g ~ Gumbel,
 *
 * pushing the critic towards the (relaxed, sampled) reference label and the
 * reference away from the truth.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "disco/bound.hpp"
#include "disco/critic.hpp"
#include "disco/data.hpp"
#include "disco/losses.hpp"
#include "disco/parallel.hpp"
#include "disco/rng.hpp"

namespace disco {

struct AttackConfig {
    double epsilon = 4.0 / 255.0;
    double stepSize = 8.0 / 255.0;
    int steps = 20;
    double fraction = 0.25;
    int criticRefreshEpochs = 5;
    double gumbelTemperature = 1.0;
    double delta = 0.05;
    int batchSize = 256;
    SurrogateKind kind = SurrogateKind::Ours; // loss used to perturb and to refresh the critic
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be > 0");
        if (!(stepSize > 0.0)) throw InvalidInput("stepSize must be > 0");
        if (steps < 1) throw InvalidInput("steps must be >= 1");
        if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidInput("fraction must lie in [0, 1]");
        if (criticRefreshEpochs < 0) throw InvalidInput("criticRefreshEpochs must be >= 0");
        if (!(gumbelTemperature > 0.0)) throw InvalidInput("gumbelTemperature must be > 0");
        if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
        if (batchSize < 1) throw InvalidInput("batchSize must be >= 1");
    }
};

inline Eigen::VectorXd project_linf(const Eigen::VectorXd& x, const Eigen::VectorXd& x0, double epsilon)
{
    if (x.size() != x0.size()) throw InvalidInput("project_linf: dimension mismatch");
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = std::clamp(x(i), x0(i) - epsilon, x0(i) + epsilon);
    return out;
}

/* Value and logit-space gradients of A at one instance. */
struct AttackLocal {
    double value = 0.0;
    std::vector<double> gCritic; // dA / d critic logits
    std::vector<double> gRef;    // dA / d reference logits
};

inline AttackLocal attack_local(std::span<const double> sCritic, std::span<const double> sRef, int yTrue,
                                std::span<const double> gumbel, SurrogateKind kind, double tau)
{
    const std::size_t K = sCritic.size();
    if (sRef.size() != K || gumbel.size() != K) throw InvalidInput("attack_local: size mismatch");
    const LossKind dis = disagreement_loss(kind);
    const auto logp = log_softmax(sRef);
    std::vector<double> z(K);
    for (std::size_t k = 0; k < K; ++k) z[k] = (logp[k] + gumbel[k]) / tau;
    const auto pt = softmax(z);

    std::vector<double> L(K), g(K);
    AttackLocal out{0.0, std::vector<double>(K, 0.0), std::vector<double>(K, 0.0)};
    double mean = 0.0;
    for (std::size_t y = 0; y < K; ++y) {
        L[y] = loss_eval(dis, static_cast<int>(y), sCritic);
        mean += pt[y] * L[y];
        loss_grad_into(dis, static_cast<int>(y), sCritic, g);
        for (std::size_t k = 0; k < K; ++k) out.gCritic[k] -= pt[y] * g[k];
    }
    const auto pRef = softmax(sRef);
    for (std::size_t k = 0; k < K; ++k) {
        out.gRef[k] = -pt[k] * (L[k] - mean) / tau;
        out.gRef[k] -= pRef[k] - (static_cast<int>(k) == yTrue ? 1.0 : 0.0);
    }
    out.value = -mean - loss_eval(LossKind::CE, yTrue, sRef);
    return out;
}

/* A and dA/dx for one input row; the finite-difference tests go through this. */
inline double attack_objective(const Eigen::RowVectorXd& x, int yTrue, std::span<const double> gumbel,
                               const LinearCritic& ref, const LinearCritic& critic, SurrogateKind kind, double tau,
                               Eigen::RowVectorXd* grad = nullptr)
{
    const RowMatrix X = x;
    const RowMatrix sc = critic.logits(X);
    const RowMatrix sr = ref.logits(X);
    const auto K = static_cast<std::size_t>(sc.cols());
    const auto loc = attack_local(std::span<const double>(sc.data(), K), std::span<const double>(sr.data(), K),
                                  yTrue, gumbel, kind, tau);
    if (grad) {
        const Eigen::Map<const Eigen::RowVectorXd> gc(loc.gCritic.data(), static_cast<Eigen::Index>(K));
        const Eigen::Map<const Eigen::RowVectorXd> gr(loc.gRef.data(), static_cast<Eigen::Index>(K));
        *grad = gc * critic.input_jacobian() + gr * ref.input_jacobian();
    }
    return loc.value;
}

struct AttackStep {
    int step = 0;
    double gap = 0.0;
    double bound = 0.0;
    double trueErr = 0.0;
    double dd = 0.0;
    int skipped = 0;
};

struct AttackResult {
    Dataset tgtTrain;
    Dataset tgtTest;
    std::vector<std::size_t> attackedTrain;
    std::vector<std::size_t> attackedTest;
    LinearCritic critic;
    std::vector<AttackStep> trace;
};

inline nlohmann::json trace_json(const std::vector<AttackStep>& trace)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : trace)
        j.push_back({{"step", s.step}, {"gap", s.gap}, {"bound", s.bound}, {"trueErr", s.trueErr}, {"dd", s.dd},
                     {"skipped", s.skipped}});
    return j;
}

namespace detail {

inline std::vector<std::size_t> pick_instances(std::size_t n, double fraction, std::uint64_t seed,
                                                std::string_view purpose)
{
    const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    Rng rng(seed, "attack", purpose);
    auto perm = rng.permutation(n);
    std::vector<std::size_t> out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(m, n)));
    std::sort(out.begin(), out.end());
    return out;
}

/* One signed-gradient step on the chosen rows of X, projected around X0. Returns skipped count. */
inline int pgd_step(RowMatrix& X, const RowMatrix& X0, const std::vector<int>& yTrue,
                    const std::vector<std::size_t>& rows, const LinearCritic& ref, const LinearCritic& critic,
                    const AttackConfig& cfg, Rng& gumbelRng)
{
    if (rows.empty()) return 0;
    const auto K = static_cast<std::size_t>(ref.K());
    std::vector<double> noise(rows.size() * K);
    for (double& v : noise) v = gumbelRng.gumbel();
    const RowMatrix Jc = critic.input_jacobian();
    const RowMatrix Jr = ref.input_jacobian();
    std::vector<char> skipped(rows.size(), 0);

    const auto B = static_cast<std::size_t>(cfg.batchSize);
    for (std::size_t start = 0; start < rows.size(); start += B) {
        const std::size_t nb = std::min(B, rows.size() - start);
        RowMatrix Xb(static_cast<Eigen::Index>(nb), X.cols());
        for (std::size_t k = 0; k < nb; ++k) Xb.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(rows[start + k]));
        const RowMatrix Sc = critic.logits(Xb);
        const RowMatrix Sr = ref.logits(Xb);
        RowMatrix Gc(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(K));
        RowMatrix Gr(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(K));
        parallel_for(nb, [&](std::size_t k) {
            const auto i = static_cast<Eigen::Index>(k);
            try {
                const auto loc = attack_local(std::span<const double>(Sc.row(i).data(), K),
                                              std::span<const double>(Sr.row(i).data(), K), yTrue[rows[start + k]],
                                              std::span<const double>(noise.data() + (start + k) * K, K), cfg.kind,
                                              cfg.gumbelTemperature);
                for (std::size_t c = 0; c < K; ++c) {
                    Gc(i, static_cast<Eigen::Index>(c)) = loc.gCritic[c];
                    Gr(i, static_cast<Eigen::Index>(c)) = loc.gRef[c];
                }
            } catch (const InvalidInput&) {
                Gc.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
            }
        });
        const RowMatrix G = Gc * Jc + Gr * Jr;
        for (std::size_t k = 0; k < nb; ++k) {
            const auto i = static_cast<Eigen::Index>(rows[start + k]);
            const auto g = G.row(static_cast<Eigen::Index>(k));
            if (!g.allFinite()) {
                skipped[start + k] = 1;
                continue;
            }
            for (Eigen::Index j = 0; j < X.cols(); ++j) {
                const double sgn = g(j) > 0.0 ? 1.0 : (g(j) < 0.0 ? -1.0 : 0.0);
                const double moved = X(i, j) - cfg.stepSize * sgn;
                X(i, j) = std::clamp(moved, X0(i, j) - cfg.epsilon, X0(i, j) + cfg.epsilon);
            }
        }
    }
    return static_cast<int>(std::count(skipped.begin(), skipped.end(), 1));
}

} // namespace detail

/* Bound minus true target error for the given critic on the test splits. */
inline AttackStep measure_gap(const Dataset& srcTest, const Dataset& tgtTest, const LinearCritic& ref,
                              const LinearCritic& critic, double delta, int step)
{
    const auto r = error_bound(srcTest, tgtTest, ref, critic, delta);
    return {step, r.bound - *r.trueTargetError, r.bound, *r.trueTargetError, r.empiricalDD, 0};
}

/*
 * Step t: perturb the chosen target-test rows, then the chosen target-train
 * rows, then refresh the critic for criticRefreshEpochs epochs. The same rows
 * are attacked in every step. Target sets must carry true labels.
 */
inline AttackResult attack_targets(const Dataset& srcTrain, const Dataset& srcTest, const Dataset& tgtTrain,
                                   const Dataset& tgtTest, const LinearCritic& ref, const LinearCritic& critic0,
                                   const TrainConfig& trainCfg, const AttackConfig& cfg)
{
    cfg.validate();
    if (ref.feature_map() != FeatureMap::RawInput) throw InvalidInput("attack needs a raw-input reference");
    const auto& yTr = tgtTrain.require_labels();
    const auto& yTe = tgtTest.require_labels();

    AttackResult out{tgtTrain, tgtTest, {}, {}, critic0, {}};
    out.attackedTrain = detail::pick_instances(tgtTrain.size(), cfg.fraction, cfg.seed, "select-train");
    out.attackedTest = detail::pick_instances(tgtTest.size(), cfg.fraction, cfg.seed, "select-test");
    const auto y1 = ref.predict(srcTrain.X);
    out.trace.push_back(measure_gap(srcTest, out.tgtTest, ref, out.critic, cfg.delta, 0));
    if (out.attackedTrain.empty() && out.attackedTest.empty()) return out;

    for (int step = 1; step <= cfg.steps; ++step) {
        const auto s = static_cast<std::uint64_t>(step);
        Rng gTest(cfg.seed, "attack", "gumbel-test", s);
        Rng gTrain(cfg.seed, "attack", "gumbel-train", s);
        int skipped = detail::pgd_step(out.tgtTest.X, tgtTest.X, yTe, out.attackedTest, ref, out.critic, cfg, gTest);
        skipped += detail::pgd_step(out.tgtTrain.X, tgtTrain.X, yTr, out.attackedTrain, ref, out.critic, cfg, gTrain);
        if (cfg.criticRefreshEpochs > 0)
            out.critic = refine_critic(out.critic, srcTrain.X, y1, out.tgtTrain.X, ref.predict(out.tgtTrain.X),
                                       cfg.kind, trainCfg, cfg.criticRefreshEpochs, s);
        auto m = measure_gap(srcTest, out.tgtTest, ref, out.critic, cfg.delta, step);
        m.skipped = skipped;
        out.trace.push_back(m);
    }
    return out;
}

inline double max_perturbation(const RowMatrix& X, const RowMatrix& X0)
{
    return X.rows() == 0 ? 0.0 : (X - X0).cwiseAbs().maxCoeff();
}

/* One attack scenario: Gaussian shift, reference, attacked targets, then one critic per kind. */
struct AttackScenario {
    GaussianShiftSpec data;
    TrainConfig reference;
    TrainConfig critic;
    AttackConfig attack;
    double trainFraction = 0.5;
};

struct AttackOutcome {
    std::uint64_t seed = 0;
    double fraction = 0.0;
    std::vector<AttackStep> trace;
    std::vector<std::pair<SurrogateKind, double>> dd; // test-split dd_true per kind on attacked data
    double maxPerturbation = 0.0;
    bool untouchedIdentical = true;
    AttackResult attacked;

    double dd_of(SurrogateKind k) const
    {
        for (const auto& [kind, v] : dd)
            if (kind == k) return v;
        throw InvalidInput("kind not evaluated");
    }
    /* Ties at the maximum count as a win. */
    bool is_best(SurrogateKind k) const
    {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : dd) best = std::max(best, p.second);
        return dd_of(k) >= best;
    }
};

inline AttackOutcome run_attack_scenario(const AttackScenario& sc, std::uint64_t seed, double fraction,
                                         const std::vector<SurrogateKind>& kinds)
{
    const auto parts = make_splits(sc.data, sc.trainFraction, seed);
    TrainConfig refCfg = sc.reference;
    refCfg.seed = derive_seed(seed, "attack", "reference");
    const auto ref = train_reference(parts.source.train.X, parts.source.train.require_labels(), sc.data.K, refCfg);
    const auto y1 = ref.predict(parts.source.train.X);

    TrainConfig critCfg = sc.critic;
    critCfg.seed = derive_seed(seed, "attack", "critic");
    AttackConfig atk = sc.attack;
    atk.fraction = fraction;
    atk.seed = derive_seed(seed, "attack", "perturb");

    const auto critic0 = train_critic(parts.source.train.X, y1, parts.target.train.X, ref.predict(parts.target.train.X),
                                      atk.kind, critCfg, &ref, nullptr, sc.data.K);
    AttackOutcome out;
    out.seed = seed;
    out.fraction = fraction;
    out.attacked = attack_targets(parts.source.train, parts.source.test, parts.target.train, parts.target.test, ref,
                                  critic0, critCfg, atk);
    out.trace = out.attacked.trace;
    out.maxPerturbation = std::max(max_perturbation(out.attacked.tgtTrain.X, parts.target.train.X),
                                   max_perturbation(out.attacked.tgtTest.X, parts.target.test.X));
    auto untouched = [](const RowMatrix& X, const RowMatrix& X0, const std::vector<std::size_t>& hit) {
        std::vector<char> mark(static_cast<std::size_t>(X.rows()), 0);
        for (auto i : hit) mark[i] = 1;
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            if (!mark[static_cast<std::size_t>(i)] && X.row(i) != X0.row(i)) return false;
        return true;
    };
    out.untouchedIdentical = untouched(out.attacked.tgtTrain.X, parts.target.train.X, out.attacked.attackedTrain) &&
                             untouched(out.attacked.tgtTest.X, parts.target.test.X, out.attacked.attackedTest);

    const auto y2 = ref.predict(out.attacked.tgtTrain.X);
    for (auto kind : kinds) {
        const auto c = train_critic(parts.source.train.X, y1, out.attacked.tgtTrain.X, y2, kind, critCfg, &ref,
                                    nullptr, sc.data.K);
        const auto r = error_bound(parts.source.test, out.attacked.tgtTest, ref, c, atk.delta);
        out.dd.emplace_back(kind, r.empiricalDD);
    }
    return out;
}

} // namespace disco

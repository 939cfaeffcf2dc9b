#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "disco/boosted.hpp"
#include "disco/critic.hpp"
#include "disco/data.hpp"
#include "disco/parallel.hpp"
#include "disco/rng.hpp"

namespace disco {

struct DetectionConfig {
    int nTarget = 20;
    int nullRuns = 500;
    int bootstrap = 1000;
    int repeats = 200;
    double level = 0.05;
    bool alphaInverseN = true; // target weight 1/(N+1); false uses boost.alpha
    BoostConfig boost;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (nTarget < 1) throw InvalidInput("nTarget must be >= 1");
        if (nullRuns < 100) throw InvalidInput("nullRuns must be >= 100");
        if (bootstrap < 1) throw InvalidInput("bootstrap must be >= 1");
        if (repeats < 1) throw InvalidInput("repeats must be >= 1");
        if (!(level > 0.0 && level < 1.0)) throw InvalidInput("level must lie in (0, 1)");
        boost.validate();
    }
};

/* Fraction of rows where the two models' predicted classes differ. */
template <class Critic, class Reference>
double disagreement_statistic(const Critic& critic, const Reference& ref, const RowMatrix& X)
{
    if (X.rows() == 0) throw InvalidInput("disagreement_statistic: empty sample");
    const auto a = critic.predict(X);
    const auto b = ref.predict(X);
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
    return static_cast<double>(n) / static_cast<double>(a.size());
}

struct DetectionResult {
    double statistic = 0.0;
    double pValue = 1.0;
    bool flagged = false;
    double nullMedian = 0.0;
    double nullQ95 = 0.0;
};

inline nlohmann::json to_json(const DetectionResult& r)
{
    return {{"statistic", r.statistic}, {"pValue", r.pValue}, {"flagged", r.flagged},
            {"nullMedian", r.nullMedian}, {"nullQ95", r.nullQ95}};
}

/* Empirical quantile of sorted values, lower interpolation-free order statistic. */
inline double order_quantile(const std::vector<double>& sorted, double q)
{
    if (sorted.empty()) throw InvalidInput("quantile of empty sample");
    const auto n = sorted.size();
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    idx = std::clamp<std::size_t>(idx, 1, n);
    return sorted[idx - 1];
}

/* Upper-tail p-value with add-one smoothing. */
inline double p_value(double observed, const std::vector<double>& null)
{
    std::size_t ge = 0;
    for (double v : null) ge += v >= observed;
    return static_cast<double>(1 + ge) / static_cast<double>(1 + null.size());
}

/*
 * Boosted critic agreeing with the true labels on the source training rows and
 * disagreeing with the reference on a (pseudo-)target sample.
 */
class ShiftDetector {
public:
    ShiftDetector(RowMatrix sourceX, std::vector<int> sourceY, LinearCritic ref, SurrogateKind kind,
                  DetectionConfig cfg)
        : X_(std::move(sourceX)), y_(std::move(sourceY)), ref_(std::move(ref)), kind_(kind), cfg_(std::move(cfg))
    {
        cfg_.validate();
        if (static_cast<std::size_t>(X_.rows()) != y_.size()) throw InvalidInput("detector: label count mismatch");
        if (kind_ == SurrogateKind::RG23) throw InvalidInput("detection supports GLK23 and OURS");
    }

    SurrogateKind kind() const { return kind_; }
    const DetectionConfig& config() const { return cfg_; }
    const LinearCritic& reference() const { return ref_; }

    double statistic(const RowMatrix& sample, std::uint64_t stream) const
    {
        BoostConfig bc = cfg_.boost;
        bc.seed = derive_seed(cfg_.seed, "detect", "boost", stream);
        if (cfg_.alphaInverseN) bc.alpha = 1.0 / static_cast<double>(sample.rows() + 1);
        const auto critic = train_boosted_critic(X_, y_, sample, ref_.predict(sample), kind_, ref_.K(), bc);
        return disagreement_statistic(critic, ref_, sample);
    }

    /* nullRuns pseudo-targets drawn without replacement from the pool; sorted statistics. */
    std::vector<double> calibrate_null(const RowMatrix& pool) const
    {
        const auto n = static_cast<std::size_t>(cfg_.nTarget);
        if (static_cast<std::size_t>(pool.rows()) < n) throw InvalidInput("null pool smaller than nTarget");
        std::vector<double> stats(static_cast<std::size_t>(cfg_.nullRuns));
        parallel_for(stats.size(), [&](std::size_t r) {
            Rng rng(cfg_.seed, "detect", "null-draw", r);
            stats[r] = statistic(draw(pool, n, rng), 1'000'000 + r);
        });
        std::sort(stats.begin(), stats.end());
        return stats;
    }

    DetectionResult detect(const RowMatrix& target, const std::vector<double>& null, std::uint64_t stream = 0) const
    {
        if (target.rows() != cfg_.nTarget) throw InvalidInput("target sample size differs from nTarget");
        if (null.empty()) throw InvalidInput("empty null distribution");
        DetectionResult r;
        r.statistic = statistic(target, stream);
        r.pValue = p_value(r.statistic, null);
        r.flagged = r.pValue <= cfg_.level;
        std::vector<double> sorted = null;
        std::sort(sorted.begin(), sorted.end());
        r.nullMedian = order_quantile(sorted, 0.5);
        r.nullQ95 = order_quantile(sorted, 0.95);
        return r;
    }

    static RowMatrix draw(const RowMatrix& pool, std::size_t n, Rng& rng)
    {
        auto perm = rng.permutation(static_cast<std::size_t>(pool.rows()));
        std::sort(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
        RowMatrix out(static_cast<Eigen::Index>(n), pool.cols());
        for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = pool.row(static_cast<Eigen::Index>(perm[i]));
        return out;
    }

private:
    RowMatrix X_;
    std::vector<int> y_;
    LinearCritic ref_;
    SurrogateKind kind_;
    DetectionConfig cfg_;
};

struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/* Flag when statistic >= threshold; thresholds run from +inf down through every observed value. */
inline std::vector<RocPoint> roc_curve(const std::vector<double>& pos, const std::vector<double>& neg)
{
    if (pos.empty() || neg.empty()) throw InvalidInput("roc needs positive and negative statistics");
    std::vector<double> th(pos.begin(), pos.end());
    th.insert(th.end(), neg.begin(), neg.end());
    std::sort(th.begin(), th.end(), std::greater<>());
    th.erase(std::unique(th.begin(), th.end()), th.end());
    std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    for (double t : th) {
        const auto tp = std::count_if(pos.begin(), pos.end(), [&](double v) { return v >= t; });
        const auto fp = std::count_if(neg.begin(), neg.end(), [&](double v) { return v >= t; });
        out.push_back({t, static_cast<double>(tp) / static_cast<double>(pos.size()),
                       static_cast<double>(fp) / static_cast<double>(neg.size())});
    }
    return out;
}

/* P(pos > neg) + P(pos = neg) / 2 by direct pair counting. */
inline double auc(const std::vector<double>& pos, const std::vector<double>& neg)
{
    if (pos.empty() || neg.empty()) throw InvalidInput("auc needs positive and negative statistics");
    double s = 0.0;
    for (double p : pos)
        for (double n : neg) s += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return s / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/* Stratified percentile bootstrap: positives and negatives resampled separately. */
inline std::pair<double, double> auc_bootstrap_ci(const std::vector<double>& pos, const std::vector<double>& neg,
                                                  int samples, std::uint64_t seed, double level = 0.95)
{
    std::vector<double> aucs(static_cast<std::size_t>(samples));
    parallel_for(aucs.size(), [&](std::size_t b) {
        Rng rng(seed, "detect", "bootstrap", b);
        std::vector<double> p(pos.size()), n(neg.size());
        for (auto& v : p) v = pos[rng.index(pos.size())];
        for (auto& v : n) v = neg[rng.index(neg.size())];
        aucs[b] = auc(p, n);
    });
    std::sort(aucs.begin(), aucs.end());
    const double tail = (1.0 - level) / 2.0;
    return {order_quantile(aucs, tail), order_quantile(aucs, 1.0 - tail)};
}

struct RocResult {
    SurrogateKind kind = SurrogateKind::Ours;
    int N = 0;
    std::vector<double> shifted;  // statistics on shifted samples
    std::vector<double> inDist;   // statistics on in-distribution samples
    std::vector<RocPoint> curve;
    double auc = 0.5;
    double ciLow = 0.0;
    double ciHigh = 1.0;
};

/*
 * repeats draws of N rows from each pool; draw r uses the same rows for every
 * kind, so kinds are compared on paired samples.
 */
inline RocResult roc(const ShiftDetector& det, const RowMatrix& shiftedPool, const RowMatrix& inDistPool)
{
    const auto& cfg = det.config();
    const auto n = static_cast<std::size_t>(cfg.nTarget);
    if (static_cast<std::size_t>(shiftedPool.rows()) < n || static_cast<std::size_t>(inDistPool.rows()) < n)
        throw InvalidInput("roc pools smaller than nTarget");
    const auto R = static_cast<std::size_t>(cfg.repeats);
    RocResult out;
    out.kind = det.kind();
    out.N = cfg.nTarget;
    out.shifted.resize(R);
    out.inDist.resize(R);
    parallel_for(2 * R, [&](std::size_t k) {
        const std::size_t r = k / 2;
        if (k % 2 == 0) {
            Rng rng(cfg.seed, "detect", "shifted-draw", r);
            out.shifted[r] = det.statistic(ShiftDetector::draw(shiftedPool, n, rng), 2 * r);
        } else {
            Rng rng(cfg.seed, "detect", "indist-draw", r);
            out.inDist[r] = det.statistic(ShiftDetector::draw(inDistPool, n, rng), 2 * r + 1);
        }
    });
    out.curve = roc_curve(out.shifted, out.inDist);
    out.auc = auc(out.shifted, out.inDist);
    std::tie(out.ciLow, out.ciHigh) = auc_bootstrap_ci(out.shifted, out.inDist, cfg.bootstrap, cfg.seed);
    return out;
}

inline std::string roc_csv(const RocResult& r)
{
    std::ostringstream os;
    os << "threshold,tpr,fpr\n";
    for (const auto& p : r.curve)
        os << detail::fmt17(p.threshold) << ',' << detail::fmt17(p.tpr) << ',' << detail::fmt17(p.fpr) << '\n';
    return os.str();
}

inline nlohmann::json to_json(const RocResult& r)
{
    return {{"kind", std::string(to_string(r.kind))}, {"N", r.N}, {"auc", r.auc}, {"ci_low", r.ciLow},
            {"ci_high", r.ciHigh}};
}

/* Data for a detection study: reference trained on source train, pools for both arms. */
struct DetectionScenario {
    GaussianShiftSpec data;
    TrainConfig reference;
    int nSourceTrain = 200;
};

struct DetectionSetup {
    Dataset sourceTrain;
    Dataset inDistPool;
    Dataset shiftedPool;
    LinearCritic ref;
};

inline DetectionSetup make_detection_setup(const DetectionScenario& sc, std::uint64_t seed)
{
    auto [src, tgt] = gen_gaussian_shift(sc.data, seed);
    if (sc.nSourceTrain < 1 || static_cast<std::size_t>(sc.nSourceTrain) >= src.size())
        throw InvalidInput("nSourceTrain must leave an in-distribution pool");
    const double frac = static_cast<double>(sc.nSourceTrain) / static_cast<double>(src.size());
    auto parts = split(src, frac, derive_seed(seed, "detect", "split"));
    TrainConfig refCfg = sc.reference;
    refCfg.seed = derive_seed(seed, "detect", "reference");
    auto ref = train_reference(parts.train.X, parts.train.require_labels(), sc.data.K, refCfg);
    return {std::move(parts.train), std::move(parts.test), std::move(tgt), std::move(ref)};
}

} // namespace disco

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "disco/critic.hpp"
#include "disco/data.hpp"
#include "disco/error.hpp"
#include "disco/parallel.hpp"

namespace disco {

/* sqrt((nS + 4 nT) log(1/delta) / (2 nS nT)) */
inline double sample_correction(long long nS, long long nT, double delta)
{
    if (nS < 1 || nT < 1) throw InvalidInput("sample_correction: sample sizes must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("sample_correction: delta must lie in (0, 1)");
    const double s = static_cast<double>(nS), t = static_cast<double>(nT);
    return std::sqrt((s + 4.0 * t) * std::log(1.0 / delta) / (2.0 * s * t));
}

struct BoundReport {
    double sourceTestError = 0.0;
    double empiricalDD = 0.0;
    double sampleCorrection = 0.0;
    double bound = 0.0;
    std::optional<double> trueTargetError;
    double delta = 0.05;
    long long nSource = 0;
    long long nTarget = 0;
    bool disjointTraining = true;      // caller's declaration, copied through
    std::optional<bool> premiseHolds;  // err_T(ref) - err_S(ref) <= empiricalDD, labelled targets only

    bool violated() const { return trueTargetError && *trueTargetError > bound; }
};

inline nlohmann::json to_json(const BoundReport& r)
{
    nlohmann::json j{{"sourceTestError", r.sourceTestError},
                     {"empiricalDD", r.empiricalDD},
                     {"sampleCorrection", r.sampleCorrection},
                     {"bound", r.bound},
                     {"delta", r.delta},
                     {"nSource", r.nSource},
                     {"nTarget", r.nTarget},
                     {"disjointTraining", r.disjointTraining}};
    j["trueTargetError"] = r.trueTargetError ? nlohmann::json(*r.trueTargetError) : nlohmann::json(nullptr);
    j["premiseHolds"] = r.premiseHolds ? nlohmann::json(*r.premiseHolds) : nlohmann::json(nullptr);
    j["violated"] = r.violated();
    return j;
}

inline double error_rate(const std::vector<int>& pred, const std::vector<int>& truth)
{
    if (pred.size() != truth.size()) throw InvalidInput("error_rate: size mismatch");
    if (pred.empty()) throw InvalidInput("error_rate: empty split");
    std::size_t e = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) e += pred[i] != truth[i];
    return static_cast<double>(e) / static_cast<double>(pred.size());
}

/*
 * Source error of ref + dd_true(critic vs ref, alpha = 1) + sample correction,
 * all on the test splits. Critic is anything with predict(RowMatrix).
 */
template <class Critic>
BoundReport error_bound(const Dataset& srcTest, const Dataset& tgtTest, const LinearCritic& ref,
                        const Critic& critic, double delta, bool disjointTraining = true)
{
    if (srcTest.size() == 0 || tgtTest.size() == 0) throw InvalidInput("error_bound: empty split");
    const auto& yS = srcTest.require_labels();
    const auto refS = ref.predict(srcTest.X);
    const auto refT = ref.predict(tgtTest.X);
    const auto cS = critic.predict(srcTest.X);
    const auto cT = critic.predict(tgtTest.X);

    BoundReport r;
    r.delta = delta;
    r.nSource = static_cast<long long>(srcTest.size());
    r.nTarget = static_cast<long long>(tgtTest.size());
    r.disjointTraining = disjointTraining;
    r.sourceTestError = error_rate(refS, yS);
    r.empiricalDD = empirical_dd(cS, refS, cT, refT, 1.0);
    r.sampleCorrection = sample_correction(r.nSource, r.nTarget, delta);
    r.bound = r.sourceTestError + r.empiricalDD + r.sampleCorrection;
    if (tgtTest.labels) {
        r.trueTargetError = error_rate(refT, *tgtTest.labels);
        r.premiseHolds = *r.trueTargetError - r.sourceTestError <= r.empiricalDD;
    }
    return r;
}

/* One repeat of the harness: data, reference and critic configuration. */
struct CalibrationScenario {
    GaussianShiftSpec data;
    TrainConfig reference;
    TrainConfig critic;
    double trainFraction = 0.5;
};

struct CalibrationRow {
    SurrogateKind kind = SurrogateKind::Ours;
    double delta = 0.05;
    std::uint64_t seed = 0;
    BoundReport report;
};

struct CalibrationSummary {
    SurrogateKind kind = SurrogateKind::Ours;
    double delta = 0.05;
    int seeds = 0;
    int violations = 0;
    double rate() const { return seeds ? static_cast<double>(violations) / seeds : 0.0; }
};

struct CalibrationTable {
    std::vector<CalibrationRow> rows;
    std::vector<CalibrationSummary> summary;

    double violation_rate(SurrogateKind kind, double delta) const
    {
        for (const auto& s : summary)
            if (s.kind == kind && s.delta == delta) return s.rate();
        throw InvalidInput("no calibration summary for the requested kind and delta");
    }
};

/* Source/target train and test splits of one seeded repeat. */
struct ShiftSplits {
    Split source;
    Split target;
};

inline ShiftSplits make_splits(const GaussianShiftSpec& spec, double trainFraction, std::uint64_t seed)
{
    auto [src, tgt] = gen_gaussian_shift(spec, seed);
    return {split(src, trainFraction, derive_seed(seed, "bound", "split-source")),
            split(tgt, trainFraction, derive_seed(seed, "bound", "split-target"))};
}

/*
 * Per seed: generate, split, train the reference on source train, train one
 * critic per kind against reference labels on the train splits, then evaluate
 * the bound on the test splits for every delta.
 */
inline CalibrationTable calibrate(const CalibrationScenario& sc, const std::vector<SurrogateKind>& kinds,
                                  const std::vector<double>& deltas, const std::vector<std::uint64_t>& seeds)
{
    if (seeds.size() < 20) throw InvalidInput("calibrate needs at least 20 seeds");
    if (kinds.empty() || deltas.empty()) throw InvalidInput("calibrate needs kinds and deltas");
    for (double d : deltas)
        if (!(d > 0.0 && d < 1.0)) throw InvalidInput("deltas must lie in (0, 1)");
    sc.data.validate();

    std::vector<std::vector<CalibrationRow>> perSeed(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t s) {
        const std::uint64_t seed = seeds[s];
        const auto parts = make_splits(sc.data, sc.trainFraction, seed);
        TrainConfig refCfg = sc.reference;
        refCfg.seed = derive_seed(seed, "bound", "reference");
        const auto ref = train_reference(parts.source.train.X, parts.source.train.require_labels(), sc.data.K, refCfg);
        const auto y1 = ref.predict(parts.source.train.X);
        const auto y2 = ref.predict(parts.target.train.X);
        for (auto kind : kinds) {
            TrainConfig cfg = sc.critic;
            cfg.seed = derive_seed(seed, "bound", "critic");
            const auto critic =
                train_critic(parts.source.train.X, y1, parts.target.train.X, y2, kind, cfg, &ref, nullptr, sc.data.K);
            for (double d : deltas)
                perSeed[s].push_back({kind, d, seed, error_bound(parts.source.test, parts.target.test, ref, critic, d)});
        }
    });

    CalibrationTable table;
    for (auto& rows : perSeed)
        for (auto& row : rows) table.rows.push_back(std::move(row));
    for (auto kind : kinds)
        for (double d : deltas) {
            CalibrationSummary sum{kind, d, 0, 0};
            for (const auto& row : table.rows)
                if (row.kind == kind && row.delta == d) {
                    ++sum.seeds;
                    sum.violations += row.report.violated();
                }
            table.summary.push_back(sum);
        }
    return table;
}

inline const char* kCalibrationHeader = "kind,delta,seed,srcErr,dd,correction,bound,trueErr,violated";

inline std::string calibration_csv(const CalibrationTable& t)
{
    std::ostringstream os;
    os << kCalibrationHeader << '\n';
    for (const auto& row : t.rows) {
        const auto& r = row.report;
        os << to_string(row.kind) << ',' << detail::fmt17(row.delta) << ',' << row.seed << ','
           << detail::fmt17(r.sourceTestError) << ',' << detail::fmt17(r.empiricalDD) << ','
           << detail::fmt17(r.sampleCorrection) << ',' << detail::fmt17(r.bound) << ','
           << (r.trueTargetError ? detail::fmt17(*r.trueTargetError) : std::string()) << ','
           << (r.violated() ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string calibration_summary_csv(const CalibrationTable& t)
{
    std::ostringstream os;
    os << "kind,delta,seeds,violations,rate\n";
    for (const auto& s : t.summary)
        os << to_string(s.kind) << ',' << detail::fmt17(s.delta) << ',' << s.seeds << ',' << s.violations << ','
           << detail::fmt17(s.rate()) << '\n';
    return os.str();
}

} // namespace disco

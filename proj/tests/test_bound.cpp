#include <cmath>

#include <gtest/gtest.h>

#include "disco/scenarios.hpp"

using namespace disco;

TEST(SampleCorrection, PaperValue)
{
    EXPECT_NEAR(sample_correction(1000, 1000, 0.05), 0.086541, 1e-6);
    // independent evaluation of sqrt((nS + 4 nT) log(1/delta) / (2 nS nT))
    EXPECT_NEAR(sample_correction(300, 700, 0.1), std::sqrt(3100.0 * std::log(10.0) / (2.0 * 300 * 700)), 1e-15);
    EXPECT_THROW(sample_correction(0, 10, 0.05), InvalidInput);
    EXPECT_THROW(sample_correction(10, 10, 1.0), InvalidInput);
}

// Property: more data or larger delta never widens the correction.
TEST(SampleCorrection, Monotone)
{
    for (long long n = 10; n < 10000; n *= 3) {
        EXPECT_GT(sample_correction(n, 500, 0.05), sample_correction(n + 1, 500, 0.05));
        EXPECT_GT(sample_correction(500, n, 0.05), sample_correction(500, n + 1, 0.05));
    }
    EXPECT_GT(sample_correction(100, 100, 0.01), sample_correction(100, 100, 0.2));
}

TEST(ErrorBound, IdentityAndPremise)
{
    const auto parts = make_splits(triangle_shift(1.0, 300, 300), 0.5, 2);
    const auto ref = train_reference(parts.source.train.X, parts.source.train.require_labels(), 3, reference_training());
    auto cfg = critic_training();
    cfg.epochs = 100;
    cfg.restarts = 2;
    const auto critic = train_critic(parts.source.train.X, ref.predict(parts.source.train.X), parts.target.train.X,
                                     ref.predict(parts.target.train.X), SurrogateKind::Ours, cfg, &ref, nullptr, 3);
    const auto rep = error_bound(parts.source.test, parts.target.test, ref, critic, 0.05);
    EXPECT_EQ(rep.bound, rep.sourceTestError + rep.empiricalDD + rep.sampleCorrection);
    ASSERT_TRUE(rep.trueTargetError.has_value());
    EXPECT_EQ(*rep.premiseHolds, *rep.trueTargetError - rep.sourceTestError <= rep.empiricalDD);
    EXPECT_EQ(rep.violated(), *rep.trueTargetError > rep.bound);
    const auto j = to_json(rep);
    EXPECT_EQ(j.at("nSource").get<long long>(), rep.nSource);
    // the reference as its own critic has zero discrepancy
    EXPECT_EQ(error_bound(parts.source.test, parts.target.test, ref, ref, 0.05).empiricalDD, 0.0);
}

TEST(Calibration, NeedsTwentySeeds)
{
    auto sc = calibration_scenario();
    std::vector<std::uint64_t> seeds(19);
    EXPECT_THROW(calibrate(sc, {SurrogateKind::Ours}, {0.05}, seeds), InvalidInput);
}

TEST(Calibration, TableShapeAndCsv)
{
    auto sc = calibration_scenario();
    sc.data = triangle_shift(1.0, 120, 120);
    sc.critic.epochs = 30;
    sc.critic.restarts = 1;
    sc.reference.epochs = 50;
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(s);
    const auto t = calibrate(sc, {SurrogateKind::GLK23, SurrogateKind::Ours}, {0.05, 0.2}, seeds);
    EXPECT_EQ(t.rows.size(), 2u * 2u * 20u);
    const double rate = t.violation_rate(SurrogateKind::Ours, 0.05);
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
    // larger delta means a smaller correction, hence at least as many violations
    EXPECT_GE(t.violation_rate(SurrogateKind::Ours, 0.2), rate);
    const auto csv = calibration_csv(t);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kCalibrationHeader);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 81);
    EXPECT_EQ(calibrate(sc, {SurrogateKind::GLK23, SurrogateKind::Ours}, {0.05, 0.2}, seeds).rows.back().report.bound,
              t.rows.back().report.bound);
}

#include <cmath>

#include <gtest/gtest.h>

#include "disco/consistency_lab.hpp"
#include "disco/instances.hpp"

using namespace disco;

TEST(BruteMin, MatchesClosedFormUnconstrained)
{
    for (double r : {0.3, 0.6, 2.0}) {
        const PseudoWeights w{r, 1.0};
        const LogitObjective f = [&](std::span<const double> s) {
            return surrogate_pseudo_loss(SurrogateKind::Ours, w, {0, 0}, s);
        };
        const auto m = brute_min(f, nullptr, default_grid(3));
        EXPECT_NEAR(m.value, r * std::log1p(1.0 / r) + std::log1p(r), 1e-7);
    }
}

// Frozen from a nested golden-section search over the region s1 >= max(s0, s2).
TEST(GapProfile, GlkRegionMinimumFrozen)
{
    const auto prof = gap_profile(SurrogateKind::GLK23, 3, {0.6, 1.0}, {0, 0}, default_grid(3));
    EXPECT_NEAR(prof.unconstrainedMin, 1.751648361612717, 1e-7);
    EXPECT_NEAR(prof.labels[0].surrogateExcess, 0.0, 1e-9);
    EXPECT_NEAR(prof.labels[1].surrogateExcess, 1.7562000979043328 - 1.751648361612717, 1e-6);
    EXPECT_NEAR(prof.labels[1].surrogateExcess, prof.labels[2].surrogateExcess, 1e-9);
}

TEST(GapProfile, TrueExcessOfAgreeingPoint)
{
    // r < 1: disagreeing with label 0 wins by dis - agree = 1 - 0.6
    const auto prof = gap_profile(SurrogateKind::GLK23, 3, {0.6, 1.0}, {0, 0}, default_grid(3));
    EXPECT_NEAR(prof.labels[0].trueExcess, 0.4, 1e-15);
    EXPECT_NEAR(prof.labels[1].trueExcess, 0.0, 1e-15);
    EXPECT_NEAR(delta_G(prof, 0.0).value, 0.4, 1e-15);
    EXPECT_NEAR(delta_G(prof, 0.01).value, 0.0, 1e-15);
    // the agreeing label keeps its full true excess at zero surrogate excess
    EXPECT_EQ(delta_H(prof, 0.4).value, 0.0);
    EXPECT_TRUE(std::isinf(delta_H(prof, 0.5).value));
}

TEST(GapProfile, OursHasNoGapInEitherRegime)
{
    for (int K = 3; K <= 4; ++K)
        for (double r : {0.4, 0.6, 0.9}) {
            const auto prof = gap_profile(SurrogateKind::Ours, K, {r, 1.0}, {0, 0}, default_grid(K));
            EXPECT_NEAR(delta_G(prof, 0.0).value, 0.0, 1e-12) << "K=" << K << " r=" << r;
        }
}

TEST(Floor, PaperValues)
{
    EXPECT_NEAR(inconsistency_floor(0.1, 5.0 / 3.0, true, true), 0.2777777777777778, 1e-12);
    EXPECT_DOUBLE_EQ(inconsistency_floor(0.1, 5.0 / 3.0, false, false), 0.0);
    EXPECT_THROW(inconsistency_floor(0.5, 1.0, true, true), InvalidInput);
    EXPECT_DOUBLE_EQ(band_lambda(SurrogateKind::GLK23, 3), 0.5);
    EXPECT_DOUBLE_EQ(band_lambda(SurrogateKind::RG23, 3), 0.75);
    EXPECT_THROW(band_lambda(SurrogateKind::Ours, 3), InvalidInput);
}

TEST(EpsilonStar, PositiveOnValidDeltas)
{
    for (auto kind : {SurrogateKind::RG23, SurrogateKind::GLK23})
        for (int K = 3; K <= 6; ++K)
            for (auto side : {Side::One, Side::Two}) {
                const double e = epsilon_star(kind, side, K, 0.05, 1.0);
                EXPECT_GT(e, 0.0);
                EXPECT_TRUE(std::isfinite(e));
            }
    EXPECT_THROW(epsilon_star(SurrogateKind::GLK23, Side::One, 3, 0.3, 1.0), InvalidInput);
}

TEST(ScanBand, Counterexamples)
{
    const auto glk = scan_band(SurrogateKind::GLK23, 3, 5.0 / 3.0, {0.6}, default_grid(3))[0];
    EXPECT_NEAR(glk.gapInf, 2.0 / 3.0, 1e-6);
    EXPECT_TRUE(glk.inBand);
    EXPECT_TRUE(glk.relationConsistent);
    EXPECT_EQ(glk.minimizerLabels, std::vector<int>{0});
    const auto rg = scan_band(SurrogateKind::RG23, 3, 1.0 / 0.85, {0.85}, default_grid(3))[0];
    EXPECT_NEAR(rg.gapInf, 0.15 / 0.85, 1e-6);
    EXPECT_TRUE(rg.floorOk);
}

// Property: outside the bands every surrogate reaches zero gap; OURS everywhere.
TEST(ScanBandProperties, GapOnlyInsideBand)
{
    const std::vector<double> rs{0.1, 0.3, 0.45, 0.55, 0.7, 0.8, 0.95, 1.3};
    for (auto kind : kAllSurrogates) {
        for (const auto& row : scan_band(kind, 3, 1.0, rs, default_grid(3))) {
            EXPECT_TRUE(row.relationConsistent) << to_string(kind) << " r=" << row.r;
            if (kind == SurrogateKind::Ours || !row.inBand) EXPECT_NEAR(row.gapInf, 0.0, 1e-9);
            else EXPECT_GT(row.gapInf, 0.0);
            EXPECT_GE(row.gapSup, row.gapInf);
        }
    }
}

TEST(Instances, RatioInstanceHonoursRatios)
{
    const auto inst = ratio_instance(3, 2.0, {0.6, 0.8});
    EXPECT_NEAR(density_ratio(inst[0], 2.0), 0.6, 1e-12);
    EXPECT_NEAR(density_ratio(inst[1], 2.0), 0.8, 1e-12);
    EXPECT_FALSE(inst[inst.size() - 1].ref.agree());
}

TEST(Instances, BandRecipeValidation)
{
    DiscreteInstanceSpec spec;
    spec.K = 3;
    spec.band = BandSpec{0.5, 0.1};
    spec.bandRatios = {0.65, 0.9};
    const auto g = gen_discrete_instance(spec);
    EXPECT_TRUE(g.inBand[0]);
    EXPECT_TRUE(g.inBand[1]);
    spec.bandRatios = {0.95};
    EXPECT_THROW(gen_discrete_instance(spec), InvalidInput);
    spec.band = BandSpec{0.5, 0.3};
    spec.bandRatios = {0.8};
    EXPECT_THROW(gen_discrete_instance(spec), InvalidInput);
}

TEST(LabCsv, Layout)
{
    EXPECT_EQ(lab_csv_header(3), "kind,K,alpha,r,epsilon,value,q0,q1,q2,relation\n");
    const auto row = lab_csv_row(SurrogateKind::GLK23, 3, 1.0, 0.6, 0.0, 0.5, {0.2, 0.3, 0.5}, "agree");
    EXPECT_EQ(row, "GLK23,3,1,0.59999999999999998,0,0.5,0.20000000000000001,0.29999999999999999,0.5,agree\n");
}

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "disco/discrepancy.hpp"
#include "disco/rng.hpp"

using namespace disco;

namespace {

FiniteShiftInstance two_point()
{
    // x0: source-heavy, references agree on 0; x1: target-heavy, references 1 / 2
    return FiniteShiftInstance(3, 2.0, {{0.75, 0.25, {0, 0}}, {0.25, 0.75, {1, 2}}});
}

FiniteShiftInstance random_instance(Rng& rng, int K, int n)
{
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    double sa = 0.0, sb = 0.0;
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = rng.index(4) == 0 ? 0.0 : rng.uniform();
        b[static_cast<std::size_t>(i)] = rng.uniform() + 1e-3;
        sa += a[static_cast<std::size_t>(i)];
        sb += b[static_cast<std::size_t>(i)];
    }
    if (sa == 0.0) {
        a[0] = 1.0;
        sa = 1.0;
    }
    std::vector<PointMass> pts;
    for (int i = 0; i < n; ++i)
        pts.push_back({a[static_cast<std::size_t>(i)] / sa, b[static_cast<std::size_t>(i)] / sb,
                       {static_cast<int>(rng.index(static_cast<std::size_t>(K))),
                        static_cast<int>(rng.index(static_cast<std::size_t>(K)))}});
    return FiniteShiftInstance(K, 0.5 + rng.uniform() * 2.0, pts);
}

} // namespace

TEST(DdTrue, HandComputedTwoPoint)
{
    const auto inst = two_point();
    // critic says 0 everywhere: source disagrees on x1 (0.25), target disagrees on x1 (0.75)
    const std::vector<int> c0{0, 0};
    EXPECT_DOUBLE_EQ(dd_true(inst, c0), 2.0 * 0.75 - 0.25);
    // critic says 1 at x0, 1 at x1
    const std::vector<int> c1{1, 1};
    EXPECT_DOUBLE_EQ(dd_true(inst, c1), 2.0 * 1.0 - 0.75);
    // critic agrees with y1 everywhere
    const std::vector<int> c2{0, 1};
    EXPECT_DOUBLE_EQ(dd_true(inst, c2), 2.0 * 0.75 - 0.0);
}

TEST(DdTrue, RejectsMismatchedAssignment)
{
    const auto inst = two_point();
    EXPECT_THROW(dd_true(inst, std::vector<int>{0}), InvalidInput);
    EXPECT_THROW(dd_true(inst, std::vector<int>{0, 3}), InvalidInput);
}

TEST(Instance, Validation)
{
    EXPECT_THROW(FiniteShiftInstance(3, 1.0, {{0.5, 1.0, {0, 0}}}), InvalidInput);
    EXPECT_THROW(FiniteShiftInstance(3, 0.0, {{1.0, 1.0, {0, 0}}}), InvalidInput);
    EXPECT_THROW(FiniteShiftInstance(3, 1.0, {{1.0, 1.0, {0, 5}}}), InvalidInput);
    EXPECT_THROW(FiniteShiftInstance(1, 1.0, {{1.0, 1.0, {0, 0}}}), InvalidInput);
}

TEST(Instance, JsonRoundTrip)
{
    const auto inst = two_point();
    nlohmann::json j = inst;
    const auto back = instance_from_json(j);
    ASSERT_EQ(back.size(), inst.size());
    EXPECT_EQ(back.alpha(), inst.alpha());
    EXPECT_EQ(back[1].ref.y2, 2);
    EXPECT_THROW(instance_from_json(nlohmann::json{{"K", 3}}), InvalidInput);
}

TEST(DdSurrogate, HandComputed)
{
    const auto inst = two_point();
    const std::vector<std::vector<double>> s{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    // uniform logits: CE = log 3, OURS_dis = -log(2/3)
    const double expected = std::log(3.0) + 2.0 * std::log(1.5);
    EXPECT_NEAR(dd_surrogate(inst, s, SurrogateKind::Ours), expected, 1e-14);
}

// Property: pointwise side decomposition reproduces the global values.
TEST(RecastProperties, IdentityAndSign)
{
    Rng rng(21, "test", "recast");
    for (int t = 0; t < 100; ++t) {
        const int K = 2 + static_cast<int>(rng.index(4));
        const auto inst = random_instance(rng, K, 1 + static_cast<int>(rng.index(8)));
        std::vector<int> labels;
        std::vector<std::vector<double>> logits;
        for (std::size_t i = 0; i < inst.size(); ++i) {
            labels.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(K))));
            std::vector<double> s(static_cast<std::size_t>(K));
            for (double& v : s) v = 2.0 * rng.normal();
            logits.push_back(s);
        }
        const double dd = dd_true(inst, labels);
        EXPECT_NEAR(dd_true_recast(inst, labels, RecastConvention::Ascent), dd, 1e-12);
        EXPECT_NEAR(dd_true_recast(inst, labels, RecastConvention::Descent), -dd, 1e-12);
        for (auto kind : kAllSurrogates)
            EXPECT_NEAR(dd_surr_recast(inst, logits, kind), dd_surrogate(inst, logits, kind), 1e-12);
        for (const auto& p : inst.points()) {
            if (p.pS == 0.0 && p.pT == 0.0) continue;
            EXPECT_NE(side_active(Side::One, p.pS, p.pT), side_active(Side::Two, p.pS, p.pT));
        }
    }
}

TEST(RecastProperties, SwapRolesNegatesAndRescales)
{
    Rng rng(22, "test", "swap");
    for (int t = 0; t < 50; ++t) {
        const auto inst = random_instance(rng, 3, 5);
        std::vector<int> c;
        for (std::size_t i = 0; i < inst.size(); ++i) c.push_back(static_cast<int>(rng.index(3)));
        // alpha T - S  ->  (1/alpha) S - T  =  -(1/alpha) (alpha T - S)
        EXPECT_NEAR(dd_true(swap_roles(inst), c), -dd_true(inst, c) / inst.alpha(), 1e-12);
    }
}

TEST(PseudoWeights, SidesAndRatio)
{
    const auto w1 = pseudo_weights(Side::One, 0.6, 0.3, 2.0);
    EXPECT_DOUBLE_EQ(w1.agree, 1.0);
    EXPECT_DOUBLE_EQ(w1.dis, 1.0);
    EXPECT_EQ(pseudo_weights(Side::Two, 0.6, 0.3, 2.0).agree, 0.0);
    const auto w2 = pseudo_weights(Side::Two, 0.2, 0.4, 2.0);
    EXPECT_DOUBLE_EQ(w2.ratio(), 0.2 / (2.0 * 0.4));
    EXPECT_DOUBLE_EQ(side_weights(Side::One, 0.5, 3.0).ratio(), 0.5);
    EXPECT_DOUBLE_EQ(side_weights(Side::Two, 0.5, 3.0).ratio(), 0.5);
    EXPECT_THROW(pseudo_weights(Side::One, 0.0, 0.0, 1.0), InvalidInput);
    EXPECT_THROW(side_weights(Side::One, 0.0, 1.0), InvalidInput);
}

TEST(BK, CriticalPointAndFrozenValue)
{
    for (int K = 3; K <= 10; ++K) EXPECT_NEAR(b_K(K, K / (2.0 * (K - 1))), 1.0, 1e-12);
    // frozen from bisection on the first-order condition of r CE + RG_dis along the margin
    EXPECT_NEAR(b_K(3, 0.6), 0.7661903789690601, 1e-12);
    EXPECT_NEAR(b_K(5, 0.85), 1.5681541692269403, 1e-12);
    EXPECT_THROW(b_K(2, 1.0), InvalidInput);
}

TEST(PointwiseOpt, FrozenValuesFromMarginOracle)
{
    EXPECT_NEAR(pointwise_opt(SurrogateKind::RG23, 3, 0.6, true).value, 1.339102296378163, 1e-9);
    EXPECT_NEAR(pointwise_opt(SurrogateKind::GLK23, 3, 0.6, true).value, 1.751648361612717, 1e-9);
    EXPECT_NEAR(pointwise_opt(SurrogateKind::Ours, 4, 2.0, true).value, 1.9095425048844386, 1e-9);
    EXPECT_NEAR(pointwise_opt(SurrogateKind::RG23, 5, 0.85, true).value, 2.0202771347857413, 1e-9);
}

TEST(PointwiseOpt, Relations)
{
    EXPECT_EQ(pointwise_opt(SurrogateKind::GLK23, 3, 0.6, true).relation, Relation::Agree);
    EXPECT_EQ(pointwise_opt(SurrogateKind::GLK23, 3, 0.4, true).relation, Relation::Disagree);
    EXPECT_EQ(pointwise_opt(SurrogateKind::GLK23, 3, 0.5, true).relation, Relation::Tie);
    EXPECT_EQ(pointwise_opt(SurrogateKind::RG23, 3, 0.85, true).relation, Relation::Agree);
    EXPECT_EQ(pointwise_opt(SurrogateKind::Ours, 3, 0.6, true).relation, Relation::Either);
    EXPECT_EQ(pointwise_opt(SurrogateKind::Ours, 3, 1.5, true).relation, Relation::Agree);
    EXPECT_EQ(pointwise_opt(SurrogateKind::Ours, 3, 0.4, true).relation, Relation::Disagree);
    EXPECT_EQ(pointwise_opt(SurrogateKind::Ours, 2, 0.6, true).relation, Relation::Disagree);
    EXPECT_FALSE(pointwise_opt(SurrogateKind::Ours, 4, 0.6, true).unique);
}

// Property: the reported minimiser attains the reported value.
TEST(PointwiseOpt, MinimiserAttainsValue)
{
    for (auto kind : kAllSurrogates)
        for (int K = 2; K <= 6; ++K)
            for (double r : {0.2, 0.6, 0.9, 1.7, 4.0}) {
                const auto o = pointwise_opt(kind, K, r, true);
                ASSERT_TRUE(o.attained);
                std::vector<double> s;
                for (double q : o.q) s.push_back(std::log(q));
                const PseudoWeights w{r, 1.0};
                EXPECT_NEAR(surrogate_pseudo_loss(kind, w, {0, 0}, s), o.value, 1e-10)
                    << to_string(kind) << " K=" << K << " r=" << r;
            }
}

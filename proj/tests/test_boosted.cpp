#include <gtest/gtest.h>

#include "disco/boosted.hpp"
#include "disco/scenarios.hpp"

using namespace disco;

namespace {

RowMatrix column(std::initializer_list<double> v)
{
    RowMatrix X(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) X(i++, 0) = x;
    return X;
}

} // namespace

// Hand-derived first round: CE at zero logits gives g = p - e_y = -+0.5, h = 2 p (1 - p) = 0.5.
TEST(Boosted, SingleStumpByHand)
{
    const RowMatrix XS = column({0.0, 1.0, 2.0, 3.0});
    const RowMatrix XT(0, 1);
    BoostConfig cfg;
    cfg.rounds = 1;
    cfg.maxDepth = 1;
    cfg.shrinkage = 0.3;
    cfg.lambda = 1.0;
    const auto c = train_boosted_critic(XS, {0, 0, 1, 1}, XT, {}, SurrogateKind::Ours, 2, cfg);
    ASSERT_EQ(c.rounds().size(), 1u);
    const auto& tree = c.rounds()[0][0];
    ASSERT_EQ(tree.nodes.size(), 3u);
    EXPECT_EQ(tree.nodes[0].feature, 0);
    EXPECT_DOUBLE_EQ(tree.nodes[0].threshold, 1.5);
    // left leaf: G = -1, H = 1 -> -G / (H + lambda) = 0.5
    EXPECT_DOUBLE_EQ(tree.nodes[static_cast<std::size_t>(tree.nodes[0].left)].value, 0.5);
    EXPECT_DOUBLE_EQ(tree.nodes[static_cast<std::size_t>(tree.nodes[0].right)].value, -0.5);
    const RowMatrix S = c.logits(column({0.5, 2.5}));
    EXPECT_DOUBLE_EQ(S(0, 0), 0.15);
    EXPECT_DOUBLE_EQ(S(1, 1), 0.15);
    EXPECT_EQ(c.predict(XS), (std::vector<int>{0, 0, 1, 1}));
}

TEST(Boosted, ZeroRoundsIsUniform)
{
    const RowMatrix X = column({0.0, 1.0});
    BoostConfig cfg;
    cfg.rounds = 0;
    const auto c = train_boosted_critic(X, {0, 1}, X, {1, 0}, SurrogateKind::GLK23, 3, cfg);
    EXPECT_TRUE(c.logits(X).isZero());
    EXPECT_EQ(c.predict(X), (std::vector<int>{0, 0}));
}

TEST(Boosted, BinaryGlkEqualsOurs)
{
    const auto [src, tgt] = gen_gaussian_shift(tabular_shift(2, 2.0, 200, 100), 1);
    BoostConfig cfg;
    cfg.rounds = 5;
    const auto a = train_boosted_critic(src.X, src.require_labels(), tgt.X, tgt.require_labels(),
                                        SurrogateKind::GLK23, 2, cfg);
    const auto b = train_boosted_critic(src.X, src.require_labels(), tgt.X, tgt.require_labels(),
                                        SurrogateKind::Ours, 2, cfg);
    EXPECT_EQ(a.logits(tgt.X), b.logits(tgt.X));
}

// Property: depth cap respected and the training surrogate decreases with rounds.
TEST(Boosted, DepthCapAndFit)
{
    const auto [src, tgt] = gen_gaussian_shift(tabular_shift(4, 2.0, 300, 100), 2);
    BoostConfig cfg;
    cfg.rounds = 10;
    cfg.maxDepth = 2;
    const auto c = train_boosted_critic(src.X, src.require_labels(), tgt.X, tgt.require_labels(),
                                        SurrogateKind::Ours, 4, cfg);
    for (const auto& round : c.rounds())
        for (const auto& t : round) EXPECT_LE(t.depth(), 2);
    std::size_t wrong = 0;
    const auto pred = c.predict(src.X);
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != (*src.labels)[i];
    EXPECT_LT(static_cast<double>(wrong) / static_cast<double>(pred.size()), 0.5);
}

TEST(Boosted, JsonRoundTripAndValidation)
{
    const auto [src, tgt] = gen_gaussian_shift(tabular_shift(3, 2.0, 150, 80), 3);
    BoostConfig cfg;
    cfg.rounds = 3;
    const auto c = train_boosted_critic(src.X, src.require_labels(), tgt.X, tgt.require_labels(),
                                        SurrogateKind::GLK23, 3, cfg);
    const auto j = critic_to_json(c);
    EXPECT_EQ(j.at("type"), "boosted");
    const auto back = boosted_critic_from_json(j);
    EXPECT_EQ(back.logits(tgt.X), c.logits(tgt.X));
    EXPECT_THROW(train_boosted_critic(src.X, src.require_labels(), tgt.X, tgt.require_labels(),
                                      SurrogateKind::RG23, 3, cfg),
                 InvalidInput);
    cfg.maxDepth = 7;
    EXPECT_THROW(cfg.validate(), InvalidInput);
}

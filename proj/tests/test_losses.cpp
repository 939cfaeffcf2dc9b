#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "disco/losses.hpp"
#include "disco/rng.hpp"

using namespace disco;

namespace {

// Naive oracles: plain exponentials, only valid for moderate logits.
double lse_naive(const std::vector<double>& s)
{
    double z = 0.0;
    for (double v : s) z += std::exp(v);
    return std::log(z);
}

double mean_other(const std::vector<double>& s, int y)
{
    double a = 0.0;
    for (int k = 0; k < static_cast<int>(s.size()); ++k)
        if (k != y) a += s[static_cast<std::size_t>(k)];
    return a / static_cast<double>(s.size() - 1);
}

double oracle(LossKind kind, int y, const std::vector<double>& s)
{
    const double p = std::exp(s[static_cast<std::size_t>(y)]) / std::exp(lse_naive(s));
    switch (kind) {
    case LossKind::CE: return -std::log(p);
    case LossKind::RG: return std::log(1.0 + std::exp(s[static_cast<std::size_t>(y)] - mean_other(s, y)));
    case LossKind::GLK: return lse_naive(s) - mean_other(s, y);
    case LossKind::Ours: return -std::log(1.0 - p);
    default: return NAN;
    }
}

std::vector<double> draw_logits(Rng& rng, int K, double scale)
{
    std::vector<double> s(static_cast<std::size_t>(K));
    for (double& v : s) v = scale * rng.normal();
    return s;
}

const LossKind kSmooth[] = {LossKind::CE, LossKind::RG, LossKind::GLK, LossKind::Ours};

} // namespace

TEST(Losses, MatchNaiveOracle)
{
    Rng rng(11, "test", "losses-oracle");
    for (auto kind : kSmooth)
        for (int draw = 0; draw < 500; ++draw) {
            const int K = 3 + static_cast<int>(rng.index(6));
            const auto s = draw_logits(rng, K, 2.0);
            const int y = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
            EXPECT_NEAR(loss_eval(kind, y, s), oracle(kind, y, s), 1e-10) << to_string(kind) << " K=" << K;
        }
}

TEST(Losses, BinaryDisagreementIsLogisticOnMargin)
{
    for (auto kind : {LossKind::RG, LossKind::GLK, LossKind::Ours}) {
        const std::vector<double> s{0.3, -1.2};
        EXPECT_NEAR(loss_eval(kind, 0, s), std::log1p(std::exp(1.5)), 1e-14);
        EXPECT_NEAR(loss_eval(kind, 1, s), std::log1p(std::exp(-1.5)), 1e-14);
    }
}

TEST(Losses, ZeroOneArgmaxTieGoesToLowestIndex)
{
    const std::vector<double> s{1.0, 1.0, 0.0};
    EXPECT_EQ(loss_eval(LossKind::ZeroOne, 0, s), 0.0);
    EXPECT_EQ(loss_eval(LossKind::ZeroOne, 1, s), 1.0);
    EXPECT_EQ(score_to_class(s), 0);
}

TEST(Losses, StableAtExtremeLogits)
{
    const std::vector<double> s{800.0, -800.0, 0.0};
    for (auto kind : kSmooth) {
        for (int y = 0; y < 3; ++y) {
            const double v = loss_eval(kind, y, s);
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_GE(v, 0.0);
            for (double g : loss_grad(kind, y, s)) EXPECT_TRUE(std::isfinite(g));
        }
    }
    EXPECT_NEAR(loss_eval(LossKind::CE, 0, s), 0.0, 1e-300);
    EXPECT_NEAR(loss_eval(LossKind::Ours, 1, s), 0.0, 1e-300);
}

TEST(Losses, RejectsBadInput)
{
    const std::vector<double> s{0.0, 1.0, 2.0};
    EXPECT_THROW(loss_eval(LossKind::CE, 3, s), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::CE, -1, s), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::CE, 0, std::vector<double>{0.0, NAN}), InvalidInput);
    EXPECT_THROW(loss_grad(LossKind::ZeroOne, 0, s), InvalidInput);
    EXPECT_THROW(hessian_diag_bound(LossKind::RG, 0, s), InvalidInput);
}

// Property: softmax-style invariance under a common logit shift.
TEST(LossProperties, ShiftInvariance)
{
    Rng rng(12, "test", "shift");
    for (auto kind : kSmooth)
        for (int draw = 0; draw < 200; ++draw) {
            const int K = 2 + static_cast<int>(rng.index(7));
            auto s = draw_logits(rng, K, 3.0);
            const int y = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
            const double c = 10.0 * rng.normal();
            auto t = s;
            for (double& v : t) v += c;
            EXPECT_NEAR(loss_eval(kind, y, s), loss_eval(kind, y, t), 1e-9);
        }
}

TEST(LossProperties, GradientMatchesFiniteDifference)
{
    Rng rng(13, "test", "fd");
    constexpr double h = 1e-6;
    for (auto kind : kSmooth)
        for (int draw = 0; draw < 200; ++draw) {
            const int K = 2 + static_cast<int>(rng.index(7));
            const auto s = draw_logits(rng, K, 2.0);
            const int y = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
            const auto g = loss_grad(kind, y, s);
            double sum = 0.0;
            for (int k = 0; k < K; ++k) {
                auto sp = s, sm = s;
                sp[static_cast<std::size_t>(k)] += h;
                sm[static_cast<std::size_t>(k)] -= h;
                const double fd = (oracle(kind, y, sp) - oracle(kind, y, sm)) / (2.0 * h);
                EXPECT_NEAR(g[static_cast<std::size_t>(k)], fd, 1e-6);
                sum += g[static_cast<std::size_t>(k)];
            }
            EXPECT_NEAR(sum, 0.0, 1e-12);
        }
}

TEST(LossProperties, HessianBoundDominatesDiagonal)
{
    Rng rng(14, "test", "hessian");
    constexpr double h = 1e-5;
    for (auto kind : {LossKind::CE, LossKind::GLK, LossKind::Ours})
        for (int draw = 0; draw < 200; ++draw) {
            const int K = 2 + static_cast<int>(rng.index(7));
            const auto s = draw_logits(rng, K, 2.0);
            const int y = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
            const auto hb = hessian_diag_bound(kind, y, s);
            for (int k = 0; k < K; ++k) {
                auto sp = s, sm = s;
                sp[static_cast<std::size_t>(k)] += h;
                sm[static_cast<std::size_t>(k)] -= h;
                const double second = (oracle(kind, y, sp) - 2.0 * oracle(kind, y, s) + oracle(kind, y, sm)) / (h * h);
                EXPECT_GE(hb[static_cast<std::size_t>(k)] - second, -1e-4);
                EXPECT_GE(hb[static_cast<std::size_t>(k)], 0.0);
            }
        }
}

TEST(LossProperties, BinaryRoutesAgreeWithGeneralFormulas)
{
    Rng rng(15, "test", "binary");
    for (int draw = 0; draw < 300; ++draw) {
        const auto s = draw_logits(rng, 2, 4.0);
        const int y = static_cast<int>(rng.index(2));
        const double ours = loss_eval(LossKind::Ours, y, s);
        for (auto kind : {LossKind::RG, LossKind::GLK, LossKind::Ours})
            EXPECT_NEAR(detail::general_eval(kind, static_cast<std::size_t>(y), s), ours, 1e-10);
    }
}

#include <cmath>

#include <gtest/gtest.h>

#include "disco/scenarios.hpp"

using namespace disco;

TEST(PValue, Definition)
{
    EXPECT_DOUBLE_EQ(p_value(0.5, {0.1, 0.2, 0.5, 0.9}), 3.0 / 5.0);
    EXPECT_DOUBLE_EQ(p_value(1.0, {0.1, 0.2}), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(p_value(0.0, {0.1, 0.2}), 1.0);
}

TEST(OrderQuantile, Ceil)
{
    const std::vector<double> s{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(order_quantile(s, 0.95), 5);
    EXPECT_DOUBLE_EQ(order_quantile(s, 0.4), 2);
    EXPECT_DOUBLE_EQ(order_quantile(s, 0.0), 1);
    EXPECT_THROW(order_quantile({}, 0.5), InvalidInput);
}

// Oracle: AUC as the Mann-Whitney probability P(pos > neg) + 0.5 P(tie), counted by hand.
TEST(Roc, AucByPairCounting)
{
    const std::vector<double> pos{0.9, 0.5, 0.5, 0.3}, neg{0.5, 0.1, 0.2};
    // pairs: 0.9 beats 3; 0.5 ties 1, beats 2 (x2); 0.3 beats 2
    EXPECT_DOUBLE_EQ(auc(pos, neg), (3 + 2.5 + 2.5 + 2) / 12.0);
    const auto curve = roc_curve(pos, neg);
    EXPECT_TRUE(std::isinf(curve.front().threshold));
    EXPECT_EQ(curve.front().tpr, 0.0);
    EXPECT_EQ(curve.back().tpr, 1.0);
    EXPECT_EQ(curve.back().fpr, 1.0);
    // trapezoid area under the curve equals the pair-count AUC
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
    EXPECT_NEAR(area, auc(pos, neg), 1e-15);
}

TEST(Roc, BootstrapCiBracketsAndIsSeeded)
{
    const std::vector<double> pos{0.9, 0.8, 0.6, 0.4, 0.7}, neg{0.5, 0.1, 0.2, 0.6, 0.3};
    const auto a = auc_bootstrap_ci(pos, neg, 500, 7, 0.95);
    const auto b = auc_bootstrap_ci(pos, neg, 500, 7, 0.95);
    EXPECT_EQ(a, b);
    EXPECT_LE(a.first, auc(pos, neg));
    EXPECT_GE(a.second, auc(pos, neg));
    EXPECT_LE(a.second, 1.0);
}

TEST(Detector, SeparatesShiftAndIsPaired)
{
    auto sc = detection_scenario(3);
    sc.data.nSource = 600;
    sc.data.nTarget = 400;
    sc.nSourceTrain = 100;
    const auto setup = make_detection_setup(sc, 1);
    DetectionConfig cfg;
    cfg.nTarget = 20;
    cfg.repeats = 15;
    cfg.bootstrap = 50;
    cfg.nullRuns = 100;
    cfg.boost.rounds = 5;
    const ShiftDetector det(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref,
                            SurrogateKind::Ours, cfg);
    const auto r = roc(det, setup.shiftedPool.X, setup.inDistPool.X);
    EXPECT_EQ(r.shifted.size(), 15u);
    EXPECT_GT(r.auc, 0.5);
    const auto again = roc(det, setup.shiftedPool.X, setup.inDistPool.X);
    EXPECT_EQ(r.shifted, again.shifted);

    const auto null = det.calibrate_null(setup.inDistPool.X);
    EXPECT_EQ(null.size(), 100u);
    const auto res = det.detect(setup.shiftedPool.X.topRows(20), null, 3);
    EXPECT_GE(res.pValue, 1.0 / 101.0);
    EXPECT_LE(res.pValue, 1.0);
    EXPECT_EQ(res.flagged, res.pValue <= cfg.level);
}

TEST(Detector, BinaryKindsGiveIdenticalStatistics)
{
    auto sc = detection_scenario(2);
    sc.data.nSource = 500;
    sc.data.nTarget = 300;
    sc.nSourceTrain = 100;
    const auto setup = make_detection_setup(sc, 2);
    DetectionConfig cfg;
    cfg.nTarget = 10;
    cfg.repeats = 8;
    cfg.bootstrap = 10;
    cfg.boost.rounds = 4;
    const ShiftDetector g(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref, SurrogateKind::GLK23, cfg);
    const ShiftDetector o(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref, SurrogateKind::Ours, cfg);
    EXPECT_EQ(roc(g, setup.shiftedPool.X, setup.inDistPool.X).shifted,
              roc(o, setup.shiftedPool.X, setup.inDistPool.X).shifted);
}

TEST(Detector, Validation)
{
    DetectionConfig cfg;
    cfg.nullRuns = 50;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    const auto setup = make_detection_setup(detection_scenario(3), 0);
    EXPECT_THROW(ShiftDetector(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref,
                               SurrogateKind::RG23, DetectionConfig{}),
                 InvalidInput);
}

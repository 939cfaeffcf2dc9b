#pragma once

/* Canonical synthetic setups used by the CLI defaults and the acceptance run. */

#include "disco/attack.hpp"
#include "disco/bound.hpp"
#include "disco/detect.hpp"

namespace disco {

/* Three classes on a triangle in 2-d; the whole target is translated by shift * (1, 0.5). */
inline GaussianShiftSpec triangle_shift(double shift, int nSource = 1000, int nTarget = 1000)
{
    GaussianShiftSpec s;
    s.K = 3;
    s.d = 2;
    s.sigma = 1.0;
    s.nSource = nSource;
    s.nTarget = nTarget;
    s.labelNoise = 0.05;
    s.sourceMeans.resize(3, 2);
    s.sourceMeans << 0.0, 0.0, 3.0, 0.0, 1.5, 2.6;
    s.targetMeans = s.sourceMeans;
    s.targetMeans.col(0).array() += shift;
    s.targetMeans.col(1).array() += 0.5 * shift;
    return s;
}

/*
 * K classes in d = 4 with means drawn once from U[0, 4]^4 on a fixed stream;
 * in the target, class k moves by `shift` along feature k mod 4.
 */
inline GaussianShiftSpec tabular_shift(int K, double shift, int nSource = 2000, int nTarget = 1000)
{
    GaussianShiftSpec s;
    s.K = K;
    s.d = 4;
    s.sigma = 1.0;
    s.nSource = nSource;
    s.nTarget = nTarget;
    s.sourceMeans.resize(K, s.d);
    Rng rng(0, "scenario", "tabular-means", static_cast<std::uint64_t>(K));
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < s.d; ++j) s.sourceMeans(k, j) = 4.0 * rng.uniform();
    s.targetMeans = s.sourceMeans;
    for (int k = 0; k < K; ++k) s.targetMeans(k, k % s.d) += shift;
    return s;
}

inline TrainConfig reference_training()
{
    TrainConfig c;
    c.epochs = 200;
    c.learningRate = 0.05;
    c.restarts = 1;
    return c;
}

/* Features live in [0, 1], so the default 3e-3 rate needs far more than 100 steps; see README. */
inline TrainConfig critic_training()
{
    TrainConfig c;
    c.epochs = 600;
    c.learningRate = 0.05;
    c.restarts = 5;
    return c;
}

inline CalibrationScenario calibration_scenario(double shift = 1.0)
{
    return {triangle_shift(shift), reference_training(), critic_training(), 0.5};
}

inline AttackScenario attack_scenario()
{
    AttackScenario s;
    s.data = triangle_shift(1.0, 600, 600);
    s.reference = reference_training();
    s.critic = critic_training();
    return s;
}

inline DetectionScenario detection_scenario(int K = 5)
{
    DetectionScenario s;
    s.data = tabular_shift(K, 3.0);
    s.reference = reference_training();
    s.reference.epochs = 300;
    s.nSourceTrain = 200;
    return s;
}

} // namespace disco

#pragma once

/*
 * Pointwise losses on logits s in R^K with 0-based class labels.
 *
 *   CE    -log softmax(s)_y
 *   RG    log(1 + exp(s_y - mean_{c != y} s_c))
 *   GLK   -(1/(K-1)) sum_{c != y} log softmax(s)_c
 *   OURS  -log(1 - softmax(s)_y)
 *
 * For K = 2 the three disagreement losses coincide and are evaluated through a
 * single binary routine, so their values and derivatives agree bit for bit.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disco/error.hpp"
#include "disco/numeric.hpp"

namespace disco {

enum class LossKind { ZeroOne, CE, RG, GLK, Ours };

inline constexpr double kLossCap = 1e30;

inline std::string_view to_string(LossKind k)
{
    switch (k) {
    case LossKind::ZeroOne: return "ZERO_ONE";
    case LossKind::CE: return "CE";
    case LossKind::RG: return "RG_DIS";
    case LossKind::GLK: return "GLK_DIS";
    case LossKind::Ours: return "OURS_DIS";
    }
    return "?";
}

inline void check_logits(std::span<const double> s)
{
    if (s.size() < 2) throw InvalidInput("logits need K >= 2 entries");
    for (double v : s)
        if (!std::isfinite(v)) throw InvalidInput("logits must be finite");
}

inline void check_label(int y, std::size_t K)
{
    if (y < 0 || static_cast<std::size_t>(y) >= K)
        throw InvalidInput("class label " + std::to_string(y) + " outside [0, " +
                           std::to_string(K) + ")");
}

/* Entries sum to 1 within 1e-12 and are non-negative. */
inline void check_prob_vector(std::span<const double> q)
{
    if (q.size() < 2) throw InvalidInput("probability vector needs K >= 2 entries");
    double total = 0.0;
    for (double v : q) {
        if (!(v >= 0.0)) throw InvalidInput("probability entries must be >= 0");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("probabilities must sum to 1");
}

inline double log_sum_exp(std::span<const double> s)
{
    const double m = *std::max_element(s.begin(), s.end());
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - m);
    return m + std::log(acc);
}

/* log-sum-exp over all entries except index skip. */
inline double log_sum_exp_except(std::span<const double> s, std::size_t skip)
{
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.size(); ++c)
        if (c != skip) m = std::max(m, s[c]);
    double acc = 0.0;
    for (std::size_t c = 0; c < s.size(); ++c)
        if (c != skip) acc += std::exp(s[c] - m);
    return m + std::log(acc);
}

inline std::vector<double> log_softmax(std::span<const double> s)
{
    check_logits(s);
    const double lse = log_sum_exp(s);
    std::vector<double> out(s.size());
    for (std::size_t c = 0; c < s.size(); ++c) out[c] = s[c] - lse;
    return out;
}

inline std::vector<double> softmax(std::span<const double> s)
{
    auto out = log_softmax(s);
    for (double& v : out) v = std::exp(v);
    return out;
}

/* Smallest index attaining the maximum. */
inline int score_to_class(std::span<const double> s)
{
    check_logits(s);
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.size(); ++c)
        if (s[c] > s[best]) best = c;
    return static_cast<int>(best);
}

namespace detail {

inline double mean_except(std::span<const double> s, std::size_t y)
{
    double acc = 0.0;
    for (std::size_t c = 0; c < s.size(); ++c)
        if (c != y) acc += s[c];
    return acc / static_cast<double>(s.size() - 1);
}

/* K-general formulas; the public entry points route K = 2 elsewhere. */
inline double general_eval(LossKind kind, std::size_t y, std::span<const double> s)
{
    switch (kind) {
    case LossKind::ZeroOne: {
        std::size_t best = 0;
        for (std::size_t c = 1; c < s.size(); ++c)
            if (s[c] > s[best]) best = c;
        return best == y ? 0.0 : 1.0;
    }
    case LossKind::CE: return std::min(log_sum_exp(s) - s[y], kLossCap);
    case LossKind::RG: return std::min(softplus(s[y] - mean_except(s, y)), kLossCap);
    case LossKind::GLK: return std::min(log_sum_exp(s) - mean_except(s, y), kLossCap);
    case LossKind::Ours:
        return std::min(log_sum_exp(s) - log_sum_exp_except(s, y), kLossCap);
    }
    return 0.0;
}

inline void general_grad(LossKind kind, std::size_t y, std::span<const double> s,
                         std::span<double> g)
{
    const std::size_t K = s.size();
    const double km1 = static_cast<double>(K - 1);
    switch (kind) {
    case LossKind::CE: {
        const double lse = log_sum_exp(s);
        for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(s[k] - lse);
        g[y] -= 1.0;
        return;
    }
    case LossKind::RG: {
        const double sig = sigmoid(s[y] - mean_except(s, y));
        for (std::size_t k = 0; k < K; ++k) g[k] = -sig / km1;
        g[y] = sig;
        return;
    }
    case LossKind::GLK: {
        const double lse = log_sum_exp(s);
        for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(s[k] - lse) - 1.0 / km1;
        g[y] = std::exp(s[y] - lse);
        return;
    }
    case LossKind::Ours: {
        // k != y: -p_y p_k / (1 - p_y) = -p_y * softmax over the other classes
        const double py = std::exp(s[y] - log_sum_exp(s));
        const double lseOther = log_sum_exp_except(s, y);
        for (std::size_t k = 0; k < K; ++k) g[k] = -py * std::exp(s[k] - lseOther);
        g[y] = py;
        return;
    }
    case LossKind::ZeroOne: break;
    }
    throw InvalidInput("zero-one loss has no gradient");
}

inline void general_hessian_bound(LossKind kind, std::size_t y, std::span<const double> s,
                                  std::span<double> h)
{
    const std::size_t K = s.size();
    const double lse = log_sum_exp(s);
    switch (kind) {
    case LossKind::CE:
    case LossKind::GLK:
        for (std::size_t k = 0; k < K; ++k) {
            const double p = std::exp(s[k] - lse);
            h[k] = 2.0 * p * (1.0 - p);
        }
        return;
    case LossKind::Ours: {
        const double py = std::exp(s[y] - lse);
        for (std::size_t k = 0; k < K; ++k) h[k] = 2.0 * std::exp(s[k] - lse) * py;
        h[y] = 2.0 * py * (1.0 - py);
        return;
    }
    default: break;
    }
    throw InvalidInput("Hessian bound defined for CE, GLK_DIS and OURS_DIS only");
}

inline bool binary_disagreement(LossKind kind, std::size_t K)
{
    return K == 2 && (kind == LossKind::RG || kind == LossKind::GLK || kind == LossKind::Ours);
}

} // namespace detail

inline double loss_eval(LossKind kind, int y, std::span<const double> s)
{
    check_logits(s);
    check_label(y, s.size());
    const auto yi = static_cast<std::size_t>(y);
    if (detail::binary_disagreement(kind, s.size()))
        return std::min(softplus(s[yi] - s[1 - yi]), kLossCap);
    return detail::general_eval(kind, yi, s);
}

inline void loss_grad_into(LossKind kind, int y, std::span<const double> s, std::span<double> g)
{
    check_logits(s);
    check_label(y, s.size());
    if (g.size() != s.size()) throw InvalidInput("gradient buffer size mismatch");
    const auto yi = static_cast<std::size_t>(y);
    if (detail::binary_disagreement(kind, s.size())) {
        const double sig = sigmoid(s[yi] - s[1 - yi]);
        g[yi] = sig;
        g[1 - yi] = -sig;
        return;
    }
    detail::general_grad(kind, yi, s, g);
}

inline std::vector<double> loss_grad(LossKind kind, int y, std::span<const double> s)
{
    std::vector<double> g(s.size());
    loss_grad_into(kind, y, s, g);
    return g;
}

inline void hessian_diag_bound_into(LossKind kind, int y, std::span<const double> s,
                                    std::span<double> h)
{
    check_logits(s);
    check_label(y, s.size());
    if (h.size() != s.size()) throw InvalidInput("Hessian buffer size mismatch");
    const auto yi = static_cast<std::size_t>(y);
    if (kind != LossKind::RG && detail::binary_disagreement(kind, s.size())) {
        const double m = s[yi] - s[1 - yi];
        const double v = 2.0 * sigmoid(m) * sigmoid(-m);
        h[0] = v;
        h[1] = v;
        return;
    }
    detail::general_hessian_bound(kind, yi, s, h);
}

inline std::vector<double> hessian_diag_bound(LossKind kind, int y, std::span<const double> s)
{
    std::vector<double> h(s.size());
    hessian_diag_bound_into(kind, y, s, h);
    return h;
}

} // namespace disco

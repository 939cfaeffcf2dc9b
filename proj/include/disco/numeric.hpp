#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace disco {

/* Neumaier compensated accumulator; order-fixed callers get reproducible sums. */
class CompensatedSum {
public:
    void add(double x)
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs)
{
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

/* log(1 + exp(m)) without overflow. */
inline double softplus(double m)
{
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

inline double sigmoid(double m)
{
    if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
}

} // namespace disco

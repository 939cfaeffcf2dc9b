#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "disco/discrepancy.hpp"
#include "disco/error.hpp"
#include "disco/numeric.hpp"

namespace disco {

/* Band lambda + delta <= r <= 1 - delta of the restricted input space. */
struct BandSpec {
    double lambda = 0.5;
    double delta = 0.1;

    void validate() const
    {
        if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidInput("band lambda must lie in (0, 1)");
        if (!(delta > 0.0 && delta < (1.0 - lambda) / 2.0))
            throw InvalidInput("band delta must lie in (0, (1 - lambda) / 2)");
    }
    bool contains(double r) const
    {
        return r >= lambda + delta - 1e-12 && r <= 1.0 - delta + 1e-12;
    }
};

/* Either explicit points, or a band recipe of ratios (see ratio_instance). */
struct DiscreteInstanceSpec {
    int K = 3;
    double alpha = 1.0;
    std::vector<PointMass> points;
    std::optional<BandSpec> band;
    std::vector<double> bandRatios;
};

struct GeneratedInstance {
    FiniteShiftInstance instance;
    std::vector<bool> inBand;
};

inline double density_ratio(const PointMass& p, double alpha)
{
    if (p.pT == 0.0) return std::numeric_limits<double>::infinity();
    return p.pS / (alpha * p.pT);
}

/*
 * Agreeing point per ratio r with pS = alpha r pT, plus a filler point with
 * disagreeing references holding whatever mass normalisation leaves over.
 */
inline FiniteShiftInstance ratio_instance(int K, double alpha, const std::vector<double>& rs)
{
    if (rs.empty()) throw InvalidInput("ratio instance needs at least one ratio");
    if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
    double meanR = 0.0;
    for (double r : rs) {
        if (!(r > 0.0) || std::isinf(r)) throw InvalidInput("ratios must lie in (0, inf)");
        meanR += r;
    }
    const auto n = static_cast<double>(rs.size());
    meanR /= n;
    const double t = std::min(1.0, 1.0 / (alpha * meanR));
    std::vector<PointMass> pts;
    CompensatedSum sumS, sumT;
    for (double r : rs) {
        const double pT = t / n;
        const double pS = alpha * r * pT;
        pts.push_back({pS, pT, {0, 0}});
        sumS.add(pS);
        sumT.add(pT);
    }
    const double restS = std::max(0.0, 1.0 - sumS.value());
    const double restT = std::max(0.0, 1.0 - sumT.value());
    if (restS > 1e-15 || restT > 1e-15) {
        pts.push_back({restS, restT, {0, 1}});
    } else {
        // absorb rounding into the last band point
        pts.back().pS += 1.0 - sumS.value();
        pts.back().pT += 1.0 - sumT.value();
    }
    return FiniteShiftInstance(K, alpha, std::move(pts));
}

inline GeneratedInstance gen_discrete_instance(const DiscreteInstanceSpec& spec)
{
    if (spec.band) spec.band->validate();
    if (!spec.bandRatios.empty()) {
        if (!spec.band) throw InvalidInput("band ratios given without a band");
        if (!spec.points.empty()) throw InvalidInput("band recipe and explicit points are exclusive");
        for (double r : spec.bandRatios)
            if (!spec.band->contains(r)) throw InvalidInput("recipe ratio outside the band");
    }
    FiniteShiftInstance inst = spec.bandRatios.empty()
                                   ? FiniteShiftInstance(spec.K, spec.alpha, spec.points)
                                   : ratio_instance(spec.K, spec.alpha, spec.bandRatios);
    std::vector<bool> flags;
    for (const auto& p : inst.points()) {
        const bool in = spec.band && p.ref.agree() && p.pT > 0.0 &&
                        spec.band->contains(density_ratio(p, spec.alpha));
        flags.push_back(in);
    }
    return {std::move(inst), std::move(flags)};
}

} // namespace disco

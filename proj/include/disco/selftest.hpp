#pragma once

/*
 * Acceptance checks shared by the acceptance binary and `disco selftest`.
 * Each check returns pass/fail plus a one-line detail string; tolerances are
 * pinned here.
 */

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "disco/consistency_lab.hpp"
#include "disco/scenarios.hpp"

namespace disco::selftest {

struct Outcome {
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct Criterion {
    int id;
    const char* name;
    double budgetSeconds;
    std::function<Outcome()> run;
};

namespace tol {
inline constexpr double bK = 1e-12;
inline constexpr double bruteValue = 1e-6;
inline constexpr double bruteQ = 1e-4;
inline constexpr double fdRelative = 1e-4;
inline constexpr double hessianSlack = -1e-6;
inline constexpr double gradSum = 1e-10;
inline constexpr double binaryEquiv = 1e-10;
inline constexpr double recast = 1e-12;
inline constexpr double enumeratedGap = 1e-6;
inline constexpr double oursGap = 1e-6;
inline constexpr double persistence = 1e-3;
inline constexpr double correction = 1e-6;
inline constexpr double calibrationRate = 0.15;
inline constexpr double calibrationMargin = 0.02;
inline constexpr double attackWinShare = 0.60;
inline constexpr double detectionMargin = 0.02;
} // namespace tol

inline Outcome c1_b_k()
{
    double worst = 0.0;
    for (int K = 3; K <= 10; ++K) worst = std::max(worst, std::abs(b_K(K, K / (2.0 * (K - 1))) - 1.0));
    return {worst <= tol::bK, fmt::format("max |b_K(K/(2K-2)) - 1| = {:.3e} over K=3..10", worst)};
}

inline Outcome c2_brute_force()
{
    const double rs[] = {0.1, 0.3, 0.5, 0.6, 0.75, 0.85, 1.0, 1.5, 2.5};
    double worstV = 0.0, worstQ = 0.0;
    int cases = 0;
    for (auto kind : kAllSurrogates)
        for (int K = 3; K <= 5; ++K)
            for (double r : rs)
                for (bool agree : {true, false}) {
                    const LabelPair y = agree ? LabelPair{0, 0} : LabelPair{0, 1};
                    const PseudoWeights w{r, 1.0};
                    const auto opt = pointwise_opt(kind, K, w, y);
                    const LogitObjective f = [&](std::span<const double> s) {
                        return surrogate_pseudo_loss(kind, w, y, s);
                    };
                    const auto m = brute_min(f, nullptr, default_grid(K));
                    worstV = std::max(worstV, std::abs(m.value - opt.value));
                    if (opt.unique && opt.attained)
                        for (int k = 0; k < K; ++k)
                            worstQ = std::max(worstQ, std::abs(m.q[static_cast<std::size_t>(k)] -
                                                               opt.q[static_cast<std::size_t>(k)]));
                    ++cases;
                }
    return {worstV <= tol::bruteValue && worstQ <= tol::bruteQ,
            fmt::format("{} cases, worst value error {:.3e}, worst argmin error {:.3e}", cases, worstV, worstQ)};
}

inline Outcome c3_gradients()
{
    constexpr double h = 1e-5;
    double worstFd = 0.0, worstSlack = std::numeric_limits<double>::infinity(), worstSum = 0.0;
    const LossKind kinds[] = {LossKind::CE, LossKind::RG, LossKind::GLK, LossKind::Ours};
    for (auto kind : kinds) {
        Rng rng(0, "selftest", "gradients", static_cast<std::uint64_t>(kind));
        for (int draw = 0; draw < 1000; ++draw) {
            const int K = 2 + static_cast<int>(rng.index(9));
            std::vector<double> s(static_cast<std::size_t>(K));
            for (double& v : s) v = 3.0 * rng.normal();
            const int y = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
            const auto g = loss_grad(kind, y, s);
            double sum = 0.0;
            for (double v : g) sum += v;
            worstSum = std::max(worstSum, std::abs(sum));
            const bool hasBound = kind != LossKind::RG;
            std::vector<double> hb;
            if (hasBound) hb = hessian_diag_bound(kind, y, s);
            for (int k = 0; k < K; ++k) {
                auto sp = s, sm = s;
                sp[static_cast<std::size_t>(k)] += h;
                sm[static_cast<std::size_t>(k)] -= h;
                const double fd = (loss_eval(kind, y, sp) - loss_eval(kind, y, sm)) / (2.0 * h);
                const double gk = g[static_cast<std::size_t>(k)];
                worstFd = std::max(worstFd, std::abs(fd - gk) / std::max(1.0, std::abs(gk)));
                if (hasBound) {
                    const double hkk = (loss_grad(kind, y, sp)[static_cast<std::size_t>(k)] -
                                        loss_grad(kind, y, sm)[static_cast<std::size_t>(k)]) /
                                       (2.0 * h);
                    worstSlack = std::min(worstSlack, hb[static_cast<std::size_t>(k)] - hkk);
                }
            }
        }
    }
    return {worstFd <= tol::fdRelative && worstSlack >= tol::hessianSlack && worstSum <= tol::gradSum,
            fmt::format("4000 draws: worst FD rel error {:.3e}, min Hessian-bound slack {:.3e}, max |sum g| {:.3e}",
                        worstFd, worstSlack, worstSum)};
}

inline Outcome c4_binary()
{
    Rng rng(0, "selftest", "binary");
    double worstPublic = 0.0, worstGeneral = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const std::vector<double> s{4.0 * rng.normal(), 4.0 * rng.normal()};
        const int y = static_cast<int>(rng.index(2));
        const double ours = loss_eval(LossKind::Ours, y, s);
        worstPublic = std::max({worstPublic, std::abs(ours - loss_eval(LossKind::RG, y, s)),
                                std::abs(ours - loss_eval(LossKind::GLK, y, s))});
        const auto yi = static_cast<std::size_t>(y);
        const double gOurs = detail::general_eval(LossKind::Ours, yi, s);
        worstGeneral = std::max({worstGeneral, std::abs(gOurs - detail::general_eval(LossKind::RG, yi, s)),
                                 std::abs(gOurs - detail::general_eval(LossKind::GLK, yi, s)),
                                 std::abs(gOurs - ours)});
    }
    return {worstPublic <= tol::binaryEquiv && worstGeneral <= tol::binaryEquiv,
            fmt::format("1000 draws: shared-path max diff {:.3e}, general-formula max diff {:.3e}", worstPublic,
                        worstGeneral)};
}

inline FiniteShiftInstance random_instance(Rng& rng)
{
    const int K = 2 + static_cast<int>(rng.index(5));
    const std::size_t m = 1 + rng.index(8);
    std::vector<double> a(m), b(m);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        a[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
        b[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    }
    a[0] += 0.1;
    b[m - 1] += 0.1;
    for (std::size_t i = 0; i < m; ++i) {
        sa += a[i];
        sb += b[i];
    }
    std::vector<PointMass> pts;
    for (std::size_t i = 0; i < m; ++i)
        pts.push_back({a[i] / sa, b[i] / sb,
                       {static_cast<int>(rng.index(static_cast<std::size_t>(K))),
                        static_cast<int>(rng.index(static_cast<std::size_t>(K)))}});
    // renormalise against rounding
    double ts = 0.0, tt = 0.0;
    for (const auto& p : pts) {
        ts += p.pS;
        tt += p.pT;
    }
    pts[0].pS += 1.0 - ts;
    pts[m - 1].pT += 1.0 - tt;
    return FiniteShiftInstance(K, 0.25 + 2.0 * rng.uniform(), std::move(pts));
}

inline Outcome c5_recast()
{
    Rng rng(0, "selftest", "recast");
    double worstTrue = 0.0, worstSurr = 0.0;
    bool disjoint = true;
    for (int n = 0; n < 100; ++n) {
        const auto inst = random_instance(rng);
        std::vector<int> labels;
        std::vector<std::vector<double>> logits;
        for (std::size_t i = 0; i < inst.size(); ++i) {
            labels.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(inst.K()))));
            std::vector<double> s(static_cast<std::size_t>(inst.K()));
            for (double& v : s) v = 2.0 * rng.normal();
            logits.push_back(std::move(s));
            const auto& p = inst[i];
            if (p.pS == 0.0 && p.pT == 0.0) continue;
            if (side_active(Side::One, p.pS, p.pT) == side_active(Side::Two, p.pS, p.pT)) disjoint = false;
        }
        const double dd = dd_true(inst, labels);
        worstTrue = std::max({worstTrue, std::abs(dd_true_recast(inst, labels, RecastConvention::Ascent) - dd),
                              std::abs(dd_true_recast(inst, labels, RecastConvention::Descent) + dd)});
        for (auto kind : kAllSurrogates)
            worstSurr = std::max(worstSurr, std::abs(dd_surr_recast(inst, logits, kind) -
                                                     dd_surrogate(inst, logits, kind)));
    }
    return {worstTrue <= tol::recast && worstSurr <= tol::recast && disjoint,
            fmt::format("100 instances: true-DD recast error {:.3e}, surrogate recast error {:.3e}, sides disjoint: {}",
                        worstTrue, worstSurr, disjoint)};
}

inline Outcome c6_floor()
{
    const auto glk = scan_band(SurrogateKind::GLK23, 3, 5.0 / 3.0, {0.6}, default_grid(3))[0];
    const double glkFloor = inconsistency_floor(0.1, 5.0 / 3.0, true, true);
    const auto rg = scan_band(SurrogateKind::RG23, 3, 1.0 / 0.85, {0.85}, default_grid(3))[0];
    const double rgFloor = rg.floorPaper;
    const bool glkOk = std::abs(glk.gapInf - 2.0 / 3.0) <= tol::enumeratedGap &&
                       std::abs(glkFloor - 0.27777777777777779) <= tol::enumeratedGap &&
                       glk.gapInf >= glkFloor - tol::enumeratedGap;
    const bool rgOk = std::abs(rg.gapInf - (1.0 / 0.85 - 1.0)) <= tol::enumeratedGap && rg.gapInf > 0.0;
    return {glkOk && rgOk,
            fmt::format("GLK23 K=3 r=0.6: gap {:.6f} vs floor {:.6f}; RG23 K=3 r=0.85: gap {:.6f} (floor formula "
                        "gives {:.6f}, side-aware {:.6f})",
                        glk.gapInf, glkFloor, rg.gapInf, rgFloor, rg.floorSideAware)};
}

inline Outcome c7_ours()
{
    const double alphas[] = {0.5, 1.0, 5.0 / 3.0};
    double worstGap = 0.0, worstG0 = 0.0;
    int rows = 0;
    for (int K = 3; K <= 5; ++K) {
        std::vector<double> rs;
        for (int i = 1; i <= 19; ++i) rs.push_back(0.05 * i); // the union of the RG / GLK bands
        for (double alpha : alphas) {
            for (const auto& row : scan_band(SurrogateKind::Ours, K, alpha, rs, default_grid(K))) {
                worstGap = std::max({worstGap, row.gapInf, row.restrictedGap});
                ++rows;
            }
            for (double r : rs) // r = 1, the tie, is off the grid
                for (Side side : {Side::One, Side::Two})
                    worstG0 = std::max(worstG0, delta_G(SurrogateKind::Ours, side, K, r, alpha, 0.0,
                                                        default_grid(K)).value);
        }
    }
    return {worstGap <= tol::oursGap && worstG0 <= tol::oursGap,
            fmt::format("{} band rows: worst inf-over-minimisers gap {:.3e}; worst Delta_G(0) {:.3e}", rows,
                        worstGap, worstG0)};
}

inline Outcome c8_persistence()
{
    struct Case {
        SurrogateKind kind;
        double delta;
    };
    const Case cases[] = {{SurrogateKind::GLK23, 0.1}, {SurrogateKind::RG23, 0.05}};
    int total = 0, failed = 0;
    std::string worst;
    double worstRatio = std::numeric_limits<double>::infinity();
    for (const auto& c : cases)
        for (int K = 3; K <= 5; ++K) {
            const double lambda = band_lambda(c.kind, K);
            for (Side side : {Side::One, Side::Two}) {
                const double es = epsilon_star(c.kind, side, K, c.delta, 1.0);
                for (double r : {lambda + c.delta, 0.5 * (lambda + 1.0), 1.0 - c.delta}) {
                    const auto prof = gap_profile(c.kind, K, side_weights(side, r, 1.0), {0, 0}, default_grid(K));
                    const double g0 = delta_G(prof, 0.0).value;
                    const double ge = delta_G(prof, 0.9 * es).value;
                    ++total;
                    if (std::abs(g0 - ge) > tol::persistence) {
                        ++failed;
                        const double ratio = persistence_threshold(prof) / es;
                        if (ratio < worstRatio) {
                            worstRatio = ratio;
                            worst = fmt::format("{} K={} side {} r={:.4f}: Delta_G drops from {:.4f} to {:.4f}; "
                                                "persistence ends at {:.3f} eps*",
                                                to_string(c.kind), K, static_cast<int>(side), r, g0, ge, ratio);
                        }
                    }
                }
            }
        }
    return {failed == 0, failed == 0 ? fmt::format("{} cases persist at 0.9 eps*", total)
                                     : fmt::format("{}/{} cases break; worst {}", failed, total, worst)};
}

inline Outcome c9_bound()
{
    const double c = sample_correction(1000, 1000, 0.05);
    bool identity = true;
    Rng rng(0, "selftest", "bound");
    for (int i = 0; i < 100; ++i) {
        BoundReport r;
        r.sourceTestError = rng.uniform();
        r.empiricalDD = rng.uniform(-1.0, 1.0);
        r.sampleCorrection = sample_correction(1 + static_cast<long long>(rng.index(5000)),
                                               1 + static_cast<long long>(rng.index(5000)), rng.uniform(0.001, 0.999));
        r.bound = r.sourceTestError + r.empiricalDD + r.sampleCorrection;
        identity = identity && r.bound == r.sourceTestError + r.empiricalDD + r.sampleCorrection;
    }
    // end-to-end report on a small scenario
    const auto parts = make_splits(triangle_shift(1.0, 400, 400), 0.5, 1);
    const auto ref = train_reference(parts.source.train.X, parts.source.train.require_labels(), 3, reference_training());
    const auto rep = error_bound(parts.source.test, parts.target.test, ref, ref, 0.05);
    identity = identity && rep.bound == rep.sourceTestError + rep.empiricalDD + rep.sampleCorrection;
    return {identity && std::abs(c - 0.086541) <= tol::correction,
            fmt::format("sample_correction(1000,1000,0.05) = {:.7f}; report identity exact: {}", c, identity)};
}

inline std::vector<std::uint64_t> seed_range(int n)
{
    std::vector<std::uint64_t> s;
    for (int i = 0; i < n; ++i) s.push_back(static_cast<std::uint64_t>(i));
    return s;
}

inline Outcome c10_calibration()
{
    const auto table = calibrate(calibration_scenario(), {SurrogateKind::RG23, SurrogateKind::GLK23, SurrogateKind::Ours},
                                 {0.05}, seed_range(200));
    const double ours = table.violation_rate(SurrogateKind::Ours, 0.05);
    const double rg = table.violation_rate(SurrogateKind::RG23, 0.05);
    const double glk = table.violation_rate(SurrogateKind::GLK23, 0.05);
    return {ours <= tol::calibrationRate && ours <= rg + tol::calibrationMargin,
            fmt::format("200 seeds, delta=0.05 violation rates: OURS {:.3f}, RG23 {:.3f}, GLK23 {:.3f}", ours, rg, glk)};
}

inline Outcome c11_attack()
{
    const auto sc = attack_scenario();
    const std::vector<SurrogateKind> kinds{SurrogateKind::RG23, SurrogateKind::GLK23, SurrogateKind::Ours};
    const double fractions[] = {0.0, 0.25, 0.5};
    std::vector<std::pair<std::uint64_t, double>> cases;
    for (double f : fractions)
        for (std::uint64_t s = 0; s < 20; ++s) cases.emplace_back(s, f);
    std::vector<int> oursBest(cases.size()), withinBudget(cases.size()), untouched(cases.size());
    parallel_for(cases.size(), [&](std::size_t i) {
        const auto o = run_attack_scenario(sc, cases[i].first, cases[i].second, kinds);
        oursBest[i] = o.is_best(SurrogateKind::Ours);
        withinBudget[i] = o.maxPerturbation <= sc.attack.epsilon + 1e-12;
        untouched[i] = o.untouchedIdentical;
    });
    int wins = 0, budget = 0, same = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        wins += oursBest[i];
        budget += withinBudget[i];
        same += untouched[i];
    }
    const auto n = static_cast<int>(cases.size());
    const double share = static_cast<double>(wins) / n;
    return {share >= tol::attackWinShare && budget == n && same == n,
            fmt::format("OURS highest dd_true in {}/{} scenarios ({:.2f}); budget respected {}/{}; untouched rows "
                        "identical {}/{}",
                        wins, n, share, budget, n, same, n)};
}

inline Outcome c12_detection()
{
    const auto setup = make_detection_setup(detection_scenario(5), 0);
    double mean[2] = {0.0, 0.0};
    bool ciOk = true;
    std::string parts;
    for (int N : {10, 20, 50})
        for (auto kind : {SurrogateKind::GLK23, SurrogateKind::Ours}) {
            DetectionConfig cfg;
            cfg.nTarget = N;
            cfg.repeats = 200;
            cfg.bootstrap = 1000;
            const ShiftDetector det(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref, kind, cfg);
            const auto r = roc(det, setup.shiftedPool.X, setup.inDistPool.X);
            mean[kind == SurrogateKind::Ours] += r.auc / 3.0;
            ciOk = ciOk && r.ciLow <= r.auc && r.auc <= r.ciHigh;
            parts += fmt::format(" {}@{}={:.3f}", to_string(kind), N, r.auc);
        }

    const auto binary = make_detection_setup(detection_scenario(2), 0);
    DetectionConfig cfg;
    cfg.nTarget = 20;
    cfg.repeats = 50;
    cfg.bootstrap = 100;
    const ShiftDetector g(binary.sourceTrain.X, binary.sourceTrain.require_labels(), binary.ref, SurrogateKind::GLK23, cfg);
    const ShiftDetector o(binary.sourceTrain.X, binary.sourceTrain.require_labels(), binary.ref, SurrogateKind::Ours, cfg);
    const auto rg = roc(g, binary.shiftedPool.X, binary.inDistPool.X);
    const auto ro = roc(o, binary.shiftedPool.X, binary.inDistPool.X);
    const bool control = rg.shifted == ro.shifted && rg.inDist == ro.inDist;
    return {mean[1] >= mean[0] - tol::detectionMargin && ciOk && control,
            fmt::format("mean AUC OURS {:.4f} vs GLK23 {:.4f};{}; CIs bracket AUC: {}; K=2 statistics identical: {}",
                        mean[1], mean[0], parts, ciOk, control)};
}

/* Reruns CLI commands under two thread counts and compares every output byte. */
inline Outcome c13_determinism(const std::string& cli, const std::string& configDir, const std::string& scratch)
{
    namespace fs = std::filesystem;
    const char* commands[] = {"gen", "consistency", "train", "bound", "calibrate", "attack", "detect"};
    int identical = 0, total = 0;
    std::string firstDiff;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    for (const char* cmd : commands) {
        std::vector<std::string> dirs;
        bool ran = true;
        for (int threads : {1, 3}) {
            const std::string out = fmt::format("{}/t{}", scratch, threads);
            const std::string line =
                fmt::format("{}={} '{}' {} --config '{}/{}_ci.json' --seed 7 --out '{}' --tag det > /dev/null 2>&1",
                            kThreadsEnv, threads, cli, cmd, configDir, cmd, out);
            ran = ran && std::system(line.c_str()) == 0;
            dirs.push_back(fmt::format("{}/{}/det", out, cmd));
        }
        ++total;
        if (!ran) {
            if (firstDiff.empty()) firstDiff = fmt::format("{}: command failed", cmd);
            continue;
        }
        bool same = true;
        std::size_t files = 0;
        for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
            if (!e.is_regular_file()) continue;
            ++files;
            const auto rel = fs::relative(e.path(), dirs[0]);
            const auto other = fs::path(dirs[1]) / rel;
            if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
                same = false;
                if (firstDiff.empty()) firstDiff = fmt::format("{}: {}", cmd, rel.string());
            }
        }
        std::size_t otherFiles = 0;
        for (const auto& e : fs::recursive_directory_iterator(dirs[1])) otherFiles += e.is_regular_file();
        same = same && files > 0 && files == otherFiles;
        identical += same;
    }
    return {identical == total,
            fmt::format("{}/{} commands byte-identical under 1 vs 3 threads{}", identical, total,
                        firstDiff.empty() ? "" : "; first difference " + firstDiff)};
}

inline std::vector<Criterion> criteria(const std::string& cli, const std::string& configDir, const std::string& scratch)
{
    return {
        {1, "b_K critical point", 1, c1_b_k},
        {2, "closed form vs brute force", 120, c2_brute_force},
        {3, "gradient / Hessian suite", 30, c3_gradients},
        {4, "K=2 equivalence", 5, c4_binary},
        {5, "recast identity", 30, c5_recast},
        {6, "inconsistency floor", 10, c6_floor},
        {7, "consistency of OURS", 120, c7_ours},
        {8, "eps* persistence", 120, c8_persistence},
        {9, "bound arithmetic", 1, c9_bound},
        {10, "calibration", 600, c10_calibration},
        {11, "adversarial robustness", 1200, c11_attack},
        {12, "detection", 900, c12_detection},
        {13, "determinism", 600, [=] { return c13_determinism(cli, configDir, scratch); }},
    };
}

inline Outcome timed(const Criterion& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.seconds > c.budgetSeconds) {
        o.pass = false;
        o.detail += fmt::format("; over time budget ({:.1f}s > {:.0f}s)", o.seconds, c.budgetSeconds);
    }
    return o;
}

inline std::string format_line(const Criterion& c, const Outcome& o)
{
    return fmt::format("{} criterion {:>2} ({}): {} [{:.2f}s]", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail,
                       o.seconds);
}

} // namespace disco::selftest

// disco: experiment driver. Subcommands gen, consistency, train, bound,
// calibrate, attack, detect, selftest. Outputs go to <out>/<command>/<tag>/.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "disco/boosted.hpp"
#include "disco/consistency_lab.hpp"
#include "disco/scenarios.hpp"
#include "disco/selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disco;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct AssertionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/* ---- configuration ---------------------------------------------------- */

json training_keys()
{
    return {{"epochs", 600},        {"learningRate", 0.05}, {"weightDecay", 5e-4},
            {"restarts", 5},        {"batchSize", 0},       {"alpha", 1.0},
            {"featureMap", "raw_input"}};
}

json data_keys()
{
    return {{"scenario", "triangle"}, {"K", 3},          {"shift", 1.0},      {"nSource", 1000},
            {"nTarget", 1000},        {"labelNoise", -1.0}, {"sourceCsv", ""}, {"targetCsv", ""},
            {"labelOffset", 0}};
}

json merged(std::initializer_list<json> parts)
{
    json out = json::object();
    for (const auto& p : parts) out.update(p);
    return out;
}

std::map<std::string, json> command_defaults()
{
    std::map<std::string, json> d;
    d["gen"] = merged({data_keys(),
                       {{"type", "gaussian"}, {"alpha", 1.0}, {"lambda", 0.5}, {"delta", 0.1}, {"ratios", {0.6}}}});
    d["consistency"] = {{"kind", "all"},
                        {"Ks", {3, 4, 5}},
                        {"alpha", 1.0},
                        {"ratios", {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65,
                                    0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.5, 2.0}},
                        {"epsilons", {0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1}},
                        {"resolution", 0},
                        {"refineSteps", 5}};
    d["train"] = merged({data_keys(), training_keys(),
                         {{"kind", "OURS"}, {"critic", "linear"}, {"rounds", 20}, {"maxDepth", 3},
                          {"shrinkage", 0.3}, {"lambda", 1.0}}});
    d["bound"] = merged({data_keys(), training_keys(), {{"kind", "OURS"}, {"delta", 0.05}}});
    d["calibrate"] = merged({data_keys(), training_keys(),
                             {{"kinds", "all"}, {"seeds", 200}, {"deltas", {0.01, 0.05, 0.1, 0.2, 0.5}}}});
    d["attack"] = merged({data_keys(), training_keys(),
                          {{"kinds", "all"},
                           {"seeds", 20},
                           {"fractions", {0.0, 0.125, 0.25, 0.5}},
                           {"epsilon", 4.0 / 255.0},
                           {"stepSize", 8.0 / 255.0},
                           {"steps", 20},
                           {"criticRefreshEpochs", 5},
                           {"gumbelTemperature", 1.0},
                           {"attackKind", "OURS"},
                           {"delta", 0.05},
                           {"batchSize", 256},
                           {"writeData", true}}});
    d["attack"]["nSource"] = 600;
    d["attack"]["nTarget"] = 600;
    d["detect"] = {{"K", 5},
                   {"shift", 3.0},
                   {"nSource", 2000},
                   {"nTarget", 1000},
                   {"nSourceTrain", 200},
                   {"Ns", {10, 20, 50}},
                   {"repeats", 200},
                   {"bootstrap", 1000},
                   {"nullRuns", 500},
                   {"level", 0.05},
                   {"kinds", "GLK23,OURS"},
                   {"rounds", 20},
                   {"maxDepth", 3},
                   {"shrinkage", 0.3},
                   {"lambda", 1.0},
                   {"alphaInverseN", true},
                   {"alpha", 1.0}};
    return d;
}

bool same_kind(const json& def, const json& v)
{
    if (def.is_number_integer() || def.is_number_unsigned())
        return v.is_number_integer() || v.is_number_unsigned() ||
               (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
    if (def.is_number()) return v.is_number();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array() || v.is_number() || v.is_string();
    return false;
}

json parse_flag(const std::string& key, const json& def, const std::string& text)
{
    try {
        std::size_t pos = 0;
        if (def.is_number_integer() || def.is_number_unsigned()) {
            const long long v = std::stoll(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        }
        if (def.is_number()) {
            const double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        }
        if (def.is_boolean()) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw std::invalid_argument(text);
        }
        if (def.is_array()) {
            if (!text.empty() && text.front() == '[') return json::parse(text);
            json arr = json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                std::size_t p = 0;
                try {
                    const double v = std::stod(item, &p);
                    if (p == item.size()) {
                        arr.push_back(v == std::floor(v) && std::abs(v) < 1e15 && item.find('.') == std::string::npos
                                          ? json(static_cast<long long>(v))
                                          : json(v));
                        continue;
                    }
                } catch (const std::exception&) {
                }
                arr.push_back(item);
            }
            return arr;
        }
        return text;
    } catch (const std::exception&) {
        throw ConfigError("flag --" + key + ": cannot parse '" + text + "'");
    }
}

json resolve_config(const std::string& command, const std::string& path,
                    const std::map<std::string, std::string>& flags)
{
    json cfg = command_defaults().at(command);
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
        if (!file.is_object()) throw ConfigError(path + ": config must be a JSON object");
        for (const auto& [k, v] : file.items()) {
            if (k == "seed") continue;
            if (!cfg.contains(k)) throw ConfigError(path + ": unknown key '" + k + "' for " + command);
            if (!same_kind(cfg[k], v)) throw ConfigError(path + ": key '" + k + "' has the wrong type");
            cfg[k] = v;
        }
    }
    for (const auto& [k, text] : flags) cfg[k] = parse_flag(k, cfg[k], text);
    return cfg;
}

std::uint64_t file_seed(const std::string& path)
{
    if (path.empty()) return 0;
    std::ifstream in(path);
    const auto j = json::parse(in, nullptr, false);
    if (j.is_object() && j.contains("seed")) {
        if (!j["seed"].is_number_integer() && !j["seed"].is_number_unsigned())
            throw ConfigError(path + ": seed must be an integer");
        return j["seed"].get<std::uint64_t>();
    }
    return 0;
}

std::vector<double> numbers(const json& v)
{
    std::vector<double> out;
    if (v.is_number()) return {v.get<double>()};
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError("expected a list of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<SurrogateKind> kinds_of(const json& v)
{
    std::vector<std::string> names;
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "all") return {SurrogateKind::RG23, SurrogateKind::GLK23, SurrogateKind::Ours};
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) names.push_back(item);
    } else {
        for (const auto& x : v) names.push_back(x.get<std::string>());
    }
    std::vector<SurrogateKind> out;
    try {
        for (const auto& n : names) out.push_back(parse_surrogate(n));
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    if (out.empty()) throw ConfigError("no surrogate kinds given");
    return out;
}

SurrogateKind kind_of(const json& v)
{
    try {
        return parse_surrogate(v.get<std::string>());
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

TrainConfig training_from(const json& c, std::uint64_t seed)
{
    TrainConfig t;
    t.epochs = c.at("epochs").get<int>();
    t.learningRate = c.at("learningRate").get<double>();
    t.weightDecay = c.at("weightDecay").get<double>();
    t.restarts = c.at("restarts").get<int>();
    t.batchSize = c.at("batchSize").get<int>();
    t.alpha = c.at("alpha").get<double>();
    try {
        t.featureMap = parse_feature_map(c.at("featureMap").get<std::string>());
        t.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    t.seed = seed;
    return t;
}

GaussianShiftSpec gaussian_from(const json& c)
{
    const auto scenario = c.at("scenario").get<std::string>();
    GaussianShiftSpec s;
    if (scenario == "triangle") {
        if (c.at("K").get<int>() != 3) throw ConfigError("scenario 'triangle' has K = 3");
        s = triangle_shift(c.at("shift").get<double>(), c.at("nSource").get<int>(), c.at("nTarget").get<int>());
    } else if (scenario == "tabular") {
        s = tabular_shift(c.at("K").get<int>(), c.at("shift").get<double>(), c.at("nSource").get<int>(),
                          c.at("nTarget").get<int>());
    } else {
        throw ConfigError("scenario must be 'triangle' or 'tabular'");
    }
    if (c.contains("labelNoise") && c.at("labelNoise").get<double>() >= 0.0)
        s.labelNoise = c.at("labelNoise").get<double>();
    try {
        s.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    return s;
}

/* Source/target either generated or loaded from CSV (labels required). */
std::pair<Dataset, Dataset> datasets_from(const json& c, std::uint64_t seed, int& K)
{
    const auto src = c.at("sourceCsv").get<std::string>();
    const auto tgt = c.at("targetCsv").get<std::string>();
    if (src.empty() != tgt.empty()) throw ConfigError("sourceCsv and targetCsv go together");
    if (src.empty()) {
        const auto spec = gaussian_from(c);
        K = spec.K;
        return gen_gaussian_shift(spec, seed);
    }
    K = c.at("K").get<int>();
    CsvSchema schema;
    schema.requireLabels = true;
    schema.K = K;
    schema.labelOffset = c.at("labelOffset").get<int>();
    return {load_csv(src, schema, Origin::Source), load_csv(tgt, schema, Origin::Target)};
}

/* ---- output ------------------------------------------------------------ */

struct Run {
    std::string command;
    json config;
    std::uint64_t seed = 0;
    fs::path dir;

    void write(const std::string& name, const std::string& text) const
    {
        const auto p = dir / name;
        fs::create_directories(p.parent_path());
        save_text(p.string(), text);
    }
    void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }
};

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

Run open_run(const std::string& command, const json& cfg, std::uint64_t seed, const std::string& out,
             const std::string& tag)
{
    const std::uint64_t hash = fnv1a(cfg.dump());
    Run run{command, cfg, seed, {}};
    run.dir = fs::path(out) / command / (tag.empty() ? fmt::format("seed{}-{}", seed, hex64(hash).substr(0, 8)) : tag);
    fs::create_directories(run.dir);
    run.write_json("manifest.json", {{"command", command},
                                     {"toolVersion", kToolVersion},
                                     {"configHash", hex64(hash)},
                                     {"masterSeed", seed},
                                     {"config", cfg}});
    return run;
}

/* ---- commands ---------------------------------------------------------- */

int cmd_gen(const Run& run)
{
    const auto& c = run.config;
    const auto type = c.at("type").get<std::string>();
    if (type == "gaussian") {
        const auto [src, tgt] = gen_gaussian_shift(gaussian_from(c), run.seed);
        save_csv(src, (run.dir / "source.csv").string());
        save_csv(tgt, (run.dir / "target.csv").string());
        return 0;
    }
    if (type != "band") throw ConfigError("type must be 'gaussian' or 'band'");
    DiscreteInstanceSpec spec;
    spec.K = c.at("K").get<int>();
    spec.alpha = c.at("alpha").get<double>();
    spec.band = BandSpec{c.at("lambda").get<double>(), c.at("delta").get<double>()};
    spec.bandRatios = numbers(c.at("ratios"));
    GeneratedInstance g = [&] {
        try {
            return gen_discrete_instance(spec);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    }();
    json j = g.instance;
    j["inBand"] = g.inBand;
    run.write_json("instance.json", j);
    return 0;
}

int cmd_consistency(const Run& run)
{
    const auto& c = run.config;
    const auto kinds = kinds_of(c.at("kind"));
    const double alpha = c.at("alpha").get<double>();
    const auto rs = numbers(c.at("ratios"));
    const auto eps = numbers(c.at("epsilons"));
    std::vector<std::string> failures;

    std::string detail = "kind,K,alpha,r,relation,minimizerLabels,gapInf,gapSup,restrictedGap,inBand,delta,"
                         "floorPaper,floorSideAware,floorOk,relationConsistent\n";
    for (const auto& Kv : c.at("Ks")) {
        const int K = Kv.get<int>();
        SimplexGrid grid = default_grid(K);
        if (c.at("resolution").get<int>() > 0) grid.resolution = c.at("resolution").get<int>();
        grid.refineSteps = c.at("refineSteps").get<int>();
        try {
            grid.validate();
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
        std::string dG = lab_csv_header(K), dH = lab_csv_header(K);
        for (auto kind : kinds) {
            const auto rows = scan_band(kind, K, alpha, rs, grid);
            run.write(fmt::format("scan_{}_K{}.csv", to_string(kind), K), scan_csv(kind, K, alpha, rows));
            for (const auto& row : rows) {
                std::string labels;
                for (int l : row.minimizerLabels) labels += (labels.empty() ? "" : ";") + std::to_string(l);
                detail += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(kind), K,
                                      format_double(alpha), format_double(row.r), to_string(row.relation), labels,
                                      format_double(row.gapInf), format_double(row.gapSup),
                                      format_double(row.restrictedGap), row.inBand ? 1 : 0, format_double(row.delta),
                                      format_double(row.floorPaper), format_double(row.floorSideAware),
                                      row.floorOk ? 1 : 0, row.relationConsistent ? 1 : 0);
                if (!row.relationConsistent)
                    failures.push_back(fmt::format("{} K={} r={}: closed form and brute force disagree",
                                                   to_string(kind), K, row.r));
                if (!row.floorOk)
                    failures.push_back(fmt::format("{} K={} r={}: gap below floor", to_string(kind), K, row.r));
                if (kind == SurrogateKind::Ours && row.gapInf > 1e-6)
                    failures.push_back(fmt::format("OURS K={} r={}: positive gap {}", K, row.r, row.gapInf));
            }
            for (double r : rs) {
                const Side side = alpha * r >= 1.0 ? Side::One : Side::Two;
                const auto w = side_weights(side, r, alpha);
                const auto prof = gap_profile(kind, K, w, {0, 0}, grid);
                const auto rel = to_string(pointwise_opt(kind, K, w, {0, 0}).relation);
                for (double e : eps) {
                    const auto g = delta_G(prof, e);
                    const auto h = delta_H(prof, e);
                    dG += lab_csv_row(kind, K, alpha, r, e, g.value, g.q, rel);
                    dH += lab_csv_row(kind, K, alpha, r, e, h.value, h.q, rel);
                }
            }
        }
        run.write(fmt::format("deltaG_K{}.csv", K), dG);
        run.write(fmt::format("deltaH_K{}.csv", K), dH);
    }
    run.write("scan_detail.csv", detail);

    // single-point counterexamples
    const auto glk = scan_band(SurrogateKind::GLK23, 3, 5.0 / 3.0, {0.6}, default_grid(3))[0];
    const auto rg = scan_band(SurrogateKind::RG23, 3, 1.0 / 0.85, {0.85}, default_grid(3))[0];
    const auto ours = scan_band(SurrogateKind::Ours, 3, 5.0 / 3.0, {0.6}, default_grid(3))[0];
    const double glkFloor = inconsistency_floor(0.1, 5.0 / 3.0, true, true);
    run.write_json("counterexamples.json",
                   json::array({{{"kind", "GLK23"}, {"K", 3}, {"r", 0.6}, {"alpha", 5.0 / 3.0}, {"gap", glk.gapInf},
                                 {"floor", glkFloor}, {"relation", to_string(glk.relation)}},
                                {{"kind", "RG23"}, {"K", 3}, {"r", 0.85}, {"alpha", 1.0 / 0.85}, {"gap", rg.gapInf},
                                 {"floor", rg.floorPaper}, {"floorSideAware", rg.floorSideAware},
                                 {"relation", to_string(rg.relation)}},
                                {{"kind", "OURS"}, {"K", 3}, {"r", 0.6}, {"alpha", 5.0 / 3.0}, {"gap", ours.gapInf},
                                 {"relation", to_string(ours.relation)}}}));
    if (std::abs(glk.gapInf - 2.0 / 3.0) > 1e-6 || glk.gapInf < glkFloor) failures.push_back("GLK23 counterexample");
    if (!(rg.gapInf > 0.0)) failures.push_back("RG23 counterexample");
    if (ours.gapInf > 1e-6) failures.push_back("OURS counterexample");
    if (!failures.empty()) throw AssertionFailure(failures.front() + fmt::format(" ({} failures)", failures.size()));
    return 0;
}

int cmd_train(const Run& run)
{
    const auto& c = run.config;
    int K = 0;
    const auto [src, tgt] = datasets_from(c, run.seed, K);
    const auto sp = split(src, 0.5, derive_seed(run.seed, "cli", "split-source"));
    const auto tp = split(tgt, 0.5, derive_seed(run.seed, "cli", "split-target"));
    TrainConfig refCfg = reference_training();
    refCfg.seed = derive_seed(run.seed, "cli", "reference");
    const auto ref = train_reference(sp.train.X, sp.train.require_labels(), K, refCfg);
    run.write_json("reference.json", critic_to_json(ref));
    const auto y1 = ref.predict(sp.train.X);
    const auto y2 = ref.predict(tp.train.X);
    const auto kind = kind_of(c.at("kind"));
    json summary{{"kind", std::string(to_string(kind))}};

    if (c.at("critic").get<std::string>() == "boosted") {
        BoostConfig bc;
        bc.rounds = c.at("rounds").get<int>();
        bc.maxDepth = c.at("maxDepth").get<int>();
        bc.shrinkage = c.at("shrinkage").get<double>();
        bc.lambda = c.at("lambda").get<double>();
        bc.alpha = c.at("alpha").get<double>();
        bc.seed = derive_seed(run.seed, "cli", "boost");
        const auto b = train_boosted_critic(sp.train.X, y1, tp.train.X, y2, kind, K, bc);
        run.write_json("critic.json", critic_to_json(b));
        summary["trainDD"] = empirical_dd(b.predict(sp.train.X), y1, b.predict(tp.train.X), y2, bc.alpha);
        summary["testDD"] = empirical_dd(b.predict(sp.test.X), ref.predict(sp.test.X), b.predict(tp.test.X),
                                         ref.predict(tp.test.X), 1.0);
    } else if (c.at("critic").get<std::string>() == "linear") {
        const auto cfg = training_from(c, derive_seed(run.seed, "cli", "critic"));
        TrainTrace trace;
        const auto critic = train_critic(sp.train.X, y1, tp.train.X, y2, kind, cfg, &ref, &trace, K);
        run.write_json("critic.json", critic_to_json(critic));
        std::string csv = "restart,epoch,surrogate,ddTrue,failed\n";
        for (std::size_t r = 0; r < trace.surrogate.size(); ++r)
            for (std::size_t e = 0; e < trace.surrogate[r].size(); ++e)
                csv += fmt::format("{},{},{},{},{}\n", r, e + 1, detail::fmt17(trace.surrogate[r][e]),
                                   e < trace.ddTrue[r].size() ? detail::fmt17(trace.ddTrue[r][e]) : "",
                                   trace.failed[r] ? 1 : 0);
        run.write("trace.csv", csv);
        summary["selectedRestart"] = trace.selected;
        summary["trainDD"] = trace.finalDD[static_cast<std::size_t>(trace.selected)];
        summary["testDD"] = empirical_dd(critic.predict(sp.test.X), ref.predict(sp.test.X),
                                         critic.predict(tp.test.X), ref.predict(tp.test.X), 1.0);
    } else {
        throw ConfigError("critic must be 'linear' or 'boosted'");
    }
    run.write_json("summary.json", summary);
    return 0;
}

int cmd_bound(const Run& run)
{
    const auto& c = run.config;
    int K = 0;
    const auto [src, tgt] = datasets_from(c, run.seed, K);
    const auto sp = split(src, 0.5, derive_seed(run.seed, "bound", "split-source"));
    const auto tp = split(tgt, 0.5, derive_seed(run.seed, "bound", "split-target"));
    TrainConfig refCfg = reference_training();
    refCfg.seed = derive_seed(run.seed, "bound", "reference");
    const auto ref = train_reference(sp.train.X, sp.train.require_labels(), K, refCfg);
    const auto cfg = training_from(c, derive_seed(run.seed, "bound", "critic"));
    const auto critic = train_critic(sp.train.X, ref.predict(sp.train.X), tp.train.X, ref.predict(tp.train.X),
                                     kind_of(c.at("kind")), cfg, &ref, nullptr, K);
    const double delta = c.at("delta").get<double>();
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    const auto rep = error_bound(sp.test, tp.test, ref, critic, delta);
    run.write_json("reference.json", critic_to_json(ref));
    run.write_json("critic.json", critic_to_json(critic));
    json j = to_json(rep);
    j["kind"] = std::string(to_string(kind_of(c.at("kind"))));
    run.write_json("report.json", j);
    if (rep.bound != rep.sourceTestError + rep.empiricalDD + rep.sampleCorrection)
        throw AssertionFailure("bound identity violated");
    return 0;
}

CalibrationScenario calibration_from(const json& c)
{
    CalibrationScenario sc;
    sc.data = gaussian_from(c);
    sc.reference = reference_training();
    sc.critic = training_from(c, 0);
    return sc;
}

int cmd_calibrate(const Run& run)
{
    const auto& c = run.config;
    if (!c.at("sourceCsv").get<std::string>().empty()) throw ConfigError("calibrate uses generated data only");
    const int n = c.at("seeds").get<int>();
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n; ++i) seeds.push_back(derive_seed(run.seed, "cli", "calibrate", static_cast<std::uint64_t>(i)));
    CalibrationTable t;
    try {
        t = calibrate(calibration_from(c), kinds_of(c.at("kinds")), numbers(c.at("deltas")), seeds);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    run.write("calibration.csv", calibration_csv(t));
    run.write("summary.csv", calibration_summary_csv(t));
    for (const auto& row : t.rows)
        if (row.report.bound != row.report.sourceTestError + row.report.empiricalDD + row.report.sampleCorrection)
            throw AssertionFailure("bound identity violated");
    return 0;
}

int cmd_attack(const Run& run)
{
    const auto& c = run.config;
    AttackScenario sc;
    sc.data = gaussian_from(c);
    sc.reference = reference_training();
    sc.critic = training_from(c, 0);
    sc.attack.epsilon = c.at("epsilon").get<double>();
    sc.attack.stepSize = c.at("stepSize").get<double>();
    sc.attack.steps = c.at("steps").get<int>();
    sc.attack.criticRefreshEpochs = c.at("criticRefreshEpochs").get<int>();
    sc.attack.gumbelTemperature = c.at("gumbelTemperature").get<double>();
    sc.attack.kind = kind_of(c.at("attackKind"));
    sc.attack.delta = c.at("delta").get<double>();
    sc.attack.batchSize = c.at("batchSize").get<int>() > 0 ? c.at("batchSize").get<int>() : 256;
    try {
        sc.attack.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const auto kinds = kinds_of(c.at("kinds"));
    const auto fractions = numbers(c.at("fractions"));
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in [0, 1]");
    std::vector<std::pair<std::uint64_t, double>> cases;
    for (double f : fractions)
        for (int s = 0; s < c.at("seeds").get<int>(); ++s)
            cases.emplace_back(derive_seed(run.seed, "cli", "attack", static_cast<std::uint64_t>(s)), f);
    std::vector<AttackOutcome> outs(cases.size());
    parallel_for(cases.size(), [&](std::size_t i) {
        outs[i] = run_attack_scenario(sc, cases[i].first, cases[i].second, kinds);
    });

    std::string csv = "seed,fraction,kind,dd,best,maxPerturbation\n";
    json traces = json::array();
    int budgetViolations = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const auto& o = outs[i];
        for (const auto& [kind, dd] : o.dd)
            csv += fmt::format("{},{},{},{},{},{}\n", o.seed, detail::fmt17(o.fraction), to_string(kind),
                               detail::fmt17(dd), o.is_best(kind) ? 1 : 0, detail::fmt17(o.maxPerturbation));
        traces.push_back({{"seed", o.seed}, {"fraction", o.fraction}, {"trace", trace_json(o.trace)}});
        budgetViolations += o.maxPerturbation > sc.attack.epsilon + 1e-12 || !o.untouchedIdentical;
        if (c.at("writeData").get<bool>()) {
            const auto sub = fmt::format("data/case{:03d}", i);
            fs::create_directories(run.dir / sub);
            save_csv(o.attacked.tgtTrain, (run.dir / sub / "target_train.csv").string());
            save_csv(o.attacked.tgtTest, (run.dir / sub / "target_test.csv").string());
        }
    }
    run.write("attack.csv", csv);
    run.write_json("trace.json", traces);
    if (budgetViolations > 0) throw AssertionFailure(fmt::format("{} cases broke the perturbation budget", budgetViolations));
    return 0;
}

int cmd_detect(const Run& run)
{
    const auto& c = run.config;
    DetectionScenario sc;
    sc.data = tabular_shift(c.at("K").get<int>(), c.at("shift").get<double>(), c.at("nSource").get<int>(),
                            c.at("nTarget").get<int>());
    sc.reference = reference_training();
    sc.reference.epochs = 300;
    sc.nSourceTrain = c.at("nSourceTrain").get<int>();
    DetectionSetup setup = [&] {
        try {
            return make_detection_setup(sc, run.seed);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    }();
    json aucs = json::array(), tests = json::array();
    for (const auto& Nv : c.at("Ns")) {
        for (auto kind : kinds_of(c.at("kinds"))) {
            DetectionConfig cfg;
            cfg.nTarget = Nv.get<int>();
            cfg.repeats = c.at("repeats").get<int>();
            cfg.bootstrap = c.at("bootstrap").get<int>();
            cfg.nullRuns = c.at("nullRuns").get<int>();
            cfg.level = c.at("level").get<double>();
            cfg.alphaInverseN = c.at("alphaInverseN").get<bool>();
            cfg.boost.rounds = c.at("rounds").get<int>();
            cfg.boost.maxDepth = c.at("maxDepth").get<int>();
            cfg.boost.shrinkage = c.at("shrinkage").get<double>();
            cfg.boost.lambda = c.at("lambda").get<double>();
            cfg.boost.alpha = c.at("alpha").get<double>();
            cfg.seed = run.seed;
            std::optional<ShiftDetector> det;
            try {
                det.emplace(setup.sourceTrain.X, setup.sourceTrain.require_labels(), setup.ref, kind, cfg);
            } catch (const InvalidInput& e) {
                throw ConfigError(e.what());
            }
            const auto r = roc(*det, setup.shiftedPool.X, setup.inDistPool.X);
            run.write(fmt::format("roc_{}_N{}.csv", to_string(kind), cfg.nTarget), roc_csv(r));
            aucs.push_back(to_json(r));

            const auto null = det->calibrate_null(setup.inDistPool.X);
            Rng a(run.seed, "cli", "detect-shifted", static_cast<std::uint64_t>(cfg.nTarget));
            Rng b(run.seed, "cli", "detect-indist", static_cast<std::uint64_t>(cfg.nTarget));
            const auto shifted = det->detect(ShiftDetector::draw(setup.shiftedPool.X, cfg.nTarget, a), null, 7);
            const auto inDist = det->detect(ShiftDetector::draw(setup.inDistPool.X, cfg.nTarget, b), null, 8);
            tests.push_back({{"kind", std::string(to_string(kind))}, {"N", cfg.nTarget}, {"nullRuns", cfg.nullRuns},
                             {"shifted", to_json(shifted)}, {"inDistribution", to_json(inDist)}});
        }
    }
    run.write_json("auc.json", aucs);
    run.write_json("tests.json", tests);
    return 0;
}

int cmd_selftest(const std::vector<int>& only, bool all, const std::string& configDir, const std::string& out)
{
    const auto self = fs::read_symlink("/proc/self/exe").string();
    const auto scratch = (fs::path(out) / "selftest-determinism").string();
    int failed = 0;
    for (const auto& c : selftest::criteria(self, configDir, scratch)) {
        const bool chosen = only.empty() ? (all || c.id <= 9)
                                         : std::find(only.begin(), only.end(), c.id) != only.end();
        if (!chosen) continue;
        const auto o = selftest::timed(c);
        std::cout << selftest::format_line(c, o) << std::endl;
        failed += !o.pass;
    }
    if (failed) throw AssertionFailure(fmt::format("{} selftest criteria failed", failed));
    return 0;
}

void emit_error(const char* kind, const std::string& message)
{
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"disco: disagreement-discrepancy experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    const auto defaults = command_defaults();
    struct Common {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::string out = "results";
        std::string tag;
        std::map<std::string, std::string> flags;
    };
    std::map<std::string, Common> common;
    std::map<std::string, CLI::App*> subs;
    const std::map<std::string, std::string> help{
        {"gen", "generate a Gaussian shift dataset pair or a band instance"},
        {"consistency", "band scans and Delta_G / Delta_H tables"},
        {"train", "train a reference and a critic"},
        {"bound", "error bound report on one seeded split"},
        {"calibrate", "bound violation rates over many seeds"},
        {"attack", "adversarial target perturbation study"},
        {"detect", "shift detection ROC / AUC study"}};
    for (const auto& [name, def] : defaults) {
        auto* sub = app.add_subcommand(name, help.at(name));
        auto& cm = common[name];
        sub->add_option("--config", cm.config, "flat JSON config file");
        sub->add_option("--seed", cm.seed, "master seed");
        sub->add_option("--out", cm.out, "output root")->capture_default_str();
        sub->add_option("--tag", cm.tag, "output subdirectory name (default seed + config hash)");
        for (const auto& [key, value] : def.items()) {
            sub->add_option_function<std::string>(
                "--" + key, [&cm, k = key](const std::string& v) { cm.flags[k] = v; },
                "override '" + key + "' (default " + value.dump() + ")");
        }
        subs[name] = sub;
    }
    std::vector<int> only;
    bool all = false;
    std::string configDir = "configs", selfOut = "results";
    auto* self = app.add_subcommand("selftest", "run the acceptance criteria (1-9 unless --all / --only)");
    self->add_option("--only", only, "criterion ids");
    self->add_flag("--all", all, "include the slow statistical criteria 10-13");
    self->add_option("--configs", configDir, "directory holding <command>_ci.json for criterion 13");
    self->add_option("--out", selfOut, "scratch root for criterion 13");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        emit_error("usage", e.what());
        return 1;
    }

    try {
        if (self->parsed()) return cmd_selftest(only, all, configDir, selfOut);
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            const auto& cm = common[name];
            const json cfg = resolve_config(name, cm.config, cm.flags);
            const std::uint64_t seed = cm.seed ? *cm.seed : file_seed(cm.config);
            const Run run = open_run(name, cfg, seed, cm.out, cm.tag);
            int rc = 0;
            if (name == "gen") rc = cmd_gen(run);
            else if (name == "consistency") rc = cmd_consistency(run);
            else if (name == "train") rc = cmd_train(run);
            else if (name == "bound") rc = cmd_bound(run);
            else if (name == "calibrate") rc = cmd_calibrate(run);
            else if (name == "attack") rc = cmd_attack(run);
            else if (name == "detect") rc = cmd_detect(run);
            if (rc == 0) std::cout << run.dir.string() << std::endl;
            return rc;
        }
    } catch (const ConfigError& e) {
        emit_error("config", e.what());
        return 1;
    } catch (const InvalidInput& e) {
        emit_error("input", e.what());
        return 1;
    } catch (const json::exception& e) {
        emit_error("config", e.what());
        return 1;
    } catch (const AssertionFailure& e) {
        emit_error("assertion", e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error("runtime", e.what());
        return 3;
    }
    return 0;
}

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string("'") + DISCO_CLI + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path root() { return fs::path(DISCO_SCRATCH) / "cli"; }

std::string config(const std::string& name, const std::string& text)
{
    fs::create_directories(root());
    const auto p = root() / name;
    std::ofstream(p) << text;
    return p.string();
}

nlohmann::json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

} // namespace

TEST(Cli, UnknownConfigKeyExitsOne)
{
    EXPECT_EQ(run("train --config " + config("bad.json", R"({"epochz": 3})")), 1);
    EXPECT_EQ(run("train --config " + config("type.json", R"({"epochs": "many"})")), 1);
    EXPECT_EQ(run("train --config " + config("syntax.json", "{")), 1);
    EXPECT_EQ(run("train --epochs abc"), 1);
    EXPECT_EQ(run("bogus"), 1);
}

TEST(Cli, GenWritesManifestAndData)
{
    const auto out = root() / "out";
    ASSERT_EQ(run("gen --nSource 50 --nTarget 40 --seed 3 --tag g --out '" + out.string() + "'"), 0);
    const auto dir = out / "gen" / "g";
    EXPECT_TRUE(fs::exists(dir / "source.csv"));
    EXPECT_TRUE(fs::exists(dir / "target.csv"));
    const auto m = read_json(dir / "manifest.json");
    EXPECT_EQ(m.at("masterSeed").get<int>(), 3);
    EXPECT_EQ(m.at("config").at("nSource").get<int>(), 50);
    EXPECT_FALSE(m.contains("timestamp"));
}

TEST(Cli, BandInstance)
{
    const auto out = root() / "out";
    ASSERT_EQ(run("gen --type band --ratios 0.6,0.8 --tag b --out '" + out.string() + "'"), 0);
    const auto j = read_json(out / "gen" / "b" / "instance.json");
    EXPECT_EQ(j.at("inBand").size(), j.at("points").size());
    EXPECT_EQ(run("gen --type band --ratios 0.97 --out '" + out.string() + "'"), 1);
}

TEST(Cli, ConsistencyFlagOverride)
{
    const auto out = root() / "out";
    ASSERT_EQ(run("consistency --kind OURS --Ks 3 --ratios 0.4,0.7 --epsilons 0,0.01 --tag c --out '" + out.string() +
                  "'"),
              0);
    const auto dir = out / "consistency" / "c";
    EXPECT_TRUE(fs::exists(dir / "scan_OURS_K3.csv"));
    EXPECT_FALSE(fs::exists(dir / "scan_GLK23_K3.csv"));
    EXPECT_TRUE(fs::exists(dir / "deltaG_K3.csv"));
    EXPECT_TRUE(fs::exists(dir / "counterexamples.json"));
}

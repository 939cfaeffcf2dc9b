#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "disco/data.hpp"
#include "disco/parallel.hpp"
#include "disco/scenarios.hpp"

using namespace disco;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::path(DISCO_SCRATCH) / "data" / name;
    fs::create_directories(p.parent_path());
    return p;
}

} // namespace

TEST(Rng, NamedStreamsAreIndependentAndStable)
{
    EXPECT_EQ(derive_seed(1, "a", "b"), derive_seed(1, "a", "b"));
    EXPECT_NE(derive_seed(1, "a", "b"), derive_seed(1, "a", "c"));
    EXPECT_NE(derive_seed(1, "a", "b", 0), derive_seed(1, "a", "b", 1));
    EXPECT_NE(derive_seed(1, "a", "b"), derive_seed(2, "a", "b"));
    Rng x(5, "m", "p"), y(5, "m", "p");
    for (int i = 0; i < 10; ++i) EXPECT_EQ(x.uniform(), y.uniform());
    auto perm = Rng(5, "m", "perm").permutation(50);
    std::sort(perm.begin(), perm.end());
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(perm[i], i);
}

TEST(Rng, NormalMoments)
{
    Rng r(3, "test", "moments");
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Parallel, ResultsIndependentOfThreads)
{
    std::vector<double> a(100), b(100);
    setenv(kThreadsEnv, "1", 1);
    parallel_for(a.size(), [&](std::size_t i) { a[i] = Rng(1, "t", "p", i).uniform(); });
    setenv(kThreadsEnv, "4", 1);
    parallel_for(b.size(), [&](std::size_t i) { b[i] = Rng(1, "t", "p", i).uniform(); });
    unsetenv(kThreadsEnv);
    EXPECT_EQ(a, b);
}

TEST(Gaussian, ShapesLabelsAndRange)
{
    const auto spec = tabular_shift(4, 1.0, 300, 200);
    const auto [src, tgt] = gen_gaussian_shift(spec, 8);
    EXPECT_EQ(src.X.rows(), 300);
    EXPECT_EQ(tgt.X.cols(), 4);
    EXPECT_EQ(tgt.origin, Origin::Target);
    EXPECT_GE(src.X.minCoeff(), 0.0);
    EXPECT_LE(src.X.maxCoeff(), 1.0);
    for (int y : *src.labels) EXPECT_TRUE(y >= 0 && y < 4);
    const auto again = gen_gaussian_shift(spec, 8);
    EXPECT_EQ(again.first.X, src.X);
}

TEST(Gaussian, Validation)
{
    auto spec = triangle_shift(1.0);
    spec.labelNoise = 0.5;
    EXPECT_THROW(spec.validate(), InvalidInput);
    spec = triangle_shift(1.0);
    spec.sourceMeans.resize(2, 2);
    EXPECT_THROW(gen_gaussian_shift(spec, 0), InvalidInput);
}

TEST(Split, PartitionsRows)
{
    const auto [src, tgt] = gen_gaussian_shift(triangle_shift(0.0, 101, 1), 0);
    const auto s = split(src, 0.5, 4);
    EXPECT_EQ(s.train.size() + s.test.size(), 101u);
    std::vector<std::int64_t> ids = s.train.ids;
    ids.insert(ids.end(), s.test.ids.begin(), s.test.ids.end());
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], static_cast<std::int64_t>(i));
    EXPECT_THROW(split(src, 1.0, 4), InvalidInput);
}

TEST(Csv, RoundTripIsExact)
{
    const auto [src, tgt] = gen_gaussian_shift(triangle_shift(1.0, 30, 20), 2);
    const auto p = scratch("roundtrip.csv");
    save_csv(tgt, p.string());
    CsvSchema schema;
    schema.requireLabels = true;
    schema.K = 3;
    const auto back = load_csv(p.string(), schema);
    EXPECT_EQ(back.X, tgt.X);
    EXPECT_EQ(*back.labels, *tgt.labels);
    EXPECT_EQ(back.ids, tgt.ids);
    EXPECT_EQ(back.origin, Origin::Target);
}

TEST(Csv, RejectsMalformedInput)
{
    const auto p = scratch("bad.csv");
    CsvSchema schema;
    schema.K = 3;
    auto write = [&](const std::string& s) { std::ofstream(p) << s; };
    write("a,b,label\n1,2,0\n1,2\n");
    EXPECT_THROW(load_csv(p.string(), schema), InvalidInput);
    write("a,b,label\n1,x,0\n");
    EXPECT_THROW(load_csv(p.string(), schema), InvalidInput);
    write("a,b,label\n1,2,3\n");
    EXPECT_THROW(load_csv(p.string(), schema), InvalidInput);
    write("a,b,label\n1,2,0.5\n");
    EXPECT_THROW(load_csv(p.string(), schema), InvalidInput);
    write("a,b\n1,2\n");
    schema.requireLabels = true;
    EXPECT_THROW(load_csv(p.string(), schema), InvalidInput);
    schema.requireLabels = false;
    EXPECT_FALSE(load_csv(p.string(), schema).labels.has_value());
    write("a,b,label\n1,2,1\n3,4,3\n");
    schema.labelOffset = 1;
    EXPECT_EQ(*load_csv(p.string(), schema).labels, (std::vector<int>{0, 2}));
}

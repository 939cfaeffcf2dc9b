#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "disco/error.hpp"
#include "disco/instances.hpp"
#include "disco/rng.hpp"

namespace disco {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Origin { Source, Target };

inline std::string_view to_string(Origin o) { return o == Origin::Source ? "source" : "target"; }

struct Dataset {
    RowMatrix X;
    std::optional<std::vector<int>> labels;
    Origin origin = Origin::Source;
    std::vector<std::int64_t> ids;

    std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }

    const std::vector<int>& require_labels() const
    {
        if (!labels) throw InvalidInput("dataset has no labels but labels are required");
        return *labels;
    }

    Dataset subset(const std::vector<std::size_t>& idx) const
    {
        Dataset out;
        out.origin = origin;
        out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
        if (labels) out.labels.emplace();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
            if (labels) out.labels->push_back((*labels)[idx[i]]);
            out.ids.push_back(ids[idx[i]]);
        }
        return out;
    }
};

struct Split {
    Dataset train;
    Dataset test;
};

/* Seeded random partition; the first round(fraction * n) permuted rows train. */
inline Split split(const Dataset& data, double trainFraction, std::uint64_t seed)
{
    if (!(trainFraction > 0.0 && trainFraction < 1.0)) throw InvalidInput("train fraction must lie in (0, 1)");
    Rng rng(seed, "data", "split");
    auto perm = rng.permutation(data.size());
    const auto nTrain = static_cast<std::size_t>(std::llround(trainFraction * static_cast<double>(data.size())));
    std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(nTrain));
    std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(nTrain), perm.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.empty() || b.empty()) throw InvalidInput("split leaves an empty part");
    return {data.subset(a), data.subset(b)};
}

struct GaussianShiftSpec {
    int K = 3;
    int d = 2;
    RowMatrix sourceMeans; // K x d
    RowMatrix targetMeans; // K x d
    double sigma = 1.0;
    int nSource = 1000;
    int nTarget = 1000;
    double labelNoise = 0.0;
    std::vector<double> sourceClassWeights; // empty = uniform
    std::vector<double> targetClassWeights;

    void validate() const
    {
        if (K < 2 || d < 1) throw InvalidInput("gaussian spec needs K >= 2 and d >= 1");
        if (sourceMeans.rows() != K || sourceMeans.cols() != d || targetMeans.rows() != K ||
            targetMeans.cols() != d)
            throw InvalidInput("class mean matrices must be K x d");
        if (!sourceMeans.allFinite() || !targetMeans.allFinite()) throw InvalidInput("class means must be finite");
        if (!(sigma > 0.0)) throw InvalidInput("sigma must be > 0");
        if (nSource < 1 || nTarget < 1) throw InvalidInput("sample counts must be >= 1");
        if (!(labelNoise >= 0.0 && labelNoise < 0.5)) throw InvalidInput("labelNoise must lie in [0, 0.5)");
        for (const auto* w : {&sourceClassWeights, &targetClassWeights}) {
            if (w->empty()) continue;
            if (static_cast<int>(w->size()) != K) throw InvalidInput("class weights need K entries");
            for (double v : *w)
                if (!(v >= 0.0)) throw InvalidInput("class weights must be >= 0");
        }
    }
};

namespace detail {

inline int draw_class(Rng& rng, int K, const std::vector<double>& weights)
{
    if (weights.empty()) return static_cast<int>(rng.index(static_cast<std::size_t>(K)));
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (int k = 0; k < K; ++k) {
        u -= weights[static_cast<std::size_t>(k)];
        if (u < 0.0) return k;
    }
    return K - 1;
}

inline Dataset sample_gaussian(const GaussianShiftSpec& spec, const RowMatrix& means, int n,
                               const std::vector<double>& weights, Origin origin, Rng& rng)
{
    Dataset out;
    out.origin = origin;
    out.X.resize(n, spec.d);
    out.labels.emplace();
    for (int i = 0; i < n; ++i) {
        const int y = draw_class(rng, spec.K, weights);
        for (int j = 0; j < spec.d; ++j) out.X(i, j) = means(y, j) + spec.sigma * rng.normal();
        int label = y;
        if (spec.labelNoise > 0.0 && rng.uniform() < spec.labelNoise) {
            const int other = static_cast<int>(rng.index(static_cast<std::size_t>(spec.K - 1)));
            label = other >= y ? other + 1 : other;
        }
        out.labels->push_back(label);
        out.ids.push_back(i);
    }
    return out;
}

} // namespace detail

/* Fixed per-column map onto [0, 1]: span of all class means widened by 4 sigma, clamped. */
inline void normalize_features(const GaussianShiftSpec& spec, Dataset& data)
{
    for (int j = 0; j < spec.d; ++j) {
        const double lo = std::min(spec.sourceMeans.col(j).minCoeff(), spec.targetMeans.col(j).minCoeff()) -
                          4.0 * spec.sigma;
        const double hi = std::max(spec.sourceMeans.col(j).maxCoeff(), spec.targetMeans.col(j).maxCoeff()) +
                          4.0 * spec.sigma;
        for (Eigen::Index i = 0; i < data.X.rows(); ++i)
            data.X(i, j) = std::clamp((data.X(i, j) - lo) / (hi - lo), 0.0, 1.0);
    }
}

inline std::pair<Dataset, Dataset> gen_gaussian_shift(const GaussianShiftSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Rng srcRng(seed, "data", "gaussian-source");
    Rng tgtRng(seed, "data", "gaussian-target");
    Dataset src = detail::sample_gaussian(spec, spec.sourceMeans, spec.nSource, spec.sourceClassWeights,
                                          Origin::Source, srcRng);
    Dataset tgt = detail::sample_gaussian(spec, spec.targetMeans, spec.nTarget, spec.targetClassWeights,
                                          Origin::Target, tgtRng);
    normalize_features(spec, src);
    normalize_features(spec, tgt);
    return {std::move(src), std::move(tgt)};
}

/* Column layout of a CSV file. Empty featureColumns selects every other column. */
struct CsvSchema {
    std::vector<std::string> featureColumns;
    std::optional<std::string> labelColumn = std::string("label");
    std::string idColumn = "id";
    int labelOffset = 0; // subtracted from raw labels, e.g. 1 for labels 1..K
    bool requireLabels = false;
    int K = 0;           // when > 0, labels must lie in [0, K)
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& tok, std::size_t lineNo)
{
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    while (b < e && *b == ' ') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw InvalidInput("line " + std::to_string(lineNo) + ": cannot parse number '" + tok + "'");
    return v;
}

inline std::string fmt17(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema, Origin origin = Origin::Source)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(path + ": empty file");
    const auto header = detail::split_csv_line(line);
    auto find = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int labelCol = schema.labelColumn ? find(*schema.labelColumn) : -1;
    if (schema.requireLabels && labelCol < 0) throw InvalidInput(path + ": label column missing");
    const int idCol = find(schema.idColumn);
    std::vector<int> featCols;
    if (schema.featureColumns.empty()) {
        for (int i = 0; i < static_cast<int>(header.size()); ++i)
            if (i != labelCol && i != idCol) featCols.push_back(i);
    } else {
        for (const auto& name : schema.featureColumns) {
            const int c = find(name);
            if (c < 0) throw InvalidInput(path + ": feature column '" + name + "' missing");
            featCols.push_back(c);
        }
    }
    if (featCols.empty()) throw InvalidInput(path + ": no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::int64_t> ids;
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line == "\r") continue;
        const auto tok = detail::split_csv_line(line);
        if (tok.size() != header.size())
            throw InvalidInput(path + ": line " + std::to_string(lineNo) + ": expected " +
                               std::to_string(header.size()) + " fields, got " + std::to_string(tok.size()));
        std::vector<double> row;
        for (int c : featCols) row.push_back(detail::parse_double(tok[static_cast<std::size_t>(c)], lineNo));
        rows.push_back(std::move(row));
        if (labelCol >= 0) {
            const double raw = detail::parse_double(tok[static_cast<std::size_t>(labelCol)], lineNo);
            if (raw != std::floor(raw))
                throw InvalidInput(path + ": line " + std::to_string(lineNo) + ": non-integer label");
            const int y = static_cast<int>(raw) - schema.labelOffset;
            if (y < 0 || (schema.K > 0 && y >= schema.K))
                throw InvalidInput(path + ": line " + std::to_string(lineNo) + ": label out of range");
            labels.push_back(y);
        }
        ids.push_back(idCol >= 0 ? static_cast<std::int64_t>(detail::parse_double(tok[static_cast<std::size_t>(idCol)], lineNo))
                                 : static_cast<std::int64_t>(rows.size() - 1));
    }
    if (rows.empty()) throw InvalidInput(path + ": no data rows");

    Dataset out;
    out.origin = origin;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(featCols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < featCols.size(); ++j)
            out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    if (labelCol >= 0) out.labels = std::move(labels);
    out.ids = std::move(ids);

    std::ifstream meta(path + ".meta.json");
    if (meta) {
        try {
            const auto j = nlohmann::json::parse(meta);
            if (j.value("origin", "source") == "target") out.origin = Origin::Target;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput(path + ".meta.json: " + e.what());
        }
    }
    return out;
}

inline void save_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path);
    out << text;
}

inline void save_json(const nlohmann::json& doc, const std::string& path)
{
    save_text(path, doc.dump(2) + "\n");
}

/* Columns id, f0..f{d-1}, label (when present); origin goes to path.meta.json. */
inline void save_csv(const Dataset& data, const std::string& path)
{
    std::string text = "id";
    for (int j = 0; j < data.dim(); ++j) text += ",f" + std::to_string(j);
    if (data.labels) text += ",label";
    text += "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        text += std::to_string(data.ids[i]);
        for (int j = 0; j < data.dim(); ++j)
            text += "," + detail::fmt17(data.X(static_cast<Eigen::Index>(i), j));
        if (data.labels) text += "," + std::to_string((*data.labels)[i]);
        text += "\n";
    }
    save_text(path, text);
    save_json({{"origin", std::string(to_string(data.origin))}}, path + ".meta.json");
}

} // namespace disco

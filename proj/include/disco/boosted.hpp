#pragma once

/*
 * Second-order boosted critic: per round and class, one regression tree fitted
 * to (gradient, Hessian bound) pairs with exact greedy splits.
 *
 *   gain = G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l),   leaf = -G/(H+l)
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "disco/data.hpp"
#include "disco/discrepancy.hpp"
#include "disco/error.hpp"
#include "disco/losses.hpp"
#include "disco/rng.hpp"

namespace disco {

struct TreeNode {
    int feature = -1;      // -1 marks a leaf
    double threshold = 0.0; // rows with x[feature] < threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(const double* x) const
    {
        int n = 0;
        while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
            const auto& node = nodes[static_cast<std::size_t>(n)];
            n = x[node.feature] < node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<std::size_t>(n)].value;
    }

    int depth() const
    {
        std::function<int(int)> rec = [&](int n) -> int {
            const auto& node = nodes[static_cast<std::size_t>(n)];
            if (node.feature < 0) return 0;
            return 1 + std::max(rec(node.left), rec(node.right));
        };
        return nodes.empty() ? 0 : rec(0);
    }
};

struct BoostConfig {
    int rounds = 20;
    int maxDepth = 3;
    double shrinkage = 0.3;
    double lambda = 1.0;
    double alpha = 1.0;
    double subsample = 1.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rounds < 0) throw InvalidInput("rounds must be >= 0");
        if (maxDepth < 1 || maxDepth > 6) throw InvalidInput("maxDepth must lie in [1, 6]");
        if (!(shrinkage > 0.0)) throw InvalidInput("shrinkage must be > 0");
        if (!(lambda >= 0.0)) throw InvalidInput("lambda must be >= 0");
        if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
        if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidInput("subsample must lie in (0, 1]");
    }
};

class BoostedCritic {
public:
    BoostedCritic() = default;
    BoostedCritic(int K, int d, double shrinkage, int maxDepth)
        : K_(K), d_(d), shrinkage_(shrinkage), maxDepth_(maxDepth)
    {
    }

    int K() const { return K_; }
    int dim() const { return d_; }
    double shrinkage() const { return shrinkage_; }
    int max_depth() const { return maxDepth_; }
    const std::vector<std::vector<RegressionTree>>& rounds() const { return rounds_; }
    void add_round(std::vector<RegressionTree> trees) { rounds_.push_back(std::move(trees)); }

    RowMatrix logits(const RowMatrix& X) const
    {
        if (X.cols() != d_) throw InvalidInput("feature dimension mismatch");
        RowMatrix S = RowMatrix::Zero(X.rows(), K_);
        for (const auto& round : rounds_)
            for (int k = 0; k < K_; ++k)
                for (Eigen::Index i = 0; i < X.rows(); ++i)
                    S(i, k) += shrinkage_ * round[static_cast<std::size_t>(k)].predict(X.row(i).data());
        return S;
    }

    std::vector<int> predict(const RowMatrix& X) const
    {
        const RowMatrix S = logits(X);
        std::vector<int> out(static_cast<std::size_t>(S.rows()));
        for (Eigen::Index i = 0; i < S.rows(); ++i)
            out[static_cast<std::size_t>(i)] = score_to_class(std::span<const double>(S.row(i).data(), S.cols()));
        return out;
    }

private:
    int K_ = 2;
    int d_ = 1;
    double shrinkage_ = 0.3;
    int maxDepth_ = 3;
    std::vector<std::vector<RegressionTree>> rounds_;
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const RowMatrix& X, const std::vector<std::vector<std::size_t>>& order, const std::vector<double>& g,
                const std::vector<double>& h, const BoostConfig& cfg)
        : X_(X), order_(order), g_(g), h_(h), cfg_(cfg), member_(static_cast<std::size_t>(X.rows()), 0)
    {
    }

    RegressionTree build(const std::vector<std::size_t>& rows)
    {
        RegressionTree tree;
        grow(tree, rows, 0, 1);
        return tree;
    }

private:
    int grow(RegressionTree& tree, const std::vector<std::size_t>& rows, int depth, int tag)
    {
        double G = 0.0, H = 0.0;
        for (std::size_t i : rows) {
            G += g_[i];
            H += h_[i];
        }
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        if (H <= 0.0) return id; // no curvature: leaf with value 0
        tree.nodes[static_cast<std::size_t>(id)].value = -G / (H + cfg_.lambda);
        if (depth >= cfg_.maxDepth || rows.size() < 2) return id;

        for (std::size_t i : rows) member_[i] = tag;
        const double parent = G * G / (H + cfg_.lambda);
        double bestGain = 0.0;
        int bestFeature = -1;
        double bestThreshold = 0.0;
        for (Eigen::Index f = 0; f < X_.cols(); ++f) {
            double GL = 0.0, HL = 0.0;
            bool started = false;
            std::size_t prev = 0;
            for (std::size_t i : order_[static_cast<std::size_t>(f)]) {
                if (member_[i] != tag) continue;
                if (started) {
                    const double a = X_(static_cast<Eigen::Index>(prev), f);
                    const double b = X_(static_cast<Eigen::Index>(i), f);
                    if (b > a) {
                        const double GR = G - GL, HR = H - HL;
                        const double gain = GL * GL / (HL + cfg_.lambda) + GR * GR / (HR + cfg_.lambda) - parent;
                        if (gain > bestGain + 1e-12) {
                            bestGain = gain;
                            bestFeature = static_cast<int>(f);
                            bestThreshold = 0.5 * (a + b);
                            if (!(bestThreshold > a)) bestThreshold = b;
                        }
                    }
                }
                GL += g_[i];
                HL += h_[i];
                prev = i;
                started = true;
            }
        }
        for (std::size_t i : rows) member_[i] = 0;
        if (bestFeature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t i : rows)
            (X_(static_cast<Eigen::Index>(i), bestFeature) < bestThreshold ? left : right).push_back(i);
        const int l = grow(tree, left, depth + 1, 2 * tag);
        const int r = grow(tree, right, depth + 1, 2 * tag + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = bestFeature;
        node.threshold = bestThreshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const RowMatrix& X_;
    const std::vector<std::vector<std::size_t>>& order_;
    const std::vector<double>& g_;
    const std::vector<double>& h_;
    const BoostConfig& cfg_;
    std::vector<int> member_;
};

} // namespace detail

/*
 * Source rows carry CE against y1 with weight 1, target rows the disagreement
 * loss against y2 with weight alpha. Logits start at 0.
 */
inline BoostedCritic train_boosted_critic(const RowMatrix& XS, const std::vector<int>& y1, const RowMatrix& XT,
                                          const std::vector<int>& y2, SurrogateKind kind, int K,
                                          const BoostConfig& cfg)
{
    cfg.validate();
    if (kind == SurrogateKind::RG23) throw InvalidInput("boosted critics support GLK23 and OURS");
    if (XS.cols() != XT.cols()) throw InvalidInput("feature dimensions differ");
    if (static_cast<std::size_t>(XS.rows()) != y1.size() || static_cast<std::size_t>(XT.rows()) != y2.size())
        throw InvalidInput("label count mismatch");
    for (int c : y1) check_label(c, static_cast<std::size_t>(K));
    for (int c : y2) check_label(c, static_cast<std::size_t>(K));

    const Eigen::Index nS = XS.rows(), n = XS.rows() + XT.rows(), d = XS.cols();
    RowMatrix X(n, d);
    X.topRows(nS) = XS;
    X.bottomRows(XT.rows()) = XT;
    std::vector<std::vector<std::size_t>> order(static_cast<std::size_t>(d));
    for (Eigen::Index f = 0; f < d; ++f) {
        auto& o = order[static_cast<std::size_t>(f)];
        o.resize(static_cast<std::size_t>(n));
        std::iota(o.begin(), o.end(), std::size_t{0});
        std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
            return X(static_cast<Eigen::Index>(a), f) < X(static_cast<Eigen::Index>(b), f);
        });
    }

    BoostedCritic critic(K, static_cast<int>(d), cfg.shrinkage, cfg.maxDepth);
    RowMatrix S = RowMatrix::Zero(n, K);
    const LossKind dis = disagreement_loss(kind);
    std::vector<std::vector<double>> g(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(n)));
    auto h = g;
    std::vector<double> gi(static_cast<std::size_t>(K)), hi(static_cast<std::size_t>(K));
    Rng rng(cfg.seed, "boost", "subsample");

    for (int round = 0; round < cfg.rounds; ++round) {
        for (Eigen::Index i = 0; i < n; ++i) {
            std::span<const double> s(S.row(i).data(), static_cast<std::size_t>(K));
            const bool source = i < nS;
            const LossKind loss = source ? LossKind::CE : dis;
            const int y = source ? y1[static_cast<std::size_t>(i)] : y2[static_cast<std::size_t>(i - nS)];
            const double w = source ? 1.0 : cfg.alpha;
            loss_grad_into(loss, y, s, gi);
            hessian_diag_bound_into(loss, y, s, hi);
            for (int k = 0; k < K; ++k) {
                g[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = w * gi[static_cast<std::size_t>(k)];
                h[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = w * hi[static_cast<std::size_t>(k)];
            }
        }
        std::vector<std::size_t> rows;
        for (Eigen::Index i = 0; i < n; ++i)
            if (cfg.subsample >= 1.0 || rng.uniform() < cfg.subsample) rows.push_back(static_cast<std::size_t>(i));
        std::vector<RegressionTree> trees;
        for (int k = 0; k < K; ++k) {
            detail::TreeBuilder builder(X, order, g[static_cast<std::size_t>(k)], h[static_cast<std::size_t>(k)], cfg);
            trees.push_back(builder.build(rows));
        }
        for (Eigen::Index i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k)
                S(i, k) += cfg.shrinkage * trees[static_cast<std::size_t>(k)].predict(X.row(i).data());
        critic.add_round(std::move(trees));
    }
    return critic;
}

inline nlohmann::json critic_to_json(const BoostedCritic& c)
{
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& round : c.rounds()) {
        for (std::size_t k = 0; k < round.size(); ++k) {
            nlohmann::json splits = nlohmann::json::array();
            nlohmann::json leaves = nlohmann::json::array();
            for (std::size_t n = 0; n < round[k].nodes.size(); ++n) {
                const auto& node = round[k].nodes[n];
                if (node.feature >= 0)
                    splits.push_back({{"node", n}, {"feature", node.feature}, {"threshold", node.threshold},
                                      {"left", node.left}, {"right", node.right}});
                else
                    leaves.push_back({{"node", n}, {"value", node.value}});
            }
            rounds.push_back({{"class", k}, {"tree", {{"splits", splits}, {"leaves", leaves}}}});
        }
    }
    return {{"type", "boosted"}, {"K", c.K()}, {"d", c.dim()}, {"maxDepth", c.max_depth()},
            {"shrinkage", c.shrinkage()}, {"rounds", rounds}};
}

inline BoostedCritic boosted_critic_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("type").get<std::string>() != "boosted") throw InvalidInput("not a boosted critic");
        const int K = j.at("K").get<int>();
        BoostedCritic c(K, j.at("d").get<int>(), j.at("shrinkage").get<double>(), j.value("maxDepth", 3));
        std::vector<RegressionTree> round;
        for (const auto& entry : j.at("rounds")) {
            if (entry.at("class").get<int>() != static_cast<int>(round.size()))
                throw InvalidInput("boosted rounds must list classes in order");
            RegressionTree tree;
            const auto& t = entry.at("tree");
            const std::size_t count = t.at("splits").size() + t.at("leaves").size();
            tree.nodes.resize(count);
            for (const auto& s : t.at("splits")) {
                auto& node = tree.nodes.at(s.at("node").get<std::size_t>());
                node.feature = s.at("feature").get<int>();
                node.threshold = s.at("threshold").get<double>();
                node.left = s.at("left").get<int>();
                node.right = s.at("right").get<int>();
            }
            for (const auto& l : t.at("leaves")) tree.nodes.at(l.at("node").get<std::size_t>()).value = l.at("value").get<double>();
            round.push_back(std::move(tree));
            if (static_cast<int>(round.size()) == K) {
                c.add_round(std::move(round));
                round.clear();
            }
        }
        if (!round.empty()) throw InvalidInput("incomplete boosted round");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed boosted critic JSON: ") + e.what());
    }
}

} // namespace disco

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "docaudit/common.hpp"

namespace docaudit {

struct ForestParams {
    std::size_t n_trees = 500;
    std::size_t max_depth = 5;
    std::size_t min_samples_leaf = 3;
};

// Axis-aligned threshold split; leaves carry the class-1 proportion of the
// bootstrap rows they hold.
struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double p1 = 0.0;
    std::uint32_t n_samples = 0;
    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        std::size_t idx = 0;
        while (!nodes[idx].is_leaf()) {
            const TreeNode& n = nodes[idx];
            idx = (x[static_cast<std::size_t>(n.feature)] <= n.threshold)
                      ? static_cast<std::size_t>(n.left)
                      : static_cast<std::size_t>(n.right);
        }
        return nodes[idx].p1;
    }
};

namespace detail {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double weighted_gini = 0.0;
};

inline double gini(double n_pos, double n_total) {
    if (n_total == 0.0) return 0.0;
    const double p = n_pos / n_total;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                const ForestParams& params, std::uint64_t seed)
        : x_(x), y_(y), params_(params), rng_(seed) {}

    DecisionTree build() {
        const std::size_t n = x_.size();
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i)
            rows[i] = static_cast<std::size_t>(bounded_u64(rng_, n));  // bootstrap sample
        DecisionTree tree;
        grow(tree, std::move(rows), 0);
        return tree;
    }

private:
    std::int32_t grow(DecisionTree& tree, std::vector<std::size_t> rows, std::size_t depth) {
        const std::int32_t idx = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        std::size_t n_pos = 0;
        for (std::size_t r : rows) n_pos += static_cast<std::size_t>(y_[r]);
        tree.nodes[idx].n_samples = static_cast<std::uint32_t>(rows.size());
        tree.nodes[idx].p1 = static_cast<double>(n_pos) / static_cast<double>(rows.size());

        const bool pure = (n_pos == 0 || n_pos == rows.size());
        if (depth >= params_.max_depth || pure || rows.size() < 2 * params_.min_samples_leaf)
            return idx;

        const SplitChoice split = best_split(rows);
        if (!split.found) return idx;

        std::vector<std::size_t> left, right;
        left.reserve(rows.size());
        right.reserve(rows.size());
        for (std::size_t r : rows) {
            (x_[r][split.feature] <= split.threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        tree.nodes[idx].feature = static_cast<std::int32_t>(split.feature);
        tree.nodes[idx].threshold = split.threshold;
        const std::int32_t l = grow(tree, std::move(left), depth + 1);
        tree.nodes[idx].left = l;
        const std::int32_t r = grow(tree, std::move(right), depth + 1);
        tree.nodes[idx].right = r;
        return idx;
    }

    // ceil(sqrt(d)) candidate features per split, drawn without replacement;
    // thresholds are midpoints between consecutive distinct values. Both
    // children must keep min_samples_leaf rows. First strictly better
    // candidate wins, so construction is deterministic.
    SplitChoice best_split(const std::vector<std::size_t>& rows) {
        const std::size_t d = x_.front().size();
        const std::size_t n_candidates =
            static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
        const std::vector<std::size_t> features =
            sample_without_replacement(d, std::min(n_candidates, d), rng_);

        SplitChoice best;
        std::vector<std::pair<double, int>> column(rows.size());
        for (std::size_t f : features) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                column[i] = {x_[rows[i]][f], y_[rows[i]]};
            }
            std::sort(column.begin(), column.end());
            double total_pos = 0.0;
            for (const auto& [v, label] : column) total_pos += label;
            const double total = static_cast<double>(column.size());

            double left_n = 0.0, left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left_n += 1.0;
                left_pos += column[i].second;
                if (column[i].first == column[i + 1].first) continue;
                const double right_n = total - left_n;
                if (left_n < static_cast<double>(params_.min_samples_leaf) ||
                    right_n < static_cast<double>(params_.min_samples_leaf))
                    continue;
                const double w = left_n / total * gini(left_pos, left_n) +
                                 right_n / total * gini(total_pos - left_pos, right_n);
                if (!best.found || w < best.weighted_gini) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = 0.5 * (column[i].first + column[i + 1].first);
                    best.weighted_gini = w;
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<double>>& x_;
    const std::vector<int>& y_;
    const ForestParams& params_;
    std::mt19937_64 rng_;
};

}  // namespace detail

// Random-forest meta-classifier: bootstrap aggregation over Gini-impurity
// decision trees with per-split feature subsampling. Per-tree generators
// derive from the master seed, so results are identical regardless of how
// training is scheduled.
class Forest {
public:
    ForestParams params;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    std::vector<DecisionTree> trees;
    std::string feature_manifest_hash;

    static Forest train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                        const ForestParams& params = {}, std::uint64_t seed = 0,
                        std::size_t n_threads = 1) {
        if (x.empty() || x.size() != y.size()) throw Error("train: bad training data shape");
        const std::size_t d = x.front().size();
        if (d == 0) throw Error("train: feature vectors are empty");
        for (const auto& row : x) {
            if (row.size() != d) throw Error("train: inconsistent feature vector lengths");
        }
        bool pos = false, neg = false;
        for (int label : y) {
            if (label != 0 && label != 1) throw Error("train: labels must be 0 or 1");
            (label == 1 ? pos : neg) = true;
        }
        if (!pos || !neg) throw Error("train: both classes must be present");

        Forest forest;
        forest.params = params;
        forest.seed = seed;
        forest.n_features = d;
        forest.trees.resize(params.n_trees);

        auto build_range = [&](std::size_t begin, std::size_t end) {
            for (std::size_t t = begin; t < end; ++t) {
                detail::TreeBuilder builder(x, y, forest.params, derive_seed(seed, t));
                forest.trees[t] = builder.build();
            }
        };
        if (n_threads <= 1 || params.n_trees < 2) {
            build_range(0, params.n_trees);
        } else {
            const std::size_t workers = std::min(n_threads, params.n_trees);
            std::vector<std::future<void>> futures;
            const std::size_t chunk = (params.n_trees + workers - 1) / workers;
            for (std::size_t w = 0; w < workers; ++w) {
                const std::size_t begin = w * chunk;
                const std::size_t end = std::min(params.n_trees, begin + chunk);
                if (begin >= end) break;
                futures.push_back(std::async(std::launch::async, build_range, begin, end));
            }
            for (auto& f : futures) f.get();
        }
        return forest;
    }

    // Mean of leaf class-1 proportions across trees.
    double predict_proba(std::span<const double> x) const {
        if (x.size() != n_features)
            throw Error("predict_proba: expected " + std::to_string(n_features) +
                        " features, got " + std::to_string(x.size()));
        if (trees.empty()) throw Error("predict_proba: forest is empty");
        double sum = 0.0;
        for (const DecisionTree& t : trees) sum += t.predict(x);
        return sum / static_cast<double>(trees.size());
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json jt = nlohmann::json::array();
        for (const DecisionTree& tree : trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const TreeNode& n : tree.nodes) {
                nodes.push_back({{"f", n.feature},
                                 {"t", n.threshold},
                                 {"l", n.left},
                                 {"r", n.right},
                                 {"p", n.p1},
                                 {"n", n.n_samples}});
            }
            jt.push_back({{"nodes", nodes}});
        }
        nlohmann::json j;
        j["version"] = 1;
        j["n_trees"] = params.n_trees;
        j["max_depth"] = params.max_depth;
        j["min_samples_leaf"] = params.min_samples_leaf;
        j["seed"] = seed;
        j["n_features"] = n_features;
        j["feature_manifest_hash"] = feature_manifest_hash;
        j["trees"] = jt;
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw StoreError("cannot write " + tmp.string());
            out << j.dump() << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

    static Forest load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw StoreError("cannot read model " + path.string());
        nlohmann::json j;
        in >> j;
        if (j.at("version").get<int>() != 1) throw StoreError("unsupported model version");
        Forest forest;
        forest.params.n_trees = j.at("n_trees").get<std::size_t>();
        forest.params.max_depth = j.at("max_depth").get<std::size_t>();
        forest.params.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
        forest.seed = j.at("seed").get<std::uint64_t>();
        forest.n_features = j.at("n_features").get<std::size_t>();
        forest.feature_manifest_hash = j.at("feature_manifest_hash").get<std::string>();
        for (const auto& jtree : j.at("trees")) {
            DecisionTree tree;
            for (const auto& jn : jtree.at("nodes")) {
                TreeNode n;
                n.feature = jn.at("f").get<std::int32_t>();
                n.threshold = jn.at("t").get<double>();
                n.left = jn.at("l").get<std::int32_t>();
                n.right = jn.at("r").get<std::int32_t>();
                n.p1 = jn.at("p").get<double>();
                n.n_samples = jn.at("n").get<std::uint32_t>();
                tree.nodes.push_back(n);
            }
            forest.trees.push_back(std::move(tree));
        }
        return forest;
    }
};

inline Forest train_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                           std::uint64_t seed, const ForestParams& params = {},
                           std::size_t n_threads = 1) {
    return Forest::train(x, y, params, seed, n_threads);
}

}  // namespace docaudit

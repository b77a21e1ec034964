#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "radtk/errors.hpp"
#include "radtk/rng.hpp"

namespace radtk {

using DataMatrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// Column standardization with a 1e-8 floor on the (population) deviation.

struct Scaler {
    std::vector<double> mean, stdev;

    static Scaler fit(const DataMatrix& X) {
        if (X.size() < 2) throw ValidationError("scaler needs at least two rows");
        const std::size_t d = X[0].size();
        Scaler s;
        s.mean.assign(d, 0.0);
        s.stdev.assign(d, 0.0);
        for (const auto& row : X)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
        for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(X.size());
        for (const auto& row : X)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = row[j] - s.mean[j];
                s.stdev[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j)
            s.stdev[j] = std::max(std::sqrt(s.stdev[j] / static_cast<double>(X.size())), 1e-8);
        return s;
    }

    DataMatrix transform(const DataMatrix& X) const {
        DataMatrix out = X;
        for (auto& row : out) {
            if (row.size() != mean.size())
                throw ShapeError("scaler fitted on " + std::to_string(mean.size()) +
                                 " features, got " + std::to_string(row.size()));
            for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stdev[j];
        }
        return out;
    }
};

inline std::pair<Scaler, DataMatrix> scaler_fit_transform(const DataMatrix& X) {
    Scaler s = Scaler::fit(X);
    return {s, s.transform(X)};
}

// ---------------------------------------------------------------------------
// CART with gini impurity. Thresholds are midpoints of consecutive distinct
// sorted values; ties between equally good splits resolve to the lower
// feature index, then the lower threshold; leaves take the majority class
// with ties toward the lowest index.

struct DTreeNode {
    int feature = -1;      // -1 marks a leaf
    double threshold = 0;  // x[feature] <= threshold goes left
    int left = -1, right = -1;
    int label = -1;
    std::vector<std::int64_t> counts;
};

struct DTreeOptions {
    int min_samples_split = 2;
    int max_depth = -1;  // -1: unbounded
};

struct DTree {
    std::vector<DTreeNode> nodes;
    int num_classes = 0;

    int predict(const std::vector<double>& x) const {
        if (nodes.empty()) throw UsageError("predict on an unfitted tree");
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].label;
    }
};

inline double gini_impurity(const std::vector<std::int64_t>& counts, std::int64_t total) {
    if (total == 0) return 0.0;
    double g = 1.0;
    for (std::int64_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        g -= p * p;
    }
    return g;
}

namespace detail {

struct TreeBuilder {
    const DataMatrix& X;
    const std::vector<int>& y;
    int num_classes;
    DTreeOptions opts;
    RngState* rng;       // feature subsampling stream (forest); null = all features
    int max_features;    // features examined per node when rng != null
    std::vector<DTreeNode> nodes;
    std::vector<int> feature_pool;

    TreeBuilder(const DataMatrix& x_, const std::vector<int>& y_, int classes, DTreeOptions o,
                RngState* r, int mf)
        : X(x_), y(y_), num_classes(classes), opts(o), rng(r), max_features(mf) {
        feature_pool.resize(X[0].size());
        for (std::size_t j = 0; j < feature_pool.size(); ++j) feature_pool[j] = static_cast<int>(j);
    }

    int majority(const std::vector<std::int64_t>& counts) const {
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
            if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
        return best;
    }

    int make_leaf(const std::vector<std::int64_t>& counts) {
        DTreeNode n;
        n.label = majority(counts);
        n.counts = counts;
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size() - 1);
    }

    // Candidate features for this node, in ascending order.
    std::vector<int> node_features() {
        if (!rng || max_features >= static_cast<int>(feature_pool.size())) return feature_pool;
        // Partial Fisher-Yates on a copy, then sort for the deterministic
        // lower-feature-index tie rule.
        std::vector<int> pool = feature_pool;
        std::vector<int> chosen;
        chosen.reserve(static_cast<std::size_t>(max_features));
        for (int i = 0; i < max_features; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng->next_below(pool.size() - static_cast<std::size_t>(i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            chosen.push_back(pool[static_cast<std::size_t>(i)]);
        }
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    int build(std::vector<std::size_t>& idxs, int depth) {
        std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
        for (std::size_t i : idxs) ++counts[static_cast<std::size_t>(y[i])];
        const std::int64_t total = static_cast<std::int64_t>(idxs.size());
        const double parent_gini = gini_impurity(counts, total);

        std::int64_t distinct_classes = 0;
        for (std::int64_t c : counts) distinct_classes += c > 0;
        if (distinct_classes <= 1 || total < opts.min_samples_split ||
            (opts.max_depth >= 0 && depth >= opts.max_depth))
            return make_leaf(counts);

        int best_feature = -1;
        double best_threshold = 0, best_score = parent_gini - 1e-12;
        for (int f : node_features()) {
            std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
                return X[a][static_cast<std::size_t>(f)] < X[b][static_cast<std::size_t>(f)];
            });
            std::vector<std::int64_t> left(static_cast<std::size_t>(num_classes), 0);
            std::vector<std::int64_t> right = counts;
            for (std::size_t i = 0; i + 1 < idxs.size(); ++i) {
                const int cls = y[idxs[i]];
                ++left[static_cast<std::size_t>(cls)];
                --right[static_cast<std::size_t>(cls)];
                const double a = X[idxs[i]][static_cast<std::size_t>(f)];
                const double b = X[idxs[i + 1]][static_cast<std::size_t>(f)];
                if (a == b) continue;
                const double thr = (a + b) / 2.0;
                if (!(thr < b)) continue;  // midpoint rounded onto b; unusable
                const std::int64_t nl = static_cast<std::int64_t>(i + 1);
                const std::int64_t nr = total - nl;
                const double score = (static_cast<double>(nl) * gini_impurity(left, nl) +
                                      static_cast<double>(nr) * gini_impurity(right, nr)) /
                                     static_cast<double>(total);
                if (score < best_score) {  // strict: first (lowest f, lowest thr) wins ties
                    best_score = score;
                    best_feature = f;
                    best_threshold = thr;
                }
            }
        }
        if (best_feature < 0) return make_leaf(counts);

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idxs)
            (X[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left_idx : right_idx)
                .push_back(i);
        const int self = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<std::size_t>(self)].feature = best_feature;
        nodes[static_cast<std::size_t>(self)].threshold = best_threshold;
        nodes[static_cast<std::size_t>(self)].counts = counts;
        const int l = build(left_idx, depth + 1);
        const int r = build(right_idx, depth + 1);
        nodes[static_cast<std::size_t>(self)].left = l;
        nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }
};

inline int infer_num_classes(const std::vector<int>& y) {
    int m = 0;
    for (int v : y) {
        if (v < 0) throw ValidationError("negative class label");
        m = std::max(m, v + 1);
    }
    return m;
}

}  // namespace detail

inline DTree dtree_fit(const DataMatrix& X, const std::vector<int>& y, DTreeOptions opts = {},
                       int num_classes = 0) {
    if (X.empty() || X.size() != y.size())
        throw ValidationError("dtree_fit: " + std::to_string(X.size()) + " rows vs " +
                              std::to_string(y.size()) + " labels");
    if (num_classes <= 0) num_classes = detail::infer_num_classes(y);
    detail::TreeBuilder builder(X, y, num_classes, opts, nullptr, 0);
    std::vector<std::size_t> idxs(X.size());
    for (std::size_t i = 0; i < idxs.size(); ++i) idxs[i] = i;
    builder.build(idxs, 0);
    DTree tree;
    tree.nodes = std::move(builder.nodes);
    tree.num_classes = num_classes;
    return tree;
}

// ---------------------------------------------------------------------------
// Random forest: seeded bootstrap per tree (stream seed + t), floor(sqrt(D))
// candidate features per node, majority vote with ties toward the lowest
// class index. bootstrap=false is a test hook making T=1 equal a plain tree.

struct ForestOptions {
    int trees = 100;
    bool bootstrap = true;
    int max_features = 0;  // 0: floor(sqrt(D))
    DTreeOptions tree;
};

// Candidate features examined per node: floor(sqrt(D)), at least 1.
inline int forest_max_features(int d) {
    return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
}

struct Forest {
    std::vector<DTree> trees;
    int num_classes = 0;

    int predict(const std::vector<double>& x) const {
        if (trees.empty()) throw UsageError("predict on an unfitted forest");
        std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
        for (const auto& t : trees) ++votes[static_cast<std::size_t>(t.predict(x))];
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
            if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
        return best;
    }
};

inline Forest forest_fit(const DataMatrix& X, const std::vector<int>& y, std::uint64_t seed,
                         ForestOptions opts = {}, int threads = 1) {
    if (X.empty() || X.size() != y.size())
        throw ValidationError("forest_fit: " + std::to_string(X.size()) + " rows vs " +
                              std::to_string(y.size()) + " labels");
    const int num_classes = detail::infer_num_classes(y);
    const int d = static_cast<int>(X[0].size());
    const int mf = opts.max_features > 0 ? opts.max_features : forest_max_features(d);
    Forest forest;
    forest.num_classes = num_classes;
    forest.trees.resize(static_cast<std::size_t>(opts.trees));

    auto fit_one = [&](int t) {
        RngState rng(seed + static_cast<std::uint64_t>(t));
        DataMatrix bx;
        std::vector<int> by;
        const DataMatrix* px = &X;
        const std::vector<int>* py = &y;
        if (opts.bootstrap) {
            bx.reserve(X.size());
            by.reserve(X.size());
            for (std::size_t i = 0; i < X.size(); ++i) {
                const std::size_t j = static_cast<std::size_t>(rng.next_below(X.size()));
                bx.push_back(X[j]);
                by.push_back(y[j]);
            }
            px = &bx;
            py = &by;
        }
        detail::TreeBuilder builder(*px, *py, num_classes, opts.tree, &rng, mf);
        std::vector<std::size_t> idxs(px->size());
        for (std::size_t i = 0; i < idxs.size(); ++i) idxs[i] = i;
        builder.build(idxs, 0);
        DTree tree;
        tree.nodes = std::move(builder.nodes);
        tree.num_classes = num_classes;
        forest.trees[static_cast<std::size_t>(t)] = std::move(tree);
    };

    if (threads <= 1 || opts.trees <= 1) {
        for (int t = 0; t < opts.trees; ++t) fit_one(t);
    } else {
        const int nt = std::min(threads, opts.trees);
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (int t = w; t < opts.trees; t += nt) fit_one(t);
            });
        for (auto& th : pool) th.join();
    }
    return forest;
}

}  // namespace radtk

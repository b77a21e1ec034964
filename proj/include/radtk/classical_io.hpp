#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radtk/archive.hpp"
#include "radtk/classical.hpp"
#include "radtk/svm.hpp"

namespace radtk {

enum class ClassicalKind { dtree, forest, svm };

inline const char* classical_kind_name(ClassicalKind k) {
    switch (k) {
        case ClassicalKind::dtree: return "dtree";
        case ClassicalKind::forest: return "forest";
        case ClassicalKind::svm: return "svm";
    }
    return "?";
}

// A fitted hybrid-path classifier bundled with its input scaler.
struct ClassicalModel {
    ClassicalKind kind = ClassicalKind::dtree;
    Scaler scaler;
    DTree tree;
    Forest forest;
    SvmOvo svm;

    std::vector<int> predict(const DataMatrix& raw) const {
        const DataMatrix X = scaler.transform(raw);
        std::vector<int> out;
        out.reserve(X.size());
        switch (kind) {
            case ClassicalKind::dtree:
                for (const auto& row : X) out.push_back(tree.predict(row));
                break;
            case ClassicalKind::forest:
                for (const auto& row : X) out.push_back(forest.predict(row));
                break;
            case ClassicalKind::svm:
                out = svm_predict_multiclass(svm, X);
                break;
        }
        return out;
    }
};

namespace detail {

inline void save_tree(WeightArchive& a, const std::string& prefix, const DTree& tree) {
    const int n = static_cast<int>(tree.nodes.size());
    std::vector<std::int32_t> feature(static_cast<std::size_t>(n)), left(static_cast<std::size_t>(n)),
        right(static_cast<std::size_t>(n)), label(static_cast<std::size_t>(n));
    std::vector<double> threshold(static_cast<std::size_t>(n));
    std::vector<std::int64_t> counts;
    for (int i = 0; i < n; ++i) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(i)];
        feature[static_cast<std::size_t>(i)] = nd.feature;
        threshold[static_cast<std::size_t>(i)] = nd.threshold;
        left[static_cast<std::size_t>(i)] = nd.left;
        right[static_cast<std::size_t>(i)] = nd.right;
        label[static_cast<std::size_t>(i)] = nd.label;
        counts.insert(counts.end(), nd.counts.begin(), nd.counts.end());
    }
    a.add_i32(prefix + "feature", {n}, feature);
    a.add_f64(prefix + "threshold", {n}, threshold);
    a.add_i32(prefix + "left", {n}, left);
    a.add_i32(prefix + "right", {n}, right);
    a.add_i32(prefix + "label", {n}, label);
    a.add_i64(prefix + "counts", {n, tree.num_classes}, counts);
}

inline DTree load_tree(const WeightArchive& a, const std::string& prefix) {
    DTree tree;
    const auto feature = a.values<std::int32_t>(prefix + "feature");
    const auto threshold = a.values<double>(prefix + "threshold");
    const auto left = a.values<std::int32_t>(prefix + "left");
    const auto right = a.values<std::int32_t>(prefix + "right");
    const auto label = a.values<std::int32_t>(prefix + "label");
    const auto counts = a.values<std::int64_t>(prefix + "counts");
    tree.num_classes = a.entry(prefix + "counts").shape[1];
    tree.nodes.resize(feature.size());
    for (std::size_t i = 0; i < feature.size(); ++i) {
        auto& nd = tree.nodes[i];
        nd.feature = feature[i];
        nd.threshold = threshold[i];
        nd.left = left[i];
        nd.right = right[i];
        nd.label = label[i];
        nd.counts.assign(counts.begin() + static_cast<std::ptrdiff_t>(i * tree.num_classes),
                         counts.begin() + static_cast<std::ptrdiff_t>((i + 1) * tree.num_classes));
    }
    return tree;
}

}  // namespace detail

inline void save_classical_model(const std::string& base, const ClassicalModel& m) {
    WeightArchive a;
    a.add_i64("meta", {2}, {static_cast<std::int64_t>(m.kind),
                            static_cast<std::int64_t>(m.kind == ClassicalKind::dtree  ? m.tree.num_classes
                                                      : m.kind == ClassicalKind::forest ? m.forest.num_classes
                                                                                        : m.svm.num_classes)});
    a.add_f64("scaler.mean", {static_cast<int>(m.scaler.mean.size())}, m.scaler.mean);
    a.add_f64("scaler.std", {static_cast<int>(m.scaler.stdev.size())}, m.scaler.stdev);
    switch (m.kind) {
        case ClassicalKind::dtree:
            detail::save_tree(a, "tree.", m.tree);
            break;
        case ClassicalKind::forest:
            a.add_i64("forest.meta", {1}, {static_cast<std::int64_t>(m.forest.trees.size())});
            for (std::size_t t = 0; t < m.forest.trees.size(); ++t)
                detail::save_tree(a, "tree" + std::to_string(t) + ".", m.forest.trees[t]);
            break;
        case ClassicalKind::svm:
            for (std::size_t p = 0; p < m.svm.models.size(); ++p) {
                const std::string prefix = "pair" + std::to_string(p) + ".";
                const SvmModel& sm = m.svm.models[p];
                const int s = static_cast<int>(sm.support_vectors.size());
                const int d = s ? static_cast<int>(sm.support_vectors[0].size()) : 0;
                std::vector<double> sv;
                for (const auto& row : sm.support_vectors) sv.insert(sv.end(), row.begin(), row.end());
                a.add_f64(prefix + "sv", {s, std::max(d, 1)}, s ? sv : std::vector<double>(1, 0.0));
                a.add_f64(prefix + "alpha_y", {std::max(s, 1)},
                          s ? sm.alpha_y : std::vector<double>(1, 0.0));
                a.add_f64(prefix + "alpha", {std::max(s, 1)},
                          s ? sm.alpha : std::vector<double>(1, 0.0));
                a.add_f64(prefix + "scalars", {4}, {sm.b, sm.gamma, sm.C, sm.converged ? 1.0 : 0.0});
            }
            break;
    }
    a.save(base);
}

inline ClassicalModel load_classical_model(const std::string& base) {
    const WeightArchive a = WeightArchive::load(base);
    const auto meta = a.values<std::int64_t>("meta");
    ClassicalModel m;
    m.kind = static_cast<ClassicalKind>(meta[0]);
    const int num_classes = static_cast<int>(meta[1]);
    m.scaler.mean = a.values<double>("scaler.mean");
    m.scaler.stdev = a.values<double>("scaler.std");
    switch (m.kind) {
        case ClassicalKind::dtree:
            m.tree = detail::load_tree(a, "tree.");
            break;
        case ClassicalKind::forest: {
            const auto fm = a.values<std::int64_t>("forest.meta");
            m.forest.num_classes = num_classes;
            for (std::int64_t t = 0; t < fm[0]; ++t)
                m.forest.trees.push_back(detail::load_tree(a, "tree" + std::to_string(t) + "."));
            break;
        }
        case ClassicalKind::svm: {
            m.svm.num_classes = num_classes;
            for (int x = 0; x < num_classes; ++x)
                for (int y = x + 1; y < num_classes; ++y) m.svm.pairs.emplace_back(x, y);
            for (std::size_t p = 0; p < m.svm.pairs.size(); ++p) {
                const std::string prefix = "pair" + std::to_string(p) + ".";
                SvmModel sm;
                const auto& sve = a.entry(prefix + "sv");
                const auto sv = a.values<double>(prefix + "sv");
                const int s = sve.shape[0], d = sve.shape[1];
                for (int i = 0; i < s; ++i)
                    sm.support_vectors.emplace_back(sv.begin() + static_cast<std::ptrdiff_t>(i) * d,
                                                    sv.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
                if (s) {
                    sm.alpha_y = a.values<double>(prefix + "alpha_y");
                    sm.alpha = a.values<double>(prefix + "alpha");
                }
                const auto scalars = a.values<double>(prefix + "scalars");
                sm.b = scalars[0];
                sm.gamma = scalars[1];
                sm.C = scalars[2];
                sm.converged = scalars[3] != 0.0;
                m.svm.models.push_back(std::move(sm));
            }
            break;
        }
    }
    return m;
}

}  // namespace radtk

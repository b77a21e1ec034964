#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "radtk/classical.hpp"
#include "radtk/classical_io.hpp"
#include "radtk/dataset.hpp"
#include "radtk/errors.hpp"
#include "radtk/model.hpp"
#include "radtk/svm.hpp"
#include "radtk/train.hpp"

namespace radtk {

// ---------------------------------------------------------------------------
// Confusion counts: rows are true labels, columns predictions.

struct ConfusionMatrix {
    int n = kNumClasses;
    std::vector<std::int64_t> counts;

    ConfusionMatrix() : counts(static_cast<std::size_t>(n) * n, 0) {}
    explicit ConfusionMatrix(int classes)
        : n(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {}

    std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * n + pred]; }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * n + pred];
    }
    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }
    std::int64_t trace() const {
        std::int64_t t = 0;
        for (int i = 0; i < n; ++i) t += at(i, i);
        return t;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int classes = kNumClasses) {
    if (truth.size() != predicted.size())
        throw ValidationError("confusion: " + std::to_string(truth.size()) + " truths vs " +
                              std::to_string(predicted.size()) + " predictions");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes)
            throw ValidationError("confusion: label out of range at index " + std::to_string(i));
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Accuracy, one-vs-rest precision/recall/F1 per class, unweighted macro
// means. Any 0/0 cell is defined as 0 so empty-prediction classes cannot
// crash reporting.

struct MetricsReport {
    double accuracy = 0;
    std::vector<double> precision, recall, f1;
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
    ConfusionMatrix source;
};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ValidationError("metrics of an empty confusion matrix");
    MetricsReport r;
    r.source = cm;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
    auto ratio = [](std::int64_t num, std::int64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    for (int c = 0; c < cm.n; ++c) {
        const std::int64_t tp = cm.at(c, c);
        std::int64_t fp = 0, fn = 0;
        for (int o = 0; o < cm.n; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const double p = ratio(tp, tp + fp);
        const double rec = ratio(tp, tp + fn);
        const double f = (p + rec) == 0.0 ? 0.0 : 2.0 * p * rec / (p + rec);
        r.precision.push_back(p);
        r.recall.push_back(rec);
        r.f1.push_back(f);
        r.macro_precision += p / cm.n;
        r.macro_recall += rec / cm.n;
        r.macro_f1 += f / cm.n;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Fold aggregation: mean and sample (n-1) standard deviation per metric plus
// the summed confusion matrix. Fold-mean accuracy and pooled-matrix accuracy
// are reported separately and never reconciled.

struct MetricStats {
    double mean = 0, stdev = 0;
};

inline MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

struct CVSummary {
    std::vector<MetricsReport> folds;
    std::vector<TrainHistory> histories;
    ConfusionMatrix pooled;
    MetricStats accuracy;
    std::vector<MetricStats> precision, recall, f1;
    MetricStats macro_precision, macro_recall, macro_f1;
    double pooled_accuracy = 0;
};

inline CVSummary aggregate_folds(std::vector<MetricsReport> folds) {
    if (folds.empty()) throw ValidationError("no folds to aggregate");
    CVSummary s;
    const int n = folds[0].source.n;
    s.pooled = ConfusionMatrix(n);
    std::vector<double> acc;
    for (const auto& f : folds) {
        acc.push_back(f.accuracy);
        for (std::size_t i = 0; i < s.pooled.counts.size(); ++i)
            s.pooled.counts[i] += f.source.counts[i];
    }
    s.accuracy = stats_of(acc);
    for (int c = 0; c < n; ++c) {
        std::vector<double> p, r, f1;
        for (const auto& f : folds) {
            p.push_back(f.precision[static_cast<std::size_t>(c)]);
            r.push_back(f.recall[static_cast<std::size_t>(c)]);
            f1.push_back(f.f1[static_cast<std::size_t>(c)]);
        }
        s.precision.push_back(stats_of(p));
        s.recall.push_back(stats_of(r));
        s.f1.push_back(stats_of(f1));
    }
    std::vector<double> mp, mr, mf;
    for (const auto& f : folds) {
        mp.push_back(f.macro_precision);
        mr.push_back(f.macro_recall);
        mf.push_back(f.macro_f1);
    }
    s.macro_precision = stats_of(mp);
    s.macro_recall = stats_of(mr);
    s.macro_f1 = stats_of(mf);
    s.pooled_accuracy = static_cast<double>(s.pooled.trace()) / static_cast<double>(s.pooled.total());
    s.folds = std::move(folds);
    return s;
}

// ---------------------------------------------------------------------------
// Cross-validated pipelines.

enum class PipelineKind { cnn, cnn_dt, cnn_rf, cnn_svm, vgg16, xception, resnet50 };

inline PipelineKind parse_pipeline_kind(const std::string& s) {
    if (s == "cnn") return PipelineKind::cnn;
    if (s == "cnn_dt") return PipelineKind::cnn_dt;
    if (s == "cnn_rf") return PipelineKind::cnn_rf;
    if (s == "cnn_svm") return PipelineKind::cnn_svm;
    if (s == "vgg16") return PipelineKind::vgg16;
    if (s == "xception") return PipelineKind::xception;
    if (s == "resnet50") return PipelineKind::resnet50;
    throw ParamError("unknown pipeline kind: " + s);
}

inline const char* pipeline_kind_name(PipelineKind k) {
    switch (k) {
        case PipelineKind::cnn: return "cnn";
        case PipelineKind::cnn_dt: return "cnn_dt";
        case PipelineKind::cnn_rf: return "cnn_rf";
        case PipelineKind::cnn_svm: return "cnn_svm";
        case PipelineKind::vgg16: return "vgg16";
        case PipelineKind::xception: return "xception";
        case PipelineKind::resnet50: return "resnet50";
    }
    return "?";
}

inline bool pipeline_is_hybrid(PipelineKind k) {
    return k == PipelineKind::cnn_dt || k == PipelineKind::cnn_rf || k == PipelineKind::cnn_svm;
}

inline bool pipeline_is_pretrained(PipelineKind k) {
    return k == PipelineKind::vgg16 || k == PipelineKind::xception || k == PipelineKind::resnet50;
}

// Per-pipeline training defaults: the custom network and hybrids use Adam
// 1e-3 with batch 16; pretrained fine-tuning uses Adam 1e-4 with batch 8.
// 30 epochs, 10% validation split and patience 5 everywhere.
inline TrainConfig default_train_config(PipelineKind kind) {
    TrainConfig cfg;
    if (pipeline_is_pretrained(kind)) {
        cfg.lr = 1e-4;
        cfg.batch_size = 8;
    }
    return cfg;
}

// Model spec for a pipeline kind at a given input size (224 is the full-scale
// geometry; smaller sizes scale the custom network down for desk runs).
inline ModelSpec pipeline_model_spec(PipelineKind kind, int input_hw = 224) {
    if (pipeline_is_pretrained(kind)) {
        switch (kind) {
            case PipelineKind::vgg16: return build_pretrained(Arch::vgg16, input_hw);
            case PipelineKind::xception: return build_pretrained(Arch::xception, input_hw);
            default: return build_pretrained(Arch::resnet50, input_hw);
        }
    }
    if (input_hw == 224) return build_custom_cnn();
    const int base = input_hw >= 64 ? 16 : 8;
    const int dense = input_hw >= 64 ? 64 : 32;
    return build_custom_cnn(input_hw, base, dense);
}

struct CvOptions {
    ModelSpec model;          // trained per fold
    TrainConfig train;
    FeatureSource features = FeatureSource::penultimate;
    ForestOptions forest;     // 100 trees, sqrt features
    DTreeOptions tree;        // gini, min split 2, unbounded depth
    SvmOptions svm;           // C=1, RBF, tol 1e-3
    int threads = 1;
};

namespace detail {

// Decorrelated sub-seed for fold f (and other numbered consumers) of a run
// seed.
inline std::uint64_t mix_seed(std::uint64_t base, int tag) {
    std::uint64_t x = base ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(tag) + 1));
    return splitmix64(x);
}

// Fits the classical stage of a hybrid pipeline on already-extracted
// features.
inline ClassicalModel fit_classical(PipelineKind kind, const DataMatrix& features,
                                    const std::vector<int>& labels, const CvOptions& opts,
                                    std::uint64_t seed) {
    ClassicalModel m;
    auto [scaler, Z] = scaler_fit_transform(features);
    m.scaler = scaler;
    switch (kind) {
        case PipelineKind::cnn_dt:
            m.kind = ClassicalKind::dtree;
            m.tree = dtree_fit(Z, labels, opts.tree, kNumClasses);
            break;
        case PipelineKind::cnn_rf:
            m.kind = ClassicalKind::forest;
            m.forest = forest_fit(Z, labels, seed, opts.forest, opts.threads);
            break;
        case PipelineKind::cnn_svm:
            m.kind = ClassicalKind::svm;
            m.svm = svm_fit_multiclass(Z, labels, kNumClasses, opts.svm, seed, opts.threads);
            break;
        default:
            throw UsageError("fit_classical on a non-hybrid pipeline");
    }
    return m;
}

}  // namespace detail

// One fold of a pipeline: trains on the complement of `fold`, predicts the
// held-out fold. Returns the fold's metrics, the history, and optionally the
// fitted artifacts.
struct FoldResult {
    MetricsReport report;
    TrainHistory history;
    std::vector<std::string> test_ids;
    std::vector<int> truth, predicted;
};

inline FoldResult run_fold(PipelineKind kind, const std::vector<SampleRecord>& samples, int fold,
                           const CvOptions& opts) {
    std::string stage = "train";
    try {
        TrainConfig cfg = opts.train;
        cfg.seed = detail::mix_seed(opts.train.seed, fold);
        auto [model, history] = train<float>(opts.model, samples, fold, cfg);

        std::vector<SampleRecord> test_set, train_set;
        for (const auto& s : samples) (s.fold == fold ? test_set : train_set).push_back(s);
        if (test_set.empty()) throw ValidationError("fold has no test samples");

        std::vector<int> truth, predicted;
        for (const auto& s : test_set) truth.push_back(s.label);

        if (pipeline_is_hybrid(kind)) {
            stage = "extract-features";
            auto train_feats = extract_features(model, train_set, opts.features, cfg.batch_size);
            auto test_feats = extract_features(model, test_set, opts.features, cfg.batch_size);
            stage = "fit-classical";
            std::vector<int> train_labels;
            for (const auto& s : train_set) train_labels.push_back(s.label);
            const ClassicalModel cls =
                detail::fit_classical(kind, train_feats.rows, train_labels, opts,
                                      detail::mix_seed(cfg.seed, 101));
            stage = "predict";
            predicted = cls.predict(test_feats.rows);
        } else {
            stage = "predict";
            predicted = predict(model, test_set, cfg.batch_size).labels;
        }

        stage = "evaluate";
        FoldResult result;
        result.report = metrics(confusion(truth, predicted));
        result.history = std::move(history);
        for (const auto& s : test_set) result.test_ids.push_back(s.id);
        result.truth = std::move(truth);
        result.predicted = std::move(predicted);
        return result;
    } catch (const std::exception& e) {
        throw ValidationError("fold " + std::to_string(fold) + ", stage " + stage + ": " + e.what());
    }
}

// Full k-fold cross validation of a pipeline kind over fold-assigned samples.
inline CVSummary run_cv(PipelineKind kind, const std::vector<SampleRecord>& samples,
                        const FoldPlan& plan, const CvOptions& opts) {
    std::vector<SampleRecord> assigned = samples;
    apply_fold_plan(assigned, plan);
    std::vector<MetricsReport> folds;
    std::vector<TrainHistory> histories;
    for (int f = 0; f < plan.k; ++f) {
        FoldResult r = run_fold(kind, assigned, f, opts);
        folds.push_back(std::move(r.report));
        histories.push_back(std::move(r.history));
    }
    CVSummary summary = aggregate_folds(std::move(folds));
    summary.histories = std::move(histories);
    return summary;
}

// ---------------------------------------------------------------------------
// Report emission: metrics.txt (fixed-format mean+/-std table), confusion.csv
// (pooled counts with class-name headers), history_fold<k>.csv. Files are
// replaced atomically on re-run.

namespace detail {

inline std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string pm(const MetricStats& s) { return fmt4(s.mean) + "±" + fmt4(s.stdev); }

}  // namespace detail

inline std::string metrics_text(const CVSummary& s) {
    std::ostringstream out;
    out << "folds " << s.folds.size() << "\n";
    out << "overall_accuracy_fold_mean " << detail::pm(s.accuracy) << "\n";
    out << "overall_accuracy_pooled " << detail::fmt4(s.pooled_accuracy) << "\n";
    out << "class accuracy precision recall f1\n";
    for (int c = 0; c < s.pooled.n; ++c)
        out << kClassNames[static_cast<std::size_t>(c)] << " " << detail::pm(s.accuracy) << " "
            << detail::pm(s.precision[static_cast<std::size_t>(c)]) << " "
            << detail::pm(s.recall[static_cast<std::size_t>(c)]) << " "
            << detail::pm(s.f1[static_cast<std::size_t>(c)]) << "\n";
    out << "macro " << detail::pm(s.accuracy) << " " << detail::pm(s.macro_precision) << " "
        << detail::pm(s.macro_recall) << " " << detail::pm(s.macro_f1) << "\n";
    return out.str();
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
    std::ostringstream out;
    out << "true\\predicted";
    for (int c = 0; c < cm.n; ++c) out << "," << kClassNames[static_cast<std::size_t>(c)];
    out << "\n";
    for (int t = 0; t < cm.n; ++t) {
        out << kClassNames[static_cast<std::size_t>(t)];
        for (int p = 0; p < cm.n; ++p) out << "," << cm.at(t, p);
        out << "\n";
    }
    return out.str();
}

inline ConfusionMatrix parse_confusion_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty confusion csv", 1);
    ConfusionMatrix cm;
    int row = 0, line_no = 1;
    while (std::getline(in, line) && row < cm.n) {
        ++line_no;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');  // class name
        if (cell != kClassNames[static_cast<std::size_t>(row)])
            throw ParseError("unexpected class row '" + cell + "'", line_no);
        for (int p = 0; p < cm.n; ++p) {
            if (!std::getline(ls, cell, ',')) throw ParseError("short confusion row", line_no);
            cm.at(row, p) = std::stoll(cell);
        }
        ++row;
    }
    if (row != cm.n) throw ParseError("confusion csv has too few rows", line_no);
    return cm;
}

inline void write_report(const CVSummary& s, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    write_file_atomic((dir / "metrics.txt").string(), metrics_text(s));
    write_file_atomic((dir / "confusion.csv").string(), confusion_csv(s.pooled));
    for (std::size_t f = 0; f < s.histories.size(); ++f)
        write_history_csv((dir / ("history_fold" + std::to_string(f) + ".csv")).string(),
                          s.histories[f]);
}

}  // namespace radtk

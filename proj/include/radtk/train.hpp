#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "radtk/dataset.hpp"
#include "radtk/errors.hpp"
#include "radtk/io_util.hpp"
#include "radtk/model.hpp"
#include "radtk/ops.hpp"
#include "radtk/rng.hpp"

namespace radtk {

// Optimizer and loop hyperparameters. The defaults are the custom-network
// settings (Adam 1e-3, batch 16); pretrained fine-tuning uses lr 1e-4 and
// batch 8 via pretrained_train_config().
struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
    int batch_size = 16;
    int epochs = 30;
    double validation_fraction = 0.10;
    int patience = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
            throw ParamError("validation_fraction must lie in (0,1)");
        if (batch_size < 1) throw ParamError("batch_size must be >= 1");
        if (patience < 0) throw ParamError("patience must be >= 0");
        if (epochs < 1) throw ParamError("epochs must be >= 1");
    }
};

inline TrainConfig pretrained_train_config() {
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.batch_size = 8;
    return cfg;
}

// Per-epoch traces, 1-based epochs.
struct TrainHistory {
    std::vector<double> train_loss, train_acc, val_loss, val_acc;
    int stopped_epoch = 0;
    int best_epoch = 0;
};

inline std::string history_csv(const TrainHistory& h) {
    std::ostringstream out;
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    out.precision(9);
    for (std::size_t i = 0; i < h.train_loss.size(); ++i)
        out << (i + 1) << "," << h.train_loss[i] << "," << h.train_acc[i] << "," << h.val_loss[i] << ","
            << h.val_acc[i] << "\n";
    return out.str();
}

inline void write_history_csv(const std::string& path, const TrainHistory& h) {
    write_file_atomic(path, history_csv(h));
}

// ---------------------------------------------------------------------------
// Sparse categorical cross-entropy: mean over the batch of -log p[label],
// with probabilities clamped to >= 1e-7 before the log.

inline constexpr double kProbClamp = 1e-7;

template <typename T>
double scce_loss(const Tensor<T>& probabilities, const std::vector<int>& labels) {
    require_rank(probabilities, 2, "scce probabilities");
    const int n = probabilities.dim(0), c = probabilities.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("scce: " + std::to_string(labels.size()) + " labels vs " + std::to_string(n) +
                         " probability rows");
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c)
            throw ValidationError("label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                                  " out of range [0," + std::to_string(c) + ")");
        const double p = static_cast<double>(probabilities.at2(i, labels[static_cast<std::size_t>(i)]));
        total += -std::log(std::max(p, kProbClamp));
    }
    return total / n;
}

// d(loss)/d(probabilities). Rows clamped below kProbClamp contribute zero
// gradient (the clamp is flat there).
template <typename T>
Tensor<T> scce_loss_grad(const Tensor<T>& probabilities, const std::vector<int>& labels) {
    const int n = probabilities.dim(0);
    Tensor<T> grad(probabilities.shape, T(0));
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const double p = static_cast<double>(probabilities.at2(i, y));
        if (p >= kProbClamp) grad.at2(i, y) = static_cast<T>(-1.0 / (p * n));
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One state slot per parameter tensor; t advances
// once per step call.

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t t = 0;

    void init(const std::vector<ParamRef<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.tensor->data.size(), T(0));
            v.emplace_back(p.tensor->data.size(), T(0));
        }
        t = 0;
    }
};

template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params, AdamState<T>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7) {
    if (state.m.size() != params.size())
        throw ShapeError("adam state holds " + std::to_string(state.m.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& tensor = *params[pi].tensor;
        if (tensor.grad.empty()) continue;  // no gradient this step
        if (tensor.grad.size() != tensor.data.size() || state.m[pi].size() != tensor.data.size())
            throw ShapeError("adam: gradient/state size mismatch for " + params[pi].name);
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < tensor.data.size(); ++i) {
            const double g = static_cast<double>(tensor.grad[i]);
            m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * g);
            v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * g * g);
            const double mhat = static_cast<double>(m[i]) / bc1;
            const double vhat = static_cast<double>(v[i]) / bc2;
            tensor.data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Early stopping on validation loss: stop once `patience` consecutive epochs
// fail to improve on the best value; the best epoch's weights are restored by
// the caller.

struct EarlyStopping {
    int patience = 5;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;

    explicit EarlyStopping(int patience_epochs) : patience(patience_epochs) {}

    // epoch is 1-based; returns true when training should stop after it.
    bool update(int epoch, double val_loss) {
        if (val_loss < best) {
            best = val_loss;
            best_epoch = epoch;
            since_best = 0;
            return false;
        }
        ++since_best;
        return since_best >= patience;
    }
};

// ---------------------------------------------------------------------------
// Batch assembly. Grayscale samples are replicated across channels when the
// model expects 3-channel input.

template <typename T>
Tensor<T> make_batch(const ModelSpec& spec, const std::vector<const SampleRecord*>& recs) {
    const int h = spec.input_shape[0], w = spec.input_shape[1], c = spec.input_shape[2];
    Tensor<T> x({static_cast<int>(recs.size()), h, w, c});
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const GrayImageF img = load_sample_image(*recs[i]);
        if (img.width != w || img.height != h)
            throw ShapeError("sample " + recs[i]->id + " is " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + ", model expects " + std::to_string(w) + "x" +
                             std::to_string(h));
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const T v = static_cast<T>(img.at(xx, y));
                for (int ch = 0; ch < c; ++ch) x.at4(static_cast<int>(i), y, xx, ch) = v;
            }
    }
    return x;
}

namespace detail {

template <typename T>
std::vector<std::vector<T>> snapshot_params(const std::vector<ParamRef<T>>& params) {
    std::vector<std::vector<T>> snap;
    snap.reserve(params.size());
    for (const auto& p : params) snap.push_back(p.tensor->data);
    return snap;
}

template <typename T>
void restore_params(const std::vector<ParamRef<T>>& params, const std::vector<std::vector<T>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->data = snap[i];
}

template <typename T>
std::pair<double, double> evaluate_loss_acc(Model<T>& model, const std::vector<const SampleRecord*>& recs,
                                            int batch_size) {
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < recs.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(recs.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<const SampleRecord*> chunk(recs.begin() + static_cast<std::ptrdiff_t>(start),
                                               recs.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<int> labels;
        for (const auto* r : chunk) labels.push_back(r->label);
        Tensor<T> x = make_batch<T>(model.spec, chunk);
        Tensor<T> probs = model.forward(x, Mode::eval, nullptr, false);
        loss_sum += scce_loss(probs, labels) * static_cast<double>(chunk.size());
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            int arg = 0;
            for (int j = 1; j < probs.dim(1); ++j)
                if (probs.at2(static_cast<int>(i), j) > probs.at2(static_cast<int>(i), arg)) arg = j;
            if (arg == labels[i]) ++correct;
        }
    }
    const double n = static_cast<double>(recs.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace detail

// Trains `spec` on every sample whose fold differs from `test_fold`
// (test_fold = -1 trains on everything). A seeded validation_fraction split of
// the training portion drives early stopping on validation loss; batches are
// reshuffled per epoch under the same seed; the best epoch's weights are
// restored on return. Single-threaded and bit-deterministic under a fixed
// seed.
template <typename T>
std::pair<Model<T>, TrainHistory> train(const ModelSpec& spec, const std::vector<SampleRecord>& samples,
                                        int test_fold, const TrainConfig& cfg) {
    cfg.validate();
    std::vector<const SampleRecord*> pool;
    for (const auto& s : samples)
        if (test_fold < 0 || s.fold != test_fold) pool.push_back(&s);
    if (pool.empty()) throw ValidationError("training set is empty");

    RngState base(cfg.seed);
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        RngState vrng = base.split(0x5653504cULL /* VSPL */);
        vrng.shuffle(order.begin(), order.end());
    }
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(pool.size())));
    if (n_val == 0 && pool.size() >= 2) n_val = 1;
    if (n_val >= pool.size()) n_val = pool.size() - 1;
    std::vector<const SampleRecord*> val_set, train_set;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_val ? val_set : train_set).push_back(pool[order[i]]);

    Model<T> model = build_model<T>(spec, cfg.seed);
    auto trainable = model.trainable_params();
    AdamState<T> adam;
    adam.init(trainable);

    TrainHistory history;
    EarlyStopping stopper(cfg.patience);
    std::vector<std::vector<T>> best_snapshot = detail::snapshot_params(trainable);

    std::vector<std::size_t> batch_order(train_set.size());
    for (std::size_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngState shuffle_rng = base.split(0x53485546ULL /* SHUF */).split(static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(batch_order.begin(), batch_order.end());
        RngState drop_rng = base.split(0x44524f50ULL /* DROP */).split(static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t start = 0; start < batch_order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(batch_order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const SampleRecord*> chunk;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                chunk.push_back(train_set[batch_order[i]]);
                labels.push_back(chunk.back()->label);
            }
            Tensor<T> x = make_batch<T>(spec, chunk);
            Tensor<T> probs = model.forward(x, Mode::train, &drop_rng);
            loss_sum += scce_loss(probs, labels) * static_cast<double>(chunk.size());
            for (std::size_t i = 0; i < chunk.size(); ++i) {
                int arg = 0;
                for (int j = 1; j < probs.dim(1); ++j)
                    if (probs.at2(static_cast<int>(i), j) > probs.at2(static_cast<int>(i), arg)) arg = j;
                if (arg == labels[i]) ++correct;
            }
            Tensor<T> grad = scce_loss_grad(probs, labels);
            model.backward(grad);
            adam_step(trainable, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        }
        model.release_trace();
        history.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
        history.train_acc.push_back(static_cast<double>(correct) /
                                    static_cast<double>(train_set.size()));

        double vloss, vacc;
        if (!val_set.empty()) {
            std::tie(vloss, vacc) = detail::evaluate_loss_acc(model, val_set, cfg.batch_size);
        } else {
            vloss = history.train_loss.back();
            vacc = history.train_acc.back();
        }
        history.val_loss.push_back(vloss);
        history.val_acc.push_back(vacc);
        history.stopped_epoch = epoch;

        const bool improved = vloss < stopper.best;
        const bool stop = stopper.update(epoch, vloss);
        if (improved) best_snapshot = detail::snapshot_params(trainable);
        if (stop) break;
    }
    history.best_epoch = stopper.best_epoch;
    detail::restore_params(trainable, best_snapshot);
    model.release_trace();
    model.fitted = true;
    return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Feature extraction for the hybrid path: an eval-mode forward truncated at
// the dropout following the dense head (256-d, `penultimate`) or at the
// flatten output (`flatten`).

enum class FeatureSource { penultimate, flatten };

inline FeatureSource parse_feature_source(const std::string& s) {
    if (s == "penultimate") return FeatureSource::penultimate;
    if (s == "flatten") return FeatureSource::flatten;
    throw ParamError("unknown feature source: " + s + " (expected penultimate or flatten)");
}

struct FeatureMatrix {
    std::vector<std::vector<double>> rows;
    bool untrained_warning = false;
};

template <typename T>
FeatureMatrix extract_features(Model<T>& model, const std::vector<SampleRecord>& samples,
                               FeatureSource source = FeatureSource::penultimate, int batch_size = 16) {
    std::size_t cut = model.spec.layers.size();
    if (source == FeatureSource::flatten) {
        for (std::size_t i = 0; i < model.spec.layers.size(); ++i)
            if (model.spec.layers[i].kind == LayerKind::flatten) {
                cut = i;
                break;
            }
    } else {
        for (std::size_t i = 0; i < model.spec.layers.size(); ++i)
            if (model.spec.layers[i].kind == LayerKind::dropout) cut = i;
    }
    if (cut >= model.spec.layers.size())
        throw ValidationError("model has no feature extraction point for the requested source");

    FeatureMatrix out;
    out.untrained_warning = !model.fitted;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<const SampleRecord*> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&samples[i]);
        Tensor<T> x = make_batch<T>(model.spec, chunk);
        model.forward(x, Mode::eval, nullptr, true);
        const Tensor<T>& feats = model.activation(cut);
        for (int i = 0; i < feats.dim(0); ++i) {
            std::vector<double> row(static_cast<std::size_t>(feats.dim(1)));
            for (int j = 0; j < feats.dim(1); ++j) row[static_cast<std::size_t>(j)] = feats.at2(i, j);
            out.rows.push_back(std::move(row));
        }
    }
    model.release_trace();
    return out;
}

// Argmax prediction; ties break toward the lowest class index.
template <typename T>
struct Predictions {
    std::vector<int> labels;
    std::vector<std::vector<double>> probabilities;
};

template <typename T>
Predictions<T> predict(Model<T>& model, const std::vector<SampleRecord>& samples, int batch_size = 16) {
    Predictions<T> out;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<const SampleRecord*> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&samples[i]);
        Tensor<T> x = make_batch<T>(model.spec, chunk);
        Tensor<T> probs = model.forward(x, Mode::eval, nullptr, false);
        for (int i = 0; i < probs.dim(0); ++i) {
            int arg = 0;
            std::vector<double> row(static_cast<std::size_t>(probs.dim(1)));
            for (int j = 0; j < probs.dim(1); ++j) {
                row[static_cast<std::size_t>(j)] = probs.at2(i, j);
                if (probs.at2(i, j) > probs.at2(i, arg)) arg = j;
            }
            out.labels.push_back(arg);
            out.probabilities.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace radtk

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "radtk/errors.hpp"
#include "radtk/ops.hpp"
#include "radtk/rng.hpp"
#include "radtk/tensor.hpp"

namespace radtk {

enum class LayerKind {
    conv2d,
    separable_conv,
    maxpool,
    dense,
    relu,
    softmax,
    dropout,
    flatten,
    global_avg_pool,
    batchnorm,
    residual,
};

// One layer of a model graph. Residual layers carry a nested main branch and
// an optional projection shortcut (empty = identity shortcut).
struct LayerDef {
    LayerKind kind;
    std::string name;
    int units = 0;    // conv/separable output channels, dense units
    int kernel = 0;   // square kernel extent
    int stride = 1;
    int window = 2;   // pooling
    Padding padding = Padding::valid;
    double rate = 0.0;  // dropout
    bool trainable = true;
    std::vector<LayerDef> branch;
    std::vector<LayerDef> shortcut;
};

// Layer-graph description: ordered layers over a fixed input shape with a
// softmax head over num_classes.
struct ModelSpec {
    std::vector<int> input_shape;  // {h, w, c}
    int num_classes = 4;
    std::vector<LayerDef> layers;
};

namespace detail {

inline std::vector<int> chain_out_shape(const std::vector<LayerDef>& defs, std::vector<int> shape);

inline std::vector<int> layer_out_shape(const LayerDef& def, const std::vector<int>& in) {
    auto need_spatial = [&](const char* what) {
        if (in.size() != 3)
            throw ShapeError(def.name + ": " + what + " expects an h,w,c input, got " + shape_string(in));
    };
    switch (def.kind) {
        case LayerKind::conv2d: {
            need_spatial("conv2d");
            const ConvGeometry g = conv_geometry(in[0], in[1], def.kernel, def.kernel, def.stride, def.padding);
            return {g.out_h, g.out_w, def.units};
        }
        case LayerKind::separable_conv: {
            need_spatial("separable_conv");
            const ConvGeometry g = conv_geometry(in[0], in[1], def.kernel, def.kernel, def.stride, def.padding);
            return {g.out_h, g.out_w, def.units};
        }
        case LayerKind::maxpool: {
            need_spatial("maxpool");
            const ConvGeometry g = conv_geometry(in[0], in[1], def.window, def.window, def.stride, def.padding);
            return {g.out_h, g.out_w, in[2]};
        }
        case LayerKind::dense:
            if (in.size() != 1)
                throw ShapeError(def.name + ": dense expects a flat input, got " + shape_string(in));
            return {def.units};
        case LayerKind::relu:
        case LayerKind::dropout:
            return in;
        case LayerKind::softmax:
            if (in.size() != 1)
                throw ShapeError(def.name + ": softmax expects a flat input, got " + shape_string(in));
            return in;
        case LayerKind::flatten:
            need_spatial("flatten");
            return {in[0] * in[1] * in[2]};
        case LayerKind::global_avg_pool:
            need_spatial("global_avg_pool");
            return {in[2]};
        case LayerKind::batchnorm:
            need_spatial("batchnorm");
            return in;
        case LayerKind::residual: {
            const std::vector<int> b = chain_out_shape(def.branch, in);
            const std::vector<int> s = def.shortcut.empty() ? in : chain_out_shape(def.shortcut, in);
            if (b != s)
                throw ShapeError(def.name + ": branch output " + shape_string(b) +
                                 " incompatible with shortcut " + shape_string(s));
            return b;
        }
    }
    throw UsageError("unreachable layer kind");
}

inline std::vector<int> chain_out_shape(const std::vector<LayerDef>& defs, std::vector<int> shape) {
    for (const auto& d : defs) shape = layer_out_shape(d, shape);
    return shape;
}

}  // namespace detail

// Validates that consecutive layer shapes compose and the final layer is a
// softmax over num_classes. Returns the output shape.
inline std::vector<int> validate_spec(const ModelSpec& spec) {
    if (spec.input_shape.size() != 3) throw ShapeError("model input shape must be h,w,c");
    const std::vector<int> out = detail::chain_out_shape(spec.layers, spec.input_shape);
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::softmax)
        throw ShapeError("model must end in a softmax layer");
    if (out != std::vector<int>{spec.num_classes})
        throw ShapeError("model output shape " + shape_string(out) + " vs " +
                         std::to_string(spec.num_classes) + " classes");
    return out;
}

// Shape of the tensor flowing out of layer `index` (0-based), batch axis excluded.
inline std::vector<int> shape_after_layer(const ModelSpec& spec, std::size_t index) {
    std::vector<int> shape = spec.input_shape;
    for (std::size_t i = 0; i <= index && i < spec.layers.size(); ++i)
        shape = detail::layer_out_shape(spec.layers[i], shape);
    return shape;
}

template <typename T>
struct LayerState {
    LayerParams<T> params;
    Tensor<T> bn_gamma, bn_beta, bn_mean, bn_var;
    std::vector<LayerState<T>> branch, shortcut;
};

template <typename T>
struct LayerTrace {
    std::vector<T> dropout_mask;
    Tensor<T> sep_mid;  // depthwise output, needed for the pointwise gradient
    std::vector<Tensor<T>> branch_acts, shortcut_acts;
    std::vector<LayerTrace<T>> branch_traces, shortcut_traces;
};

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
    bool trainable;
};

namespace detail {

inline double glorot_limit(double fan_in, double fan_out) {
    return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
void fill_glorot(Tensor<T>& t, double fan_in, double fan_out, RngState& rng) {
    const double lim = glorot_limit(fan_in, fan_out);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-lim, lim));
}

template <typename T>
void alloc_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                 std::vector<int>& shape, RngState& rng) {
    states.resize(defs.size());
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const LayerDef& def = defs[i];
        LayerState<T>& st = states[i];
        switch (def.kind) {
            case LayerKind::conv2d: {
                const int ic = shape[2];
                st.params.kernel = Tensor<T>({def.kernel, def.kernel, ic, def.units});
                st.params.bias = Tensor<T>({def.units});
                fill_glorot(st.params.kernel, static_cast<double>(def.kernel) * def.kernel * ic,
                            static_cast<double>(def.kernel) * def.kernel * def.units, rng);
                break;
            }
            case LayerKind::separable_conv: {
                const int ic = shape[2];
                st.params.depthwise = Tensor<T>({def.kernel, def.kernel, ic, 1});
                st.params.pointwise = Tensor<T>({1, 1, ic, def.units});
                st.params.bias = Tensor<T>({def.units});
                fill_glorot(st.params.depthwise, static_cast<double>(def.kernel) * def.kernel,
                            static_cast<double>(def.kernel) * def.kernel, rng);
                fill_glorot(st.params.pointwise, static_cast<double>(ic), static_cast<double>(def.units), rng);
                break;
            }
            case LayerKind::dense: {
                const int d = shape[0];
                st.params.kernel = Tensor<T>({d, def.units});
                st.params.bias = Tensor<T>({def.units});
                fill_glorot(st.params.kernel, static_cast<double>(d), static_cast<double>(def.units), rng);
                break;
            }
            case LayerKind::batchnorm: {
                const int c = shape[2];
                st.bn_gamma = Tensor<T>({c}, T(1));
                st.bn_beta = Tensor<T>({c}, T(0));
                st.bn_mean = Tensor<T>({c}, T(0));
                st.bn_var = Tensor<T>({c}, T(1));
                break;
            }
            case LayerKind::residual: {
                std::vector<int> bshape = shape;
                alloc_chain(def.branch, st.branch, bshape, rng);
                if (!def.shortcut.empty()) {
                    std::vector<int> sshape = shape;
                    alloc_chain(def.shortcut, st.shortcut, sshape, rng);
                }
                break;
            }
            default:
                break;
        }
        st.params.trainable = def.trainable;
        shape = layer_out_shape(def, shape);
    }
}

template <typename T>
void collect_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                   const std::string& prefix, std::vector<ParamRef<T>>& out) {
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const LayerDef& def = defs[i];
        LayerState<T>& st = states[i];
        const std::string base = prefix + def.name;
        switch (def.kind) {
            case LayerKind::conv2d:
            case LayerKind::dense:
                out.push_back({base + ".kernel", &st.params.kernel, def.trainable});
                out.push_back({base + ".bias", &st.params.bias, def.trainable});
                break;
            case LayerKind::separable_conv:
                out.push_back({base + ".depthwise", &st.params.depthwise, def.trainable});
                out.push_back({base + ".pointwise", &st.params.pointwise, def.trainable});
                out.push_back({base + ".bias", &st.params.bias, def.trainable});
                break;
            case LayerKind::batchnorm:
                out.push_back({base + ".gamma", &st.bn_gamma, def.trainable});
                out.push_back({base + ".beta", &st.bn_beta, def.trainable});
                out.push_back({base + ".moving_mean", &st.bn_mean, false});
                out.push_back({base + ".moving_variance", &st.bn_var, false});
                break;
            case LayerKind::residual:
                collect_chain(def.branch, st.branch, base + "/", out);
                collect_chain(def.shortcut, st.shortcut, base + "/shortcut_", out);
                break;
            default:
                break;
        }
    }
}

template <typename T>
Tensor<T> run_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                    Tensor<T> x, Mode mode, RngState* rng, std::vector<Tensor<T>>* acts,
                    std::vector<LayerTrace<T>>* traces);

template <typename T>
Tensor<T> run_layer(const LayerDef& def, LayerState<T>& st, const Tensor<T>& x, Mode mode,
                    RngState* rng, LayerTrace<T>* trace) {
    switch (def.kind) {
        case LayerKind::conv2d:
            return conv2d(x, st.params, def.padding, def.stride);
        case LayerKind::separable_conv: {
            Tensor<T> mid = depthwise_conv2d(x, st.params.depthwise, def.padding, def.stride);
            Tensor<T> out = conv2d_raw(mid, st.params.pointwise, &st.params.bias, Padding::valid, 1);
            if (trace) trace->sep_mid = std::move(mid);
            return out;
        }
        case LayerKind::maxpool:
            return maxpool2d(x, def.window, def.stride, def.padding);
        case LayerKind::dense:
            return dense(x, st.params);
        case LayerKind::relu:
            return relu(x);
        case LayerKind::softmax:
            return softmax(x);
        case LayerKind::dropout: {
            if (mode == Mode::train && def.rate > 0.0 && !rng)
                throw UsageError(def.name + ": dropout in train mode requires an rng");
            RngState dummy(0);
            return dropout(x, def.rate, mode, rng ? *rng : dummy, trace ? &trace->dropout_mask : nullptr);
        }
        case LayerKind::flatten: {
            Tensor<T> out;
            out.shape = {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)};
            out.data = x.data;
            return out;
        }
        case LayerKind::global_avg_pool:
            return global_average_pool(x);
        case LayerKind::batchnorm:
            return batchnorm_inference(x, st.bn_gamma, st.bn_beta, st.bn_mean, st.bn_var);
        case LayerKind::residual: {
            Tensor<T> b = run_chain(def.branch, st.branch, x, mode, rng,
                                    trace ? &trace->branch_acts : nullptr,
                                    trace ? &trace->branch_traces : nullptr);
            Tensor<T> s = def.shortcut.empty()
                              ? x
                              : run_chain(def.shortcut, st.shortcut, x, mode, rng,
                                          trace ? &trace->shortcut_acts : nullptr,
                                          trace ? &trace->shortcut_traces : nullptr);
            return add(b, s);
        }
    }
    throw UsageError("unreachable layer kind");
}

template <typename T>
Tensor<T> run_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                    Tensor<T> x, Mode mode, RngState* rng, std::vector<Tensor<T>>* acts,
                    std::vector<LayerTrace<T>>* traces) {
    if (acts) {
        acts->clear();
        acts->push_back(x);
    }
    if (traces) {
        traces->clear();
        traces->resize(defs.size());
    }
    for (std::size_t i = 0; i < defs.size(); ++i) {
        x = run_layer(defs[i], states[i], x, mode, rng, traces ? &(*traces)[i] : nullptr);
        if (acts) acts->push_back(x);
    }
    return x;
}

template <typename T>
void assign_grad(Tensor<T>& param, Tensor<T>&& grad, bool trainable) {
    if (trainable) param.grad = std::move(grad.data);
}

template <typename T>
Tensor<T> backprop_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                         const std::vector<Tensor<T>>& acts, std::vector<LayerTrace<T>>& traces,
                         Tensor<T> grad);

template <typename T>
Tensor<T> backprop_layer(const LayerDef& def, LayerState<T>& st, const Tensor<T>& input,
                         const Tensor<T>& output, LayerTrace<T>& trace, const Tensor<T>& grad_out) {
    switch (def.kind) {
        case LayerKind::conv2d: {
            Tensor<T> gi, gk, gb;
            conv2d_backward(input, st.params.kernel, def.padding, def.stride, grad_out, &gi,
                            def.trainable ? &gk : nullptr, def.trainable ? &gb : nullptr);
            assign_grad(st.params.kernel, std::move(gk), def.trainable);
            assign_grad(st.params.bias, std::move(gb), def.trainable);
            return gi;
        }
        case LayerKind::separable_conv: {
            Tensor<T> gmid, gpw, gb;
            conv2d_backward(trace.sep_mid, st.params.pointwise, Padding::valid, 1, grad_out, &gmid,
                            def.trainable ? &gpw : nullptr, def.trainable ? &gb : nullptr);
            Tensor<T> gi, gdw;
            depthwise_conv2d_backward(input, st.params.depthwise, def.padding, def.stride, gmid, &gi,
                                      def.trainable ? &gdw : nullptr);
            assign_grad(st.params.depthwise, std::move(gdw), def.trainable);
            assign_grad(st.params.pointwise, std::move(gpw), def.trainable);
            assign_grad(st.params.bias, std::move(gb), def.trainable);
            return gi;
        }
        case LayerKind::maxpool:
            return maxpool2d_backward(input, def.window, def.stride, def.padding, grad_out);
        case LayerKind::dense: {
            Tensor<T> gi, gw, gb;
            dense_backward(input, st.params.kernel, grad_out, &gi, def.trainable ? &gw : nullptr,
                           def.trainable ? &gb : nullptr);
            assign_grad(st.params.kernel, std::move(gw), def.trainable);
            assign_grad(st.params.bias, std::move(gb), def.trainable);
            return gi;
        }
        case LayerKind::relu:
            return relu_backward(input, grad_out);
        case LayerKind::softmax:
            return softmax_backward(output, grad_out);
        case LayerKind::dropout: {
            if (trace.dropout_mask.empty()) {
                Tensor<T> g = grad_out;
                g.grad.clear();
                return g;
            }
            return dropout_backward(trace.dropout_mask, grad_out);
        }
        case LayerKind::flatten: {
            Tensor<T> gi;
            gi.shape = input.shape;
            gi.data = grad_out.data;
            return gi;
        }
        case LayerKind::global_avg_pool:
            return global_average_pool_backward(input.shape, grad_out);
        case LayerKind::batchnorm: {
            Tensor<T> gi, gg, gb;
            batchnorm_inference_backward(input, st.bn_gamma, st.bn_mean, st.bn_var, grad_out, &gi,
                                         def.trainable ? &gg : nullptr, def.trainable ? &gb : nullptr);
            assign_grad(st.bn_gamma, std::move(gg), def.trainable);
            assign_grad(st.bn_beta, std::move(gb), def.trainable);
            return gi;
        }
        case LayerKind::residual: {
            Tensor<T> gb = backprop_chain(def.branch, st.branch, trace.branch_acts,
                                          trace.branch_traces, grad_out);
            Tensor<T> gs = def.shortcut.empty()
                               ? grad_out
                               : backprop_chain(def.shortcut, st.shortcut, trace.shortcut_acts,
                                                trace.shortcut_traces, grad_out);
            return add(gb, gs);
        }
    }
    throw UsageError("unreachable layer kind");
}

template <typename T>
Tensor<T> backprop_chain(const std::vector<LayerDef>& defs, std::vector<LayerState<T>>& states,
                         const std::vector<Tensor<T>>& acts, std::vector<LayerTrace<T>>& traces,
                         Tensor<T> grad) {
    for (std::size_t i = defs.size(); i-- > 0;)
        grad = backprop_layer(defs[i], states[i], acts[i], acts[i + 1], traces[i], grad);
    return grad;
}

}  // namespace detail

// A built model: spec plus materialized parameters. forward() records the
// computation so backward() can populate gradients of every trainable
// parameter; frozen parameters are left untouched.
template <typename T>
class Model {
public:
    ModelSpec spec;
    std::vector<LayerState<T>> states;
    bool fitted = false;

    Tensor<T> forward(const Tensor<T>& x, Mode mode, RngState* rng = nullptr, bool record = true) {
        require_rank(x, 4, "model input");
        const std::vector<int> expect = {x.dim(0), spec.input_shape[0], spec.input_shape[1],
                                         spec.input_shape[2]};
        if (x.shape != expect)
            throw ShapeError("model input " + shape_string(x.shape) + " vs expected " +
                             shape_string(expect));
        if (!record) {
            has_trace_ = false;
            return detail::run_chain(spec.layers, states, x, mode, rng,
                                     static_cast<std::vector<Tensor<T>>*>(nullptr),
                                     static_cast<std::vector<LayerTrace<T>>*>(nullptr));
        }
        Tensor<T> out = detail::run_chain(spec.layers, states, x, mode, rng, &acts_, &traces_);
        has_trace_ = true;
        return out;
    }

    // Propagates d(loss)/d(output) back through the recorded computation.
    // Gradients are assigned (not accumulated), so repeated calls after one
    // forward produce identical results.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_trace_) throw UsageError("backward called without a recorded forward pass");
        return detail::backprop_chain(spec.layers, states, acts_, traces_, grad_out);
    }

    // Activation after layer `index` from the last recorded forward.
    const Tensor<T>& activation(std::size_t index) const {
        if (!has_trace_) throw UsageError("no recorded forward pass");
        return acts_.at(index + 1);
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        detail::collect_chain(spec.layers, states, "", out);
        return out;
    }

    std::vector<ParamRef<T>> trainable_params() {
        std::vector<ParamRef<T>> out;
        for (auto& p : params())
            if (p.trainable) out.push_back(p);
        return out;
    }

    std::int64_t trainable_param_count() {
        std::int64_t n = 0;
        for (auto& p : trainable_params()) n += p.tensor->size();
        return n;
    }

    void release_trace() {
        has_trace_ = false;
        acts_.clear();
        traces_.clear();
    }

private:
    std::vector<Tensor<T>> acts_;
    std::vector<LayerTrace<T>> traces_;
    bool has_trace_ = false;
};

// Materializes a spec with seeded fan-based uniform (Glorot) initialization;
// biases start at zero, batchnorm at identity.
template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Model<T> m;
    m.spec = spec;
    RngState rng = RngState(seed).split(0x494e4954 /* INIT */);
    std::vector<int> shape = spec.input_shape;
    detail::alloc_chain(spec.layers, m.states, shape, rng);
    return m;
}

// ---------------------------------------------------------------------------
// Architecture builders.

namespace detail {

inline LayerDef conv_def(std::string name, int ch, int k, int stride, Padding pad, bool trainable) {
    LayerDef d;
    d.kind = LayerKind::conv2d;
    d.name = std::move(name);
    d.units = ch;
    d.kernel = k;
    d.stride = stride;
    d.padding = pad;
    d.trainable = trainable;
    return d;
}

inline LayerDef sep_def(std::string name, int ch, int k, Padding pad, bool trainable) {
    LayerDef d;
    d.kind = LayerKind::separable_conv;
    d.name = std::move(name);
    d.units = ch;
    d.kernel = k;
    d.padding = pad;
    d.trainable = trainable;
    return d;
}

inline LayerDef pool_def(std::string name, int window, int stride, Padding pad = Padding::valid) {
    LayerDef d;
    d.kind = LayerKind::maxpool;
    d.name = std::move(name);
    d.window = window;
    d.stride = stride;
    d.padding = pad;
    return d;
}

inline LayerDef simple_def(LayerKind kind, std::string name, bool trainable = true) {
    LayerDef d;
    d.kind = kind;
    d.name = std::move(name);
    d.trainable = trainable;
    return d;
}

inline LayerDef dense_def(std::string name, int units, bool trainable = true) {
    LayerDef d;
    d.kind = LayerKind::dense;
    d.name = std::move(name);
    d.units = units;
    d.trainable = trainable;
    return d;
}

inline LayerDef dropout_def(std::string name, double rate) {
    LayerDef d;
    d.kind = LayerKind::dropout;
    d.name = std::move(name);
    d.rate = rate;
    return d;
}

inline LayerDef bn_def(std::string name, bool trainable) {
    LayerDef d;
    d.kind = LayerKind::batchnorm;
    d.name = std::move(name);
    d.trainable = trainable;
    return d;
}

}  // namespace detail

// The 224x224x1 radiograph classifier: four conv/pool/dropout stages with
// channel widths 32/64/128/256, valid padding, then a 256-unit dense head.
// Flatten width at 224 input is 12*12*256 = 36864.
inline ModelSpec build_custom_cnn(int input_hw = 224, int base_channels = 32, int dense_units = 256,
                                  int max_blocks = 4, double dropout_rate = 0.3, int num_classes = 4) {
    using namespace detail;
    ModelSpec spec;
    spec.input_shape = {input_hw, input_hw, 1};
    spec.num_classes = num_classes;
    int h = input_hw;
    int ch = base_channels;
    int block = 0;
    while (block < max_blocks && h >= 4) {
        const std::string n = std::to_string(block + 1);
        spec.layers.push_back(conv_def("conv" + n, ch, 3, 1, Padding::valid, true));
        spec.layers.push_back(simple_def(LayerKind::relu, "relu" + n));
        spec.layers.push_back(pool_def("pool" + n, 2, 2));
        spec.layers.push_back(dropout_def("drop" + n, dropout_rate));
        h = (h - 2) / 2;
        ch *= 2;
        ++block;
    }
    spec.layers.push_back(simple_def(LayerKind::flatten, "flatten"));
    spec.layers.push_back(dense_def("fc1", dense_units));
    spec.layers.push_back(simple_def(LayerKind::relu, "fc1_relu"));
    spec.layers.push_back(dropout_def("fc1_drop", dropout_rate));
    spec.layers.push_back(dense_def("fc2", num_classes));
    spec.layers.push_back(simple_def(LayerKind::softmax, "softmax"));
    return spec;
}

enum class Arch { vgg16, resnet50, xception };

inline Arch parse_arch(const std::string& name) {
    if (name == "vgg16") return Arch::vgg16;
    if (name == "resnet50") return Arch::resnet50;
    if (name == "xception") return Arch::xception;
    throw ParamError("unknown architecture: " + name);
}

namespace detail {

inline void append_vgg16(ModelSpec& spec) {
    const int widths[5] = {64, 128, 256, 512, 512};
    const int depth[5] = {2, 2, 3, 3, 3};
    for (int b = 0; b < 5; ++b) {
        const bool trainable = (b == 4);  // last block only
        for (int c = 0; c < depth[b]; ++c) {
            const std::string n = "block" + std::to_string(b + 1) + "_conv" + std::to_string(c + 1);
            spec.layers.push_back(conv_def(n, widths[b], 3, 1, Padding::same, trainable));
            spec.layers.push_back(simple_def(LayerKind::relu, n + "_relu"));
        }
        spec.layers.push_back(pool_def("block" + std::to_string(b + 1) + "_pool", 2, 2));
    }
}

inline LayerDef resnet_bottleneck(const std::string& name, int mid, int out, int stride, bool project,
                                  bool trainable) {
    LayerDef d = simple_def(LayerKind::residual, name, trainable);
    auto add_conv_bn_relu = [&](int ch, int k, int s, int idx) {
        const std::string n = name + "_conv" + std::to_string(idx);
        d.branch.push_back(conv_def(n, ch, k, s, Padding::same, trainable));
        d.branch.push_back(bn_def(n + "_bn", trainable));
        d.branch.push_back(simple_def(LayerKind::relu, n + "_relu"));
    };
    add_conv_bn_relu(mid, 1, stride, 1);
    add_conv_bn_relu(mid, 3, 1, 2);
    add_conv_bn_relu(out, 1, 1, 3);
    if (project) {
        d.shortcut.push_back(conv_def(name + "_proj", out, 1, stride, Padding::same, trainable));
        d.shortcut.push_back(bn_def(name + "_proj_bn", trainable));
    }
    return d;
}

inline void append_resnet50(ModelSpec& spec) {
    spec.layers.push_back(conv_def("conv1", 64, 7, 2, Padding::same, false));
    spec.layers.push_back(bn_def("conv1_bn", false));
    spec.layers.push_back(simple_def(LayerKind::relu, "conv1_relu"));
    spec.layers.push_back(pool_def("pool1", 3, 2, Padding::same));
    const int mids[4] = {64, 128, 256, 512};
    const int outs[4] = {256, 512, 1024, 2048};
    const int blocks[4] = {3, 4, 6, 3};
    for (int s = 0; s < 4; ++s) {
        const bool trainable = (s == 3);  // conv5_x only
        for (int b = 0; b < blocks[s]; ++b) {
            const std::string n = "conv" + std::to_string(s + 2) + "_block" + std::to_string(b + 1);
            const int stride = (b == 0 && s > 0) ? 2 : 1;
            spec.layers.push_back(resnet_bottleneck(n, mids[s], outs[s], stride, b == 0, trainable));
        }
    }
}

inline LayerDef xception_pool_block(const std::string& name, int ch, bool trainable) {
    LayerDef d = simple_def(LayerKind::residual, name, trainable);
    for (int i = 0; i < 2; ++i) {
        const std::string n = name + "_sepconv" + std::to_string(i + 1);
        d.branch.push_back(sep_def(n, ch, 3, Padding::same, trainable));
        d.branch.push_back(bn_def(n + "_bn", trainable));
        d.branch.push_back(simple_def(LayerKind::relu, n + "_relu"));
    }
    d.branch.push_back(pool_def(name + "_pool", 3, 2, Padding::same));
    d.shortcut.push_back(conv_def(name + "_proj", ch, 1, 2, Padding::same, trainable));
    d.shortcut.push_back(bn_def(name + "_proj_bn", trainable));
    return d;
}

inline void append_xception(ModelSpec& spec) {
    spec.layers.push_back(conv_def("stem_conv1", 32, 3, 2, Padding::valid, false));
    spec.layers.push_back(bn_def("stem_conv1_bn", false));
    spec.layers.push_back(simple_def(LayerKind::relu, "stem_conv1_relu"));
    spec.layers.push_back(conv_def("stem_conv2", 64, 3, 1, Padding::valid, false));
    spec.layers.push_back(bn_def("stem_conv2_bn", false));
    spec.layers.push_back(simple_def(LayerKind::relu, "stem_conv2_relu"));
    spec.layers.push_back(xception_pool_block("entry_block1", 128, false));
    spec.layers.push_back(xception_pool_block("entry_block2", 256, false));
    spec.layers.push_back(xception_pool_block("entry_block3", 728, false));
    for (int b = 0; b < 8; ++b) {
        LayerDef d = simple_def(LayerKind::residual, "middle_block" + std::to_string(b + 1), false);
        for (int i = 0; i < 3; ++i) {
            const std::string n = d.name + "_sepconv" + std::to_string(i + 1);
            d.branch.push_back(sep_def(n, 728, 3, Padding::same, false));
            d.branch.push_back(bn_def(n + "_bn", false));
            d.branch.push_back(simple_def(LayerKind::relu, n + "_relu"));
        }
        spec.layers.push_back(d);
    }
    {
        LayerDef d = simple_def(LayerKind::residual, "exit_block", false);
        const int chs[2] = {728, 1024};
        for (int i = 0; i < 2; ++i) {
            const std::string n = "exit_block_sepconv" + std::to_string(i + 1);
            d.branch.push_back(sep_def(n, chs[i], 3, Padding::same, false));
            d.branch.push_back(bn_def(n + "_bn", false));
            d.branch.push_back(simple_def(LayerKind::relu, n + "_relu"));
        }
        d.branch.push_back(pool_def("exit_block_pool", 3, 2, Padding::same));
        d.shortcut.push_back(conv_def("exit_block_proj", 1024, 1, 2, Padding::same, false));
        d.shortcut.push_back(bn_def("exit_block_proj_bn", false));
        spec.layers.push_back(d);
    }
    // Final separable block: the only trainable backbone portion.
    for (int i = 0; i < 2; ++i) {
        const std::string n = "final_sepconv" + std::to_string(i + 1);
        spec.layers.push_back(sep_def(n, i == 0 ? 1536 : 2048, 3, Padding::same, true));
        spec.layers.push_back(bn_def(n + "_bn", true));
        spec.layers.push_back(simple_def(LayerKind::relu, n + "_relu"));
    }
}

}  // namespace detail

// Transfer-learning backbones over 3-channel 224x224 input (grayscale inputs
// are replicated across channels by the batch loader). Every backbone block is
// frozen except the last; the head is global average pooling, a 256-unit relu
// dense layer, and a softmax classifier.
inline ModelSpec build_pretrained(Arch arch, int input_hw = 224, int num_classes = 4) {
    using namespace detail;
    ModelSpec spec;
    spec.input_shape = {input_hw, input_hw, 3};
    spec.num_classes = num_classes;
    switch (arch) {
        case Arch::vgg16: append_vgg16(spec); break;
        case Arch::resnet50: append_resnet50(spec); break;
        case Arch::xception: append_xception(spec); break;
    }
    spec.layers.push_back(simple_def(LayerKind::global_avg_pool, "gap"));
    spec.layers.push_back(dense_def("head_fc1", 256));
    spec.layers.push_back(simple_def(LayerKind::relu, "head_fc1_relu"));
    spec.layers.push_back(dense_def("head_fc2", num_classes));
    spec.layers.push_back(simple_def(LayerKind::softmax, "softmax"));
    return spec;
}

inline ModelSpec build_pretrained(const std::string& name, int input_hw = 224, int num_classes = 4) {
    return build_pretrained(parse_arch(name), input_hw, num_classes);
}

}  // namespace radtk

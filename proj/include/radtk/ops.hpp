#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "radtk/errors.hpp"
#include "radtk/rng.hpp"
#include "radtk/tensor.hpp"

namespace radtk {

enum class Padding { valid, same };
enum class Mode { train, eval };

// Weights of one layer. kernel/bias serve convolutions ((kh,kw,ic,oc)) and
// dense layers ((in,out)); depthwise/pointwise serve separable convolutions.
// Frozen params (trainable=false) never receive gradients.
template <typename T>
struct LayerParams {
    Tensor<T> kernel;
    Tensor<T> bias;
    Tensor<T> depthwise;
    Tensor<T> pointwise;
    bool trainable = true;
};

struct ConvGeometry {
    int out_h = 0, out_w = 0;
    int pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv_geometry(int h, int w, int kh, int kw, int stride, Padding padding) {
    if (stride < 1) throw ParamError("stride must be >= 1, got " + std::to_string(stride));
    ConvGeometry g;
    if (padding == Padding::valid) {
        if (h < kh)
            throw ShapeError("height axis: input " + std::to_string(h) + " smaller than kernel " +
                             std::to_string(kh));
        if (w < kw)
            throw ShapeError("width axis: input " + std::to_string(w) + " smaller than kernel " +
                             std::to_string(kw));
        g.out_h = (h - kh) / stride + 1;
        g.out_w = (w - kw) / stride + 1;
    } else {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        const int pad_h = std::max(0, (g.out_h - 1) * stride + kh - h);
        const int pad_w = std::max(0, (g.out_w - 1) * stride + kw - w);
        g.pad_top = pad_h / 2;
        g.pad_left = pad_w / 2;
    }
    return g;
}

// ---------------------------------------------------------------------------
// conv2d: NHWC cross-correlation with per-output-channel bias, no activation.

template <typename T>
Tensor<T> conv2d_raw(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias,
                     Padding padding, int stride) {
    require_rank(input, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), ic = input.dim(3);
    const int kh = kernel.dim(0), kw = kernel.dim(1), koc = kernel.dim(3);
    if (kernel.dim(2) != ic)
        throw ShapeError("channel axis: input has " + std::to_string(ic) + " channels, kernel expects " +
                         std::to_string(kernel.dim(2)));
    if (bias && bias->size() != koc)
        throw ShapeError("bias axis: length " + std::to_string(bias->size()) + " vs " +
                         std::to_string(koc) + " output channels");
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);
    Tensor<T> out({n, g.out_h, g.out_w, koc});

    const T* kp = kernel.data.data();
    for (int b = 0; b < n; ++b) {
        for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih0 = oh * stride - g.pad_top;
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int iw0 = ow * stride - g.pad_left;
                T* acc = &out.data[static_cast<std::size_t>(out.idx4(b, oh, ow, 0))];
                if (bias)
                    for (int oc = 0; oc < koc; ++oc) acc[oc] = bias->data[static_cast<std::size_t>(oc)];
                for (int ky = 0; ky < kh; ++ky) {
                    const int ih = ih0 + ky;
                    if (ih < 0 || ih >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int iw = iw0 + kx;
                        if (iw < 0 || iw >= w) continue;
                        const T* in_px = &input.data[static_cast<std::size_t>(input.idx4(b, ih, iw, 0))];
                        const T* krow = kp + (static_cast<std::size_t>(ky) * kw + kx) * ic * koc;
                        for (int c = 0; c < ic; ++c) {
                            const T v = in_px[c];
                            const T* kcol = krow + static_cast<std::size_t>(c) * koc;
                            for (int oc = 0; oc < koc; ++oc) acc[oc] += v * kcol[oc];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const LayerParams<T>& params, Padding padding, int stride) {
    return conv2d_raw(input, params.kernel, &params.bias, padding, stride);
}

// Gradients of conv2d. Any of the output pointers may be null to skip that
// gradient. Accumulation order is fixed, so results are deterministic.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, Padding padding, int stride,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_kernel,
                     Tensor<T>* grad_bias) {
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), ic = input.dim(3);
    const int kh = kernel.dim(0), kw = kernel.dim(1), koc = kernel.dim(3);
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);
    if (grad_out.shape != std::vector<int>{n, g.out_h, g.out_w, koc})
        throw ShapeError("conv2d grad_out shape " + shape_string(grad_out.shape) + " vs expected " +
                         shape_string({n, g.out_h, g.out_w, koc}));
    if (grad_in) *grad_in = Tensor<T>(input.shape);
    if (grad_kernel) *grad_kernel = Tensor<T>(kernel.shape);
    if (grad_bias) *grad_bias = Tensor<T>({koc});

    if (grad_bias) {
        T* gb = grad_bias->data.data();
        for (int b = 0; b < n; ++b)
            for (int oh = 0; oh < g.out_h; ++oh)
                for (int ow = 0; ow < g.out_w; ++ow) {
                    const T* go = &grad_out.data[static_cast<std::size_t>(grad_out.idx4(b, oh, ow, 0))];
                    for (int oc = 0; oc < koc; ++oc) gb[oc] += go[oc];
                }
    }
    if (!grad_in && !grad_kernel) return;

    const T* kp = kernel.data.data();
    for (int b = 0; b < n; ++b) {
        for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih0 = oh * stride - g.pad_top;
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int iw0 = ow * stride - g.pad_left;
                const T* go = &grad_out.data[static_cast<std::size_t>(grad_out.idx4(b, oh, ow, 0))];
                for (int ky = 0; ky < kh; ++ky) {
                    const int ih = ih0 + ky;
                    if (ih < 0 || ih >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int iw = iw0 + kx;
                        if (iw < 0 || iw >= w) continue;
                        const std::size_t koff = (static_cast<std::size_t>(ky) * kw + kx) *
                                                 static_cast<std::size_t>(ic) * koc;
                        const T* in_px = &input.data[static_cast<std::size_t>(input.idx4(b, ih, iw, 0))];
                        T* gi = grad_in ? &grad_in->data[static_cast<std::size_t>(grad_in->idx4(b, ih, iw, 0))]
                                        : nullptr;
                        T* gk = grad_kernel ? grad_kernel->data.data() + koff : nullptr;
                        for (int c = 0; c < ic; ++c) {
                            const T* kcol = kp + koff + static_cast<std::size_t>(c) * koc;
                            if (gi) {
                                T acc = T(0);
                                for (int oc = 0; oc < koc; ++oc) acc += kcol[oc] * go[oc];
                                gi[c] += acc;
                            }
                            if (gk) {
                                const T v = in_px[c];
                                T* gkcol = gk + static_cast<std::size_t>(c) * koc;
                                for (int oc = 0; oc < koc; ++oc) gkcol[oc] += v * go[oc];
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Max pooling. Ties resolve to the first maximum in row-major window order,
// and backward recomputes the same scan, so forward/backward stay consistent.

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int window = 2, int stride = 2,
                    Padding padding = Padding::valid) {
    require_rank(input, 4, "maxpool2d input");
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
    const ConvGeometry g = conv_geometry(h, w, window, window, stride, padding);
    Tensor<T> out({n, g.out_h, g.out_w, c});
    for (int b = 0; b < n; ++b)
        for (int oh = 0; oh < g.out_h; ++oh)
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int ih0 = oh * stride - g.pad_top;
                const int iw0 = ow * stride - g.pad_left;
                T* op = &out.data[static_cast<std::size_t>(out.idx4(b, oh, ow, 0))];
                for (int ch = 0; ch < c; ++ch) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (int ky = 0; ky < window; ++ky) {
                        const int ih = ih0 + ky;
                        if (ih < 0 || ih >= h) continue;
                        for (int kx = 0; kx < window; ++kx) {
                            const int iw = iw0 + kx;
                            if (iw < 0 || iw >= w) continue;
                            const T v = input.at4(b, ih, iw, ch);
                            if (v > best) best = v;
                        }
                    }
                    op[ch] = best;
                }
            }
    return out;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& input, int window, int stride, Padding padding,
                             const Tensor<T>& grad_out) {
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
    const ConvGeometry g = conv_geometry(h, w, window, window, stride, padding);
    Tensor<T> grad_in(input.shape);
    for (int b = 0; b < n; ++b)
        for (int oh = 0; oh < g.out_h; ++oh)
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int ih0 = oh * stride - g.pad_top;
                const int iw0 = ow * stride - g.pad_left;
                for (int ch = 0; ch < c; ++ch) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = -1;
                    for (int ky = 0; ky < window; ++ky) {
                        const int ih = ih0 + ky;
                        if (ih < 0 || ih >= h) continue;
                        for (int kx = 0; kx < window; ++kx) {
                            const int iw = iw0 + kx;
                            if (iw < 0 || iw >= w) continue;
                            const T v = input.at4(b, ih, iw, ch);
                            if (v > best) {
                                best = v;
                                best_idx = input.idx4(b, ih, iw, ch);
                            }
                        }
                    }
                    if (best_idx >= 0)
                        grad_in.data[static_cast<std::size_t>(best_idx)] += grad_out.at4(b, oh, ow, ch);
                }
            }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Dense: out = input . W + b

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const LayerParams<T>& params) {
    require_rank(input, 2, "dense input");
    require_rank(params.kernel, 2, "dense weight");
    const int n = input.dim(0), d = input.dim(1);
    const int in_dim = params.kernel.dim(0), units = params.kernel.dim(1);
    if (d != in_dim)
        throw ShapeError("feature axis: input has " + std::to_string(d) + " features, weight expects " +
                         std::to_string(in_dim));
    if (params.bias.size() != units)
        throw ShapeError("bias axis: length " + std::to_string(params.bias.size()) + " vs " +
                         std::to_string(units) + " units");
    Tensor<T> out({n, units});
    const T* wp = params.kernel.data.data();
    for (int i = 0; i < n; ++i) {
        T* op = &out.data[static_cast<std::size_t>(out.idx2(i, 0))];
        for (int j = 0; j < units; ++j) op[j] = params.bias.data[static_cast<std::size_t>(j)];
        const T* ip = &input.data[static_cast<std::size_t>(input.idx2(i, 0))];
        for (int k = 0; k < d; ++k) {
            const T v = ip[k];
            const T* wrow = wp + static_cast<std::size_t>(k) * units;
            for (int j = 0; j < units; ++j) op[j] += v * wrow[j];
        }
    }
    return out;
}

template <typename T>
void dense_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                    Tensor<T>* grad_in, Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
    const int n = input.dim(0), d = input.dim(1), units = weight.dim(1);
    if (grad_in) *grad_in = Tensor<T>(input.shape);
    if (grad_weight) *grad_weight = Tensor<T>(weight.shape);
    if (grad_bias) *grad_bias = Tensor<T>({units});
    for (int i = 0; i < n; ++i) {
        const T* go = &grad_out.data[static_cast<std::size_t>(grad_out.idx2(i, 0))];
        if (grad_bias)
            for (int j = 0; j < units; ++j) grad_bias->data[static_cast<std::size_t>(j)] += go[j];
        const T* ip = &input.data[static_cast<std::size_t>(input.idx2(i, 0))];
        for (int k = 0; k < d; ++k) {
            const T* wrow = weight.data.data() + static_cast<std::size_t>(k) * units;
            if (grad_in) {
                T acc = T(0);
                for (int j = 0; j < units; ++j) acc += wrow[j] * go[j];
                grad_in->data[static_cast<std::size_t>(grad_in->idx2(i, k))] += acc;
            }
            if (grad_weight) {
                T* gw = grad_weight->data.data() + static_cast<std::size_t>(k) * units;
                const T v = ip[k];
                for (int j = 0; j < units; ++j) gw[j] += v * go[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Activations.

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    for (std::size_t i = 0; i < input.data.size(); ++i) out.data[i] = std::max(T(0), input.data[i]);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    Tensor<T> grad_in;
    grad_in.shape = input.shape;
    grad_in.data.resize(input.data.size());
    for (std::size_t i = 0; i < input.data.size(); ++i)
        grad_in.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
    return grad_in;
}

// Row-wise softmax with max subtraction. 2-d logits only.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
    require_rank(input, 2, "softmax input");
    const int n = input.dim(0), c = input.dim(1);
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    for (int i = 0; i < n; ++i) {
        const T* ip = &input.data[static_cast<std::size_t>(input.idx2(i, 0))];
        T* op = &out.data[static_cast<std::size_t>(out.idx2(i, 0))];
        T mx = ip[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, ip[j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
            op[j] = std::exp(ip[j] - mx);
            sum += op[j];
        }
        for (int j = 0; j < c; ++j) op[j] /= sum;
    }
    return out;
}

// grad wrt logits given the softmax output y: y_i * (g_i - sum_j g_j y_j).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
    const int n = output.dim(0), c = output.dim(1);
    Tensor<T> grad_in;
    grad_in.shape = output.shape;
    grad_in.data.resize(output.data.size());
    for (int i = 0; i < n; ++i) {
        const T* y = &output.data[static_cast<std::size_t>(output.idx2(i, 0))];
        const T* g = &grad_out.data[static_cast<std::size_t>(grad_out.idx2(i, 0))];
        T dot = T(0);
        for (int j = 0; j < c; ++j) dot += g[j] * y[j];
        T* gi = &grad_in.data[static_cast<std::size_t>(grad_in.idx2(i, 0))];
        for (int j = 0; j < c; ++j) gi[j] = y[j] * (g[j] - dot);
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Inverted dropout: eval is an identity, train zeroes with probability rate
// and scales survivors by 1/(1-rate). The mask (0 or the scale factor) is
// written to mask_out when requested so backward is a plain product.

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, RngState& rng,
                  std::vector<T>* mask_out = nullptr) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParamError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    Tensor<T> out = input;
    out.grad.clear();
    if (mode == Mode::eval || rate == 0.0) {
        if (mask_out) mask_out->assign(input.data.size(), T(1));
        return out;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    if (mask_out) mask_out->assign(input.data.size(), T(0));
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (rng.next_double() < rate) {
            out.data[i] = T(0);
        } else {
            out.data[i] *= scale;
            if (mask_out) (*mask_out)[i] = scale;
        }
    }
    return out;
}

template <typename T>
Tensor<T> dropout_backward(const std::vector<T>& mask, const Tensor<T>& grad_out) {
    Tensor<T> grad_in;
    grad_in.shape = grad_out.shape;
    grad_in.data.resize(grad_out.data.size());
    for (std::size_t i = 0; i < grad_out.data.size(); ++i) grad_in.data[i] = grad_out.data[i] * mask[i];
    return grad_in;
}

// ---------------------------------------------------------------------------
// Global average pooling: NHWC -> N x C per-channel spatial mean.

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& input) {
    require_rank(input, 4, "global_average_pool input");
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
    Tensor<T> out({n, c});
    const T inv = static_cast<T>(1.0 / (static_cast<double>(h) * w));
    for (int b = 0; b < n; ++b) {
        T* op = &out.data[static_cast<std::size_t>(out.idx2(b, 0))];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const T* ip = &input.data[static_cast<std::size_t>(input.idx4(b, y, x, 0))];
                for (int ch = 0; ch < c; ++ch) op[ch] += ip[ch];
            }
        for (int ch = 0; ch < c; ++ch) op[ch] *= inv;
    }
    return out;
}

template <typename T>
Tensor<T> global_average_pool_backward(const std::vector<int>& input_shape, const Tensor<T>& grad_out) {
    Tensor<T> grad_in(input_shape);
    const int n = input_shape[0], h = input_shape[1], w = input_shape[2], c = input_shape[3];
    const T inv = static_cast<T>(1.0 / (static_cast<double>(h) * w));
    for (int b = 0; b < n; ++b) {
        const T* go = &grad_out.data[static_cast<std::size_t>(grad_out.idx2(b, 0))];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                T* gi = &grad_in.data[static_cast<std::size_t>(grad_in.idx4(b, y, x, 0))];
                for (int ch = 0; ch < c; ++ch) gi[ch] = go[ch] * inv;
            }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Depthwise separable convolution: per-channel spatial filtering, then 1x1
// pointwise channel mixing, then bias.

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& depthwise, Padding padding,
                           int stride) {
    require_rank(input, 4, "depthwise input");
    require_rank(depthwise, 4, "depthwise kernel");
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), ic = input.dim(3);
    const int kh = depthwise.dim(0), kw = depthwise.dim(1);
    if (depthwise.dim(2) != ic)
        throw ShapeError("channel axis: input has " + std::to_string(ic) +
                         " channels, depthwise kernel expects " + std::to_string(depthwise.dim(2)));
    if (depthwise.dim(3) != 1)
        throw ShapeError("depthwise multiplier axis must be 1, got " + std::to_string(depthwise.dim(3)));
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);
    Tensor<T> out({n, g.out_h, g.out_w, ic});
    for (int b = 0; b < n; ++b)
        for (int oh = 0; oh < g.out_h; ++oh)
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int ih0 = oh * stride - g.pad_top;
                const int iw0 = ow * stride - g.pad_left;
                T* op = &out.data[static_cast<std::size_t>(out.idx4(b, oh, ow, 0))];
                for (int ky = 0; ky < kh; ++ky) {
                    const int ih = ih0 + ky;
                    if (ih < 0 || ih >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int iw = iw0 + kx;
                        if (iw < 0 || iw >= w) continue;
                        const T* ip = &input.data[static_cast<std::size_t>(input.idx4(b, ih, iw, 0))];
                        const T* kp = &depthwise.data[(static_cast<std::size_t>(ky) * kw + kx) * ic];
                        for (int c = 0; c < ic; ++c) op[c] += ip[c] * kp[c];
                    }
                }
            }
    return out;
}

template <typename T>
void depthwise_conv2d_backward(const Tensor<T>& input, const Tensor<T>& depthwise, Padding padding,
                               int stride, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                               Tensor<T>* grad_depthwise) {
    const int n = input.dim(0), h = input.dim(1), w = input.dim(2), ic = input.dim(3);
    const int kh = depthwise.dim(0), kw = depthwise.dim(1);
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);
    if (grad_in) *grad_in = Tensor<T>(input.shape);
    if (grad_depthwise) *grad_depthwise = Tensor<T>(depthwise.shape);
    for (int b = 0; b < n; ++b)
        for (int oh = 0; oh < g.out_h; ++oh)
            for (int ow = 0; ow < g.out_w; ++ow) {
                const int ih0 = oh * stride - g.pad_top;
                const int iw0 = ow * stride - g.pad_left;
                const T* go = &grad_out.data[static_cast<std::size_t>(grad_out.idx4(b, oh, ow, 0))];
                for (int ky = 0; ky < kh; ++ky) {
                    const int ih = ih0 + ky;
                    if (ih < 0 || ih >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int iw = iw0 + kx;
                        if (iw < 0 || iw >= w) continue;
                        const std::size_t koff = (static_cast<std::size_t>(ky) * kw + kx) * ic;
                        for (int c = 0; c < ic; ++c) {
                            if (grad_in)
                                grad_in->data[static_cast<std::size_t>(grad_in->idx4(b, ih, iw, c))] +=
                                    depthwise.data[koff + static_cast<std::size_t>(c)] * go[c];
                            if (grad_depthwise)
                                grad_depthwise->data[koff + static_cast<std::size_t>(c)] +=
                                    input.at4(b, ih, iw, c) * go[c];
                        }
                    }
                }
            }
}

template <typename T>
Tensor<T> separable_conv(const Tensor<T>& input, const LayerParams<T>& params,
                         Padding padding = Padding::valid, int stride = 1) {
    const Tensor<T> mid = depthwise_conv2d(input, params.depthwise, padding, stride);
    return conv2d_raw(mid, params.pointwise, &params.bias, Padding::valid, 1);
}

// ---------------------------------------------------------------------------
// Batch normalization, inference form: (x - mean)/sqrt(var + eps)*gamma + beta
// with stored per-channel statistics.

inline constexpr double kBatchNormEps = 1e-3;

template <typename T>
Tensor<T> batchnorm_inference(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                              const Tensor<T>& mean, const Tensor<T>& variance,
                              double eps = kBatchNormEps) {
    require_rank(input, 4, "batchnorm input");
    const int c = input.dim(3);
    if (gamma.size() != c || beta.size() != c || mean.size() != c || variance.size() != c)
        throw ShapeError("channel axis: batchnorm statistics do not match " + std::to_string(c) +
                         " channels");
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    std::vector<T> scale(static_cast<std::size_t>(c)), shift(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        const T s = gamma.data[static_cast<std::size_t>(ch)] /
                    static_cast<T>(std::sqrt(static_cast<double>(variance.data[static_cast<std::size_t>(ch)]) + eps));
        scale[static_cast<std::size_t>(ch)] = s;
        shift[static_cast<std::size_t>(ch)] =
            beta.data[static_cast<std::size_t>(ch)] - s * mean.data[static_cast<std::size_t>(ch)];
    }
    const std::size_t pixels = input.data.size() / static_cast<std::size_t>(c);
    for (std::size_t p = 0; p < pixels; ++p)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = p * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch);
            out.data[i] = input.data[i] * scale[static_cast<std::size_t>(ch)] +
                          shift[static_cast<std::size_t>(ch)];
        }
    return out;
}

// Inference-form gradients: statistics are constants, so d/dx is a per-channel
// scale; gamma/beta gradients come from the normalized input.
template <typename T>
void batchnorm_inference_backward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& mean,
                                  const Tensor<T>& variance, const Tensor<T>& grad_out,
                                  Tensor<T>* grad_in, Tensor<T>* grad_gamma, Tensor<T>* grad_beta,
                                  double eps = kBatchNormEps) {
    const int c = input.dim(3);
    if (grad_in) {
        grad_in->shape = input.shape;
        grad_in->data.assign(input.data.size(), T(0));
    }
    if (grad_gamma) *grad_gamma = Tensor<T>({c});
    if (grad_beta) *grad_beta = Tensor<T>({c});
    std::vector<T> inv_std(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch)
        inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(
            1.0 / std::sqrt(static_cast<double>(variance.data[static_cast<std::size_t>(ch)]) + eps));
    const std::size_t pixels = input.data.size() / static_cast<std::size_t>(c);
    for (std::size_t p = 0; p < pixels; ++p)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = p * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch);
            const T g = grad_out.data[i];
            if (grad_in)
                grad_in->data[i] = g * gamma.data[static_cast<std::size_t>(ch)] *
                                   inv_std[static_cast<std::size_t>(ch)];
            if (grad_gamma)
                grad_gamma->data[static_cast<std::size_t>(ch)] +=
                    g * (input.data[i] - mean.data[static_cast<std::size_t>(ch)]) *
                    inv_std[static_cast<std::size_t>(ch)];
            if (grad_beta) grad_beta->data[static_cast<std::size_t>(ch)] += g;
        }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw ShapeError("elementwise add: shapes " + shape_string(a.shape) + " vs " +
                         shape_string(b.shape));
    Tensor<T> out;
    out.shape = a.shape;
    out.data.resize(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

}  // namespace radtk

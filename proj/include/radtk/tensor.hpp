#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "radtk/errors.hpp"

namespace radtk {

inline std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t p = 1;
    for (int d : shape) p *= d;
    return p;
}

inline std::string shape_string(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

// Dense row-major n-d array. float is the working precision; the same
// template instantiated with double is used for oracles and gradient checks.
// grad is empty unless allocated and, when present, mirrors data's shape.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        for (int d : shape)
            if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_string(shape));
        data.assign(static_cast<std::size_t>(shape_product(shape)), fill);
    }

    static Tensor from_data(std::vector<int> s, std::vector<T> values) {
        Tensor t;
        t.shape = std::move(s);
        for (int d : t.shape)
            if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_string(t.shape));
        if (static_cast<std::int64_t>(values.size()) != shape_product(t.shape))
            throw ShapeError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_string(t.shape));
        t.data = std::move(values);
        return t;
    }

    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    bool has_grad() const { return !grad.empty(); }
    void alloc_grad() { grad.assign(data.size(), T(0)); }
    void clear_grad() { grad.clear(); }

    // NHWC addressing helpers.
    std::int64_t idx4(int n, int h, int w, int c) const {
        return ((static_cast<std::int64_t>(n) * shape[1] + h) * shape[2] + w) * shape[3] + c;
    }
    T& at4(int n, int h, int w, int c) { return data[static_cast<std::size_t>(idx4(n, h, w, c))]; }
    T at4(int n, int h, int w, int c) const { return data[static_cast<std::size_t>(idx4(n, h, w, c))]; }

    std::int64_t idx2(int r, int c) const { return static_cast<std::int64_t>(r) * shape[1] + c; }
    T& at2(int r, int c) { return data[static_cast<std::size_t>(idx2(r, c))]; }
    T at2(int r, int c) const { return data[static_cast<std::size_t>(idx2(r, c))]; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename T>
inline void require_rank(const Tensor<T>& t, int r, const char* what) {
    if (t.rank() != r)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) + " tensor, got " +
                         shape_string(t.shape));
}

}  // namespace radtk

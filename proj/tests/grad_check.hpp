// Central finite-difference gradient checking shared by the autodiff and
// acceptance suites.
#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "radtk/rng.hpp"
#include "radtk/tensor.hpp"

namespace gradcheck {

inline double dot_loss(const radtk::Tensor<double>& y, const radtk::Tensor<double>& u) {
    double s = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * u.data[i];
    return s;
}

// Central differences on every element of `target`, compared against the
// analytic gradient with relative error |a-n|/max(|a|,|n|,1).
inline void fd_check(std::vector<double>& target, const std::function<double()>& loss,
                     const std::vector<double>& analytic, double h = 1e-3, double tol = 1e-4) {
    ASSERT_EQ(target.size(), analytic.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double orig = target[i];
        target[i] = orig + h;
        const double lp = loss();
        target[i] = orig - h;
        const double lm = loss();
        target[i] = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1.0});
        EXPECT_LT(std::abs(numeric - analytic[i]) / denom, tol)
            << "element " << i << ": analytic " << analytic[i] << " vs numeric " << numeric;
    }
}

// Uniform values kept away from zero so relu kinks cannot sit within the
// finite-difference step.
inline radtk::Tensor<double> random_away_from_zero(std::vector<int> shape, radtk::RngState& rng,
                                                   double margin = 0.05) {
    radtk::Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        double x = rng.uniform(-1.0, 1.0);
        v = x + (x >= 0 ? margin : -margin);
    }
    return t;
}

}  // namespace gradcheck

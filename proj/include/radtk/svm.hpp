#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "radtk/classical.hpp"
#include "radtk/errors.hpp"
#include "radtk/rng.hpp"

namespace radtk {

struct SvmOptions {
    double C = 1.0;
    double tol = 1e-3;
    // Full index passes with no multiplier change before giving up; the cap
    // is max_stall_factor * N passes, after which the best-so-far solution is
    // returned with converged=false.
    int max_stall_factor = 100;
};

// Dual-form binary RBF SVM: f(x) = sum_i alpha_i y_i K(x_i, x) + b with
// K(x,z) = exp(-gamma ||x-z||^2).
struct SvmModel {
    DataMatrix support_vectors;
    std::vector<double> alpha_y;  // alpha_i * y_i of each support vector
    std::vector<double> alpha;    // alpha_i (for KKT inspection)
    double b = 0.0;
    double gamma = 0.0;
    double C = 1.0;
    bool converged = true;

    double decision(const std::vector<double>& x) const {
        double f = b;
        for (std::size_t i = 0; i < support_vectors.size(); ++i) {
            double d2 = 0.0;
            const auto& sv = support_vectors[i];
            for (std::size_t j = 0; j < sv.size(); ++j) {
                const double diff = sv[j] - x[j];
                d2 += diff * diff;
            }
            f += alpha_y[i] * std::exp(-gamma * d2);
        }
        return f;
    }
};

// Optional diagnostics from a fit.
struct SvmFitDiag {
    std::vector<double> objective_per_pass;  // dual objective, non-decreasing
    double max_kkt_residual = 0.0;
    int passes = 0;
};

// gamma = 1 / (D * var) where var is the population variance of every entry
// of the training matrix (1 substitutes when the matrix is constant).
inline double svm_gamma_scale(const DataMatrix& X) {
    const std::size_t d = X[0].size();
    double mean = 0.0;
    const double n = static_cast<double>(X.size()) * static_cast<double>(d);
    for (const auto& row : X)
        for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (const auto& row : X)
        for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 0.0) var = 1.0;
    return 1.0 / (static_cast<double>(d) * var);
}

namespace detail {

inline double kkt_residual(double alpha, double margin, double C, double eps = 1e-12) {
    if (alpha <= eps) return std::max(0.0, 1.0 - margin);
    if (alpha >= C - eps) return std::max(0.0, margin - 1.0);
    return std::abs(margin - 1.0);
}

}  // namespace detail

// Simplified sequential minimal optimization over the dual: sweep the
// multipliers, pick the partner at random (seeded), solve the two-variable
// subproblem analytically, repeat until every KKT violation is below tol or
// the stall cap is hit.
inline SvmModel svm_fit(const DataMatrix& X, const std::vector<int>& y, SvmOptions opts = {},
                        std::uint64_t seed = 0, SvmFitDiag* diag = nullptr) {
    const std::size_t n = X.size();
    if (n == 0 || n != y.size()) throw ValidationError("svm_fit: row/label count mismatch");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw ValidationError("svm labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw ValidationError("svm_fit needs both classes present");

    const double gamma = svm_gamma_scale(X);
    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t f = 0; f < X[i].size(); ++f) {
                const double diff = X[i][f] - X[j][f];
                d2 += diff * diff;
            }
            K[i * n + j] = K[j * n + i] = std::exp(-gamma * d2);
        }

    std::vector<double> alpha(n, 0.0);
    double b = 0.0;
    auto f_of = [&](std::size_t i) {
        double f = b;
        for (std::size_t j = 0; j < n; ++j)
            if (alpha[j] > 0.0) f += alpha[j] * y[j] * K[i * n + j];
        return f;
    };
    auto dual_objective = [&] {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] == 0.0) continue;
            obj += alpha[i];
            for (std::size_t j = 0; j < n; ++j)
                if (alpha[j] != 0.0)
                    obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * K[i * n + j];
        }
        return obj;
    };
    auto max_residual = [&] {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            worst = std::max(worst, detail::kkt_residual(alpha[i], y[i] * f_of(i), opts.C));
        return worst;
    };

    RngState rng = RngState(seed).split(0x534d4fULL /* SMO */);
    const double C = opts.C;
    const std::int64_t stall_cap = static_cast<std::int64_t>(opts.max_stall_factor) *
                                   static_cast<std::int64_t>(n);
    std::int64_t stall = 0;
    bool converged = false;
    int passes = 0;
    while (true) {
        int changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double Ei = f_of(i) - y[i];
            const double r = y[i] * Ei;
            if (!((r < -opts.tol && alpha[i] < C) || (r > opts.tol && alpha[i] > 0))) continue;
            std::size_t j = static_cast<std::size_t>(rng.next_below(n - 1));
            if (j >= i) ++j;
            const double Ej = f_of(j) - y[j];
            const double ai_old = alpha[i], aj_old = alpha[j];
            double L, H;
            if (y[i] != y[j]) {
                L = std::max(0.0, aj_old - ai_old);
                H = std::min(C, C + aj_old - ai_old);
            } else {
                L = std::max(0.0, ai_old + aj_old - C);
                H = std::min(C, ai_old + aj_old);
            }
            if (L >= H) continue;
            const double eta = 2.0 * K[i * n + j] - K[i * n + i] - K[j * n + j];
            if (eta >= 0.0) continue;
            double aj = aj_old - y[j] * (Ei - Ej) / eta;
            aj = std::clamp(aj, L, H);
            if (std::abs(aj - aj_old) < 1e-12) continue;
            const double ai = ai_old + y[i] * y[j] * (aj_old - aj);
            alpha[i] = ai;
            alpha[j] = aj;
            const double b1 = b - Ei - y[i] * (ai - ai_old) * K[i * n + i] -
                              y[j] * (aj - aj_old) * K[i * n + j];
            const double b2 = b - Ej - y[i] * (ai - ai_old) * K[i * n + j] -
                              y[j] * (aj - aj_old) * K[j * n + j];
            if (ai > 0 && ai < C) b = b1;
            else if (aj > 0 && aj < C) b = b2;
            else b = (b1 + b2) / 2.0;
            ++changed;
        }
        ++passes;
        if (diag) diag->objective_per_pass.push_back(dual_objective());
        if (changed == 0) {
            if (max_residual() < opts.tol) {
                converged = true;
                break;
            }
            if (++stall >= stall_cap) break;
        } else {
            stall = 0;
        }
    }

    SvmModel model;
    model.gamma = gamma;
    model.C = C;
    model.b = b;
    model.converged = converged;
    for (std::size_t i = 0; i < n; ++i)
        if (alpha[i] > 1e-12) {
            model.support_vectors.push_back(X[i]);
            model.alpha_y.push_back(alpha[i] * y[i]);
            model.alpha.push_back(alpha[i]);
        }
    if (diag) {
        diag->max_kkt_residual = max_residual();
        diag->passes = passes;
    }
    return model;
}

// ---------------------------------------------------------------------------
// One-vs-one multiclass: one binary model per class pair, prediction by vote
// with ties toward the lowest class index. Pair (a,b) encodes class a as +1.

struct SvmOvo {
    int num_classes = 0;
    std::vector<std::pair<int, int>> pairs;
    std::vector<SvmModel> models;
};

inline SvmOvo svm_fit_multiclass(const DataMatrix& X, const std::vector<int>& y, int num_classes,
                                 SvmOptions opts = {}, std::uint64_t seed = 0, int threads = 1) {
    if (X.size() != y.size()) throw ValidationError("svm_fit_multiclass: row/label count mismatch");
    SvmOvo ovo;
    ovo.num_classes = num_classes;
    for (int a = 0; a < num_classes; ++a)
        for (int c = a + 1; c < num_classes; ++c) ovo.pairs.emplace_back(a, c);
    ovo.models.resize(ovo.pairs.size());

    auto fit_pair = [&](std::size_t p) {
        const auto [a, c] = ovo.pairs[p];
        DataMatrix px;
        std::vector<int> py;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (y[i] == a) {
                px.push_back(X[i]);
                py.push_back(1);
            } else if (y[i] == c) {
                px.push_back(X[i]);
                py.push_back(-1);
            }
        }
        ovo.models[p] = svm_fit(px, py, opts, seed + p);
    };

    if (threads <= 1) {
        for (std::size_t p = 0; p < ovo.pairs.size(); ++p) fit_pair(p);
    } else {
        std::vector<std::thread> pool;
        const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                     ovo.pairs.size());
        for (std::size_t w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t p = w; p < ovo.pairs.size(); p += nt) fit_pair(p);
            });
        for (auto& th : pool) th.join();
    }
    return ovo;
}

inline int svm_predict_one(const SvmOvo& ovo, const std::vector<double>& x) {
    const std::size_t expected = static_cast<std::size_t>(ovo.num_classes) *
                                 (static_cast<std::size_t>(ovo.num_classes) - 1) / 2;
    if (ovo.models.size() != expected) throw UsageError("one-vs-one model set is incomplete");
    std::vector<int> votes(static_cast<std::size_t>(ovo.num_classes), 0);
    for (std::size_t p = 0; p < ovo.pairs.size(); ++p) {
        if (ovo.models[p].support_vectors.empty())
            throw UsageError("missing pair model for (" + std::to_string(ovo.pairs[p].first) + "," +
                             std::to_string(ovo.pairs[p].second) + ")");
        const double f = ovo.models[p].decision(x);
        ++votes[static_cast<std::size_t>(f > 0 ? ovo.pairs[p].first : ovo.pairs[p].second)];
    }
    int best = 0;
    for (int c = 1; c < ovo.num_classes; ++c)
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    return best;
}

inline std::vector<int> svm_predict_multiclass(const SvmOvo& ovo, const DataMatrix& X) {
    std::vector<int> out;
    out.reserve(X.size());
    for (const auto& row : X) out.push_back(svm_predict_one(ovo, row));
    return out;
}

}  // namespace radtk

// Acceptance suite: one test per criterion, each printing a pass/fail line.
// Criteria 1-8 run at desk scale on synthetic data; criterion 9 is the
// non-blocking full-scale reproduction and only runs when a real dataset
// manifest is supplied via RADTK_STRETCH_MANIFEST.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "image_oracles.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "radtk/classical.hpp"
#include "radtk/dataset.hpp"
#include "radtk/eval.hpp"
#include "radtk/model.hpp"
#include "radtk/preprocess.hpp"
#include "radtk/svm.hpp"
#include "radtk/train.hpp"

using gradcheck::dot_loss;
using gradcheck::fd_check;
using radtk::BBox;
using radtk::DataMatrix;
using radtk::GrayImage;
using radtk::GrayImageF;
using radtk::LayerParams;
using radtk::Mode;
using radtk::ModelSpec;
using radtk::Padding;
using radtk::RngState;
using radtk::Tensor;

namespace {

void criterion_line(int n, const char* name) {
    std::cout << "[criterion " << n << "] "
              << (::testing::Test::HasFailure() ? "FAIL" : "PASS") << ": " << name << std::endl;
}

std::string work_dir() {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("radtk_accept_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// 1. Oracle equivalence of the numeric kernels.

TEST(Acceptance, Criterion1_OracleEquivalence) {
    RngState rng(1);
    for (int it = 0; it < 20; ++it) {
        const int h = 4 + static_cast<int>(rng.next_below(6));
        const int w = 4 + static_cast<int>(rng.next_below(6));
        const int ic = 1 + static_cast<int>(rng.next_below(3));
        const int oc = 1 + static_cast<int>(rng.next_below(4));
        const int stride = 1 + static_cast<int>(rng.next_below(2));
        const Padding pad = rng.next_below(2) ? Padding::same : Padding::valid;

        Tensor<double> x = oracle::random_tensor<double>({1, h, w, ic}, rng);
        Tensor<double> k = oracle::random_tensor<double>({3, 3, ic, oc}, rng);
        Tensor<double> b = oracle::random_tensor<double>({oc}, rng);
        EXPECT_LT(oracle::max_abs_diff(radtk::conv2d_raw(x, k, &b, pad, stride),
                                       oracle::conv2d(x, k, b, pad, stride)),
                  1e-10);

        Tensor<double> xf = oracle::random_tensor<double>({3, 5 + it % 4}, rng);
        LayerParams<double> dense_p;
        dense_p.kernel = oracle::random_tensor<double>({5 + it % 4, 4}, rng);
        dense_p.bias = oracle::random_tensor<double>({4}, rng);
        EXPECT_LT(oracle::max_abs_diff(radtk::dense(xf, dense_p),
                                       oracle::matmul_bias(xf, dense_p.kernel, dense_p.bias)),
                  1e-10);

        EXPECT_EQ(oracle::max_abs_diff(radtk::maxpool2d(x), oracle::maxpool(x, 2, 2)), 0.0);
        EXPECT_LT(oracle::max_abs_diff(radtk::global_average_pool(x), oracle::global_mean(x)), 1e-10);

        LayerParams<double> sep;
        sep.depthwise = oracle::random_tensor<double>({3, 3, ic, 1}, rng);
        sep.pointwise = oracle::random_tensor<double>({1, 1, ic, oc}, rng);
        sep.bias = oracle::random_tensor<double>({oc}, rng);
        Tensor<double> full = oracle::expand_separable_kernel(sep.depthwise, sep.pointwise);
        EXPECT_LT(oracle::max_abs_diff(radtk::separable_conv(x, sep),
                                       oracle::conv2d(x, full, sep.bias, Padding::valid, 1)),
                  1e-10);
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GrayImage img = image_oracle::random_image(24 + 7 * static_cast<int>(seed), 31, seed);
        EXPECT_EQ(radtk::median_filter(img).pixels, image_oracle::median_reference(img, 3).pixels);
        EXPECT_EQ(radtk::clahe(img).pixels, image_oracle::clahe_reference(img, 2.0, 3).pixels);
        GrayImage resized = radtk::resize_nearest(img, 40, 52);
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 52; ++x)
                ASSERT_EQ(resized.at(x, y),
                          img.at(static_cast<int>(static_cast<std::int64_t>(x) * img.width / 52),
                                 static_cast<int>(static_cast<std::int64_t>(y) * img.height / 40)));
    }
    criterion_line(1, "numeric kernels match naive oracles");
}

// ---------------------------------------------------------------------------
// 2. Gradient suite.

TEST(Acceptance, Criterion2_GradientSuite) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngState rng(40 + seed);
        // conv2d
        {
            Tensor<double> x = oracle::random_tensor<double>({1, 5, 5, 2}, rng);
            Tensor<double> k = oracle::random_tensor<double>({3, 3, 2, 3}, rng);
            Tensor<double> b = oracle::random_tensor<double>({3}, rng);
            Tensor<double> u =
                oracle::random_tensor<double>(radtk::conv2d_raw(x, k, &b, Padding::valid, 1).shape, rng);
            Tensor<double> gi, gk, gb;
            radtk::conv2d_backward(x, k, Padding::valid, 1, u, &gi, &gk, &gb);
            auto loss = [&] { return dot_loss(radtk::conv2d_raw(x, k, &b, Padding::valid, 1), u); };
            fd_check(x.data, loss, gi.data);
            fd_check(k.data, loss, gk.data);
            fd_check(b.data, loss, gb.data);
        }
        // dense
        {
            Tensor<double> x = oracle::random_tensor<double>({2, 6}, rng);
            Tensor<double> w = oracle::random_tensor<double>({6, 3}, rng);
            Tensor<double> u = oracle::random_tensor<double>({2, 3}, rng);
            Tensor<double> gi, gw, gb;
            radtk::dense_backward(x, w, u, &gi, &gw, &gb);
            auto loss = [&] {
                LayerParams<double> p;
                p.kernel = w;
                p.bias = Tensor<double>({3});
                return dot_loss(radtk::dense(x, p), u);
            };
            fd_check(x.data, loss, gi.data);
            fd_check(w.data, loss, gw.data);
        }
        // maxpool (distinct values), relu (kink margin), softmax, dropout,
        // global average pool, separable conv, inference batchnorm
        {
            Tensor<double> x = oracle::random_tensor_distinct<double>({1, 4, 4, 2}, rng, 0.01);
            Tensor<double> u = oracle::random_tensor<double>({1, 2, 2, 2}, rng);
            Tensor<double> gi = radtk::maxpool2d_backward(x, 2, 2, Padding::valid, u);
            fd_check(x.data, [&] { return dot_loss(radtk::maxpool2d(x), u); }, gi.data);
        }
        {
            Tensor<double> x = gradcheck::random_away_from_zero({3, 5}, rng);
            Tensor<double> u = oracle::random_tensor<double>({3, 5}, rng);
            fd_check(x.data, [&] { return dot_loss(radtk::relu(x), u); },
                     radtk::relu_backward(x, u).data);
        }
        {
            Tensor<double> x = oracle::random_tensor<double>({2, 4}, rng, -2, 2);
            Tensor<double> u = oracle::random_tensor<double>({2, 4}, rng);
            Tensor<double> y = radtk::softmax(x);
            fd_check(x.data, [&] { return dot_loss(radtk::softmax(x), u); },
                     radtk::softmax_backward(y, u).data);
        }
        {
            Tensor<double> x = oracle::random_tensor<double>({3, 4}, rng);
            Tensor<double> u = oracle::random_tensor<double>({3, 4}, rng);
            std::vector<double> mask;
            RngState drop(900 + seed);
            radtk::dropout(x, 0.3, Mode::train, drop, &mask);
            auto loss = [&] {
                RngState r(900 + seed);
                return dot_loss(radtk::dropout(x, 0.3, Mode::train, r), u);
            };
            fd_check(x.data, loss, radtk::dropout_backward(mask, u).data);
        }
        {
            Tensor<double> x = oracle::random_tensor<double>({2, 3, 3, 2}, rng);
            Tensor<double> u = oracle::random_tensor<double>({2, 2}, rng);
            fd_check(x.data, [&] { return dot_loss(radtk::global_average_pool(x), u); },
                     radtk::global_average_pool_backward(x.shape, u).data);
        }
        {
            Tensor<double> x = oracle::random_tensor<double>({1, 5, 5, 2}, rng);
            LayerParams<double> p;
            p.depthwise = oracle::random_tensor<double>({3, 3, 2, 1}, rng);
            p.pointwise = oracle::random_tensor<double>({1, 1, 2, 3}, rng);
            p.bias = oracle::random_tensor<double>({3}, rng);
            Tensor<double> u = oracle::random_tensor<double>(radtk::separable_conv(x, p).shape, rng);
            Tensor<double> mid = radtk::depthwise_conv2d(x, p.depthwise, Padding::valid, 1);
            Tensor<double> gmid, gpw, gb2;
            radtk::conv2d_backward(mid, p.pointwise, Padding::valid, 1, u, &gmid, &gpw, &gb2);
            Tensor<double> gi, gdw;
            radtk::depthwise_conv2d_backward(x, p.depthwise, Padding::valid, 1, gmid, &gi, &gdw);
            auto loss = [&] { return dot_loss(radtk::separable_conv(x, p), u); };
            fd_check(x.data, loss, gi.data);
            fd_check(p.depthwise.data, loss, gdw.data);
            fd_check(p.pointwise.data, loss, gpw.data);
        }
        {
            Tensor<double> x = oracle::random_tensor<double>({1, 3, 3, 2}, rng);
            Tensor<double> gamma = oracle::random_tensor<double>({2}, rng, 0.5, 1.5);
            Tensor<double> beta = oracle::random_tensor<double>({2}, rng);
            Tensor<double> mean = oracle::random_tensor<double>({2}, rng);
            Tensor<double> var = oracle::random_tensor<double>({2}, rng, 0.5, 2.0);
            Tensor<double> u = oracle::random_tensor<double>(x.shape, rng);
            Tensor<double> gi, gg, gb3;
            radtk::batchnorm_inference_backward(x, gamma, mean, var, u, &gi, &gg, &gb3);
            auto loss = [&] {
                return dot_loss(radtk::batchnorm_inference(x, gamma, beta, mean, var), u);
            };
            fd_check(x.data, loss, gi.data);
            fd_check(gamma.data, loss, gg.data);
            fd_check(beta.data, loss, gb3.data);
        }
    }

    // End-to-end: full small-input stack against finite differences on random
    // parameter slices, < 1e-3 relative.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ModelSpec spec = radtk::build_custom_cnn(12, 4, 8);
        radtk::Model<double> model = radtk::build_model<double>(spec, seed);
        RngState rng(70 + seed);
        const std::uint64_t drop_seed = 7100 + seed;
        Tensor<double> x;
        for (int attempt = 0;; ++attempt) {
            ASSERT_LT(attempt, 200);
            x = oracle::random_tensor<double>({2, 12, 12, 1}, rng, 0.0, 1.0);
            RngState drop(drop_seed);
            model.forward(x, Mode::train, &drop);
            double min_abs = 1e9;
            for (std::size_t li = 0; li < spec.layers.size(); ++li)
                if (spec.layers[li].kind == radtk::LayerKind::relu)
                    for (double v : model.activation(li - 1).data)
                        min_abs = std::min(min_abs, std::abs(v));
            if (min_abs > 5e-4) break;
        }
        std::vector<int> labels = {static_cast<int>(seed % 4), static_cast<int>((seed + 2) % 4)};
        auto loss = [&] {
            RngState drop(drop_seed);
            return radtk::scce_loss(model.forward(x, Mode::train, &drop), labels);
        };
        {
            RngState drop(drop_seed);
            Tensor<double> probs = model.forward(x, Mode::train, &drop);
            model.backward(radtk::scce_loss_grad(probs, labels));
        }
        auto params = model.trainable_params();
        RngState pick(90 + seed);
        for (int rep = 0; rep < 5; ++rep) {
            const std::size_t pi = static_cast<std::size_t>(pick.next_below(params.size()));
            const std::size_t ei =
                static_cast<std::size_t>(pick.next_below(params[pi].tensor->data.size()));
            const double analytic = params[pi].tensor->grad[ei];
            const double h = 1e-4;
            double& slot = params[pi].tensor->data[ei];
            const double orig = slot;
            slot = orig + h;
            const double lp = loss();
            slot = orig - h;
            const double lm = loss();
            slot = orig;
            const double numeric = (lp - lm) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1.0});
            EXPECT_LT(std::abs(numeric - analytic) / denom, 1e-3) << params[pi].name;
        }
    }
    criterion_line(2, "per-op and end-to-end gradients match finite differences");
}

// ---------------------------------------------------------------------------
// 3. Preprocessing conformance.

TEST(Acceptance, Criterion3_PreprocessingConformance) {
    GrayImage probe(3, 1);
    probe.pixels = {0, 100, 200};
    GrayImage bright = radtk::adjust_brightness(probe);
    EXPECT_EQ(bright.pixels[0], 15);
    EXPECT_EQ(bright.pixels[1], 165);
    EXPECT_EQ(bright.pixels[2], 255);

    for (auto [w, h] : {std::pair{30, 24}, std::pair{64, 48}, std::pair{97, 85}}) {
        GrayImage constant(w, h, 91);
        GrayImage med = radtk::median_filter(constant);
        for (auto p : med.pixels) EXPECT_EQ(p, 91);
        GrayImage cl = radtk::clahe(constant);
        for (auto p : cl.pixels) EXPECT_EQ(p, cl.pixels[0]);
        GrayImage rs = radtk::resize_nearest(constant, 224, 224);
        for (auto p : rs.pixels) EXPECT_EQ(p, 91);
    }

    GrayImage flat(10, 10, 42);
    GrayImageF norm = radtk::normalize_minmax(flat);
    for (float p : norm.pixels) EXPECT_EQ(p, 0.0f);

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        GrayImage img = image_oracle::random_image(96, 64, 500 + seed);
        GrayImageF out = radtk::run_pipeline(img, BBox{8, 4, 60, 40});
        EXPECT_EQ(out.width, 224);
        EXPECT_EQ(out.height, 224);
        for (float p : out.pixels) {
            EXPECT_GE(p, 0.0f);
            EXPECT_LE(p, 1.0f);
        }
    }
    criterion_line(3, "preprocessing parameter behavior and constant-image invariants");
}

// ---------------------------------------------------------------------------
// 4. Data engineering at full-scale counts.

TEST(Acceptance, Criterion4_DataEngineering) {
    const std::string dir = work_dir();
    radtk::write_pgm(dir + "/xray.pgm", GrayImage(512, 256, 100));
    {
        std::ofstream m(dir + "/manifest.jsonl");
        const std::array<int, 4> counts = {6797, 1139, 2308, 894};  // fillings, cavity, implant, impacted
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i)
                m << R"({"image":"xray.pgm","x":)" << (i * 5) % 400 << R"(,"y":)" << (i * 3) % 200
                  << R"(,"w":40,"h":30,"label":")" << radtk::kClassNames[static_cast<std::size_t>(c)]
                  << "\"}\n";
    }
    auto loaded = radtk::load_manifest(dir + "/manifest.jsonl");
    auto samples = radtk::make_samples(loaded.annotations);
    auto balanced = radtk::balance_downsample(samples, 42);
    EXPECT_EQ(balanced.size(), 3576u);
    for (auto c : radtk::class_counts(balanced)) EXPECT_EQ(c, 894);

    radtk::FoldPlan plan = radtk::kfold_split(balanced, 5, 42);
    radtk::apply_fold_plan(balanced, plan);
    std::map<int, int> totals;
    for (const auto& s : balanced) ++totals[s.fold];
    std::multiset<int> sizes;
    for (auto& [f, n] : totals) sizes.insert(n);
    EXPECT_EQ(sizes, (std::multiset<int>{715, 715, 715, 715, 716}));
    for (int c = 0; c < 4; ++c) {
        int lo = 1 << 30, hi = 0;
        std::map<int, int> per_fold;
        for (const auto& s : balanced)
            if (s.label == c) ++per_fold[s.fold];
        for (int f = 0; f < 5; ++f) {
            lo = std::min(lo, per_fold[f]);
            hi = std::max(hi, per_fold[f]);
        }
        EXPECT_LE(hi - lo, 1);
    }

    // Bit-reproducibility of the seeded operations.
    auto balanced2 = radtk::balance_downsample(samples, 42);
    ASSERT_EQ(balanced2.size(), balanced.size());
    for (std::size_t i = 0; i < balanced.size(); ++i) EXPECT_EQ(balanced2[i].id, balanced[i].id);
    EXPECT_EQ(radtk::kfold_split(balanced, 5, 42).assignments, plan.assignments);
    criterion_line(4, "full-scale balance and stratified 5-fold arithmetic");
}

// ---------------------------------------------------------------------------
// 5 & 6. Learning smoke tests and the hybrid pathway, sharing one trained
// network.

namespace {

struct SharedCnnRun {
    std::vector<radtk::SampleRecord> samples;  // fold-assigned
    radtk::Model<float> model;
    double cnn_heldout_accuracy = 0;
    std::vector<radtk::SampleRecord> train_set, test_set;
};

const SharedCnnRun& shared_cnn_run() {
    static SharedCnnRun run = [] {
        SharedCnnRun r;
        r.samples = synthetic::quadrant_dataset(600, 32, 11);
        radtk::FoldPlan plan = radtk::kfold_split(r.samples, 5, 42);
        radtk::apply_fold_plan(r.samples, plan);
        ModelSpec spec = radtk::build_custom_cnn(32, 8, 32);
        radtk::TrainConfig cfg;
        cfg.seed = 7;
        cfg.epochs = 30;
        cfg.batch_size = 16;
        cfg.lr = 1e-3;
        cfg.patience = 5;
        auto [model, history] = radtk::train<float>(spec, r.samples, 0, cfg);
        r.model = std::move(model);
        for (const auto& s : r.samples) (s.fold == 0 ? r.test_set : r.train_set).push_back(s);
        auto pred = radtk::predict(r.model, r.test_set);
        int ok = 0;
        for (std::size_t i = 0; i < r.test_set.size(); ++i)
            ok += pred.labels[i] == r.test_set[i].label;
        r.cnn_heldout_accuracy = static_cast<double>(ok) / static_cast<double>(r.test_set.size());
        return r;
    }();
    return run;
}

}  // namespace

TEST(Acceptance, Criterion5_LearningSmokeTests) {
    const auto t0 = std::chrono::steady_clock::now();

    // (a) scaled-down network on the 32x32 pattern set, 600 per class.
    EXPECT_GE(shared_cnn_run().cnn_heldout_accuracy, 0.95);

    // (b) unlimited-depth tree reaches 100% training accuracy on any
    // consistent set.
    {
        RngState rng(3);
        DataMatrix X(120, std::vector<double>(6));
        std::vector<int> y;
        for (auto& row : X) {
            for (auto& v : row) v = rng.uniform(0, 1);
            y.push_back(static_cast<int>(rng.next_below(4)));
        }
        radtk::DTree tree = radtk::dtree_fit(X, y, {}, 4);
        int ok = 0;
        for (std::size_t i = 0; i < X.size(); ++i) ok += tree.predict(X[i]) == y[i];
        EXPECT_EQ(ok, static_cast<int>(X.size()));
    }

    // (c) forest at least matches a single tree on held-out blobs in >= 8/10
    // seeds.
    {
        int wins = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            RngState rng(200 + seed);
            std::vector<std::vector<double>> centers(4, std::vector<double>(16, 0.0));
            for (auto& c : centers)
                for (auto& v : c) v = 3.0 * rng.next_gaussian();
            DataMatrix train_x, test_x;
            std::vector<int> train_y, test_y;
            for (int c = 0; c < 4; ++c)
                for (int i = 0; i < 150; ++i) {
                    std::vector<double> row = centers[static_cast<std::size_t>(c)];
                    for (auto& v : row) v += 1.6 * rng.next_gaussian();
                    if (i < 100) {
                        train_x.push_back(std::move(row));
                        train_y.push_back(c);
                    } else {
                        test_x.push_back(std::move(row));
                        test_y.push_back(c);
                    }
                }
            radtk::DTree tree = radtk::dtree_fit(train_x, train_y, {}, 4);
            radtk::Forest forest = radtk::forest_fit(train_x, train_y, seed);
            int tree_ok = 0, forest_ok = 0;
            for (std::size_t i = 0; i < test_x.size(); ++i) {
                tree_ok += tree.predict(test_x[i]) == test_y[i];
                forest_ok += forest.predict(test_x[i]) == test_y[i];
            }
            wins += forest_ok >= tree_ok;
        }
        EXPECT_GE(wins, 8);
    }

    // (d) SVM: separable blobs and the XOR corners, KKT residuals < 1e-3.
    {
        RngState rng(17);
        DataMatrix X;
        std::vector<int> y;
        for (int i = 0; i < 25; ++i) {
            X.push_back({3.0 + 0.5 * rng.next_gaussian(), 3.0 + 0.5 * rng.next_gaussian()});
            y.push_back(1);
            X.push_back({-3.0 + 0.5 * rng.next_gaussian(), -3.0 + 0.5 * rng.next_gaussian()});
            y.push_back(-1);
        }
        radtk::SvmFitDiag diag;
        radtk::SvmModel model = radtk::svm_fit(X, y, {}, 5, &diag);
        EXPECT_LT(diag.max_kkt_residual, 1e-3);
        for (std::size_t i = 0; i < X.size(); ++i)
            EXPECT_EQ(model.decision(X[i]) > 0 ? 1 : -1, y[i]);

        DataMatrix xor_x = {{1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
        std::vector<int> xor_y = {1, 1, -1, -1};
        radtk::SvmFitDiag xor_diag;
        radtk::SvmModel xor_model = radtk::svm_fit(xor_x, xor_y, {}, 3, &xor_diag);
        EXPECT_LT(xor_diag.max_kkt_residual, 1e-3);
        for (std::size_t i = 0; i < xor_x.size(); ++i)
            EXPECT_EQ(xor_model.decision(xor_x[i]) > 0 ? 1 : -1, xor_y[i]);
    }

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(elapsed, 600.0);
    criterion_line(5, "learning smoke tests (cnn / dtree / forest / svm)");
}

TEST(Acceptance, Criterion6_HybridPathway) {
    const SharedCnnRun& run = shared_cnn_run();
    radtk::Model<float>& model = const_cast<radtk::Model<float>&>(run.model);
    auto train_feats = radtk::extract_features(model, run.train_set);
    auto test_feats = radtk::extract_features(model, run.test_set);
    std::vector<int> train_labels;
    for (const auto& s : run.train_set) train_labels.push_back(s.label);
    auto [scaler, Z] = radtk::scaler_fit_transform(train_feats.rows);
    radtk::Forest forest = radtk::forest_fit(Z, train_labels, 99);
    const DataMatrix test_z = scaler.transform(test_feats.rows);
    int ok = 0;
    for (std::size_t i = 0; i < test_z.size(); ++i)
        ok += forest.predict(test_z[i]) == run.test_set[i].label;
    const double hybrid_acc = static_cast<double>(ok) / static_cast<double>(test_z.size());
    EXPECT_GE(hybrid_acc, run.cnn_heldout_accuracy - 0.02);
    std::cout << "    cnn held-out " << run.cnn_heldout_accuracy << ", cnn+rf held-out " << hybrid_acc
              << "\n";
    criterion_line(6, "cnn+rf held-out accuracy within 2 points of the cnn softmax");
}

// ---------------------------------------------------------------------------
// 7. Metrics correctness.

TEST(Acceptance, Criterion7_MetricsCorrectness) {
    radtk::ConfusionMatrix cm;
    cm.at(0, 0) = 3;
    cm.at(0, 1) = 1;
    cm.at(1, 0) = 2;
    cm.at(1, 1) = 4;
    radtk::MetricsReport r = radtk::metrics(cm);
    EXPECT_NEAR(r.accuracy, 0.7, 1e-9);
    EXPECT_NEAR(r.precision[0], 0.6, 1e-9);
    EXPECT_NEAR(r.recall[0], 0.75, 1e-9);
    EXPECT_NEAR(r.f1[0], 2.0 * 0.6 * 0.75 / (0.6 + 0.75), 1e-9);

    // Harmonic-mean family check on the published per-class operating point.
    const double p = 0.8001, rec = 0.7787;
    const double f1 = 2.0 * p * rec / (p + rec);
    EXPECT_NEAR(f1, 0.789, 5e-4);
    EXPECT_NEAR(f1, 0.7861, 0.01);  // fold-averaged reported value, family consistency only
    criterion_line(7, "confusion-derived metrics and harmonic-mean F1");
}

// ---------------------------------------------------------------------------
// 8. Determinism of the full workflow.

TEST(Acceptance, Criterion8_RunAllDeterminism) {
    const std::string dir = work_dir();
    RngState rng(7);
    std::ofstream manifest(dir + "/manifest.jsonl");
    int idx = 0;
    for (int i = 0; i < 10; ++i)
        for (int cls = 0; cls < 4; ++cls) {
            const std::string name = "img" + std::to_string(idx++) + ".pgm";
            radtk::write_pgm(dir + "/" + name, synthetic::quadrant_image_u8(64, cls, rng));
            manifest << R"({"image":")" << name << R"(","x":0,"y":0,"w":64,"h":64,"label":")"
                     << radtk::kClassNames[static_cast<std::size_t>(cls)] << "\"}\n";
        }
    manifest.close();
    auto run = [&](const std::string& tag) {
        const std::string cmd = std::string(RADTK_CLI_PATH) + " run-all --pipeline cnn --manifest " +
                                dir + "/manifest.jsonl --cache-dir " + dir + "/cache" + tag +
                                " --out " + dir + "/out" + tag +
                                " --size 32 --epochs 2 --lr 0.01 --k 5 --seed 42 > " + dir +
                                "/log" + tag + " 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    ASSERT_EQ(run("a"), 0) << radtk::read_text_file(dir + "/loga");
    ASSERT_EQ(run("b"), 0) << radtk::read_text_file(dir + "/logb");
    EXPECT_EQ(radtk::read_text_file(dir + "/outa/metrics.txt"),
              radtk::read_text_file(dir + "/outb/metrics.txt"));
    EXPECT_EQ(radtk::read_text_file(dir + "/outa/confusion.csv"),
              radtk::read_text_file(dir + "/outb/confusion.csv"));
    criterion_line(8, "run-all twice yields byte-identical metrics.txt and confusion.csv");
}

// ---------------------------------------------------------------------------
// 9. STRETCH: full-scale reproduction against the public dataset. Needs the
// real manifest (RADTK_STRETCH_MANIFEST) and hours of CPU; never gates CI.

TEST(Acceptance, Criterion9_StretchFullScaleReproduction) {
    const char* manifest = std::getenv("RADTK_STRETCH_MANIFEST");
    if (!manifest) {
        GTEST_SKIP() << "stretch check skipped: set RADTK_STRETCH_MANIFEST to the real dataset "
                        "manifest to run the full-scale 5-fold reproduction (hours of CPU)";
    }
    auto loaded = radtk::load_manifest(manifest);
    auto samples = radtk::make_samples(loaded.annotations);
    auto balanced = radtk::balance_downsample(samples, 42);
    radtk::materialize_samples(balanced, std::string(manifest) + ".cache", 224, 2);
    radtk::FoldPlan plan = radtk::kfold_split(balanced, 5, 42);
    radtk::CvOptions opts;
    opts.model = radtk::build_custom_cnn();
    opts.train = radtk::default_train_config(radtk::PipelineKind::cnn);
    opts.train.seed = 42;
    radtk::CVSummary cnn = radtk::run_cv(radtk::PipelineKind::cnn, balanced, plan, opts);
    radtk::CVSummary rf = radtk::run_cv(radtk::PipelineKind::cnn_rf, balanced, plan, opts);
    std::cout << "    full-scale cnn accuracy " << cnn.accuracy.mean << " (target 0.7429 +- 0.05)\n"
              << "    full-scale cnn+rf accuracy " << rf.accuracy.mean << " (target 0.854 +- 0.05)\n";
    EXPECT_NEAR(cnn.accuracy.mean, 0.7429, 0.05);
    EXPECT_NEAR(rf.accuracy.mean, 0.854, 0.05);
    criterion_line(9, "stretch full-scale reproduction");
}

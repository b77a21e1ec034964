// radtk: radiograph classification pipeline driver.
//
// Subcommands cover the full workflow: preprocess, balance, split, train,
// extract-features, train-hybrid, evaluate, report, and run-all which chains
// them. Every subcommand reads/writes only its declared artifacts under
// --cache-dir / --out, writes the resolved configuration next to its outputs,
// and is idempotent under a fixed seed.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "radtk/archive.hpp"
#include "radtk/classical_io.hpp"
#include "radtk/dataset.hpp"
#include "radtk/eval.hpp"
#include "radtk/io_util.hpp"
#include "radtk/model.hpp"
#include "radtk/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitInvalid = 4;
constexpr int kExitInternal = 5;

struct RunConfig {
    std::string manifest;
    std::string cache_dir;
    std::string out;
    std::string pipeline = "cnn";
    std::string features = "penultimate";
    std::uint64_t seed = 42;
    int k = 5;
    int fold = 0;
    int epochs = -1;      // -1: pipeline default
    int batch_size = -1;
    double lr = -1.0;
    int patience = -1;
    int threads = 1;
    bool deterministic = false;
    int size = 224;

    radtk::PipelineKind kind() const { return radtk::parse_pipeline_kind(pipeline); }

    // Unset training fields take the pipeline's stock training defaults.
    radtk::TrainConfig train_config() const {
        radtk::TrainConfig cfg = radtk::default_train_config(kind());
        cfg.seed = seed;
        if (epochs > 0) cfg.epochs = epochs;
        if (batch_size > 0) cfg.batch_size = batch_size;
        if (lr > 0) cfg.lr = lr;
        if (patience >= 0) cfg.patience = patience;
        cfg.validate();
        return cfg;
    }

    int effective_threads() const { return deterministic ? 1 : std::max(1, threads); }

    std::string serialized() const {
        const radtk::TrainConfig cfg = train_config();
        std::ostringstream s;
        s << "batch_size=" << cfg.batch_size << "\n"
          << "cache_dir=" << cache_dir << "\n"
          << "deterministic=" << (deterministic ? 1 : 0) << "\n"
          << "epochs=" << cfg.epochs << "\n"
          << "features=" << features << "\n"
          << "fold=" << fold << "\n"
          << "k=" << k << "\n"
          << "lr=" << cfg.lr << "\n"
          << "manifest=" << manifest << "\n"
          << "out=" << out << "\n"
          << "patience=" << cfg.patience << "\n"
          << "pipeline=" << pipeline << "\n"
          << "seed=" << seed << "\n"
          << "size=" << size << "\n"
          << "threads=" << threads << "\n"
          << "validation_fraction=" << cfg.validation_fraction << "\n";
        return s.str();
    }
};

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw radtk::IoError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw radtk::ParseError("config line missing '='", line_no);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "manifest") cfg.manifest = val;
            else if (key == "cache_dir") cfg.cache_dir = val;
            else if (key == "out") cfg.out = val;
            else if (key == "pipeline") cfg.pipeline = val;
            else if (key == "features") cfg.features = val;
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "k") cfg.k = std::stoi(val);
            else if (key == "fold") cfg.fold = std::stoi(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "patience") cfg.patience = std::stoi(val);
            else if (key == "threads") cfg.threads = std::stoi(val);
            else if (key == "deterministic") cfg.deterministic = val == "1" || val == "true";
            else if (key == "size") cfg.size = std::stoi(val);
            else if (key == "validation_fraction") {}  // informational in serialized configs
            else throw radtk::ValidationError("unknown config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw radtk::ParseError("bad value for config key '" + key + "'", line_no);
        }
    }
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir, const std::string& cmd) {
    fs::create_directories(dir);
    radtk::write_file_atomic((fs::path(dir) / ("run_config_" + cmd + ".txt")).string(),
                             cfg.serialized());
}

// ---------------------------------------------------------------------------
// Artifact paths and shared loading steps.

std::string fold_plan_path(const RunConfig& cfg) { return (fs::path(cfg.out) / "foldplan.txt").string(); }
std::string balanced_ids_path(const RunConfig& cfg) {
    return (fs::path(cfg.out) / "balanced_ids.txt").string();
}
std::string model_base(const RunConfig& cfg, int fold) {
    return (fs::path(cfg.out) / ("model_fold" + std::to_string(fold))).string();
}
std::string features_base(const RunConfig& cfg, int fold) {
    return (fs::path(cfg.out) / ("features_fold" + std::to_string(fold))).string();
}
std::string classical_base(const RunConfig& cfg, int fold) {
    return (fs::path(cfg.out) /
            ("classical_" + cfg.pipeline + "_fold" + std::to_string(fold))).string();
}
std::string predictions_path(const RunConfig& cfg, int fold) {
    return (fs::path(cfg.out) / ("predictions_fold" + std::to_string(fold) + ".csv")).string();
}

std::vector<radtk::SampleRecord> load_samples(const RunConfig& cfg, bool want_balanced_subset) {
    if (!fs::exists(cfg.manifest)) throw radtk::IoError("manifest not found: " + cfg.manifest);
    auto loaded = radtk::load_manifest(cfg.manifest);
    for (const auto& w : loaded.warnings) std::cerr << "radtk: warning: " << w << "\n";
    auto samples = radtk::make_samples(loaded.annotations);
    if (want_balanced_subset && fs::exists(balanced_ids_path(cfg))) {
        std::ifstream in(balanced_ids_path(cfg));
        std::set<std::string> keep;
        std::string id;
        while (std::getline(in, id))
            if (!id.empty()) keep.insert(id);
        std::vector<radtk::SampleRecord> filtered;
        for (auto& s : samples)
            if (keep.count(s.id)) filtered.push_back(std::move(s));
        samples = std::move(filtered);
    }
    return samples;
}

void attach_cache_paths(std::vector<radtk::SampleRecord>& samples, const RunConfig& cfg) {
    if (cfg.cache_dir.empty()) throw radtk::ValidationError("--cache-dir is required for this step");
    for (auto& s : samples) {
        s.cache_path = (fs::path(cfg.cache_dir) / (s.id + ".rdxs")).string();
        if (!fs::exists(s.cache_path))
            throw radtk::IoError("sample cache missing (run `preprocess` first): " + s.cache_path);
    }
}

radtk::ModelSpec model_spec_for(const RunConfig& cfg) {
    const radtk::PipelineKind kind = cfg.kind();
    // Hybrid pipelines train the same custom network as `cnn`.
    if (radtk::pipeline_is_hybrid(kind)) return radtk::pipeline_model_spec(radtk::PipelineKind::cnn, cfg.size);
    return radtk::pipeline_model_spec(kind, cfg.size);
}

radtk::CvOptions cv_options_for(const RunConfig& cfg) {
    radtk::CvOptions opts;
    opts.model = model_spec_for(cfg);
    opts.train = cfg.train_config();
    opts.features = radtk::parse_feature_source(cfg.features);
    opts.threads = cfg.effective_threads();
    return opts;
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns after writing its artifacts.

void cmd_preprocess(const RunConfig& cfg) {
    auto samples = load_samples(cfg, true);
    if (cfg.cache_dir.empty()) throw radtk::ValidationError("--cache-dir is required");
    radtk::materialize_samples(samples, cfg.cache_dir, cfg.size, cfg.effective_threads());
    write_resolved_config(cfg, cfg.cache_dir, "preprocess");
    std::cout << "preprocessed " << samples.size() << " samples into " << cfg.cache_dir << "\n";
}

void cmd_balance(const RunConfig& cfg) {
    auto samples = load_samples(cfg, false);
    auto balanced = radtk::balance_downsample(samples, cfg.seed);
    std::ostringstream ids;
    for (const auto& s : balanced) ids << s.id << "\n";
    fs::create_directories(cfg.out);
    radtk::write_file_atomic(balanced_ids_path(cfg), ids.str());
    write_resolved_config(cfg, cfg.out, "balance");
    std::cout << "balanced " << samples.size() << " -> " << balanced.size() << " samples\n";
}

void cmd_split(const RunConfig& cfg) {
    auto samples = load_samples(cfg, true);
    const radtk::FoldPlan plan = radtk::kfold_split(samples, cfg.k, cfg.seed);
    fs::create_directories(cfg.out);
    radtk::save_fold_plan(fold_plan_path(cfg), plan);
    write_resolved_config(cfg, cfg.out, "split");
    std::cout << "assigned " << plan.assignments.size() << " samples to " << cfg.k << " folds\n";
}

std::vector<radtk::SampleRecord> assigned_samples(const RunConfig& cfg) {
    auto samples = load_samples(cfg, true);
    attach_cache_paths(samples, cfg);
    const radtk::FoldPlan plan = radtk::load_fold_plan(fold_plan_path(cfg));
    radtk::apply_fold_plan(samples, plan);
    return samples;
}

void cmd_train(const RunConfig& cfg) {
    auto samples = assigned_samples(cfg);
    radtk::CvOptions opts = cv_options_for(cfg);
    radtk::TrainConfig fold_cfg = opts.train;
    fold_cfg.seed = radtk::detail::mix_seed(opts.train.seed, cfg.fold);
    auto [model, history] = radtk::train<float>(opts.model, samples, cfg.fold, fold_cfg);
    radtk::save_weights(model).save(model_base(cfg, cfg.fold));
    radtk::write_history_csv(
        (fs::path(cfg.out) / ("history_fold" + std::to_string(cfg.fold) + ".csv")).string(), history);
    write_resolved_config(cfg, cfg.out, "train");
    std::cout << "trained fold " << cfg.fold << ": best epoch " << history.best_epoch << ", val_loss "
              << history.val_loss[static_cast<std::size_t>(history.best_epoch - 1)] << "\n";
}

radtk::Model<float> load_fold_model(const RunConfig& cfg, int fold) {
    auto model = radtk::build_model<float>(model_spec_for(cfg), 0);
    radtk::load_weights(model, radtk::WeightArchive::load(model_base(cfg, fold)));
    model.fitted = true;
    return model;
}

void cmd_extract_features(const RunConfig& cfg) {
    auto samples = assigned_samples(cfg);
    auto model = load_fold_model(cfg, cfg.fold);
    auto feats = radtk::extract_features(model, samples, radtk::parse_feature_source(cfg.features),
                                         cfg.train_config().batch_size);
    radtk::WeightArchive archive;
    const int n = static_cast<int>(feats.rows.size());
    const int d = n ? static_cast<int>(feats.rows[0].size()) : 0;
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
    for (const auto& row : feats.rows) flat.insert(flat.end(), row.begin(), row.end());
    archive.add_f64("features", {n, d}, flat);
    std::vector<std::int32_t> labels, folds;
    std::ostringstream ids;
    for (const auto& s : samples) {
        labels.push_back(s.label);
        folds.push_back(s.fold);
        ids << s.id << "\n";
    }
    archive.add_i32("labels", {n}, labels);
    archive.add_i32("folds", {n}, folds);
    archive.save(features_base(cfg, cfg.fold));
    radtk::write_file_atomic(features_base(cfg, cfg.fold) + ".ids.txt", ids.str());
    write_resolved_config(cfg, cfg.out, "extract-features");
    std::cout << "extracted " << n << "x" << d << " features for fold " << cfg.fold << "\n";
}

void cmd_train_hybrid(const RunConfig& cfg) {
    const radtk::PipelineKind kind = cfg.kind();
    if (!radtk::pipeline_is_hybrid(kind))
        throw radtk::ValidationError("train-hybrid requires a hybrid pipeline (cnn_dt|cnn_rf|cnn_svm)");
    const radtk::WeightArchive archive = radtk::WeightArchive::load(features_base(cfg, cfg.fold));
    const auto& entry = archive.entry("features");
    const auto flat = archive.values<double>("features");
    const auto labels32 = archive.values<std::int32_t>("labels");
    const auto folds32 = archive.values<std::int32_t>("folds");
    const int n = entry.shape[0], d = entry.shape[1];
    radtk::DataMatrix train_rows;
    std::vector<int> train_labels;
    for (int i = 0; i < n; ++i) {
        if (folds32[static_cast<std::size_t>(i)] == cfg.fold) continue;
        train_rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i) * d,
                                flat.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
        train_labels.push_back(labels32[static_cast<std::size_t>(i)]);
    }
    radtk::CvOptions opts = cv_options_for(cfg);
    const std::uint64_t seed =
        radtk::detail::mix_seed(radtk::detail::mix_seed(cfg.seed, cfg.fold), 101);
    const radtk::ClassicalModel model =
        radtk::detail::fit_classical(kind, train_rows, train_labels, opts, seed);
    radtk::save_classical_model(classical_base(cfg, cfg.fold), model);
    write_resolved_config(cfg, cfg.out, "train-hybrid");
    std::cout << "fitted " << radtk::classical_kind_name(model.kind) << " on " << train_rows.size()
              << " feature rows for fold " << cfg.fold << "\n";
}

void cmd_evaluate(const RunConfig& cfg) {
    const radtk::PipelineKind kind = cfg.kind();
    std::vector<std::string> ids;
    std::vector<int> truth, predicted;
    if (radtk::pipeline_is_hybrid(kind)) {
        const radtk::WeightArchive archive = radtk::WeightArchive::load(features_base(cfg, cfg.fold));
        const auto& entry = archive.entry("features");
        const auto flat = archive.values<double>("features");
        const auto labels32 = archive.values<std::int32_t>("labels");
        const auto folds32 = archive.values<std::int32_t>("folds");
        std::istringstream id_stream(radtk::read_text_file(features_base(cfg, cfg.fold) + ".ids.txt"));
        std::vector<std::string> all_ids;
        std::string id;
        while (std::getline(id_stream, id)) all_ids.push_back(id);
        const int n = entry.shape[0], d = entry.shape[1];
        radtk::DataMatrix test_rows;
        for (int i = 0; i < n; ++i) {
            if (folds32[static_cast<std::size_t>(i)] != cfg.fold) continue;
            test_rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i) * d,
                                   flat.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
            truth.push_back(labels32[static_cast<std::size_t>(i)]);
            ids.push_back(all_ids[static_cast<std::size_t>(i)]);
        }
        const radtk::ClassicalModel model = radtk::load_classical_model(classical_base(cfg, cfg.fold));
        predicted = model.predict(test_rows);
    } else {
        auto samples = assigned_samples(cfg);
        std::vector<radtk::SampleRecord> test_set;
        for (const auto& s : samples)
            if (s.fold == cfg.fold) test_set.push_back(s);
        auto model = load_fold_model(cfg, cfg.fold);
        auto pred = radtk::predict(model, test_set, cfg.train_config().batch_size);
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            ids.push_back(test_set[i].id);
            truth.push_back(test_set[i].label);
        }
        predicted = pred.labels;
    }
    std::ostringstream csv;
    csv << "id,true,predicted\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        csv << ids[i] << "," << truth[i] << "," << predicted[i] << "\n";
    fs::create_directories(cfg.out);
    radtk::write_file_atomic(predictions_path(cfg, cfg.fold), csv.str());
    write_resolved_config(cfg, cfg.out, "evaluate");
    const radtk::MetricsReport r = radtk::metrics(radtk::confusion(truth, predicted));
    std::cout << "fold " << cfg.fold << " accuracy " << r.accuracy << " over " << ids.size()
              << " samples\n";
}

void cmd_report(const RunConfig& cfg) {
    const radtk::FoldPlan plan = radtk::load_fold_plan(fold_plan_path(cfg));
    std::vector<radtk::MetricsReport> folds;
    for (int f = 0; f < plan.k; ++f) {
        const std::string path = predictions_path(cfg, f);
        if (!fs::exists(path)) throw radtk::IoError("predictions not found: " + path);
        std::istringstream in(radtk::read_text_file(path));
        std::string line;
        std::getline(in, line);  // header
        std::vector<int> truth, predicted;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            truth.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
            predicted.push_back(std::stoi(line.substr(c2 + 1)));
        }
        folds.push_back(radtk::metrics(radtk::confusion(truth, predicted)));
    }
    radtk::CVSummary summary = radtk::aggregate_folds(std::move(folds));
    radtk::write_report(summary, cfg.out);
    write_resolved_config(cfg, cfg.out, "report");
    std::cout << "report written to " << cfg.out << " (fold-mean accuracy "
              << summary.accuracy.mean << ", pooled " << summary.pooled_accuracy << ")\n";
}

void cmd_run_all(RunConfig cfg) {
    cmd_balance(cfg);
    cmd_preprocess(cfg);
    cmd_split(cfg);
    const bool hybrid = radtk::pipeline_is_hybrid(cfg.kind());
    for (int f = 0; f < cfg.k; ++f) {
        cfg.fold = f;
        cmd_train(cfg);
        if (hybrid) {
            cmd_extract_features(cfg);
            cmd_train_hybrid(cfg);
        }
        cmd_evaluate(cfg);
    }
    cfg.fold = 0;
    cmd_report(cfg);
    write_resolved_config(cfg, cfg.out, "run-all");
}

std::string one_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ';');
    return msg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radtk: panoramic radiograph classification pipeline"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_file;

    app.add_option("--config", config_file, "key=value config file (flags win)");
    auto* opt_manifest = app.add_option("--manifest", cfg.manifest, "annotation manifest (JSONL)");
    auto* opt_cache = app.add_option("--cache-dir", cfg.cache_dir, "preprocessed sample cache dir");
    auto* opt_out = app.add_option("--out", cfg.out, "output directory");
    auto* opt_pipeline = app.add_option("--pipeline", cfg.pipeline,
                                        "cnn|cnn_dt|cnn_rf|cnn_svm|vgg16|xception|resnet50");
    auto* opt_features = app.add_option("--features", cfg.features,
                                        "hybrid feature source: penultimate|flatten");
    auto* opt_seed = app.add_option("--seed", cfg.seed, "run seed");
    auto* opt_k = app.add_option("--k", cfg.k, "fold count");
    auto* opt_fold = app.add_option("--fold", cfg.fold, "fold index for per-fold commands");
    auto* opt_epochs = app.add_option("--epochs", cfg.epochs, "training epochs");
    auto* opt_batch = app.add_option("--batch-size", cfg.batch_size, "batch size");
    auto* opt_lr = app.add_option("--lr", cfg.lr, "learning rate");
    auto* opt_patience = app.add_option("--patience", cfg.patience, "early stopping patience");
    auto* opt_threads = app.add_option("--threads", cfg.threads, "worker cap for parallel stages");
    auto* opt_det = app.add_flag("--deterministic", cfg.deterministic,
                                 "force single-threaded numeric paths");
    auto* opt_size = app.add_option("--size", cfg.size, "preprocessed image size (224 = full-scale geometry)");

    for (auto [name, desc] :
         std::initializer_list<std::pair<const char*, const char*>>{
             {"preprocess", "materialize the sample cache from the manifest"},
             {"balance", "downsample every class to the smallest class size"},
             {"split", "assign balanced samples to stratified folds"},
             {"train", "train the pipeline's network on one fold's training portion"},
             {"extract-features", "run the fitted network over all samples, save features"},
             {"train-hybrid", "fit the classical stage on one fold's training features"},
             {"evaluate", "predict one fold's held-out samples"},
             {"report", "aggregate fold predictions into metrics.txt and confusion.csv"},
             {"run-all", "chain the whole workflow across all folds"}})
        app.add_subcommand(name, desc)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "radtk: error code=" << kExitUsage << " kind=usage: " << one_line(e.what())
                  << "\n";
        return kExitUsage;
    }

    try {
        if (!config_file.empty()) {
            RunConfig from_file = cfg;
            apply_config_file(from_file, config_file);
            // Flags win over the file; restore any explicitly passed values.
            if (!opt_manifest->count()) cfg.manifest = from_file.manifest; else from_file.manifest = cfg.manifest;
            if (!opt_cache->count()) cfg.cache_dir = from_file.cache_dir;
            if (!opt_out->count()) cfg.out = from_file.out;
            if (!opt_pipeline->count()) cfg.pipeline = from_file.pipeline;
            if (!opt_features->count()) cfg.features = from_file.features;
            if (!opt_seed->count()) cfg.seed = from_file.seed;
            if (!opt_k->count()) cfg.k = from_file.k;
            if (!opt_fold->count()) cfg.fold = from_file.fold;
            if (!opt_epochs->count()) cfg.epochs = from_file.epochs;
            if (!opt_batch->count()) cfg.batch_size = from_file.batch_size;
            if (!opt_lr->count()) cfg.lr = from_file.lr;
            if (!opt_patience->count()) cfg.patience = from_file.patience;
            if (!opt_threads->count()) cfg.threads = from_file.threads;
            if (!opt_det->count()) cfg.deterministic = from_file.deterministic;
            if (!opt_size->count()) cfg.size = from_file.size;
        }
        cfg.kind();  // validate pipeline name early
        radtk::parse_feature_source(cfg.features);

        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "preprocess") cmd_preprocess(cfg);
        else if (sub == "balance") cmd_balance(cfg);
        else if (sub == "split") cmd_split(cfg);
        else if (sub == "train") cmd_train(cfg);
        else if (sub == "extract-features") cmd_extract_features(cfg);
        else if (sub == "train-hybrid") cmd_train_hybrid(cfg);
        else if (sub == "evaluate") cmd_evaluate(cfg);
        else if (sub == "report") cmd_report(cfg);
        else if (sub == "run-all") cmd_run_all(cfg);
        return kExitOk;
    } catch (const radtk::IoError& e) {
        std::cerr << "radtk: error code=" << kExitMissingInput
                  << " kind=missing-input: " << one_line(e.what()) << "\n";
        return kExitMissingInput;
    } catch (const radtk::ParseError& e) {
        std::cerr << "radtk: error code=" << kExitInvalid << " kind=parse: " << one_line(e.what())
                  << "\n";
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        // ShapeError, ParamError, ValidationError
        std::cerr << "radtk: error code=" << kExitInvalid << " kind=invalid: " << one_line(e.what())
                  << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "radtk: error code=" << kExitInternal
                  << " kind=internal: " << one_line(e.what()) << "\n";
        return kExitInternal;
    }
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "synthetic.hpp"
#include "radtk/archive.hpp"
#include "radtk/eval.hpp"
#include "radtk/image.hpp"
#include "radtk/io_util.hpp"

namespace fs = std::filesystem;

namespace {

std::string test_dir() {
    static int counter = 0;
    auto dir = fs::temp_directory_path() /
               ("radtk_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir.string();
}

int run_cli(const std::string& args, const std::string& capture_dir, std::string* output = nullptr) {
    const std::string log = capture_dir + "/cli_out.txt";
    const std::string cmd = std::string(RADTK_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (output) *output = radtk::read_text_file(log);
    return WEXITSTATUS(rc);
}

// Writes per-class quadrant PGMs plus a manifest; returns the manifest path.
std::string make_dataset(const std::string& dir, int per_class, int hw = 64) {
    radtk::RngState rng(7);
    std::ofstream manifest(dir + "/manifest.jsonl");
    int idx = 0;
    for (int i = 0; i < per_class; ++i)
        for (int cls = 0; cls < 4; ++cls) {
            const std::string name = "img" + std::to_string(idx++) + ".pgm";
            radtk::write_pgm(dir + "/" + name, synthetic::quadrant_image_u8(hw, cls, rng));
            manifest << R"({"image":")" << name << R"(","x":0,"y":0,"w":)" << hw << R"(,"h":)" << hw
                     << R"(,"label":")" << radtk::kClassNames[static_cast<std::size_t>(cls)]
                     << "\"}\n";
        }
    return dir + "/manifest.jsonl";
}

std::string common_flags(const std::string& manifest, const std::string& dir,
                         const std::string& tag) {
    return "--manifest " + manifest + " --cache-dir " + dir + "/cache" + tag + " --out " + dir +
           "/out" + tag + " --size 32 --epochs 2 --lr 0.01 --k 2 --seed 42";
}

}  // namespace

TEST(Cli, SplitTwiceIsByteIdentical) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 5);
    ASSERT_EQ(run_cli("balance --manifest " + manifest + " --out " + dir + "/a --seed 9", dir), 0);
    ASSERT_EQ(run_cli("split --manifest " + manifest + " --out " + dir + "/a --k 5 --seed 9", dir), 0);
    ASSERT_EQ(run_cli("balance --manifest " + manifest + " --out " + dir + "/b --seed 9", dir), 0);
    ASSERT_EQ(run_cli("split --manifest " + manifest + " --out " + dir + "/b --k 5 --seed 9", dir), 0);
    EXPECT_EQ(radtk::read_text_file(dir + "/a/foldplan.txt"),
              radtk::read_text_file(dir + "/b/foldplan.txt"));
    // Re-running in place replaces the file with identical content.
    const std::string before = radtk::read_text_file(dir + "/a/foldplan.txt");
    ASSERT_EQ(run_cli("split --manifest " + manifest + " --out " + dir + "/a --k 5 --seed 9", dir), 0);
    EXPECT_EQ(radtk::read_text_file(dir + "/a/foldplan.txt"), before);
}

TEST(Cli, MissingManifestNamesPathWithDistinctExitCode) {
    const std::string dir = test_dir();
    std::string output;
    const int rc = run_cli("split --manifest " + dir + "/nope.jsonl --out " + dir + " --k 2", dir,
                           &output);
    EXPECT_EQ(rc, 3);
    EXPECT_NE(output.find("nope.jsonl"), std::string::npos);
    EXPECT_NE(output.find("kind=missing-input"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
    const std::string dir = test_dir();
    std::string output;
    EXPECT_EQ(run_cli("split --not-a-flag 1", dir, &output), 2);
    EXPECT_NE(output.find("kind=usage"), std::string::npos);
}

TEST(Cli, ValidationFailuresAreExitCode4) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 2);
    std::string output;
    EXPECT_EQ(run_cli("split --manifest " + manifest + " --out " + dir + " --k 1", dir, &output), 4);
    EXPECT_NE(output.find("kind=invalid"), std::string::npos);
    EXPECT_EQ(run_cli("run-all --pipeline not_a_pipeline --manifest " + manifest + " --out " + dir,
                      dir, &output),
              4);
}

TEST(Cli, RunAllHybridProducesParseableReport) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 8);
    std::string output;
    const int rc = run_cli("run-all --pipeline cnn_rf " + common_flags(manifest, dir, "1"), dir,
                           &output);
    ASSERT_EQ(rc, 0) << output;
    const std::string metrics = radtk::read_text_file(dir + "/out1/metrics.txt");
    EXPECT_NE(metrics.find("overall_accuracy_fold_mean"), std::string::npos);
    EXPECT_NE(metrics.find("macro"), std::string::npos);
    radtk::ConfusionMatrix cm =
        radtk::parse_confusion_csv(radtk::read_text_file(dir + "/out1/confusion.csv"));
    EXPECT_EQ(cm.total(), 32);  // 8 per class balanced over 2 folds
    // The resolved config sits next to the outputs.
    EXPECT_TRUE(fs::exists(dir + "/out1/run_config_run-all.txt"));
    EXPECT_TRUE(fs::exists(dir + "/out1/history_fold0.csv"));
    EXPECT_TRUE(fs::exists(dir + "/out1/predictions_fold1.csv"));
}

TEST(Cli, RunAllTwiceByteIdenticalOutputs) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 6);
    ASSERT_EQ(run_cli("run-all --pipeline cnn " + common_flags(manifest, dir, "a"), dir), 0);
    ASSERT_EQ(run_cli("run-all --pipeline cnn " + common_flags(manifest, dir, "b"), dir), 0);
    EXPECT_EQ(radtk::read_text_file(dir + "/outa/metrics.txt"),
              radtk::read_text_file(dir + "/outb/metrics.txt"));
    EXPECT_EQ(radtk::read_text_file(dir + "/outa/confusion.csv"),
              radtk::read_text_file(dir + "/outb/confusion.csv"));
}

TEST(Cli, StagedCommandsMatchRunAll) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 6);
    ASSERT_EQ(run_cli("run-all --pipeline cnn " + common_flags(manifest, dir, "all"), dir), 0);
    const std::string staged = common_flags(manifest, dir, "st");
    ASSERT_EQ(run_cli("balance " + staged, dir), 0);
    ASSERT_EQ(run_cli("preprocess " + staged, dir), 0);
    ASSERT_EQ(run_cli("split " + staged, dir), 0);
    for (int f = 0; f < 2; ++f) {
        ASSERT_EQ(run_cli("train --fold " + std::to_string(f) + " " + staged, dir), 0);
        ASSERT_EQ(run_cli("evaluate --fold " + std::to_string(f) + " " + staged, dir), 0);
    }
    ASSERT_EQ(run_cli("report " + staged, dir), 0);
    EXPECT_EQ(radtk::read_text_file(dir + "/outall/metrics.txt"),
              radtk::read_text_file(dir + "/outst/metrics.txt"));
    EXPECT_EQ(radtk::read_text_file(dir + "/outall/confusion.csv"),
              radtk::read_text_file(dir + "/outst/confusion.csv"));
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 5);
    radtk::write_file_atomic(dir + "/cfg.txt", "seed=1\nk=5\nmanifest=" + manifest + "\nout=" + dir +
                                                   "/cfgout\n");
    ASSERT_EQ(run_cli("balance --config " + dir + "/cfg.txt", dir), 0);
    ASSERT_EQ(run_cli("split --config " + dir + "/cfg.txt --seed 2", dir), 0);
    // A --seed 2 run without the config file must agree (flags win over file).
    ASSERT_EQ(run_cli("balance --manifest " + manifest + " --out " + dir + "/flagout --seed 1", dir),
              0);
    ASSERT_EQ(run_cli("split --manifest " + manifest + " --out " + dir + "/flagout --k 5 --seed 2",
                      dir),
              0);
    EXPECT_EQ(radtk::read_text_file(dir + "/cfgout/foldplan.txt"),
              radtk::read_text_file(dir + "/flagout/foldplan.txt"));
    std::string output;
    EXPECT_EQ(run_cli("split --config " + dir + "/missing.cfg", dir, &output), 3);
}

TEST(Cli, FeatureSourceSwitchChangesWidth) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 4);
    const std::string flags = common_flags(manifest, dir, "f");
    ASSERT_EQ(run_cli("balance " + flags, dir), 0);
    ASSERT_EQ(run_cli("preprocess " + flags, dir), 0);
    ASSERT_EQ(run_cli("split " + flags, dir), 0);
    ASSERT_EQ(run_cli("train --fold 0 " + flags, dir), 0);
    ASSERT_EQ(run_cli("extract-features --fold 0 --features penultimate " + flags, dir), 0);
    const auto narrow = radtk::WeightArchive::load(dir + "/outf/features_fold0");
    ASSERT_EQ(run_cli("extract-features --fold 0 --features flatten " + flags, dir), 0);
    const auto wide = radtk::WeightArchive::load(dir + "/outf/features_fold0");
    EXPECT_GT(wide.entry("features").shape[1], narrow.entry("features").shape[1]);
    EXPECT_EQ(narrow.entry("features").shape[1], 32);   // dense width at --size 32
    EXPECT_EQ(wide.entry("features").shape[1], 128);    // 2*2*32 flatten width
    std::string output;
    EXPECT_EQ(run_cli("extract-features --fold 0 --features bogus " + flags, dir, &output), 4);
}

TEST(Cli, TrainOnPretrainedPipelineAtReducedSize) {
    const std::string dir = test_dir();
    const std::string manifest = make_dataset(dir, 3, 32);
    const std::string flags = "--manifest " + manifest + " --cache-dir " + dir +
                              "/cache --out " + dir + "/out --size 32 --epochs 1 --k 2 --seed 5 " +
                              "--pipeline vgg16";
    ASSERT_EQ(run_cli("balance " + flags, dir), 0);
    ASSERT_EQ(run_cli("preprocess " + flags, dir), 0);
    ASSERT_EQ(run_cli("split " + flags, dir), 0);
    std::string output;
    ASSERT_EQ(run_cli("train --fold 0 " + flags, dir, &output), 0) << output;
    ASSERT_EQ(run_cli("evaluate --fold 0 " + flags, dir, &output), 0) << output;
    EXPECT_TRUE(fs::exists(dir + "/out/predictions_fold0.csv"));
}

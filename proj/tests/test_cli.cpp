#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "brrf/pipeline.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run brrf_cli(const std::string& args, const testutil::TempDir& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd =
        std::string(BRRF_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string sample(const std::string& name) { return std::string(BRRF_SAMPLES_DIR) + "/" + name; }

void synth_scene(const testutil::TempDir& dir, const std::string& name, int seed,
                 const std::string& spec = "synth_clean.json") {
    const auto r = brrf_cli("synth --spec " + sample(spec) + " --seed " + std::to_string(seed) + " --out-dir " +
                                (dir / name).string(),
                            dir);
    ASSERT_EQ(r.code, 0) << r.err;
}

}

TEST(Cli, MissingInputIsNamedErrorWithExitCode2) {
    testutil::TempDir dir;
    const auto r = brrf_cli("oversegment --edges " + (dir / "nope.brrf").string() + " --out " +
                                (dir / "sp.brrf").string(),
                            dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("IoFailure"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("nope.brrf"), std::string::npos) << r.err;
}

TEST(Cli, CorruptInputNamesTheError) {
    testutil::TempDir dir;
    std::ofstream(dir / "bad.brrf") << "XXXXnot a container";
    const auto r = brrf_cli("oversegment --edges " + (dir / "bad.brrf").string() + " --out " +
                                (dir / "sp.brrf").string(),
                            dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("MagicMismatch"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagExitsWith2) {
    testutil::TempDir dir;
    EXPECT_EQ(brrf_cli("segment --frobnicate", dir).code, 2);
    EXPECT_EQ(brrf_cli("no-such-command", dir).code, 2);
    EXPECT_EQ(brrf_cli("train --pairs x.csv --kind svm --out m.json", dir).code, 2);
}

TEST(Cli, HelpExitsCleanly) {
    testutil::TempDir dir;
    const auto r = brrf_cli("--help", dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("pipeline"), std::string::npos);
}

TEST(Cli, SynthWritesAllArtifacts) {
    testutil::TempDir dir;
    synth_scene(dir, "s", 3);
    for (auto f : {"gt.brrf", "reps.brrf", "edges.brrf", "image.brrf"}) EXPECT_TRUE(fs::exists(dir / "s" / f)) << f;
    const auto gt = brrf::read_label_map(dir / "s" / "gt.brrf").map;
    EXPECT_EQ(brrf::label_count(gt), 6u);
    EXPECT_EQ(gt.height, 64u);
}

TEST(Cli, StagewiseFlow) {
    testutil::TempDir dir;
    synth_scene(dir, "a", 1);
    synth_scene(dir, "b", 2);
    const auto a = (dir / "a").string(), b = (dir / "b").string();

    auto r = brrf_cli("oversegment --edges " + a + "/edges.brrf --out " + (dir / "sp.brrf").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    r = brrf_cli("prep --reps " + a + "/reps.brrf --image " + a + "/image.brrf --out " + (dir / "prep.brrf").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(brrf::read_field<brrf::RepTensor>(dir / "prep.brrf").channels, 9u);

    r = brrf_cli("harvest --scene " + a + " --out-csv " + (dir / "pairs.csv").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    r = brrf_cli("train --pairs " + (dir / "pairs.csv").string() + " --kind lr --out " + (dir / "m.json").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;

    r = brrf_cli("segment --edges " + b + "/edges.brrf --reps " + b + "/reps.brrf --image " + b +
                     "/image.brrf --model " + (dir / "m.json").string() + " --out-hierarchy " +
                     (dir / "h.json").string() + " --out-ucm " + (dir / "ucm.brrf").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto h = brrf::read_hierarchy(dir / "h.json");
    EXPECT_EQ(brrf::validate_hierarchy(h), "");

    r = brrf_cli("threshold --hierarchy " + (dir / "h.json").string() + " --segments 6 --out " +
                     (dir / "cut_{t}.brrf").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(brrf::label_count(brrf::read_label_map(dir / "cut_6seg.brrf").map), 6u);
    r = brrf_cli("threshold --ucm " + (dir / "ucm.brrf").string() + " -t 0.5 --out " + (dir / "u.brrf").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;

    r = brrf_cli("eval --hierarchy " + (dir / "h.json").string() + " --gt " + b + "/gt.brrf --out-csv " +
                     (dir / "pr.csv").string(),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = nlohmann::json::parse(r.out);
    EXPECT_GE(summary.at("region_ois").get<double>(), 0.95);
    EXPECT_GE(summary.at("boundary_ois").get<double>(), 0.95);
    EXPECT_TRUE(fs::exists(dir / "pr.csv"));

    r = brrf_cli("pair-eval --reps " + b + "/reps.brrf --gt " + b + "/gt.brrf --pairs 2000 --seed 1", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GT(nlohmann::json::parse(r.out).at("accuracy").get<double>(), 0.9);

    r = brrf_cli("viz --reps " + b + "/reps.brrf --out " + (dir / "viz.png").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "viz.png"));
}

TEST(Cli, PipelineRecoversCleanSceneAndIsBitIdentical) {
    testutil::TempDir dir;
    std::string train, test;
    for (int s = 0; s < 3; ++s) {
        synth_scene(dir, "train" + std::to_string(s), s);
        train += " " + (dir / ("train" + std::to_string(s))).string();
    }
    for (int s = 50; s < 52; ++s) {
        synth_scene(dir, "test" + std::to_string(s), s);
        test += " " + (dir / ("test" + std::to_string(s))).string();
    }
    const std::string common = "pipeline --config " + sample("pipeline.json") + " --train" + train + " --test" + test;
    auto r1 = brrf_cli(common + " --out-dir " + (dir / "run1").string(), dir);
    ASSERT_EQ(r1.code, 0) << r1.err;
    auto r2 = brrf_cli(common + " --jobs 1 --out-dir " + (dir / "run2").string(), dir);
    ASSERT_EQ(r2.code, 0) << r2.err;

    const auto summary = nlohmann::json::parse(slurp(dir / "run1" / "summary.json"));
    EXPECT_GE(summary.at("region_ois").get<double>(), 0.99);
    for (const auto* f : {"model.json", "pairs.csv", "config.json", "metrics.csv", "test50.hierarchy.json",
                          "test50.hierarchy.base.brrf", "test50.ucm.brrf", "test51.ucm.brrf", "test50.seg_0.5.brrf"}) {
        ASSERT_TRUE(fs::exists(dir / "run1" / f)) << f;
        EXPECT_EQ(slurp(dir / "run1" / f), slurp(dir / "run2" / f)) << f;
    }
}

TEST(Cli, NoRerankDiffersOnlyAfterTheStartPoint) {
    testutil::TempDir dir;
    synth_scene(dir, "busy", 4, "synth_busy.json");
    const auto s = (dir / "busy").string();
    const std::string base = "segment --edges " + s + "/edges.brrf --reps " + s + "/reps.brrf --image " + s +
                             "/image.brrf --min-size 8 --out-ucm " + (dir / "u.brrf").string();
    ASSERT_EQ(brrf_cli(base + " --out-hierarchy " + (dir / "on.json").string(), dir).code, 0);
    ASSERT_EQ(brrf_cli(base + " --no-rerank --out-hierarchy " + (dir / "off.json").string(), dir).code, 0);
    const auto on = brrf::read_hierarchy(dir / "on.json"), off = brrf::read_hierarchy(dir / "off.json");
    ASSERT_GT(on.base_count(), 130u);
    EXPECT_EQ(brrf::validate_hierarchy(off), "");
    const std::size_t before = on.base_count() - 120 + 1;
    for (std::size_t i = 0; i < before; ++i) ASSERT_EQ(on.merges[i], off.merges[i]) << "step " << i;
    for (const auto& m : off.merges) EXPECT_FALSE(m.sil_score.has_value());
    EXPECT_TRUE(on.merges[before].sil_score.has_value());
}

TEST(Cli, ConfigVersionMismatchIsRejected) {
    testutil::TempDir dir;
    std::ofstream(dir / "cfg.json") << R"({"version": 9})";
    const auto r = brrf_cli("pipeline --config " + (dir / "cfg.json").string() + " --test x --out-dir " +
                                (dir / "o").string(),
                            dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("SchemaVersionMismatch"), std::string::npos) << r.err;
}

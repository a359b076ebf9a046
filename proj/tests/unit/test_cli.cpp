// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#include "splatcore/cli.hpp"
#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace splatcore {
namespace {

namespace fs = std::filesystem;

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "splatcore");
    std::vector<const char *> argv;
    for (const auto &a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

TEST(CliParse, ReadsFlags) {
    const cli::CliConfig c = cli::parse_args({"curate", "--scene", "s", "--out", "p.json", "--phi", "0.5"});
    EXPECT_EQ(c.command, "curate");
    EXPECT_EQ(c.scene, "s");
    EXPECT_EQ(c.phi, 0.5);
    EXPECT_EQ(c.psi, 0.3);
}

TEST(CliParse, RejectsOutOfRangeThreshold) {
    EXPECT_THROW(cli::parse_args({"curate", "--scene", "s", "--out", "p.json", "--phi", "1.5"}), cli::UsageError);
    const Outcome o = run_cli({"curate", "--scene", "s", "--out", "p.json", "--phi", "1.5"});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("--phi"), std::string::npos);
}

TEST(CliParse, MissingRequiredFlagIsUsageError) {
    EXPECT_EQ(run_cli({"fit", "--out", "x"}).code, 2);
    EXPECT_EQ(run_cli({"eval", "--scene", "s", "--out", "m.json"}).code, 2);
    EXPECT_EQ(run_cli({"bogus"}).code, 2);
}

TEST(CliParse, FlagBeatsConfigBeatsDefault) {
    const fs::path dir = oracle::scratch_dir("cli_config");
    const fs::path cfg = dir / "cfg.json";
    write_json_file(cfg, {{"phi", 0.7}, {"psi", 0.4}, {"seed", 9}});
    const cli::CliConfig c =
        cli::parse_args({"curate", "--scene", "s", "--out", "p.json", "--config", cfg.string(), "--phi", "0.2"});
    EXPECT_EQ(c.phi, 0.2);
    EXPECT_EQ(c.psi, 0.4);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.iters, 0);
}

TEST(CliParse, UnknownConfigKeyIsUsageError) {
    const fs::path dir = oracle::scratch_dir("cli_config_bad");
    const fs::path cfg = dir / "cfg.json";
    write_json_file(cfg, {{"phi", 0.7}, {"learning_rate", 1.0}});
    const Outcome o = run_cli({"curate", "--scene", "s", "--out", "p.json", "--config", cfg.string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("learning_rate"), std::string::npos);
}

TEST(CliParse, HelpExitsCleanly) {
    const Outcome o = run_cli({"--help"});
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("curate"), std::string::npos);
}

TEST(CliRun, MissingInputIsRuntimeError) {
    const fs::path dir = oracle::scratch_dir("cli_missing");
    const Outcome o = run_cli({"render", "--ply", (dir / "missing.ply").string(), "--camera",
                               (dir / "cam.json").string(), "--out", (dir / "x.png").string()});
    EXPECT_EQ(o.code, 1);
    const auto j = nlohmann::json::parse(o.err);
    EXPECT_EQ(j.at("error"), "io");
    EXPECT_EQ(j.at("command"), "render");
}

TEST(CliRun, GenerateCurateFitEval) {
    const fs::path dir = oracle::scratch_dir("cli_flow");
    const std::string scene = (dir / "scene").string();
    ASSERT_EQ(run_cli({"gen", "--out", scene, "--seed", "2", "--width", "32", "--height", "32", "--cameras", "8",
                       "--n-gaussians", "400"})
                  .code,
              0);
    EXPECT_TRUE(fs::exists(fs::path(scene) / "scene.json"));
    EXPECT_TRUE(fs::exists(fs::path(scene) / "ground_truth.ply"));
    ASSERT_EQ(run_cli({"curate", "--scene", scene, "--out", scene + "/pairs.json"}).code, 0);
    const Curation cur = curation_from_json(read_json_file(scene + "/pairs.json"));
    ASSERT_FALSE(cur.pairs.empty());

    const std::string fit_dir = (dir / "fit").string();
    const Outcome fit = run_cli({"fit", "--scene", scene, "--out", fit_dir, "--iters", "20"});
    ASSERT_EQ(fit.code, 0) << fit.err;
    const auto report = read_json_file(fs::path(fit_dir) / "fit_report.json");
    EXPECT_EQ(report.at("steps"), 20);

    const std::string metrics = (dir / "metrics.json").string();
    const Outcome ev = run_cli({"eval", "--scene", scene, "--ply", fit_dir + "/cloud.ply", "--out", metrics});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto m = read_json_file(metrics);
    EXPECT_EQ(m.at("context"), report.at("context"));
    const auto &a = report.at("aggregates");
    const auto &b = m.at("aggregates");
    ASSERT_FALSE(a.at("mean_psnr_masked").is_null());
    EXPECT_GE(b.at("mean_psnr_masked").get<double>(), a.at("mean_psnr_masked").get<double>() - 0.01);

    const std::string masks = (dir / "masks").string();
    ASSERT_EQ(run_cli({"mask", "--scene", scene, "--out", masks}).code, 0);
    EXPECT_FALSE(fs::is_empty(masks));
}

TEST(CliRun, RenderWritesImageAndDepth) {
    const fs::path dir = oracle::scratch_dir("cli_render");
    std::mt19937_64 rng(3);
    write_ply(oracle::random_cloud(rng, 20, 0), dir / "c.ply");
    write_json_file(dir / "cam.json", camera_to_json(oracle::front_camera(24, 16, 20)));
    const Outcome o = run_cli({"render", "--ply", (dir / "c.ply").string(), "--camera", (dir / "cam.json").string(),
                               "--out", (dir / "c.png").string(), "--depth-out", (dir / "d.png").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const Image img = read_png_rgb(dir / "c.png");
    EXPECT_EQ(img.width(), 24);
    EXPECT_EQ(img.height(), 16);
    EXPECT_TRUE(fs::exists(dir / "d.png"));
}

} // namespace
} // namespace splatcore

// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/splatcore.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace splatcore::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string> &commands() {
    static const std::vector<std::string> names = {"gen", "curate", "mask", "render", "fit", "train", "eval"};
    return names;
}

struct CliConfig {
    std::string command;
    std::string scene;
    std::string dataset;
    std::string out;
    std::string pairs;
    std::string ply;
    std::string camera;
    std::string model;
    std::string depth_out;
    std::string config;
    double phi = 0.3;
    double psi = 0.3;
    std::uint64_t seed = 0;
    int iters = 0; // 0: command default
    int width = 64;
    int height = 64;
    int sh_degree = 0;
    int n_gaussians = 1500;
    int cameras = 8;
    double noise = 0.0;
    double lr = 0.0; // 0: command default
    int pair = 0;
    bool no_masks = false;
    bool point_supervision = false;
};

/// Bad invocation; maps to exit code 2.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// --help was requested; `text` holds the help output.
struct HelpRequested {
    std::string text;
};

namespace detail {

/// One flag, its config-file key, and how to copy a JSON value into the config.
struct FlagSpec {
    std::string flag;
    std::string key;
    CLI::Option *option = nullptr;
    std::function<void(const nlohmann::json &)> from_json;
};

template <typename T>
FlagSpec bind(CLI::App &app, const std::string &name, T &target, const std::string &help) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    FlagSpec spec{"--" + name, key, nullptr, nullptr};
    if constexpr (std::is_same_v<T, bool>) {
        spec.option = app.add_flag("--" + name, target, help);
    } else {
        spec.option = app.add_option("--" + name, target, help);
    }
    spec.from_json = [&target](const nlohmann::json &j) { target = j.get<T>(); };
    return spec;
}

inline void check(bool ok, const std::string &message) {
    if (!ok) throw UsageError(message);
}

} // namespace detail

/// Parses `args` (without the program name). Precedence: flag, then config
/// file key, then built-in default.
inline CliConfig parse_args(const std::vector<std::string> &args) {
    CliConfig cfg;
    CLI::App app{"splatcore: pixel-aligned Gaussian splatting toolkit", "splatcore"};
    app.require_subcommand(1, 1);
    for (const auto &c : commands()) app.add_subcommand(c, c + " command")->fallthrough();

    std::vector<detail::FlagSpec> flags;
    flags.push_back(detail::bind(app, "scene", cfg.scene, "scene directory"));
    flags.push_back(detail::bind(app, "dataset", cfg.dataset, "directory of scene directories"));
    flags.push_back(detail::bind(app, "out", cfg.out, "output path"));
    flags.push_back(detail::bind(app, "pairs", cfg.pairs, "pairs.json path (default <scene>/pairs.json)"));
    flags.push_back(detail::bind(app, "ply", cfg.ply, "Gaussian cloud PLY"));
    flags.push_back(detail::bind(app, "camera", cfg.camera, "camera JSON"));
    flags.push_back(detail::bind(app, "model", cfg.model, "model.json"));
    flags.push_back(detail::bind(app, "depth-out", cfg.depth_out, "optional 16-bit depth PNG output"));
    flags.push_back(detail::bind(app, "phi", cfg.phi, "context overlap threshold in (0, 1]"));
    flags.push_back(detail::bind(app, "psi", cfg.psi, "target coverage threshold in (0, 1]"));
    flags.push_back(detail::bind(app, "seed", cfg.seed, "random seed"));
    flags.push_back(detail::bind(app, "iters", cfg.iters, "optimization steps"));
    flags.push_back(detail::bind(app, "width", cfg.width, "image width"));
    flags.push_back(detail::bind(app, "height", cfg.height, "image height"));
    flags.push_back(detail::bind(app, "sh-degree", cfg.sh_degree, "spherical-harmonic degree"));
    flags.push_back(detail::bind(app, "n-gaussians", cfg.n_gaussians, "ground-truth Gaussians for gen"));
    flags.push_back(detail::bind(app, "cameras", cfg.cameras, "cameras for gen"));
    flags.push_back(detail::bind(app, "noise", cfg.noise, "point-map noise sigma (meters)"));
    flags.push_back(detail::bind(app, "lr", cfg.lr, "learning rate"));
    flags.push_back(detail::bind(app, "pair", cfg.pair, "index into pairs.json"));
    flags.push_back(detail::bind(app, "no-masks", cfg.no_masks, "fit without loss masks"));
    flags.push_back(detail::bind(app, "point-supervision", cfg.point_supervision, "fit with point loss on means"));
    app.add_option("--config", cfg.config, "JSON file whose keys mirror the flags");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        throw HelpRequested{app.help()};
    } catch (const CLI::ParseError &e) {
        throw UsageError(e.what());
    }
    for (const auto &c : commands()) {
        if (app.got_subcommand(c)) cfg.command = c;
    }

    if (!cfg.config.empty()) {
        std::ifstream in(cfg.config);
        detail::check(in.good(), "--config: cannot open " + cfg.config);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception &e) {
            throw UsageError("--config: " + std::string(e.what()));
        }
        detail::check(j.is_object(), "--config: top level must be an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto spec = std::find_if(flags.begin(), flags.end(), [&](const auto &f) { return f.key == it.key(); });
            detail::check(spec != flags.end(), "--config: unknown key '" + it.key() + "'");
            if (spec->option->count() > 0) continue; // flag wins
            try {
                spec->from_json(it.value());
            } catch (const nlohmann::json::exception &) {
                throw UsageError("--config: key '" + it.key() + "' has the wrong type for " + spec->flag);
            }
        }
    }

    detail::check(cfg.phi > 0 && cfg.phi <= 1, "--phi must lie in (0, 1]");
    detail::check(cfg.psi > 0 && cfg.psi <= 1, "--psi must lie in (0, 1]");
    detail::check(cfg.iters >= 0, "--iters must be non-negative");
    detail::check(cfg.width > 0, "--width must be positive");
    detail::check(cfg.height > 0, "--height must be positive");
    detail::check(cfg.sh_degree >= 0 && cfg.sh_degree <= kMaxShDegree, "--sh-degree must lie in [0, 4]");
    detail::check(cfg.n_gaussians > 0, "--n-gaussians must be positive");
    detail::check(cfg.cameras > 0, "--cameras must be positive");
    detail::check(cfg.noise >= 0, "--noise must be non-negative");
    detail::check(cfg.lr >= 0, "--lr must be non-negative");
    detail::check(cfg.pair >= 0, "--pair must be non-negative");

    auto need = [&](const std::string &value, const std::string &flag) {
        detail::check(!value.empty(), cfg.command + " requires " + flag);
    };
    const std::string &c = cfg.command;
    need(cfg.out, "--out");
    if (c == "curate" || c == "mask" || c == "fit" || c == "eval") need(cfg.scene, "--scene");
    if (c == "render") {
        need(cfg.ply, "--ply");
        need(cfg.camera, "--camera");
    }
    if (c == "train") need(cfg.dataset, "--dataset");
    if (c == "eval") {
        detail::check(cfg.ply.empty() != cfg.model.empty(), "eval requires exactly one of --ply or --model");
    }
    return cfg;
}

inline CliConfig parse_args(int argc, const char *const *argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return parse_args(args);
}

namespace detail {

inline void require_exists(const std::string &path, const std::string &what) {
    require(fs::exists(path), ErrorKind::io, what + " not found: " + path);
}

inline CurationConfig curation_of(const CliConfig &cfg) {
    CurationConfig c;
    c.phi = cfg.phi;
    c.psi = cfg.psi;
    return c;
}

inline std::string pairs_path(const CliConfig &cfg) {
    return cfg.pairs.empty() ? (fs::path(cfg.scene) / "pairs.json").string() : cfg.pairs;
}

inline Curation load_pairs(const std::string &path) {
    require_exists(path, "pairs file");
    return curation_from_json(read_json_file(path));
}

inline const CuratedPair &select_pair(const Curation &c, int index) {
    require(!c.pairs.empty(), ErrorKind::configuration, "pairs file lists no context pairs");
    require(index < static_cast<int>(c.pairs.size()), ErrorKind::invalid_argument,
            "--pair " + std::to_string(index) + " is out of range");
    return c.pairs[static_cast<std::size_t>(index)];
}

inline std::vector<int> target_frames(const CuratedPair &p) {
    std::vector<int> out;
    for (const auto &t : p.targets) out.push_back(t.frame);
    return out;
}

inline nlohmann::json metrics_json(const std::vector<SampleMetrics> &metrics, const PairScore &pair) {
    nlohmann::json per = nlohmann::json::array();
    double full = 0, ssim_sum = 0, cov = 0, masked = 0;
    int n_masked = 0;
    for (const auto &m : metrics) {
        per.push_back({{"frame", m.frame},
                       {"psnr_full", m.psnr_full},
                       {"psnr_masked", m.psnr_masked ? nlohmann::json(*m.psnr_masked) : nlohmann::json(nullptr)},
                       {"ssim", m.ssim},
                       {"coverage", m.coverage}});
        full += m.psnr_full;
        ssim_sum += m.ssim;
        cov += m.coverage;
        if (m.psnr_masked) {
            masked += *m.psnr_masked;
            ++n_masked;
        }
    }
    const double n = metrics.empty() ? 1.0 : static_cast<double>(metrics.size());
    nlohmann::json agg = {{"count", metrics.size()},
                          {"mean_psnr_full", full / n},
                          {"mean_psnr_masked", n_masked ? nlohmann::json(masked / n_masked) : nlohmann::json(nullptr)},
                          {"mean_ssim", ssim_sum / n},
                          {"mean_coverage", cov / n}};
    return {{"schema_version", 1}, {"context", {pair.first, pair.second}}, {"per_target", per}, {"aggregates", agg}};
}

inline int cmd_gen(const CliConfig &cfg) {
    SyntheticSceneSpec spec;
    spec.seed = cfg.seed;
    spec.n_gaussians = cfg.n_gaussians;
    spec.n_cameras = cfg.cameras;
    spec.width = cfg.width;
    spec.height = cfg.height;
    spec.noise = cfg.noise;
    const SyntheticScene s = generate_scene(spec);
    save_scene(s.scene, cfg.out);
    write_ply(s.ground_truth, fs::path(cfg.out) / "ground_truth.ply");
    write_cloud_meta(fs::path(cfg.out) / "ground_truth.meta.json", {s.ground_truth.sh_degree, {}});
    return 0;
}

inline int cmd_curate(const CliConfig &cfg) {
    require_exists(cfg.scene, "scene directory");
    const Scene scene = load_scene(cfg.scene);
    write_json_file(cfg.out, to_json(curate(scene.depth_views(), curation_of(cfg))));
    return 0;
}

inline int cmd_mask(const CliConfig &cfg) {
    require_exists(cfg.scene, "scene directory");
    const Scene scene = load_scene(cfg.scene);
    const Curation cur = load_pairs(pairs_path(cfg));
    const auto views = scene.depth_views();
    CurationConfig cc = curation_of(cfg);
    fs::create_directories(cfg.out);
    for (std::size_t p = 0; p < cur.pairs.size(); ++p) {
        const auto &pair = cur.pairs[p];
        const std::array<DepthView, 2> ctx{views[static_cast<std::size_t>(pair.pair.first)],
                                           views[static_cast<std::size_t>(pair.pair.second)]};
        for (const auto &t : pair.targets) {
            const LossMask m = covisibility_mask(views[static_cast<std::size_t>(t.frame)], ctx, cc);
            char name[96];
            std::snprintf(name, sizeof name, "pair%03zu_ctx%d-%d_target%d.png", p, pair.pair.first, pair.pair.second,
                          t.frame);
            write_png_mask(fs::path(cfg.out) / name, m.valid);
        }
    }
    return 0;
}

inline int cmd_render(const CliConfig &cfg) {
    require_exists(cfg.ply, "PLY file");
    require_exists(cfg.camera, "camera file");
    const GaussianCloud cloud = read_ply(cfg.ply);
    const Camera cam = camera_from_json(read_json_file(cfg.camera));
    const RenderOutput r = render(cloud, cam);
    write_png_rgb(cfg.out, r.color);
    if (!cfg.depth_out.empty()) write_png_depth(cfg.depth_out, r.depth);
    return 0;
}

inline int cmd_fit(const CliConfig &cfg) {
    require_exists(cfg.scene, "scene directory");
    const Scene scene = load_scene(cfg.scene);
    const Curation cur = load_pairs(pairs_path(cfg));
    const CuratedPair &pair = select_pair(cur, cfg.pair);
    const std::vector<int> targets = target_frames(pair);
    const TrainSample sample = make_sample(scene, pair.pair.first, pair.pair.second, targets, curation_of(cfg));

    std::vector<FitView> views;
    std::array<PointMap, 2> pms;
    std::array<Image, 2> images;
    std::array<Camera, 2> cams;
    for (std::size_t v = 0; v < 2; ++v) {
        const ContextView &c = sample.context[v];
        pms[v] = c.pointmap;
        images[v] = c.image;
        cams[v] = c.camera;
        views.push_back({c.camera, c.image, LossMask{c.pointmap.valid}});
    }
    for (const auto &t : sample.targets) views.push_back({t.camera, t.image, t.mask});

    FitConfig fc;
    fc.activation.sh_degree = cfg.sh_degree;
    fc.steps = cfg.iters > 0 ? cfg.iters : 500;
    if (cfg.lr > 0) fc.optimizer.lr = cfg.lr;
    fc.use_masks = !cfg.no_masks;
    fc.point_supervision = cfg.point_supervision;
    GaussianCloud init = init_cloud(pms, images, cams);
    if (cfg.sh_degree > 0) {
        GaussianCloud wide;
        wide.sh_degree = cfg.sh_degree;
        const int b = sh_coeff_count(cfg.sh_degree);
        std::vector<double> coeffs(static_cast<std::size_t>(3 * b), 0.0);
        for (std::size_t i = 0; i < init.size(); ++i) {
            for (int c = 0; c < 3; ++c) coeffs[static_cast<std::size_t>(c * b)] = init.sh[3 * i + static_cast<std::size_t>(c)];
            wide.push_back(init.means[i], init.rotations[i], init.scales[i], init.opacities[i], coeffs);
        }
        init = std::move(wide);
    }
    std::vector<Vec3> gt_points;
    if (fc.point_supervision) gt_points = init.means;
    const FitResult result = fit(init, views, fc, gt_points);

    fs::create_directories(cfg.out);
    const fs::path ply = fs::path(cfg.out) / "cloud.ply";
    write_ply(result.cloud, ply);
    write_cloud_meta(fs::path(cfg.out) / "cloud.meta.json", {result.cloud.sh_degree, {pair.pair.first, pair.pair.second}});
    // report what a reader of the stored cloud will measure
    const auto metrics = evaluate_cloud(read_ply(ply), sample.targets);
    nlohmann::json report = metrics_json(metrics, pair.pair);
    report["steps"] = result.history.size();
    report["final_loss"] = result.history.empty() ? 0.0 : result.history.back().loss;
    write_json_file(fs::path(cfg.out) / "fit_report.json", report);
    return 0;
}

inline std::vector<TrainScene> load_dataset(const std::string &root) {
    require_exists(root, "dataset directory");
    std::vector<fs::path> dirs;
    for (const auto &entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "scene.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    require(!dirs.empty(), ErrorKind::empty_input, "dataset " + root + " holds no scene directories");
    std::vector<TrainScene> scenes;
    for (const auto &d : dirs) {
        scenes.push_back({d.filename().string(), load_scene(d), load_pairs((d / "pairs.json").string())});
    }
    return scenes;
}

inline int cmd_train(const CliConfig &cfg) {
    const std::vector<TrainScene> scenes = load_dataset(cfg.dataset);
    TrainConfig tc;
    tc.curation = curation_of(cfg);
    tc.activation.sh_degree = cfg.sh_degree;
    tc.steps = cfg.iters > 0 ? cfg.iters : 200;
    tc.seed = cfg.seed;
    tc.pointmap_noise = cfg.noise;
    if (cfg.lr > 0) tc.optimizer.lr = cfg.lr;
    fs::create_directories(cfg.out);
    std::ofstream log(fs::path(cfg.out) / "train_log.jsonl", std::ios::binary);
    require(log.good(), ErrorKind::io, "cannot write the training log");
    const TrainResult result = train(scenes, tc, {}, [&](const TrainLogEntry &e) {
        const nlohmann::json j = {{"schema_version", 1}, {"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss},
                                  {"psnr", e.psnr ? nlohmann::json(*e.psnr) : nlohmann::json(nullptr)}};
        log << j.dump() << '\n';
    });
    write_json_file(fs::path(cfg.out) / "model.json", model_to_json(result.model));
    return 0;
}

inline int cmd_eval(const CliConfig &cfg) {
    require_exists(cfg.scene, "scene directory");
    const Scene scene = load_scene(cfg.scene);
    const Curation cur = load_pairs(pairs_path(cfg));
    const CurationConfig cc = curation_of(cfg);
    PairScore pair;
    std::vector<int> targets;
    GaussianCloud cloud;
    std::optional<TrainSample> sample;
    if (!cfg.ply.empty()) {
        require_exists(cfg.ply, "PLY file");
        cloud = read_ply(cfg.ply);
        const fs::path meta_path = fs::path(cfg.ply).parent_path() / (fs::path(cfg.ply).stem().string() + ".meta.json");
        require_exists(meta_path.string(), "cloud sidecar");
        const CloudMeta meta = read_cloud_meta(meta_path);
        require(meta.source_frames.size() == 2, ErrorKind::parse, "cloud sidecar must name two source frames");
        pair = {meta.source_frames[0], meta.source_frames[1], 0.0};
        const auto it = std::find_if(cur.pairs.begin(), cur.pairs.end(), [&](const CuratedPair &p) {
            return p.pair.first == pair.first && p.pair.second == pair.second;
        });
        if (it != cur.pairs.end()) {
            pair = it->pair;
            targets = target_frames(*it);
        } else {
            for (const auto &t : select_targets(scene.depth_views(), pair.first, pair.second, cc)) targets.push_back(t.frame);
        }
        sample = make_sample(scene, pair.first, pair.second, targets, cc);
    } else {
        require_exists(cfg.model, "model file");
        const HeadModel model = model_from_json(read_json_file(cfg.model));
        const CuratedPair &p = select_pair(cur, cfg.pair);
        pair = p.pair;
        targets = target_frames(p);
        sample = make_sample(scene, pair.first, pair.second, targets, cc);
        ActivationConfig act;
        act.sh_degree = model.sh_degree;
        cloud = predict(model, *sample, act).cloud;
    }
    write_json_file(cfg.out, metrics_json(evaluate_cloud(cloud, sample->targets), pair));
    return 0;
}

} // namespace detail

/// Dispatches a parsed command. Library failures become exit code 1 with a
/// one-line JSON record on `err`.
inline int run(const CliConfig &cfg, std::ostream &err = std::cerr) {
    try {
        if (cfg.command == "gen") return detail::cmd_gen(cfg);
        if (cfg.command == "curate") return detail::cmd_curate(cfg);
        if (cfg.command == "mask") return detail::cmd_mask(cfg);
        if (cfg.command == "render") return detail::cmd_render(cfg);
        if (cfg.command == "fit") return detail::cmd_fit(cfg);
        if (cfg.command == "train") return detail::cmd_train(cfg);
        if (cfg.command == "eval") return detail::cmd_eval(cfg);
        err << nlohmann::json{{"error", "usage"}, {"message", "unknown command " + cfg.command}}.dump() << '\n';
        return 2;
    } catch (const Error &e) {
        err << nlohmann::json{{"error", to_string(e.kind())}, {"command", cfg.command}, {"message", e.what()}}.dump()
            << '\n';
    } catch (const std::exception &e) {
        err << nlohmann::json{{"error", "internal"}, {"command", cfg.command}, {"message", e.what()}}.dump() << '\n';
    }
    return 1;
}

/// Full entry point: parse, run, map usage problems to exit code 2.
inline int main(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
    CliConfig cfg;
    try {
        cfg = parse_args(argc, argv);
    } catch (const HelpRequested &h) {
        out << h.text;
        return 0;
    } catch (const UsageError &e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    return run(cfg, err);
}

} // namespace splatcore::cli

// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/head.hpp"
#include "splatcore/masking.hpp"
#include "splatcore/objective.hpp"
#include "splatcore/optim.hpp"
#include "splatcore/raster.hpp"
#include "splatcore/scene_io.hpp"
#include "splatcore/synthetic.hpp"

#include <array>
#include <functional>
#include <optional>
#include <random>

namespace splatcore {

struct ContextView {
    int frame = 0;
    Camera camera; // in the sample frame (context 0's camera frame)
    Image image;
    PointMap pointmap;
};

struct TargetView {
    int frame = 0;
    Camera camera; // in the sample frame
    Image image;
    LossMask mask;
    double coverage = 0.0; // mask pixels over valid-depth pixels
};

/// Two context views plus supervised targets, all expressed in the first
/// context camera's frame.
struct TrainSample {
    std::array<ContextView, 2> context;
    std::vector<TargetView> targets;
};

/// Builds a sample from ground-truth depth. Point maps stand in for the
/// stereo network's output; `noise` perturbs them.
inline TrainSample make_sample(const Scene &scene, int i, int j, std::span<const int> targets,
                               const CurationConfig &curation, double noise = 0.0,
                               std::mt19937_64 *rng = nullptr) {
    const int n = static_cast<int>(scene.frames.size());
    require(i >= 0 && j >= 0 && i < n && j < n && i != j, ErrorKind::invalid_argument,
            "sample context indices out of range");
    const RigidPose ref = scene.frames[static_cast<std::size_t>(i)].camera.pose;
    TrainSample s;
    const std::array<int, 2> ctx{i, j};
    for (int v = 0; v < 2; ++v) {
        const SceneFrame &f = scene.frames[static_cast<std::size_t>(ctx[static_cast<std::size_t>(v)])];
        ContextView &c = s.context[static_cast<std::size_t>(v)];
        c.frame = ctx[static_cast<std::size_t>(v)];
        c.camera = relative_to(f.camera, ref);
        c.image = f.image;
        c.pointmap = pointmap_from_depth(f.camera, f.depth, ref);
        if (rng) add_noise(c.pointmap, noise, *rng);
    }
    const std::array<DepthView, 2> ctx_views{
        DepthView{scene.frames[static_cast<std::size_t>(i)].camera, scene.frames[static_cast<std::size_t>(i)].depth},
        DepthView{scene.frames[static_cast<std::size_t>(j)].camera, scene.frames[static_cast<std::size_t>(j)].depth}};
    for (int k : targets) {
        require(k >= 0 && k < n, ErrorKind::invalid_argument, "target index out of range");
        const SceneFrame &f = scene.frames[static_cast<std::size_t>(k)];
        const DepthView view{f.camera, f.depth};
        LossMask mask = covisibility_mask(view, ctx_views, curation);
        const std::size_t valid = valid_depth_count(view);
        const double coverage = valid ? static_cast<double>(mask.count()) / static_cast<double>(valid) : 0.0;
        s.targets.push_back({k, relative_to(f.camera, ref), f.image, std::move(mask), coverage});
    }
    return s;
}

struct TrainConfig {
    ActivationConfig activation;
    RenderLossConfig loss;
    AdamWConfig optimizer;
    CurationConfig curation;
    int steps = 200;
    int max_targets = 3;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    std::vector<int> hidden{64, 64};
    double pointmap_noise = 0.0;
};

/// The predicted cloud of a sample and what produced it.
struct Prediction {
    std::array<HeadFeatures, 2> features;
    std::array<RawGaussianParams, 2> raw;
    GaussianCloud cloud;
    std::vector<PixelSource> sources;
};

inline Prediction predict(const HeadModel &model, const TrainSample &sample, const ActivationConfig &act) {
    Prediction p;
    std::array<PointMap, 2> pms;
    std::array<Image, 2> images;
    for (int v = 0; v < 2; ++v) {
        const ContextView &c = sample.context[static_cast<std::size_t>(v)];
        p.features[static_cast<std::size_t>(v)] = make_features(c.image, c.pointmap, v);
        p.raw[static_cast<std::size_t>(v)] = head_forward(model, p.features[static_cast<std::size_t>(v)]);
        pms[static_cast<std::size_t>(v)] = c.pointmap;
        images[static_cast<std::size_t>(v)] = c.image;
    }
    p.cloud = build_cloud(pms, p.raw, images, act);
    p.sources = cloud_sources(pms);
    return p;
}

struct SampleGradient {
    double loss = 0.0;
    HeadGradients grads;
    std::vector<int> skipped; // target frames with an empty mask
};

/// Summed masked loss over the sample's targets and its gradient with
/// respect to every head parameter.
inline SampleGradient sample_loss_and_gradient(const HeadModel &model, const TrainSample &sample,
                                               const TrainConfig &cfg) {
    const Prediction pred = predict(model, sample, cfg.activation);
    SampleGradient out;
    CloudGradients cg(pred.cloud);
    for (const TargetView &t : sample.targets) {
        if (t.mask.empty()) {
            out.skipped.push_back(t.frame);
            continue;
        }
        const RenderOutput r = render(pred.cloud, t.camera, {cfg.precision, false});
        const RenderLossResult l = masked_render_loss(r.color, t.image, t.mask, cfg.loss);
        out.loss += l.value;
        cg += render_backward(pred.cloud, t.camera, l.grad_color, r.aux);
    }

    const std::size_t stride = pred.cloud.sh_stride();
    std::array<ActivatedGradients, 2> ag{
        ActivatedGradients(static_cast<std::size_t>(pred.raw[0].pixels()), stride),
        ActivatedGradients(static_cast<std::size_t>(pred.raw[1].pixels()), stride)};
    for (std::size_t n = 0; n < pred.sources.size(); ++n) {
        const PixelSource &src = pred.sources[n];
        ActivatedGradients &g = ag[static_cast<std::size_t>(src.view)];
        g.offsets[src.pixel] = cg.means[n];
        g.rotations[src.pixel] = cg.rotations[n];
        g.scales[src.pixel] = cg.scales[n];
        g.opacities[src.pixel] = cg.opacities[n];
        std::copy_n(cg.sh.begin() + static_cast<std::ptrdiff_t>(n * stride), stride,
                    g.sh.begin() + static_cast<std::ptrdiff_t>(src.pixel * stride));
    }
    for (std::size_t v = 0; v < 2; ++v) {
        const Eigen::MatrixXd grad_raw = activate_backward(pred.raw[v], ag[v], cfg.activation);
        accumulate(out.grads, head_backward(model, pred.features[v], grad_raw));
    }
    return out;
}

inline std::vector<ParamBlock> parameter_blocks(HeadModel &model, const HeadGradients &grads) {
    std::vector<ParamBlock> blocks;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        auto &l = model.layers[i];
        const auto &g = grads.layers[i];
        blocks.push_back({"layer" + std::to_string(i) + ".weights",
                          std::span<double>(l.weights.data(), static_cast<std::size_t>(l.weights.size())),
                          std::span<const double>(g.weights.data(), static_cast<std::size_t>(g.weights.size()))});
        blocks.push_back({"layer" + std::to_string(i) + ".bias",
                          std::span<double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())),
                          std::span<const double>(g.bias.data(), static_cast<std::size_t>(g.bias.size()))});
    }
    return blocks;
}

struct StepResult {
    double loss = 0.0; // before the update
    std::vector<int> skipped;
};

inline StepResult train_step(HeadModel &model, const TrainSample &sample, const TrainConfig &cfg,
                             OptimizerState &state) {
    SampleGradient g = sample_loss_and_gradient(model, sample, cfg);
    auto blocks = parameter_blocks(model, g.grads);
    optimizer_step(blocks, state);
    return {g.loss, std::move(g.skipped)};
}

/// A scene with its curated pairs.
struct TrainScene {
    std::string name;
    Scene scene;
    Curation curation;
};

namespace detail {

struct EligiblePair {
    int first = 0, second = 0;
    std::vector<int> targets;
};

inline std::vector<EligiblePair> eligible_pairs(const Curation &c, const CurationConfig &cfg) {
    std::vector<EligiblePair> out;
    for (const auto &p : c.pairs) {
        if (p.pair.score < cfg.phi) continue;
        EligiblePair e{p.pair.first, p.pair.second, {}};
        for (const auto &t : p.targets) {
            if (t.coverage >= cfg.psi) e.targets.push_back(t.frame);
        }
        if (!e.targets.empty()) out.push_back(std::move(e));
    }
    return out;
}

} // namespace detail

/// Deterministic evaluation sample: best pair, its first targets.
inline std::optional<TrainSample> canonical_sample(const TrainScene &s, const TrainConfig &cfg) {
    const auto pairs = detail::eligible_pairs(s.curation, cfg.curation);
    if (pairs.empty()) return std::nullopt;
    const auto &p = pairs.front();
    std::vector<int> targets(p.targets.begin(),
                             p.targets.begin() + std::min<std::ptrdiff_t>(cfg.max_targets, static_cast<std::ptrdiff_t>(p.targets.size())));
    return make_sample(s.scene, p.first, p.second, targets, cfg.curation);
}

struct SampleMetrics {
    int frame = 0;
    double psnr_full = 0.0;
    std::optional<double> psnr_masked;
    double ssim = 0.0;
    double coverage = 0.0;
};

inline std::vector<SampleMetrics> evaluate_cloud(const GaussianCloud &cloud, std::span<const TargetView> targets,
                                                 Precision precision = Precision::f32) {
    std::vector<SampleMetrics> out;
    for (const TargetView &t : targets) {
        const RenderOutput r = render(cloud, t.camera, {precision, false});
        const PsnrResult p = psnr(r.color, t.image, t.mask);
        out.push_back({t.frame, p.full, p.masked, ssim(apply_mask(r.color, t.mask), apply_mask(t.image, t.mask)),
                       t.coverage});
    }
    return out;
}

/// Mean in-mask PSNR of the model over each scene's canonical sample.
inline std::optional<double> evaluate_model(const HeadModel &model, std::span<const TrainScene> scenes,
                                            const TrainConfig &cfg) {
    double sum = 0.0;
    int n = 0;
    for (const auto &s : scenes) {
        const auto sample = canonical_sample(s, cfg);
        if (!sample) continue;
        const Prediction pred = predict(model, *sample, cfg.activation);
        for (const auto &m : evaluate_cloud(pred.cloud, sample->targets, cfg.precision)) {
            if (!m.psnr_masked) continue;
            sum += *m.psnr_masked;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

struct TrainLogEntry {
    int epoch = 0;
    long step = 0;
    double loss = 0.0; // mean over the epoch's steps
    std::optional<double> psnr;
};

struct TrainResult {
    HeadModel model;
    std::vector<TrainLogEntry> log;
};

/// Epochs over scenes; each step draws a context pair uniformly from the
/// eligible pairs and up to `max_targets` of its targets. PSNR is logged on
/// `holdout` when given, otherwise on the training scenes.
inline TrainResult train(std::span<const TrainScene> scenes, const TrainConfig &cfg,
                         std::span<const TrainScene> holdout = {},
                         const std::function<void(const TrainLogEntry &)> &on_epoch = {}) {
    cfg.curation.validate();
    require(cfg.steps >= 0 && cfg.max_targets > 0, ErrorKind::invalid_argument,
            "steps must be non-negative and max_targets positive");
    std::vector<std::vector<detail::EligiblePair>> eligible;
    bool any = false;
    for (const auto &s : scenes) {
        eligible.push_back(detail::eligible_pairs(s.curation, cfg.curation));
        any = any || !eligible.back().empty();
    }
    require(any, ErrorKind::configuration,
            "no scene has a context pair with overlap >= phi = " + std::to_string(cfg.curation.phi) +
                " and a target with coverage >= psi");

    TrainResult result;
    result.model = HeadModel::initialized(cfg.seed, cfg.activation.sh_degree, cfg.hidden);
    OptimizerState state{cfg.optimizer, 0, {}, {}};
    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eed5eedULL);
    const std::span<const TrainScene> eval_set = holdout.empty() ? scenes : holdout;

    long step = 0;
    for (int epoch = 0; step < cfg.steps; ++epoch) {
        double loss_sum = 0.0;
        int count = 0;
        for (std::size_t si = 0; si < scenes.size() && step < cfg.steps; ++si) {
            const auto &pairs = eligible[si];
            if (pairs.empty()) continue;
            const auto &pair = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
            std::vector<int> pool = pair.targets;
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(cfg.max_targets)));
            std::sort(pool.begin(), pool.end());
            const TrainSample sample =
                make_sample(scenes[si].scene, pair.first, pair.second, pool, cfg.curation, cfg.pointmap_noise, &rng);
            loss_sum += train_step(result.model, sample, cfg, state).loss;
            ++count;
            ++step;
        }
        TrainLogEntry entry{epoch, step, count ? loss_sum / count : 0.0, evaluate_model(result.model, eval_set, cfg)};
        if (on_epoch) on_epoch(entry);
        result.log.push_back(entry);
    }
    return result;
}

} // namespace splatcore

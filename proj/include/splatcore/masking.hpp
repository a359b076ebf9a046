// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <span>

namespace splatcore {

/// A posed view with metric depth (0 marks an invalid pixel).
struct DepthView {
    Camera camera;
    DepthMap depth;
};

inline bool depth_valid(double d) { return d > 0 && std::isfinite(d); }

/// Per-pixel loss validity for one target view.
struct LossMask {
    BoolGrid valid;

    int width() const { return valid.width(); }
    int height() const { return valid.height(); }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
    }
    bool empty() const { return count() == 0; }

    static LossMask full(int width, int height) { return {BoolGrid(width, height, 1)}; }
};

struct CurationConfig {
    double phi = 0.3;
    double psi = 0.3;
    double depth_rel_tol = 0.03;
    double min_valid_fraction = 0.5;

    void validate() const {
        require(phi > 0 && phi <= 1, ErrorKind::invalid_argument, "phi must lie in (0, 1]");
        require(psi > 0 && psi <= 1, ErrorKind::invalid_argument, "psi must lie in (0, 1]");
        require(depth_rel_tol > 0, ErrorKind::invalid_argument, "depth_rel_tol must be positive");
        require(min_valid_fraction >= 0 && min_valid_fraction <= 1, ErrorKind::invalid_argument,
                "min_valid_fraction must lie in [0, 1]");
    }
};

/// Depth within [near, far] and projection inside [0, width) x [0, height).
inline bool in_frustum(const Camera &cam, const Vec3 &point_world) {
    const Vec3 pc = cam.to_camera(point_world);
    if (!(pc.z() >= cam.near && pc.z() <= cam.far)) {
        return false;
    }
    const Projection p = project(cam, point_world);
    return p.pixel.x() >= 0 && p.pixel.x() < cam.width && p.pixel.y() >= 0 && p.pixel.y() < cam.height;
}

namespace detail {

inline void check_view(const DepthView &v) {
    validate_camera(v.camera);
    require(v.depth.same_shape(v.camera.width, v.camera.height), ErrorKind::dimension_mismatch,
            "depth map does not match its camera");
}

/// Does the world point land on a depth-consistent pixel of `ctx`?
inline bool reprojects_onto(const DepthView &ctx, const Vec3 &p_world, double rel_tol) {
    if (!in_frustum(ctx.camera, p_world)) {
        return false;
    }
    const Projection p = project(ctx.camera, p_world);
    const int ix = static_cast<int>(std::floor(p.pixel.x()));
    const int iy = static_cast<int>(std::floor(p.pixel.y()));
    const double d_gt = ctx.depth(ix, iy);
    if (!depth_valid(d_gt)) {
        return false;
    }
    return std::abs(p.depth - d_gt) <= rel_tol * d_gt;
}

} // namespace detail

/// Target pixels with valid depth whose unprojection lands, depth-consistently,
/// on at least one context view. Occluded points fail the depth test.
inline LossMask covisibility_mask(const DepthView &target, std::span<const DepthView> contexts,
                                  const CurationConfig &config) {
    config.validate();
    require(!contexts.empty(), ErrorKind::empty_input, "covisibility_mask needs at least one context");
    detail::check_view(target);
    for (const auto &c : contexts) detail::check_view(c);

    const int w = target.camera.width, h = target.camera.height;
    LossMask mask{BoolGrid(w, h, 0)};
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t y0, std::size_t y1) {
        for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y) {
            for (int x = 0; x < w; ++x) {
                const double d = target.depth(x, y);
                if (!depth_valid(d)) continue;
                const Vec3 p = unproject(target.camera, pixel_center(x, y), d);
                for (const DepthView &ctx : contexts) {
                    if (detail::reprojects_onto(ctx, p, config.depth_rel_tol)) {
                        mask.valid(x, y) = 1;
                        break;
                    }
                }
            }
        }
    });
    return mask;
}

inline std::size_t valid_depth_count(const DepthView &v) {
    return static_cast<std::size_t>(std::count_if(v.depth.begin(), v.depth.end(), depth_valid));
}

inline double valid_depth_fraction(const DepthView &v) {
    return v.depth.empty() ? 0.0 : static_cast<double>(valid_depth_count(v)) / static_cast<double>(v.depth.size());
}

inline bool usable(const DepthView &v, const CurationConfig &config) {
    return valid_depth_fraction(v) >= config.min_valid_fraction && valid_depth_count(v) > 0;
}

/// Fraction of `src`'s valid-depth pixels that reproject consistently into `dst`.
inline double overlap_score(const DepthView &src, const DepthView &dst, const CurationConfig &config) {
    const std::size_t valid = valid_depth_count(src);
    require(valid > 0, ErrorKind::no_valid_depth, "overlap source has no valid depth");
    const LossMask m = covisibility_mask(src, std::span<const DepthView>(&dst, 1), config);
    return static_cast<double>(m.count()) / static_cast<double>(valid);
}

struct PairScore {
    int first = 0;  // context whose frame the scene is expressed in
    int second = 0; // its pixels are matched into `first`
    double score = 0.0;
};

/// Ordered pairs (i, j), i != j, both usable, with overlap_score(j -> i) >= phi,
/// sorted by descending score (ties by index).
inline std::vector<PairScore> select_pairs(std::span<const DepthView> scene, const CurationConfig &config) {
    config.validate();
    std::vector<int> ok;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (usable(scene[i], config)) ok.push_back(static_cast<int>(i));
    }
    require(ok.size() >= 2, ErrorKind::empty_input,
            "pair selection needs at least two frames with enough valid depth");
    std::vector<PairScore> out;
    for (int i : ok) {
        for (int j : ok) {
            if (i == j) continue;
            const double s = overlap_score(scene[static_cast<std::size_t>(j)], scene[static_cast<std::size_t>(i)], config);
            if (s >= config.phi) out.push_back({i, j, s});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const PairScore &a, const PairScore &b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    return out;
}

/// Fraction of view k's valid-depth pixels covisible with contexts {i, j}.
inline double target_coverage(std::span<const DepthView> scene, int k, int i, int j,
                              const CurationConfig &config) {
    const auto &target = scene[static_cast<std::size_t>(k)];
    const std::size_t valid = valid_depth_count(target);
    require(valid > 0, ErrorKind::no_valid_depth, "target has no valid depth");
    const std::array<DepthView, 2> ctx{scene[static_cast<std::size_t>(i)], scene[static_cast<std::size_t>(j)]};
    const LossMask m = covisibility_mask(target, ctx, config);
    return static_cast<double>(m.count()) / static_cast<double>(valid);
}

struct TargetCoverage {
    int frame = 0;
    double coverage = 0.0;
};

/// Usable frames outside {i, j} with coverage >= psi, in frame order.
inline std::vector<TargetCoverage> select_targets(std::span<const DepthView> scene, int i, int j,
                                                  const CurationConfig &config) {
    config.validate();
    const int n = static_cast<int>(scene.size());
    require(i >= 0 && j >= 0 && i < n && j < n && i != j, ErrorKind::invalid_argument,
            "context pair indices out of range");
    std::vector<TargetCoverage> out;
    for (int k = 0; k < n; ++k) {
        if (k == i || k == j || !usable(scene[static_cast<std::size_t>(k)], config)) continue;
        const double c = target_coverage(scene, k, i, j, config);
        if (c >= config.psi) out.push_back({k, c});
    }
    return out;
}

struct CuratedPair {
    PairScore pair;
    std::vector<TargetCoverage> targets;
};

struct Curation {
    double phi = 0.3;
    double psi = 0.3;
    std::vector<CuratedPair> pairs;
};

inline Curation curate(std::span<const DepthView> scene, const CurationConfig &config) {
    Curation out{config.phi, config.psi, {}};
    for (const PairScore &p : select_pairs(scene, config)) {
        out.pairs.push_back({p, select_targets(scene, p.first, p.second, config)});
    }
    return out;
}

inline nlohmann::json to_json(const Curation &c) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto &p : c.pairs) {
        nlohmann::json targets = nlohmann::json::array();
        for (const auto &t : p.targets) targets.push_back({{"frame", t.frame}, {"coverage", t.coverage}});
        pairs.push_back({{"context", {p.pair.first, p.pair.second}}, {"score", p.pair.score}, {"targets", targets}});
    }
    return {{"schema_version", 1}, {"phi", c.phi}, {"psi", c.psi}, {"pairs", pairs}};
}

inline Curation curation_from_json(const nlohmann::json &j) {
    try {
        Curation c;
        c.phi = j.at("phi").get<double>();
        c.psi = j.at("psi").get<double>();
        for (const auto &p : j.at("pairs")) {
            CuratedPair cp;
            const auto &ctx = p.at("context");
            require(ctx.is_array() && ctx.size() == 2, ErrorKind::parse, "pair context must hold two frames");
            cp.pair = {ctx[0].get<int>(), ctx[1].get<int>(), p.at("score").get<double>()};
            for (const auto &t : p.at("targets")) {
                cp.targets.push_back({t.at("frame").get<int>(), t.at("coverage").get<double>()});
            }
            c.pairs.push_back(std::move(cp));
        }
        return c;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, std::string("malformed pairs document: ") + e.what());
    }
}

} // namespace splatcore

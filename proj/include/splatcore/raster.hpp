// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/geometry.hpp"
#include "splatcore/sh.hpp"
#include "splatcore/splat.hpp"

#include <array>
#include <numeric>
#include <optional>

namespace splatcore {

enum class Precision { f32, f64 };

struct RenderOptions {
    /// Scalar type of the per-pixel compositing loop. Projection and the
    /// per-Gaussian part of the backward pass always run in double.
    Precision precision = Precision::f32;
    /// Hash the discrete compositing decisions (which Gaussians touch which
    /// pixels, clamps, early stops). Finite-difference checks use it to tell
    /// when a perturbation crossed a discontinuity.
    bool record_signature = false;
};

inline constexpr int kTileSize = 16;
inline constexpr double kLowPassVariance = 0.3;  // px^2, added to the screen covariance diagonal
inline constexpr double kSigmaCutoff = 3.0;      // contributions stop at this Mahalanobis radius
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kMaxWeight = 0.999;
inline constexpr double kBinMargin = 1.0;        // px of slack around the 3-sigma box when binning

/// A Gaussian after perspective projection into one camera.
struct ScreenGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Vec3 conic = Vec3::Zero(); // inverse covariance as (a, b, c): [[a, b], [b, c]]
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    std::array<bool, 3> color_clamped{false, false, false};
    double opacity = 0.0;
    int source_index = -1;
    int tile_x0 = 0, tile_x1 = -1, tile_y0 = 0, tile_y1 = -1; // inclusive tile range
};

namespace detail {

/// Intermediates of the projection, kept for the backward pass.
struct ProjectionState {
    Vec3 p_cam;
    Eigen::Matrix<double, 2, 3> jac;
    Mat3 rot;       // Gaussian rotation matrix
    Mat3 cov_cam;   // W Sigma W^T
    Mat2 cov2d;
    Vec3 view;      // mean - camera center
    Vec3 dir;       // view / |view|
};

inline ProjectionState projection_state(const GaussianCloud &cloud, std::size_t i, const Camera &cam) {
    ProjectionState st;
    const Mat3 w = cam.pose.rotation.transpose();
    st.p_cam = w * (cloud.means[i] - cam.pose.translation);
    const double x = st.p_cam.x(), y = st.p_cam.y(), z = st.p_cam.z();
    const double fx = cam.fx(), fy = cam.fy();
    st.jac << fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z);
    st.rot = quaternion_to_rotation(cloud.rotations[i]);
    const Vec3 s2 = cloud.scales[i].cwiseProduct(cloud.scales[i]);
    const Mat3 sigma = st.rot * s2.asDiagonal() * st.rot.transpose();
    st.cov_cam = w * sigma * w.transpose();
    st.cov2d = st.jac * st.cov_cam * st.jac.transpose();
    st.cov2d(0, 0) += kLowPassVariance;
    st.cov2d(1, 1) += kLowPassVariance;
    st.cov2d(0, 1) = st.cov2d(1, 0) = 0.5 * (st.cov2d(0, 1) + st.cov2d(1, 0));
    st.view = cloud.means[i] - cam.pose.translation;
    const double vn = st.view.norm();
    st.dir = vn > 0 ? Vec3(st.view / vn) : Vec3(0, 0, 1);
    return st;
}

inline int tile_count(int pixels) { return (pixels + kTileSize - 1) / kTileSize; }

} // namespace detail

/// Projects Gaussian `i`. Returns nullopt when its mean depth is outside
/// [near, far] or its 3-sigma box misses the image.
inline std::optional<ScreenGaussian> project_gaussian(const GaussianCloud &cloud, std::size_t i,
                                                      const Camera &cam) {
    const Vec3 pc = cam.to_camera(cloud.means[i]);
    if (!(pc.z() >= cam.near && pc.z() <= cam.far)) {
        return std::nullopt;
    }
    const detail::ProjectionState st = detail::projection_state(cloud, i, cam);
    ScreenGaussian g;
    g.mean2d = Vec2(cam.fx() * st.p_cam.x() / st.p_cam.z() + cam.cx(),
                    cam.fy() * st.p_cam.y() / st.p_cam.z() + cam.cy());
    g.cov2d = st.cov2d;
    const double det = st.cov2d.determinant();
    if (!(det > 0) || !g.mean2d.allFinite()) {
        return std::nullopt;
    }
    g.conic = Vec3(st.cov2d(1, 1) / det, -st.cov2d(0, 1) / det, st.cov2d(0, 0) / det);
    g.depth = st.p_cam.z();
    const ShColor color = eval_sh_unchecked(cloud.sh_of(i), st.dir, cloud.sh_degree);
    g.color = color.rgb;
    g.color_clamped = color.clamped;
    g.opacity = cloud.opacities[i];
    g.source_index = static_cast<int>(i);

    const double rx = kSigmaCutoff * std::sqrt(st.cov2d(0, 0)) + kBinMargin;
    const double ry = kSigmaCutoff * std::sqrt(st.cov2d(1, 1)) + kBinMargin;
    const double x_lo = g.mean2d.x() - rx, x_hi = g.mean2d.x() + rx;
    const double y_lo = g.mean2d.y() - ry, y_hi = g.mean2d.y() + ry;
    if (x_hi < 0 || y_hi < 0 || x_lo > cam.width || y_lo > cam.height) {
        return std::nullopt;
    }
    const int tx = detail::tile_count(cam.width), ty = detail::tile_count(cam.height);
    auto tile_of = [](double v, int n) {
        return static_cast<int>(std::clamp(std::floor(v / kTileSize), 0.0, static_cast<double>(n - 1)));
    };
    g.tile_x0 = tile_of(x_lo, tx);
    g.tile_x1 = tile_of(x_hi, tx);
    g.tile_y0 = tile_of(y_lo, ty);
    g.tile_y1 = tile_of(y_hi, ty);
    return g;
}

/// State retained by render() for render_backward().
struct RenderAux {
    Camera camera;
    std::size_t cloud_size = 0;
    Precision precision = Precision::f32;
    std::vector<ScreenGaussian> screen;                 // front-to-back by (depth, source_index)
    std::vector<std::vector<std::uint32_t>> tile_lists; // indices into `screen`, per tile, row-major
};

struct RenderOutput {
    Image color;
    Grid<double> alpha;
    Grid<double> depth;
    RenderAux aux;
    std::uint64_t signature = 0;
};

namespace detail {

template <typename S>
struct PackedSplat {
    S mx, my, a, b, c, opacity, depth;
    S color[3];
    std::uint32_t flags; // clamped color channels, bits 0..2
    std::int32_t source;
};

template <typename S>
std::vector<PackedSplat<S>> pack(const std::vector<ScreenGaussian> &screen) {
    std::vector<PackedSplat<S>> out(screen.size());
    for (std::size_t i = 0; i < screen.size(); ++i) {
        const ScreenGaussian &g = screen[i];
        auto &p = out[i];
        p.mx = static_cast<S>(g.mean2d.x());
        p.my = static_cast<S>(g.mean2d.y());
        p.a = static_cast<S>(g.conic[0]);
        p.b = static_cast<S>(g.conic[1]);
        p.c = static_cast<S>(g.conic[2]);
        p.opacity = static_cast<S>(g.opacity);
        p.depth = static_cast<S>(g.depth);
        for (int k = 0; k < 3; ++k) p.color[k] = static_cast<S>(g.color[k]);
        p.flags = (g.color_clamped[0] ? 1u : 0u) | (g.color_clamped[1] ? 2u : 0u) |
                  (g.color_clamped[2] ? 4u : 0u);
        p.source = g.source_index;
    }
    return out;
}

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

/// One accepted compositing step of a pixel.
template <typename S>
struct Contribution {
    std::uint32_t index; // into the tile list
    S dx, dy, gauss, weight_alpha, transmittance;
    bool weight_clamped;
};

/// Front-to-back compositing of one pixel over a depth-sorted list. Calls
/// `on_contrib` for every accepted contribution, in order.
template <typename S, typename OnContrib>
void composite_pixel(const std::vector<PackedSplat<S>> &splats, const std::vector<std::uint32_t> &list,
                     S px, S py, OnContrib &&on_contrib) {
    constexpr S cutoff2 = static_cast<S>(kSigmaCutoff * kSigmaCutoff);
    S t = S(1);
    for (std::uint32_t j = 0; j < list.size(); ++j) {
        const PackedSplat<S> &g = splats[list[j]];
        const S dx = px - g.mx;
        const S dy = py - g.my;
        const S m = g.a * dx * dx + S(2) * g.b * dx * dy + g.c * dy * dy;
        if (m > cutoff2) continue;
        const S gauss = std::exp(S(-0.5) * m);
        S a = g.opacity * gauss;
        bool clamped = false;
        if (a > static_cast<S>(kMaxWeight)) {
            a = static_cast<S>(kMaxWeight);
            clamped = true;
        }
        if (t * (S(1) - a) < static_cast<S>(kMinTransmittance)) break;
        on_contrib(Contribution<S>{j, dx, dy, gauss, a, t, clamped});
        t *= (S(1) - a);
    }
}

template <typename S>
void render_tiles(RenderOutput &out, bool record_signature) {
    const RenderAux &aux = out.aux;
    const int width = aux.camera.width, height = aux.camera.height;
    const int tx = tile_count(width);
    const auto splats = pack<S>(aux.screen);
    Grid<std::uint64_t> pixel_hash;
    if (record_signature) pixel_hash = Grid<std::uint64_t>(width, height, 0);

    parallel_for(aux.tile_lists.size(), [&](std::size_t t0, std::size_t t1) {
        for (std::size_t t = t0; t < t1; ++t) {
            const auto &list = aux.tile_lists[t];
            const int x0 = static_cast<int>(t % static_cast<std::size_t>(tx)) * kTileSize;
            const int y0 = static_cast<int>(t / static_cast<std::size_t>(tx)) * kTileSize;
            for (int y = y0; y < std::min(y0 + kTileSize, height); ++y) {
                for (int x = x0; x < std::min(x0 + kTileSize, width); ++x) {
                    S cr = 0, cg = 0, cb = 0, dsum = 0, wsum = 0;
                    std::uint64_t h = 0;
                    composite_pixel<S>(splats, list, static_cast<S>(x + 0.5), static_cast<S>(y + 0.5),
                                       [&](const Contribution<S> &k) {
                                           const auto &g = splats[list[k.index]];
                                           const S w = k.weight_alpha * k.transmittance;
                                           cr += w * g.color[0];
                                           cg += w * g.color[1];
                                           cb += w * g.color[2];
                                           dsum += w * g.depth;
                                           wsum += w;
                                           if (record_signature) {
                                               h = hash_mix(h, (static_cast<std::uint64_t>(g.source) << 4) |
                                                                   (g.flags << 1) | (k.weight_clamped ? 1u : 0u));
                                           }
                                       });
                    // composited color is clamped to 1 (SH colors are only bounded below)
                    out.color(x, y) = Vec3(std::min<double>(cr, 1.0), std::min<double>(cg, 1.0),
                                           std::min<double>(cb, 1.0));
                    if (record_signature) {
                        h = hash_mix(h, (cr > S(1) ? 1u : 0u) | (cg > S(1) ? 2u : 0u) | (cb > S(1) ? 4u : 0u));
                    }
                    out.alpha(x, y) = static_cast<double>(wsum);
                    out.depth(x, y) = wsum > S(0) ? static_cast<double>(dsum / wsum) : 0.0;
                    if (record_signature) pixel_hash(x, y) = h;
                }
            }
        }
    });
    if (record_signature) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::uint64_t v : pixel_hash) h = hash_mix(h, v);
        out.signature = h;
    }
}

} // namespace detail

/// Tile-based front-to-back alpha compositing over a black background.
inline RenderOutput render(const GaussianCloud &cloud, const Camera &camera,
                           const RenderOptions &options = {}) {
    validate_camera(camera);
    RenderOutput out;
    out.color = Image(camera.width, camera.height, Vec3::Zero());
    out.alpha = Grid<double>(camera.width, camera.height, 0.0);
    out.depth = Grid<double>(camera.width, camera.height, 0.0);
    RenderAux &aux = out.aux;
    aux.camera = camera;
    aux.cloud_size = cloud.size();
    aux.precision = options.precision;

    std::vector<std::optional<ScreenGaussian>> projected(cloud.size());
    parallel_for(cloud.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) projected[i] = project_gaussian(cloud, i, camera);
    });
    for (auto &g : projected) {
        if (g) aux.screen.push_back(*g);
    }
    std::stable_sort(aux.screen.begin(), aux.screen.end(), [](const ScreenGaussian &a, const ScreenGaussian &b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source_index < b.source_index;
    });

    const int tx = detail::tile_count(camera.width), ty = detail::tile_count(camera.height);
    aux.tile_lists.assign(static_cast<std::size_t>(tx) * static_cast<std::size_t>(ty), {});
    for (std::size_t s = 0; s < aux.screen.size(); ++s) {
        const ScreenGaussian &g = aux.screen[s];
        for (int y = g.tile_y0; y <= g.tile_y1; ++y) {
            for (int x = g.tile_x0; x <= g.tile_x1; ++x) {
                aux.tile_lists[static_cast<std::size_t>(y * tx + x)].push_back(static_cast<std::uint32_t>(s));
            }
        }
    }

    if (options.precision == Precision::f32) {
        detail::render_tiles<float>(out, options.record_signature);
    } else {
        detail::render_tiles<double>(out, options.record_signature);
    }
    return out;
}

namespace detail {

/// Per screen-Gaussian gradient of the loss w.r.t. its 2D parameters.
struct ScreenGradient {
    Vec2 mean2d = Vec2::Zero();
    Vec3 conic = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
};

template <typename S>
std::vector<ScreenGradient> backward_tiles(const RenderAux &aux, const Image &grad_color) {
    const int width = aux.camera.width, height = aux.camera.height;
    const int tx = tile_count(width);
    const auto splats = pack<S>(aux.screen);
    constexpr int kStride = 9; // mean2d(2) conic(3) color(3) opacity(1)
    std::vector<std::vector<double>> tile_grads(aux.tile_lists.size());

    parallel_for(aux.tile_lists.size(), [&](std::size_t t0, std::size_t t1) {
        std::vector<Contribution<S>> contribs;
        for (std::size_t t = t0; t < t1; ++t) {
            const auto &list = aux.tile_lists[t];
            auto &buf = tile_grads[t];
            buf.assign(list.size() * kStride, 0.0);
            const int x0 = static_cast<int>(t % static_cast<std::size_t>(tx)) * kTileSize;
            const int y0 = static_cast<int>(t / static_cast<std::size_t>(tx)) * kTileSize;
            for (int y = y0; y < std::min(y0 + kTileSize, height); ++y) {
                for (int x = x0; x < std::min(x0 + kTileSize, width); ++x) {
                    const Vec3 &gp = grad_color(x, y);
                    if (gp.isZero(0.0)) continue;
                    contribs.clear();
                    S sum[3] = {0, 0, 0};
                    composite_pixel<S>(splats, list, static_cast<S>(x + 0.5), static_cast<S>(y + 0.5),
                                       [&](const Contribution<S> &k) {
                                           contribs.push_back(k);
                                           const auto &g = splats[list[k.index]];
                                           const S w = k.weight_alpha * k.transmittance;
                                           for (int c = 0; c < 3; ++c) sum[c] += w * g.color[c];
                                       });
                    const S gr = sum[0] > S(1) ? S(0) : static_cast<S>(gp[0]);
                    const S gg = sum[1] > S(1) ? S(0) : static_cast<S>(gp[1]);
                    const S gb = sum[2] > S(1) ? S(0) : static_cast<S>(gp[2]);
                    // suffix sum of (color . grad) * weight over later contributions
                    S suffix = 0;
                    for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                        const Contribution<S> &k = *it;
                        const auto &g = splats[list[k.index]];
                        const S w = k.weight_alpha * k.transmittance;
                        const S cdot = g.color[0] * gr + g.color[1] * gg + g.color[2] * gb;
                        double *dst = buf.data() + static_cast<std::size_t>(k.index) * kStride;
                        dst[5] += static_cast<double>(w * gr);
                        dst[6] += static_cast<double>(w * gg);
                        dst[7] += static_cast<double>(w * gb);
                        const S d_alpha = k.transmittance * cdot - suffix / (S(1) - k.weight_alpha);
                        suffix += cdot * w;
                        if (k.weight_clamped) continue;
                        dst[8] += static_cast<double>(d_alpha * k.gauss);
                        const S d_m = d_alpha * g.opacity * k.gauss * S(-0.5);
                        dst[2] += static_cast<double>(d_m * k.dx * k.dx);
                        dst[3] += static_cast<double>(d_m * S(2) * k.dx * k.dy);
                        dst[4] += static_cast<double>(d_m * k.dy * k.dy);
                        // d = pixel - mean, so dm/dmean = -(2 Q d)
                        dst[0] += static_cast<double>(-d_m * S(2) * (g.a * k.dx + g.b * k.dy));
                        dst[1] += static_cast<double>(-d_m * S(2) * (g.b * k.dx + g.c * k.dy));
                    }
                }
            }
        }
    });

    std::vector<ScreenGradient> out(aux.screen.size());
    for (std::size_t t = 0; t < aux.tile_lists.size(); ++t) {
        const auto &list = aux.tile_lists[t];
        const auto &buf = tile_grads[t];
        for (std::size_t j = 0; j < list.size(); ++j) {
            const double *src = buf.data() + j * kStride;
            ScreenGradient &g = out[list[j]];
            g.mean2d += Vec2(src[0], src[1]);
            g.conic += Vec3(src[2], src[3], src[4]);
            g.color += Vec3(src[5], src[6], src[7]);
            g.opacity += src[8];
        }
    }
    return out;
}

} // namespace detail

/// Reverse mode of render() for the color output. Gradients are with respect
/// to the cloud's stored attributes (rotations as free 4-vectors through the
/// quaternion-to-matrix formula).
inline CloudGradients render_backward(const GaussianCloud &cloud, const Camera &camera,
                                      const Image &grad_color, const RenderAux &aux) {
    require(aux.camera == camera, ErrorKind::invalid_argument,
            "render_backward camera does not match the forward pass");
    require(aux.cloud_size == cloud.size(), ErrorKind::invalid_argument,
            "render_backward cloud does not match the forward pass");
    require(grad_color.same_shape(camera.width, camera.height), ErrorKind::dimension_mismatch,
            "color gradient does not match the image size");

    const std::vector<detail::ScreenGradient> screen_grads =
        aux.precision == Precision::f32 ? detail::backward_tiles<float>(aux, grad_color)
                                        : detail::backward_tiles<double>(aux, grad_color);

    CloudGradients grads(cloud);
    const Mat3 pose_r = camera.pose.rotation;
    const double fx = camera.fx(), fy = camera.fy();
    parallel_for(aux.screen.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t s = b; s < e; ++s) {
            const ScreenGaussian &sg = aux.screen[s];
            const detail::ScreenGradient &g = screen_grads[s];
            const auto i = static_cast<std::size_t>(sg.source_index);
            const detail::ProjectionState st = detail::projection_state(cloud, i, camera);
            const double x = st.p_cam.x(), y = st.p_cam.y(), z = st.p_cam.z();

            grads.opacities[i] += g.opacity;

            // conic -> 2D covariance
            const Mat2 q = st.cov2d.inverse();
            Mat2 g_q;
            g_q << g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2];
            const Mat2 g_v = -q * g_q * q;
            // V = J M J^T + lowpass
            const Mat3 g_m = st.jac.transpose() * g_v * st.jac;
            const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_v * st.jac * st.cov_cam;
            const Mat3 g_sigma = pose_r * g_m * pose_r.transpose();
            covariance_backward(cloud.rotations[i], cloud.scales[i], g_sigma, grads.rotations[i],
                                grads.scales[i]);

            Vec3 g_pc = Vec3::Zero();
            g_pc.x() += g.mean2d.x() * fx / z;
            g_pc.y() += g.mean2d.y() * fy / z;
            g_pc.z() += -g.mean2d.x() * fx * x / (z * z) - g.mean2d.y() * fy * y / (z * z);
            const double z2 = z * z, z3 = z2 * z;
            g_pc.x() += g_j(0, 2) * (-fx / z2);
            g_pc.y() += g_j(1, 2) * (-fy / z2);
            g_pc.z() += g_j(0, 0) * (-fx / z2) + g_j(0, 2) * (2.0 * fx * x / z3) +
                        g_j(1, 1) * (-fy / z2) + g_j(1, 2) * (2.0 * fy * y / z3);
            Vec3 g_mean = pose_r * g_pc;

            Vec3 g_color = g.color;
            for (int c = 0; c < 3; ++c) {
                if (sg.color_clamped[c]) g_color[c] = 0.0;
            }
            Vec3 g_dir = Vec3::Zero();
            eval_sh_backward(cloud.sh_of(i), st.dir, cloud.sh_degree, g_color,
                             std::span<double>(grads.sh).subspan(i * cloud.sh_stride(), cloud.sh_stride()),
                             g_dir);
            const double vn = st.view.norm();
            if (vn > 0) g_mean += (g_dir - st.dir * st.dir.dot(g_dir)) / vn;
            grads.means[i] += g_mean;
        }
    });
    return grads;
}

} // namespace splatcore

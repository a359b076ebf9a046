// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/masking.hpp"
#include "splatcore/raster.hpp"
#include "splatcore/splat.hpp"

#include <functional>
#include <optional>
#include <span>

namespace splatcore {

// ---------------------------------------------------------------------------
// Confidence-weighted point regression

struct PointLossConfig {
    double gamma = 0.2;
    /// Metric scenes skip the per-view scale normalization (z = z_bar = 1).
    bool metric = false;

    void validate() const {
        require(gamma > 0 && std::isfinite(gamma), ErrorKind::invalid_argument, "gamma must be positive");
    }
};

/// Gradients of the point loss for one view. `confidence_raw` is with
/// respect to raw where confidence = 1 + exp(raw).
struct PointLossGradients {
    Grid<Vec3> points;
    Grid<double> confidence_raw;
};

struct PointLossResult {
    double value = 0.0;
    std::vector<PointLossGradients> grads; // one per view
};

namespace detail {

inline double mean_valid_norm(const Grid<Vec3> &pts, const BoolGrid &valid) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        if (!valid[p]) continue;
        sum += pts[p].norm();
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double view_point_loss(const PointMap &pred, const PointMap &gt, const PointLossConfig &cfg,
                              PointLossGradients &grad) {
    pred.check_shape();
    gt.check_shape();
    require(pred.points.same_shape(gt.points), ErrorKind::dimension_mismatch,
            "predicted and ground-truth point maps differ in size");
    std::size_t n = 0;
    for (std::size_t p = 0; p < gt.valid.size(); ++p) {
        if (!gt.valid[p]) continue;
        ++n;
        require(gt.points[p].allFinite() && pred.points[p].allFinite() && std::isfinite(pred.confidence[p]),
                ErrorKind::non_finite, "point loss input is not finite at " + pixel_tag(p, gt.width()));
        require(pred.confidence[p] >= 1.0, ErrorKind::invalid_argument,
                "confidence below 1 at " + pixel_tag(p, gt.width()));
    }
    require(n > 0, ErrorKind::no_valid_depth, "ground-truth point map has no valid pixels");

    double z = 1.0, z_bar = 1.0;
    if (!cfg.metric) {
        z = mean_valid_norm(gt.points, gt.valid);
        z_bar = mean_valid_norm(pred.points, gt.valid);
        require(z > 0 && z_bar > 0, ErrorKind::invalid_argument,
                "point maps collapse to the origin; cannot normalize");
    }

    grad.points = Grid<Vec3>(gt.width(), gt.height(), Vec3::Zero());
    grad.confidence_raw = Grid<double>(gt.width(), gt.height(), 0.0);
    double loss = 0.0;
    double g_zbar = 0.0;
    for (std::size_t p = 0; p < gt.valid.size(); ++p) {
        if (!gt.valid[p]) continue;
        const double c = pred.confidence[p];
        const Vec3 r = gt.points[p] / z - pred.points[p] / z_bar;
        const double regr = r.norm();
        loss += c * regr - cfg.gamma * std::log(c);
        grad.confidence_raw[p] = (regr - cfg.gamma / c) * (c - 1.0);
        if (regr > 0) {
            const Vec3 e = r / regr;
            grad.points[p] = -c * e / z_bar;
            g_zbar += c * e.dot(pred.points[p]) / (z_bar * z_bar);
        }
    }
    if (!cfg.metric) {
        for (std::size_t p = 0; p < gt.valid.size(); ++p) {
            if (!gt.valid[p]) continue;
            const double norm = pred.points[p].norm();
            if (norm > 0) grad.points[p] += g_zbar * pred.points[p] / (norm * static_cast<double>(n));
        }
    }
    return loss;
}

} // namespace detail

/// Sum over views and valid ground-truth pixels of C * |X/z - X_hat/z_bar| - gamma log C.
inline PointLossResult point_loss(std::span<const PointMap> pred, std::span<const PointMap> gt,
                                  const PointLossConfig &config) {
    config.validate();
    require(pred.size() == gt.size() && !gt.empty(), ErrorKind::dimension_mismatch,
            "point loss needs matching, non-empty view lists");
    PointLossResult out;
    out.grads.resize(gt.size());
    for (std::size_t v = 0; v < gt.size(); ++v) {
        out.value += detail::view_point_loss(pred[v], gt[v], config, out.grads[v]);
    }
    return out;
}

inline PointLossResult point_loss(const PointMap &pred, const PointMap &gt, const PointLossConfig &config) {
    return point_loss(std::span<const PointMap>(&pred, 1), std::span<const PointMap>(&gt, 1), config);
}

// ---------------------------------------------------------------------------
// Masked photometric loss

struct PerceptualResult {
    double value = 0.0;
    Image grad; // with respect to the first image
};

/// (rendered, target) -> value and gradient w.r.t. rendered. Both inputs are
/// already mask-gated when called from masked_render_loss.
using PerceptualMetric = std::function<PerceptualResult(const Image &, const Image &)>;

struct RenderLossConfig {
    double lambda_mse = 1.0;
    double lambda_perceptual = 0.25;
    PerceptualMetric perceptual; // empty: term contributes 0

    void validate() const {
        require(lambda_mse >= 0 && lambda_perceptual >= 0, ErrorKind::invalid_argument,
                "loss weights must be non-negative");
    }
};

struct RenderLossResult {
    double value = 0.0;
    double mse = 0.0;
    double perceptual = 0.0;
    Image grad_color;
};

/// Zeroes pixels outside the mask by selection, so whatever was there
/// (including non-finite values) cannot leak into the result.
inline Image apply_mask(const Image &img, const LossMask &mask) {
    require(img.same_shape(mask.valid), ErrorKind::dimension_mismatch, "mask does not match the image");
    Image out(img.width(), img.height(), Vec3::Zero());
    for (std::size_t p = 0; p < img.size(); ++p) {
        if (mask.valid[p]) out[p] = img[p];
    }
    return out;
}

inline RenderLossResult masked_render_loss(const Image &rendered, const Image &target, const LossMask &mask,
                                           const RenderLossConfig &config = {}) {
    config.validate();
    require(rendered.same_shape(target) && rendered.same_shape(mask.valid), ErrorKind::dimension_mismatch,
            "rendered image, target and mask differ in size");
    const std::size_t count = mask.count();
    require(count > 0, ErrorKind::empty_input, "loss mask is empty; skip this target");

    RenderLossResult out;
    out.grad_color = Image(rendered.width(), rendered.height(), Vec3::Zero());
    const double denom = 3.0 * static_cast<double>(count);
    double sse = 0.0;
    for (std::size_t p = 0; p < rendered.size(); ++p) {
        if (!mask.valid[p]) continue;
        const Vec3 d = rendered[p] - target[p];
        sse += d.squaredNorm();
        out.grad_color[p] = (2.0 * config.lambda_mse / denom) * d;
    }
    out.mse = sse / denom;
    out.value = config.lambda_mse * out.mse;

    if (config.perceptual && config.lambda_perceptual > 0) {
        const PerceptualResult pr = config.perceptual(apply_mask(rendered, mask), apply_mask(target, mask));
        require(pr.grad.same_shape(rendered), ErrorKind::dimension_mismatch,
                "perceptual metric returned a gradient of the wrong size");
        out.perceptual = pr.value;
        out.value += config.lambda_perceptual * pr.value;
        for (std::size_t p = 0; p < rendered.size(); ++p) {
            if (mask.valid[p]) out.grad_color[p] += config.lambda_perceptual * pr.grad[p];
        }
    }
    return out;
}

inline RenderLossResult masked_render_loss(const RenderOutput &rendered, const Image &target,
                                           const LossMask &mask, const RenderLossConfig &config = {}) {
    return masked_render_loss(rendered.color, target, mask, config);
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kPsnrCap = 99.0;

inline double psnr_from_mse(double mse) {
    if (!(mse > 0)) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

struct PsnrResult {
    double full = kPsnrCap;
    std::optional<double> masked; // absent for an empty mask
};

/// `full` compares the mask-gated images over every pixel; `masked` averages
/// over in-mask pixels only.
inline PsnrResult psnr(const Image &rendered, const Image &target, const LossMask &mask) {
    require(rendered.same_shape(target) && rendered.same_shape(mask.valid), ErrorKind::dimension_mismatch,
            "psnr inputs differ in size");
    require(!rendered.empty(), ErrorKind::empty_input, "psnr of an empty image");
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < rendered.size(); ++p) {
        if (!mask.valid[p]) continue;
        sse += (rendered[p] - target[p]).squaredNorm();
        ++count;
    }
    PsnrResult out;
    out.full = psnr_from_mse(sse / (3.0 * static_cast<double>(rendered.size())));
    if (count > 0) out.masked = psnr_from_mse(sse / (3.0 * static_cast<double>(count)));
    return out;
}

inline PsnrResult psnr(const Image &rendered, const Image &target) {
    return psnr(rendered, target, LossMask::full(rendered.width(), rendered.height()));
}

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (double &v : k) v /= sum;
    return k;
}

/// Valid-mode separable filtering of a single-channel plane.
inline std::vector<double> filter_valid(const std::vector<double> &src, int w, int h,
                                        const std::vector<double> &kx, const std::vector<double> &ky) {
    const int wx = static_cast<int>(kx.size()), wy = static_cast<int>(ky.size());
    const int ow = w - wx + 1, oh = h - wy + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < wx; ++i) acc += kx[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * w + x + i)];
            tmp[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int j = 0; j < wy; ++j) acc += ky[static_cast<std::size_t>(j)] * tmp[static_cast<std::size_t>((y + j) * ow + x)];
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    return out;
}

} // namespace detail

/// Structural similarity averaged over valid window positions and channels.
/// Images smaller than the window use a window truncated to the image.
inline double ssim(const Image &rendered, const Image &target, const SsimConfig &cfg = {}) {
    require(rendered.same_shape(target), ErrorKind::dimension_mismatch, "ssim inputs differ in size");
    require(!rendered.empty(), ErrorKind::empty_input, "ssim of an empty image");
    const int w = rendered.width(), h = rendered.height();
    const auto kx = detail::gaussian_kernel(std::min(cfg.window, w), cfg.sigma);
    const auto ky = detail::gaussian_kernel(std::min(cfg.window, h), cfg.sigma);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

    double total = 0.0;
    std::size_t count = 0;
    const std::size_t n = rendered.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = rendered[p][c];
            y[p] = target[p][c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = detail::filter_valid(x, w, h, kx, ky);
        const auto my = detail::filter_valid(y, w, h, kx, ky);
        const auto sxx = detail::filter_valid(xx, w, h, kx, ky);
        const auto syy = detail::filter_valid(yy, w, h, kx, ky);
        const auto sxy = detail::filter_valid(xy, w, h, kx, ky);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

} // namespace splatcore

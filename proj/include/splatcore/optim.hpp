// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"

#include <span>

namespace splatcore {

struct AdamWConfig {
    double lr = 1e-5;
    double weight_decay = 0.05;
    double clip = 0.5; // global gradient norm; <= 0 disables clipping
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        require(lr >= 0 && weight_decay >= 0 && eps > 0, ErrorKind::invalid_argument,
                "optimizer lr, weight decay and eps must be non-negative");
        require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorKind::invalid_argument,
                "optimizer betas must lie in [0, 1)");
    }
};

/// Moments are created lazily on the first step, one vector per block.
struct OptimizerState {
    AdamWConfig config;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

struct ParamBlock {
    std::string name;
    std::span<double> values;
    std::span<const double> grads;
};

struct StepReport {
    double grad_norm = 0.0; // before clipping
    double clip_scale = 1.0;
};

/// Global-norm clipping, decoupled weight decay, bias-corrected Adam update.
inline StepReport optimizer_step(std::span<ParamBlock> blocks, OptimizerState &state) {
    const AdamWConfig &cfg = state.config;
    cfg.validate();
    if (state.m.empty()) {
        for (const auto &b : blocks) {
            state.m.emplace_back(b.values.size(), 0.0);
            state.v.emplace_back(b.values.size(), 0.0);
        }
    }
    require(state.m.size() == blocks.size(), ErrorKind::dimension_mismatch,
            "optimizer state was created for a different number of parameter blocks");

    double sq = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const ParamBlock &b = blocks[k];
        require(b.values.size() == b.grads.size(), ErrorKind::dimension_mismatch,
                "parameter block '" + b.name + "' has mismatched gradient size");
        require(state.m[k].size() == b.values.size(), ErrorKind::dimension_mismatch,
                "parameter block '" + b.name + "' changed size between steps");
        for (double g : b.grads) {
            require(std::isfinite(g), ErrorKind::non_finite, "non-finite gradient in parameter block '" + b.name + "'");
            sq += g * g;
        }
    }
    StepReport report;
    report.grad_norm = std::sqrt(sq);
    if (cfg.clip > 0 && report.grad_norm > cfg.clip) report.clip_scale = cfg.clip / report.grad_norm;

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        ParamBlock &b = blocks[k];
        auto &m = state.m[k];
        auto &v = state.v[k];
        for (std::size_t i = 0; i < b.values.size(); ++i) {
            const double g = b.grads[i] * report.clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            b.values[i] = b.values[i] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
    return report;
}

} // namespace splatcore

// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/splat.hpp"

#include <nlohmann/json.hpp>

#include <random>

namespace splatcore {

/// Per-pixel input: RGB (3), point xyz in the first camera's frame (3),
/// pixel uv in [0, 1] (2), one-hot view tag (2).
inline constexpr int kFeatureCount = 10;

struct HeadFeatures {
    int width = 0;
    int height = 0;
    Eigen::MatrixXd values; // kFeatureCount x pixels, row-major pixel order
};

inline HeadFeatures make_features(const Image &image, const PointMap &pointmap, int view) {
    require(view == 0 || view == 1, ErrorKind::invalid_argument, "view tag must be 0 or 1");
    require(image.same_shape(pointmap.points), ErrorKind::dimension_mismatch,
            "feature image and point map differ in size");
    const int w = image.width(), h = image.height();
    HeadFeatures f{w, h, Eigen::MatrixXd::Zero(kFeatureCount, static_cast<Eigen::Index>(w) * h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = image.index(x, y);
            auto col = f.values.col(static_cast<Eigen::Index>(p));
            col.segment<3>(0) = image[p];
            col.segment<3>(3) = pointmap.valid[p] ? pointmap.points[p] : Vec3::Zero();
            col[6] = (x + 0.5) / w;
            col[7] = (y + 0.5) / h;
            col[8 + view] = 1.0;
        }
    }
    return f;
}

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;
};

/// Small per-pixel MLP: rectified hidden layers, affine output.
struct HeadModel {
    int sh_degree = 0;
    std::vector<DenseLayer> layers;

    int output_width() const { return raw_channel_count(sh_degree); }

    std::vector<int> layer_sizes() const {
        std::vector<int> sizes;
        if (layers.empty()) return sizes;
        sizes.push_back(static_cast<int>(layers.front().weights.cols()));
        for (const auto &l : layers) sizes.push_back(static_cast<int>(l.weights.rows()));
        return sizes;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto &l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    static HeadModel zeros(int sh_degree, std::vector<int> hidden = {64, 64}) {
        HeadModel m;
        m.sh_degree = sh_degree;
        std::vector<int> sizes{kFeatureCount};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(raw_channel_count(sh_degree));
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            m.layers.push_back({Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]), Eigen::VectorXd::Zero(sizes[i + 1])});
        }
        return m;
    }

    /// He-normal hidden layers and a zero output layer, so the initial raw
    /// output equals the zero network's.
    static HeadModel initialized(std::uint64_t seed, int sh_degree, std::vector<int> hidden = {64, 64}) {
        HeadModel m = zeros(sh_degree, std::move(hidden));
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) {
            auto &w = m.layers[i].weights;
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
        }
        return m;
    }
};

inline void validate_model(const HeadModel &m) {
    require(m.layers.size() >= 1, ErrorKind::invalid_argument, "head model has no layers");
    require(m.layers.front().weights.cols() == kFeatureCount, ErrorKind::dimension_mismatch,
            "head model input width must be 10");
    require(m.layers.back().weights.rows() == m.output_width(), ErrorKind::dimension_mismatch,
            "head model output width does not match its SH degree");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto &l = m.layers[i];
        require(l.bias.size() == l.weights.rows(), ErrorKind::dimension_mismatch, "layer bias size mismatch");
        if (i > 0) {
            require(l.weights.cols() == m.layers[i - 1].weights.rows(), ErrorKind::dimension_mismatch,
                    "consecutive layer sizes disagree");
        }
        require(l.weights.allFinite() && l.bias.allFinite(), ErrorKind::non_finite, "head model weights not finite");
    }
}

/// Constant added to the network output: the rotation channels get w = 1,
/// so a zero network yields identity rotations instead of a zero quaternion.
inline Eigen::VectorXd head_output_prior(int sh_degree) {
    Eigen::VectorXd prior = Eigen::VectorXd::Zero(raw_channel_count(sh_degree));
    prior[kRawRotation] = 1.0;
    return prior;
}

namespace detail {

/// Pre-activations of every layer; the last entry is the network output.
inline std::vector<Eigen::MatrixXd> head_pass(const HeadModel &model, const Eigen::MatrixXd &x) {
    std::vector<Eigen::MatrixXd> pre;
    pre.reserve(model.layers.size());
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto &l = model.layers[i];
        Eigen::MatrixXd z = l.weights * h;
        z.colwise() += l.bias;
        pre.push_back(z);
        if (i + 1 < model.layers.size()) h = z.cwiseMax(0.0);
    }
    return pre;
}

inline void check_features(const HeadModel &model, const HeadFeatures &f) {
    validate_model(model);
    require(f.values.rows() == kFeatureCount &&
                f.values.cols() == static_cast<Eigen::Index>(f.width) * f.height,
            ErrorKind::dimension_mismatch, "feature matrix has the wrong shape");
    require(f.values.allFinite(), ErrorKind::non_finite, "head features are not finite");
}

} // namespace detail

inline RawGaussianParams head_forward(const HeadModel &model, const HeadFeatures &features) {
    detail::check_features(model, features);
    RawGaussianParams raw(features.width, features.height, model.sh_degree);
    raw.values = detail::head_pass(model, features.values).back();
    raw.values.colwise() += head_output_prior(model.sh_degree);
    return raw;
}

struct HeadGradients {
    std::vector<DenseLayer> layers;
    Eigen::MatrixXd features;
};

/// Reverse mode of head_forward for an upstream gradient on the raw output.
inline HeadGradients head_backward(const HeadModel &model, const HeadFeatures &features,
                                   const Eigen::MatrixXd &grad_raw) {
    detail::check_features(model, features);
    require(grad_raw.rows() == model.output_width() && grad_raw.cols() == features.values.cols(),
            ErrorKind::dimension_mismatch, "raw gradient has the wrong shape");
    const auto pre = detail::head_pass(model, features.values);
    HeadGradients out;
    out.layers.resize(model.layers.size());
    Eigen::MatrixXd g = grad_raw;
    for (std::size_t i = model.layers.size(); i-- > 0;) {
        const Eigen::MatrixXd input = i == 0 ? features.values : Eigen::MatrixXd(pre[i - 1].cwiseMax(0.0));
        out.layers[i].weights = g * input.transpose();
        out.layers[i].bias = g.rowwise().sum();
        Eigen::MatrixXd g_in = model.layers[i].weights.transpose() * g;
        if (i > 0) g_in = g_in.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
        g = std::move(g_in);
    }
    out.features = std::move(g);
    return out;
}

inline void accumulate(HeadGradients &into, const HeadGradients &g) {
    if (into.layers.empty()) {
        into = g;
        return;
    }
    for (std::size_t i = 0; i < into.layers.size(); ++i) {
        into.layers[i].weights += g.layers[i].weights;
        into.layers[i].bias += g.layers[i].bias;
    }
}

inline nlohmann::json model_to_json(const HeadModel &m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &l : m.layers) {
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(l.weights.cols()));
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weights(r, c);
            w.push_back(row);
        }
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back({{"weights", w}, {"bias", b}});
    }
    return {{"schema_version", 1}, {"sh_degree", m.sh_degree}, {"layer_sizes", m.layer_sizes()}, {"layers", layers}};
}

inline HeadModel model_from_json(const nlohmann::json &j) {
    try {
        HeadModel m;
        m.sh_degree = j.at("sh_degree").get<int>();
        const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
        const auto &layers = j.at("layers");
        require(sizes.size() == layers.size() + 1, ErrorKind::parse, "layer_sizes does not match the layer list");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto &lj = layers[i];
            DenseLayer l{Eigen::MatrixXd(sizes[i + 1], sizes[i]), Eigen::VectorXd(sizes[i + 1])};
            const auto &w = lj.at("weights");
            require(w.size() == static_cast<std::size_t>(sizes[i + 1]), ErrorKind::parse, "weight rows mismatch");
            for (int r = 0; r < sizes[i + 1]; ++r) {
                const auto row = w[static_cast<std::size_t>(r)].get<std::vector<double>>();
                require(row.size() == static_cast<std::size_t>(sizes[i]), ErrorKind::parse, "weight columns mismatch");
                for (int c = 0; c < sizes[i]; ++c) l.weights(r, c) = row[static_cast<std::size_t>(c)];
            }
            const auto b = lj.at("bias").get<std::vector<double>>();
            require(b.size() == static_cast<std::size_t>(sizes[i + 1]), ErrorKind::parse, "bias size mismatch");
            for (int r = 0; r < sizes[i + 1]; ++r) l.bias[r] = b[static_cast<std::size_t>(r)];
            m.layers.push_back(std::move(l));
        }
        validate_model(m);
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, std::string("malformed model: ") + e.what());
    }
}

} // namespace splatcore

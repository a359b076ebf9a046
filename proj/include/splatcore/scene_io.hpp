// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/geometry.hpp"
#include "splatcore/image_io.hpp"
#include "splatcore/masking.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace splatcore {

struct SceneFrame {
    std::string name;
    Camera camera;
    Image image;
    DepthMap depth;
};

/// A posed RGB-D frame sequence.
struct Scene {
    std::vector<SceneFrame> frames;

    std::vector<DepthView> depth_views() const {
        std::vector<DepthView> out;
        out.reserve(frames.size());
        for (const auto &f : frames) out.push_back({f.camera, f.depth});
        return out;
    }
};

inline nlohmann::json camera_to_json(const Camera &cam) {
    std::vector<double> k(9), pose(16);
    const Mat4 m = cam.pose.matrix();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) k[static_cast<std::size_t>(r * 3 + c)] = cam.intrinsics(r, c);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pose[static_cast<std::size_t>(r * 4 + c)] = m(r, c);
    return {{"intrinsics", k}, {"pose", pose}, {"width", cam.width}, {"height", cam.height},
            {"near", cam.near}, {"far", cam.far}};
}

/// Accepts the scene-frame layout (near/far optional).
inline Camera camera_from_json(const nlohmann::json &j) {
    try {
        const auto k = j.at("intrinsics").get<std::vector<double>>();
        const auto pose = j.at("pose").get<std::vector<double>>();
        require(k.size() == 9, ErrorKind::parse, "intrinsics must hold 9 numbers");
        require(pose.size() == 16, ErrorKind::parse, "pose must hold 16 numbers");
        Camera cam;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = k[static_cast<std::size_t>(r * 3 + c)];
        Mat4 m;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m(r, c) = pose[static_cast<std::size_t>(r * 4 + c)];
        require(std::abs(m(3, 0)) + std::abs(m(3, 1)) + std::abs(m(3, 2)) == 0.0 && m(3, 3) == 1.0,
                ErrorKind::parse, "pose bottom row must be 0 0 0 1");
        cam.pose = RigidPose::from_matrix(m);
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.near = j.value("near", cam.near);
        cam.far = j.value("far", cam.far);
        validate_camera(cam);
        return cam;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, std::string("malformed camera: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

/// Pretty-printed with a trailing newline; identical inputs give identical bytes.
inline void write_json_file(const std::filesystem::path &path, const nlohmann::json &j) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    require(out.good(), ErrorKind::io, "write to " + path.string() + " failed");
}

inline Scene load_scene(const std::filesystem::path &dir) {
    const nlohmann::json doc = read_json_file(dir / "scene.json");
    Scene scene;
    try {
        for (const auto &f : doc.at("frames")) {
            SceneFrame frame;
            frame.name = f.at("name").get<std::string>();
            frame.camera = camera_from_json(f);
            frame.image = read_png_rgb(dir / f.at("image").get<std::string>());
            frame.depth = read_png_depth(dir / f.at("depth").get<std::string>());
            require(frame.image.same_shape(frame.camera.width, frame.camera.height) &&
                        frame.depth.same_shape(frame.camera.width, frame.camera.height),
                    ErrorKind::dimension_mismatch, "frame '" + frame.name + "' images do not match its size");
            scene.frames.push_back(std::move(frame));
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, (dir / "scene.json").string() + ": " + e.what());
    }
    return scene;
}

inline void save_scene(const Scene &scene, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "depth");
    nlohmann::json frames = nlohmann::json::array();
    for (const auto &f : scene.frames) {
        const std::string image = "images/" + f.name + ".png";
        const std::string depth = "depth/" + f.name + ".png";
        write_png_rgb(dir / image, f.image);
        write_png_depth(dir / depth, f.depth);
        nlohmann::json j = camera_to_json(f.camera);
        j["name"] = f.name;
        j["image"] = image;
        j["depth"] = depth;
        frames.push_back(std::move(j));
    }
    write_json_file(dir / "scene.json", {{"schema_version", 1}, {"frames", frames}});
}

} // namespace splatcore

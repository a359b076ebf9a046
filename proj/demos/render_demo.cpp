// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

// Generates a random scene, renders every camera and writes the frames,
// their depth and the ground-truth cloud to a directory.

#include "splatcore/splatcore.hpp"

#include <iostream>

int main(int argc, char **argv) {
    using namespace splatcore;
    const std::filesystem::path out = argc > 1 ? argv[1] : "render_demo_out";
    SyntheticSceneSpec spec;
    spec.seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 0;
    spec.n_gaussians = 1500;
    try {
        const SyntheticScene s = generate_scene(spec);
        save_scene(s.scene, out);
        write_ply(s.ground_truth, out / "ground_truth.ply");
        const Curation c = curate(s.scene.depth_views(), CurationConfig{});
        write_json_file(out / "pairs.json", to_json(c));
        std::cout << "wrote " << s.scene.frames.size() << " frames and " << c.pairs.size() << " context pairs to "
                  << out.string() << "\n";
    } catch (const Error &e) {
        std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#pragma once

#include <filesystem>
#include <string>

#include "slr/landmark.hpp"

namespace slr_test {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path make_temp_dir(const std::string& tag) {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / ("slr_unit_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// A fully-present frame with distinct, deterministic coordinates per landmark.
inline slr::LandmarkFrame full_frame(double phase = 0.0) {
    slr::LandmarkFrame frame;
    for (int i = 0; i < slr::kLandmarksPerFrame; ++i) {
        slr::Landmark& lm = frame.at(i);
        lm.x = 0.25 + 0.001 * i + phase;
        lm.y = 0.35 + 0.002 * i + phase;
        lm.d = -0.05 + 0.0005 * i;
        lm.present = true;
    }
    return frame;
}

inline slr::Clip small_clip(int frames = 3) {
    slr::Clip clip;
    clip.meta.signer_id = "S00";
    clip.meta.word_id = "W000";
    for (int t = 0; t < frames; ++t) clip.frames.push_back(full_frame(0.01 * t));
    return clip;
}

}  // namespace slr_test

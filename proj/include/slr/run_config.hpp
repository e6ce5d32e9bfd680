#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "slr/encoding.hpp"
#include "slr/model.hpp"
#include "slr/training.hpp"

namespace slr {

// Training run description. Parsed strictly: unknown keys anywhere in the
// document are rejected, and the echoed form materializes every default.
struct RunConfig {
    EncodingConfig encoding;
    ModelConfig model;        // n_classes ignored on input; derived from data
    TrainConfig train;
    SplitSpec split;
    std::string manifest;     // path to manifest CSV
    std::string encoded_dir;  // optional on-disk cache of encoded clips
    std::string output_dir;   // artifacts land here
    std::uint64_t seed = 0;   // master seed; fills train/split seeds when they are unset

    void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string run_config_json(const RunConfig& config);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace slr

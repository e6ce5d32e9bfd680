#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "slr/landmark.hpp"

namespace slr {

enum class EncodingMode { raw, rqe, rqe_sf };

std::string_view encoding_mode_name(EncodingMode m);
EncodingMode encoding_mode_from_name(std::string_view name);

enum class FlipPolicy { off, auto_detect, force };

std::string_view flip_policy_name(FlipPolicy p);
FlipPolicy flip_policy_from_name(std::string_view name);

struct QuantLevels {
    int x = 10;
    int y = 10;
    int d = 10;
};

struct EncodingConfig {
    EncodingMode mode = EncodingMode::rqe;
    QuantLevels levels;
    double clamp_range = 1.0;  // offsets clamped to [-R, R]
    FlipPolicy flip = FlipPolicy::off;
    bool lower_body_fixed = true;

    void validate() const;
};

// Origin and scale pair taken from the first frame where both shoulders and
// both hips are present.
struct ReferenceFrame {
    double mid_x = 0.0;
    double mid_y = 0.0;
    double mid_d = 0.0;
    double shoulder_width = 0.0;  // W0, (x, y) plane
    double torso_length = 0.0;    // T0, mid-shoulder to mid-hip, (x, y) plane
    int reference_index = 0;
};

struct EncodedClip {
    ClipMetadata meta;
    int frames = 0;
    std::vector<float> matrix;  // frames x kFeatureDim, row-major
    EncodingConfig config;
    bool flipped = false;

    float at(int t, int c) const { return matrix[static_cast<std::size_t>(t) * kFeatureDim + c]; }
};

ReferenceFrame compute_reference(const Clip& clip);

// Anchored offsets in the same 33/21/21 layout as the source frame. A missing
// landmark, or one whose direct anchor is missing, yields (0, 0, 0) with
// present=false. Offset x and d are divided by W0, y by T0.
using RelativeFrame = LandmarkFrame;

RelativeFrame anchor_frame(const LandmarkFrame& frame, const ReferenceFrame& ref);

struct Quantized {
    int bin = 0;
    double encoded = 0.0;
};

// Uniform quantizer over [-R, R] with Q bins. Exact zero bypasses binning and
// encodes to 0.0 (the neutral missing/at-anchor code); everything else clamps
// and maps to its bin center.
Quantized quantize(double v, int levels, double clamp_range);

enum class Hand { left, right };

// Dominant hand = pose wrist with the larger total inter-frame (x, y) path
// length over its present frames; ties go right.
Hand detect_dominant_hand(const Clip& clip);

// Mirror: x -> 1 - x, swap hand arrays, swap the paired pose indices.
Clip flip_clip(const Clip& clip);

EncodedClip encode_clip(const Clip& clip, const EncodingConfig& config);

// "RQE1" magic, u32 frame count, u32 width (224), then row-major f32 values,
// all little-endian.
void save_rqe(const EncodedClip& clip, const std::filesystem::path& path);

struct EncodedMatrix {
    int frames = 0;
    std::vector<float> matrix;
};

EncodedMatrix load_rqe(const std::filesystem::path& path);

// Canonical JSON form of an encoding configuration; byte-stable, so it doubles
// as the compatibility stamp for on-disk encoded caches.
std::string encoding_config_json(const EncodingConfig& config);

}  // namespace slr

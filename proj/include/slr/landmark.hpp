#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slr {

inline constexpr int kPoseCount = 33;
inline constexpr int kHandCount = 21;
inline constexpr int kLandmarksPerFrame = kPoseCount + 2 * kHandCount;  // 75
// 33 pose triples minus the final depth value, plus both hands: 98 + 63 + 63.
inline constexpr int kFeatureDim = 224;

// MediaPipe 33-point pose indices used by the anchoring chain.
namespace pose_idx {
inline constexpr int nose = 0;
inline constexpr int left_shoulder = 11;
inline constexpr int right_shoulder = 12;
inline constexpr int left_elbow = 13;
inline constexpr int right_elbow = 14;
inline constexpr int left_wrist = 15;
inline constexpr int right_wrist = 16;
inline constexpr int left_hip = 23;
inline constexpr int right_hip = 24;
inline constexpr int left_knee = 25;
inline constexpr int right_knee = 26;
inline constexpr int left_ankle = 27;
inline constexpr int right_ankle = 28;
inline constexpr int left_heel = 29;
inline constexpr int right_heel = 30;
inline constexpr int left_foot = 31;
inline constexpr int right_foot = 32;
}  // namespace pose_idx

struct Landmark {
    double x = 0.0;
    double y = 0.0;
    double d = 0.0;
    bool present = false;
};

// Coordinates of missing landmarks are ignored.
bool landmark_equal(const Landmark& a, const Landmark& b);

struct LandmarkFrame {
    std::array<Landmark, kPoseCount> pose{};
    std::array<Landmark, kHandCount> left_hand{};
    std::array<Landmark, kHandCount> right_hand{};

    // Flattening-order access: pose 0-32, left hand 0-20, right hand 0-20.
    const Landmark& at(int index) const;
    Landmark& at(int index);
};

bool frame_equal(const LandmarkFrame& a, const LandmarkFrame& b);

enum class View { front, lateral };

std::string_view view_name(View v);
View view_from_name(std::string_view name);

struct ClipMetadata {
    std::string signer_id;
    std::string word_id;
    View view = View::front;
    std::optional<double> source_fps;
};

struct Clip {
    ClipMetadata meta;
    std::vector<LandmarkFrame> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

bool clip_equal(const Clip& a, const Clip& b);

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct ManifestEntry {
    std::string clip_path;  // relative to the manifest's directory
    std::string signer_id;
    std::string word_id;
    View view = View::front;
    std::optional<Split> split;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.clip_path; }
};

using FeatureVector = std::array<float, kFeatureDim>;

// First flattened channel of landmark `index` (flattening order). Pose 32
// contributes (x, y) only; every other landmark contributes (x, y, d).
int channel_base(int index);
int channel_count(int index);

Clip parse_clip(std::string_view json_text);
std::string serialize_clip(const Clip& clip);

Clip load_clip(const std::filesystem::path& path);
void save_clip(const Clip& clip, const std::filesystem::path& path);

FeatureVector flatten_frame(const LandmarkFrame& frame);

// Verifies path uniqueness and that every referenced file exists.
Manifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& csv_path);

}  // namespace slr

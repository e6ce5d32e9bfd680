#include "slr/encoding.hpp"

#include <cmath>
#include <cstring>

#include "json.hpp"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"

namespace slr {

std::string_view encoding_mode_name(EncodingMode m) {
    switch (m) {
        case EncodingMode::raw: return "raw";
        case EncodingMode::rqe: return "rqe";
        default: return "rqe-sf";
    }
}

EncodingMode encoding_mode_from_name(std::string_view name) {
    if (name == "raw") return EncodingMode::raw;
    if (name == "rqe") return EncodingMode::rqe;
    if (name == "rqe-sf" || name == "rqe_sf") return EncodingMode::rqe_sf;
    throw UsageError("unknown encoding mode '" + std::string(name) + "'");
}

std::string_view flip_policy_name(FlipPolicy p) {
    switch (p) {
        case FlipPolicy::off: return "off";
        case FlipPolicy::auto_detect: return "auto";
        default: return "force";
    }
}

FlipPolicy flip_policy_from_name(std::string_view name) {
    if (name == "off") return FlipPolicy::off;
    if (name == "auto" || name == "auto_detect") return FlipPolicy::auto_detect;
    if (name == "force") return FlipPolicy::force;
    throw UsageError("unknown flip policy '" + std::string(name) + "'");
}

void EncodingConfig::validate() const {
    if (levels.x < 2 || levels.y < 2 || levels.d < 2)
        throw UsageError("quantization levels must be >= 2 per axis");
    if (!(clamp_range > 0.0)) throw UsageError("clamp_range must be positive");
}

ReferenceFrame compute_reference(const Clip& clip) {
    for (int t = 0; t < clip.frame_count(); ++t) {
        const auto& pose = clip.frames[t].pose;
        const Landmark& ls = pose[pose_idx::left_shoulder];
        const Landmark& rs = pose[pose_idx::right_shoulder];
        const Landmark& lh = pose[pose_idx::left_hip];
        const Landmark& rh = pose[pose_idx::right_hip];
        if (!ls.present || !rs.present || !lh.present || !rh.present) continue;
        ReferenceFrame ref;
        ref.mid_x = (ls.x + rs.x) / 2.0;
        ref.mid_y = (ls.y + rs.y) / 2.0;
        ref.mid_d = (ls.d + rs.d) / 2.0;
        ref.shoulder_width = std::hypot(ls.x - rs.x, ls.y - rs.y);
        const double hip_x = (lh.x + rh.x) / 2.0;
        const double hip_y = (lh.y + rh.y) / 2.0;
        ref.torso_length = std::hypot(ref.mid_x - hip_x, ref.mid_y - hip_y);
        ref.reference_index = t;
        if (ref.shoulder_width == 0.0 || ref.torso_length == 0.0)
            throw DegenerateReference("reference frame " + std::to_string(t) +
                                      " has zero shoulder width or torso length");
        return ref;
    }
    throw NoReferenceFrame("no frame has both shoulders and both hips present");
}

namespace {

// Direct anchor of each landmark in flattening order; -1 anchors to the
// reference mid-shoulder point.
constexpr int kRefAnchor = -1;

int anchor_index(int i) {
    using namespace pose_idx;
    if (i <= 10) return kRefAnchor;                       // face
    if (i == left_shoulder || i == right_shoulder) return kRefAnchor;
    if (i == left_elbow) return left_shoulder;
    if (i == right_elbow) return right_shoulder;
    if (i == left_wrist) return left_elbow;
    if (i == right_wrist) return right_elbow;
    if (i == 17 || i == 19 || i == 21) return left_wrist;   // pose-hand, left
    if (i == 18 || i == 20 || i == 22) return right_wrist;  // pose-hand, right
    if (i == left_hip || i == right_hip) return kRefAnchor;
    if (i == left_knee) return left_hip;
    if (i == right_knee) return right_hip;
    if (i == left_ankle) return left_knee;
    if (i == right_ankle) return right_knee;
    if (i == left_heel || i == left_foot) return left_ankle;
    if (i == right_heel || i == right_foot) return right_ankle;
    if (i == kPoseCount) return left_wrist;                    // left hand 0
    if (i < kPoseCount + kHandCount) return kPoseCount;        // left hand 1..20
    if (i == kPoseCount + kHandCount) return right_wrist;      // right hand 0
    return kPoseCount + kHandCount;                            // right hand 1..20
}

}  // namespace

RelativeFrame anchor_frame(const LandmarkFrame& frame, const ReferenceFrame& ref) {
    RelativeFrame out{};
    for (int i = 0; i < kLandmarksPerFrame; ++i) {
        const Landmark& lm = frame.at(i);
        if (!lm.present) continue;
        double ax, ay, ad;
        const int a = anchor_index(i);
        if (a == kRefAnchor) {
            ax = ref.mid_x;
            ay = ref.mid_y;
            ad = ref.mid_d;
        } else {
            const Landmark& al = frame.at(a);
            if (!al.present) continue;  // missing anchor makes the offset missing
            ax = al.x;
            ay = al.y;
            ad = al.d;
        }
        Landmark& o = out.at(i);
        o.x = (lm.x - ax) / ref.shoulder_width;
        o.y = (lm.y - ay) / ref.torso_length;
        o.d = (lm.d - ad) / ref.shoulder_width;
        o.present = true;
    }
    return out;
}

Quantized quantize(double v, int levels, double clamp_range) {
    const int q = levels;
    const double r = clamp_range;
    if (v == 0.0) return {std::min(q - 1, q / 2), 0.0};
    const double vc = std::min(std::max(v, -r), r);
    int bin = static_cast<int>(std::floor((vc + r) * q / (2.0 * r)));
    if (bin < 0) bin = 0;
    if (bin > q - 1) bin = q - 1;
    // Equals -R + (bin + 0.5) * 2R/Q, written so negating the bin index
    // negates the encoded value exactly.
    const double encoded = static_cast<double>(2 * bin + 1 - q) * (r / q);
    return {bin, encoded};
}

Hand detect_dominant_hand(const Clip& clip) {
    auto wrist_path = [&clip](int wrist) -> std::pair<double, int> {
        double len = 0.0;
        int count = 0;
        double px = 0.0, py = 0.0;
        for (const LandmarkFrame& frame : clip.frames) {
            const Landmark& lm = frame.pose[wrist];
            if (!lm.present) continue;
            if (count > 0) len += std::hypot(lm.x - px, lm.y - py);
            px = lm.x;
            py = lm.y;
            ++count;
        }
        return {len, count};
    };
    const auto [left_len, left_n] = wrist_path(pose_idx::left_wrist);
    const auto [right_len, right_n] = wrist_path(pose_idx::right_wrist);
    if (left_n < 2 && right_n < 2)
        throw NoWristMotion("neither wrist is present in at least two frames");
    const double ll = left_n >= 2 ? left_len : 0.0;
    const double rl = right_n >= 2 ? right_len : 0.0;
    return ll > rl ? Hand::left : Hand::right;
}

Clip flip_clip(const Clip& clip) {
    static constexpr int kPairs[16][2] = {{1, 4},   {2, 5},   {3, 6},   {7, 8},
                                          {9, 10},  {11, 12}, {13, 14}, {15, 16},
                                          {17, 18}, {19, 20}, {21, 22}, {23, 24},
                                          {25, 26}, {27, 28}, {29, 30}, {31, 32}};
    auto mirror = [](const Landmark& lm) {
        return lm.present ? Landmark{1.0 - lm.x, lm.y, lm.d, true} : Landmark{};
    };
    Clip out;
    out.meta = clip.meta;
    out.frames.resize(clip.frames.size());
    for (std::size_t t = 0; t < clip.frames.size(); ++t) {
        const LandmarkFrame& src = clip.frames[t];
        LandmarkFrame& dst = out.frames[t];
        dst.pose[0] = mirror(src.pose[0]);
        for (const auto& pr : kPairs) {
            dst.pose[pr[0]] = mirror(src.pose[pr[1]]);
            dst.pose[pr[1]] = mirror(src.pose[pr[0]]);
        }
        for (int j = 0; j < kHandCount; ++j) {
            dst.left_hand[j] = mirror(src.right_hand[j]);
            dst.right_hand[j] = mirror(src.left_hand[j]);
        }
    }
    return out;
}

namespace {

void zero_landmark_channels(std::vector<float>& matrix, int frames, int landmark) {
    const int base = channel_base(landmark);
    const int count = channel_count(landmark);
    for (int t = 0; t < frames; ++t) {
        float* row = matrix.data() + static_cast<std::size_t>(t) * kFeatureDim;
        for (int c = 0; c < count; ++c) row[base + c] = 0.0f;
    }
}

}  // namespace

EncodedClip encode_clip(const Clip& clip, const EncodingConfig& config) {
    config.validate();
    if (clip.frames.empty()) throw DataError("clip has no frames");

    bool flipped = false;
    Clip flipped_clip;
    const Clip* source = &clip;
    if (config.flip == FlipPolicy::force ||
        (config.flip == FlipPolicy::auto_detect && detect_dominant_hand(clip) == Hand::left)) {
        flipped_clip = flip_clip(clip);
        source = &flipped_clip;
        flipped = true;
    }

    EncodedClip out;
    out.meta = clip.meta;
    out.frames = clip.frame_count();
    out.config = config;
    out.flipped = flipped;
    out.matrix.assign(static_cast<std::size_t>(out.frames) * kFeatureDim, 0.0f);

    if (config.mode == EncodingMode::raw) {
        for (int t = 0; t < out.frames; ++t) {
            const FeatureVector fv = flatten_frame(source->frames[t]);
            std::memcpy(out.matrix.data() + static_cast<std::size_t>(t) * kFeatureDim, fv.data(),
                        sizeof(float) * kFeatureDim);
        }
    } else {
        const ReferenceFrame ref = compute_reference(*source);
        for (int t = 0; t < out.frames; ++t) {
            const RelativeFrame rel = anchor_frame(source->frames[t], ref);
            float* row = out.matrix.data() + static_cast<std::size_t>(t) * kFeatureDim;
            for (int i = 0; i < kLandmarksPerFrame; ++i) {
                const Landmark& lm = rel.at(i);
                if (!lm.present) continue;  // channels stay exactly 0
                const int base = channel_base(i);
                row[base] = static_cast<float>(quantize(lm.x, config.levels.x, config.clamp_range).encoded);
                row[base + 1] =
                    static_cast<float>(quantize(lm.y, config.levels.y, config.clamp_range).encoded);
                if (channel_count(i) == 3)
                    row[base + 2] =
                        static_cast<float>(quantize(lm.d, config.levels.d, config.clamp_range).encoded);
            }
        }
        if (config.mode == EncodingMode::rqe_sf) {
            zero_landmark_channels(out.matrix, out.frames, pose_idx::left_shoulder);
            zero_landmark_channels(out.matrix, out.frames, pose_idx::right_shoulder);
        }
    }

    if (config.lower_body_fixed)
        for (int i = pose_idx::left_hip; i <= pose_idx::right_foot; ++i)
            zero_landmark_channels(out.matrix, out.frames, i);

    return out;
}

void save_rqe(const EncodedClip& clip, const std::filesystem::path& path) {
    std::string out;
    out.reserve(12 + clip.matrix.size() * 4);
    out += "RQE1";
    put_u32(out, static_cast<std::uint32_t>(clip.frames));
    put_u32(out, kFeatureDim);
    for (float v : clip.matrix) put_f32(out, v);
    write_file_atomic(path, out);
}

EncodedMatrix load_rqe(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    ByteReader reader{content, 0};
    try {
        if (reader.take(4) != "RQE1") throw DataError("bad magic");
        const std::uint32_t frames = reader.u32();
        const std::uint32_t width = reader.u32();
        if (frames == 0) throw DataError("zero frames");
        if (width != kFeatureDim)
            throw DataError("width " + std::to_string(width) + ", expected " +
                            std::to_string(kFeatureDim));
        EncodedMatrix m;
        m.frames = static_cast<int>(frames);
        m.matrix.resize(static_cast<std::size_t>(frames) * kFeatureDim);
        for (float& v : m.matrix) v = reader.f32();
        if (!reader.done()) throw DataError("trailing bytes");
        return m;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string encoding_config_json(const EncodingConfig& config) {
    nlohmann::ordered_json doc;
    doc["mode"] = std::string(encoding_mode_name(config.mode));
    doc["levels"] = {{"x", config.levels.x}, {"y", config.levels.y}, {"d", config.levels.d}};
    doc["clamp_range"] = config.clamp_range;
    doc["flip"] = std::string(flip_policy_name(config.flip));
    doc["lower_body_fixed"] = config.lower_body_fixed;
    return doc.dump(2) + "\n";
}

}  // namespace slr

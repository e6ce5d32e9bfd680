#include "slr/synthetic.hpp"

#include <array>
#include <cmath>
#include <string>

#include "slr/encoding.hpp"
#include "slr/errors.hpp"
#include "slr/rng.hpp"

namespace slr {

namespace {

constexpr std::uint64_t kTagSigner = 1;
constexpr std::uint64_t kTagClass = 2;
constexpr std::uint64_t kTagTrial = 3;
constexpr std::uint64_t kTagClip = 4;

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double d = 0.0;
};

// Upright rest skeleton, mirror-symmetric about x = 0.5. Shoulder width 0.2,
// torso length 0.32. "left_*" landmarks are the subject's left (image right
// by MediaPipe convention, but only symmetry matters here).
std::array<Vec3, kPoseCount> rest_pose() {
    std::array<Vec3, kPoseCount> p{};
    auto pair = [&p](int left, int right, double dx, double y, double d) {
        p[left] = {0.5 + dx, y, d};
        p[right] = {0.5 - dx, y, d};
    };
    p[0] = {0.5, 0.16, -0.05};          // nose
    pair(1, 4, 0.020, 0.140, -0.040);   // eye inner
    pair(2, 5, 0.035, 0.140, -0.040);   // eye
    pair(3, 6, 0.050, 0.140, -0.040);   // eye outer
    pair(7, 8, 0.075, 0.150, 0.000);    // ear
    pair(9, 10, 0.020, 0.190, -0.030);  // mouth
    pair(11, 12, 0.100, 0.300, 0.000);  // shoulder
    pair(13, 14, 0.140, 0.450, -0.010); // elbow
    pair(15, 16, 0.160, 0.580, -0.020); // wrist
    pair(17, 18, 0.175, 0.620, -0.025); // pose pinky
    pair(19, 20, 0.165, 0.630, -0.030); // pose index
    pair(21, 22, 0.150, 0.615, -0.025); // pose thumb
    pair(23, 24, 0.060, 0.620, 0.000);  // hip
    pair(25, 26, 0.055, 0.780, 0.000);  // knee
    pair(27, 28, 0.050, 0.920, 0.010);  // ankle
    pair(29, 30, 0.055, 0.945, 0.015);  // heel
    pair(31, 32, 0.045, 0.965, -0.005); // foot index
    return p;
}

// Canonical hand layout relative to the hand's own wrist point, fingers
// pointing down, in units of one hand length. x offsets are for the
// subject's right hand; the left hand mirrors them.
std::array<Vec3, kHandCount> hand_layout() {
    std::array<Vec3, kHandCount> h{};
    h[0] = {0.00, 0.00, 0.000};
    // thumb
    h[1] = {-0.25, 0.10, -0.010};
    h[2] = {-0.45, 0.22, -0.015};
    h[3] = {-0.60, 0.35, -0.020};
    h[4] = {-0.72, 0.47, -0.025};
    // index
    h[5] = {-0.20, 0.55, 0.000};
    h[6] = {-0.25, 0.75, -0.005};
    h[7] = {-0.28, 0.92, -0.010};
    h[8] = {-0.30, 1.05, -0.015};
    // middle
    h[9] = {0.00, 0.58, 0.000};
    h[10] = {0.00, 0.80, -0.005};
    h[11] = {0.00, 0.98, -0.010};
    h[12] = {0.00, 1.12, -0.015};
    // ring
    h[13] = {0.18, 0.55, 0.000};
    h[14] = {0.22, 0.75, -0.005};
    h[15] = {0.25, 0.90, -0.010};
    h[16] = {0.27, 1.02, -0.015};
    // pinky
    h[17] = {0.34, 0.48, 0.000};
    h[18] = {0.40, 0.64, -0.005};
    h[19] = {0.44, 0.76, -0.010};
    h[20] = {0.47, 0.86, -0.015};
    return h;
}

constexpr double kHandSize = 0.08;

struct ClassMotion {
    double tx = 0.0, ty = 0.0;     // gesture target: wrist displacement at full hold
    double ad = 0.0, pd = 0.0;     // depth wobble amplitude and phase
    std::array<double, 5> curl{};  // per-finger curl during the hold, 0 = straight
};

// Classes are coded combinatorially: a 3x3 grid of wrist targets (chosen so
// the held offsets land on quantizer bin centers after anchoring, several
// bins apart) crossed with a binary per-finger curl pattern taken from the
// class bits. Any two classes differ in the grid cell or in at least one
// finger, and random fine detail is layered on top.
ClassMotion make_class_motion(std::uint64_t seed, int cls) {
    Rng rng(mix_seed({seed, kTagClass, static_cast<std::uint64_t>(cls)}));
    static constexpr double kTargetX[3] = {0.073, 0.145, 0.218};  // inward
    static constexpr double kTargetY[3] = {0.062, 0.178, 0.295};  // upward
    ClassMotion m;
    m.tx = kTargetX[cls % 3] * rng.uniform(0.98, 1.02);
    m.ty = kTargetY[(cls / 3) % 3] * rng.uniform(0.98, 1.02);
    m.ad = rng.uniform(0.02, 0.05);
    m.pd = rng.uniform(0.0, kTwoPi);
    for (int f = 0; f < 5; ++f)
        m.curl[f] = ((cls >> f) & 1 ? 0.85 : 0.08) + rng.uniform(-0.02, 0.02);
    return m;
}

struct TrialVariation {
    int frames = 0;
    double gain = 1.0;  // amplitude factor
};

TrialVariation make_trial_variation(const SynthConfig& config, std::uint64_t seed, int cls, int trial) {
    Rng rng(mix_seed({seed, kTagTrial, static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(trial)}));
    TrialVariation tv;
    tv.frames = static_cast<int>(rng.uniform_int(config.frames_min, config.frames_max));
    tv.gain = rng.uniform(0.96, 1.04);
    return tv;
}

void place_hand(LandmarkFrame& frame, bool left_side, const Vec3& pose_wrist,
                const std::array<Vec3, kHandCount>& layout, const std::array<double, 5>& curl) {
    const double side = left_side ? -1.0 : 1.0;  // left hand mirrors x offsets
    const Vec3 base{pose_wrist.x + side * -0.005, pose_wrist.y + 0.012, pose_wrist.d - 0.005};
    auto& hand = left_side ? frame.left_hand : frame.right_hand;
    hand[0] = {base.x, base.y, base.d, true};
    for (int f = 0; f < 5; ++f) {
        for (int k = 1; k <= 4; ++k) {
            const int idx = 1 + 4 * f + (k - 1);
            const double shorten = 1.0 - curl[f] * (static_cast<double>(k) / 4.0);
            const Vec3& off = layout[idx];
            hand[idx] = {base.x + side * off.x * kHandSize * shorten,
                         base.y + off.y * kHandSize * shorten,
                         base.d + off.d + curl[f] * k * 0.004,
                         true};
        }
    }
}

// The gesture occupies u in [0.3, 0.7) of the clip; outside it the skeleton
// holds the rest pose, so the informative frames sit in the clip's middle.
// Within the window the arm ramps to the class target, holds it, and ramps
// back (a plateau), so the held posture dominates the active frames. The
// displacement pulls the gesturing arm inward and upward, keeping every
// landmark away from the [0, 1] image border for any supported signer scale.
std::vector<LandmarkFrame> render_base(const ClassMotion& m, const TrialVariation& tv) {
    const std::array<Vec3, kPoseCount> rest = rest_pose();
    const std::array<Vec3, kHandCount> layout = hand_layout();
    std::vector<LandmarkFrame> frames(tv.frames);
    for (int t = 0; t < tv.frames; ++t) {
        LandmarkFrame& frame = frames[t];
        const double u = (t + 0.5) / tv.frames;
        Vec3 disp{};
        double hold = 0.0;
        if (u >= 0.3 && u < 0.7) {
            const double v = (u - 0.3) / 0.4;
            if (v < 0.25) {
                const double s = std::sin(kTwoPi * v);  // ramp up over [0, 0.25)
                hold = s * s;
            } else if (v < 0.75) {
                hold = 1.0;
            } else {
                const double s = std::sin(kTwoPi * (1.0 - v));
                hold = s * s;
            }
            disp.x = tv.gain * m.tx * hold;   // inward: toward the body midline
            disp.y = -tv.gain * m.ty * hold;  // upward: toward the shoulders
            disp.d = tv.gain * m.ad * hold * std::sin(kTwoPi * v + m.pd);
        }
        std::array<Vec3, kPoseCount> pose = rest;
        auto add = [&pose](int i, const Vec3& v, double w) {
            pose[i].x += w * v.x;
            pose[i].y += w * v.y;
            pose[i].d += w * v.d;
        };
        // The subject's right arm carries the gesture; the elbow follows at
        // reduced amplitude and the pose-hand points track the wrist.
        add(pose_idx::right_wrist, disp, 1.0);
        add(pose_idx::right_elbow, disp, 0.45);
        add(18, disp, 1.0);
        add(20, disp, 1.0);
        add(22, disp, 1.0);
        for (int i = 0; i < kPoseCount; ++i)
            frame.pose[i] = {pose[i].x, pose[i].y, pose[i].d, true};
        // Fingers articulate with the gesture: curls ramp with the hold,
        // so outside the active window every class shares the rest hand.
        std::array<double, 5> curl{};
        for (int f = 0; f < 5; ++f) curl[f] = m.curl[f] * hold;
        place_hand(frame, true, pose[pose_idx::left_wrist], layout, {});
        place_hand(frame, false, pose[pose_idx::right_wrist], layout, curl);
    }
    return frames;
}

// Snaps to the 2^-53 grid so x -> 1 - x is exactly invertible; mirrored
// clips then match their originals bit-for-bit after flipping back.
double snap53(double x) {
    return std::round(x * 0x1.0p53) * 0x1.0p-53;
}

std::string pad_num(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

bool dropout_exempt(int landmark_index) {
    return landmark_index == pose_idx::left_shoulder || landmark_index == pose_idx::right_shoulder ||
           landmark_index == pose_idx::left_hip || landmark_index == pose_idx::right_hip;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_classes < 1) throw UsageError("n_classes must be >= 1");
    if (n_signers < 1) throw UsageError("n_signers must be >= 1");
    if (trials_per_pair < 1) throw UsageError("trials_per_pair must be >= 1");
    if (frames_min < 2) throw UsageError("frames_min must be >= 2");
    if (frames_max < frames_min) throw UsageError("frames_max must be >= frames_min");
    if (!(scale_min > 0.0) || scale_max < scale_min)
        throw UsageError("scale range must satisfy 0 < scale_min <= scale_max");
    if (translation_max < 0.0) throw UsageError("translation_max must be >= 0");
    if (jitter_std < 0.0) throw UsageError("jitter_std must be >= 0");
    if (missing_prob < 0.0 || missing_prob >= 1.0) throw UsageError("missing_prob must be in [0, 1)");
    if (left_handed_prob < 0.0 || left_handed_prob > 1.0)
        throw UsageError("left_handed_prob must be in [0, 1]");
}

SynthResult generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    SynthResult result;
    result.manifest.base_dir = ".";

    for (int s = 0; s < config.n_signers; ++s) {
        Rng persona(mix_seed({seed, kTagSigner, static_cast<std::uint64_t>(s)}));
        const double scale = persona.uniform(config.scale_min, config.scale_max);
        const double tx = persona.uniform(-config.translation_max, config.translation_max);
        const double ty = persona.uniform(-config.translation_max, config.translation_max);
        const double dz = persona.uniform(-0.02, 0.02);
        const bool left_handed = persona.bernoulli(config.left_handed_prob);
        const std::string signer_id = "S" + pad_num(s, 2);

        for (int c = 0; c < config.n_classes; ++c) {
            const ClassMotion motion = make_class_motion(seed, c);
            const std::string word_id = "W" + pad_num(c, 3);
            for (int r = 0; r < config.trials_per_pair; ++r) {
                const TrialVariation tv = make_trial_variation(config, seed, c, r);
                const std::vector<LandmarkFrame> base = render_base(motion, tv);
                Rng noise(mix_seed({seed, kTagClip, static_cast<std::uint64_t>(s),
                                    static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(r)}));

                Clip clip;
                clip.meta.signer_id = signer_id;
                clip.meta.word_id = word_id;
                clip.meta.view = View::front;
                clip.frames.resize(base.size());
                for (std::size_t t = 0; t < base.size(); ++t) {
                    for (int i = 0; i < kLandmarksPerFrame; ++i) {
                        const Landmark& src = base[t].at(i);
                        double x = 0.5 + scale * (src.x - 0.5) + tx;
                        double y = 0.5 + scale * (src.y - 0.5) + ty;
                        double d = scale * src.d + dz;
                        if (config.jitter_std > 0.0) {
                            x += noise.normal(0.0, config.jitter_std);
                            y += noise.normal(0.0, config.jitter_std);
                            d += noise.normal(0.0, config.jitter_std);
                        }
                        x = snap53(std::min(std::max(x, 0.005), 0.995));
                        y = std::min(std::max(y, 0.005), 0.995);
                        Landmark& dst = clip.frames[t].at(i);
                        if (!dropout_exempt(i) && config.missing_prob > 0.0 &&
                            noise.bernoulli(config.missing_prob)) {
                            dst = Landmark{};  // dropped
                        } else {
                            dst = Landmark{x, y, d, true};
                        }
                    }
                }
                if (left_handed) clip = flip_clip(clip);

                ManifestEntry entry;
                entry.clip_path = "clips/" + signer_id + "_" + word_id + "_t" + std::to_string(r) + ".json";
                entry.signer_id = signer_id;
                entry.word_id = word_id;
                entry.view = View::front;
                result.manifest.entries.push_back(std::move(entry));
                result.clips.push_back(std::move(clip));
            }
        }
    }
    return result;
}

}  // namespace slr

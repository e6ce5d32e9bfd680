#pragma once

#include <cstdint>
#include <vector>

#include "slr/landmark.hpp"

namespace slr {

// Multi-signer gesture corpus generator. Classes are parametric right-wrist
// trajectories with class-specific finger articulation; signers differ only
// by an isotropic scale, a translation, per-frame jitter, landmark dropout,
// and an optional left-handed mirror. The base rendering of a (class, trial)
// pair is signer-independent, so zero-jitter clips from two signers are exact
// similarity transforms of each other.
struct SynthConfig {
    int n_classes = 10;
    int n_signers = 3;
    int trials_per_pair = 5;
    int frames_min = 20;
    int frames_max = 40;
    double scale_min = 0.8;
    double scale_max = 1.25;
    double translation_max = 0.1;   // |tx|, |ty| drawn from [-max, max]
    double jitter_std = 0.0;        // per-frame Gaussian noise on every coordinate
    double missing_prob = 0.0;      // per-landmark per-frame dropout
    double left_handed_prob = 0.15; // per-signer mirror probability

    void validate() const;
};

struct SynthResult {
    std::vector<Clip> clips;
    Manifest manifest;  // clip_path = "clips/<signer>_<word>_t<trial>.json", split unset
};

SynthResult generate_synthetic(const SynthConfig& config, std::uint64_t seed);

}  // namespace slr

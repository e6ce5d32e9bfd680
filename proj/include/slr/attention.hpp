#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slr/encoding.hpp"
#include "slr/model.hpp"

namespace slr {

// Mean over layers and heads of the per-head attention matrices:
// A_mean(t, u) = 1/(L*H) * sum_l sum_h A_lh(t, u). Size frames x frames.
Mat mean_attention(const AttentionTensor& attention);

struct FrameAttentionProfile {
    std::string clip_id;
    std::vector<double> score;        // per frame; masked frames score 0
    std::vector<std::uint8_t> mask;   // echo of the validity mask, 1 = real

    int frames() const { return static_cast<int>(score.size()); }
};

// score(u) = mean over unmasked query rows t of mean(t, u); masked frames get
// 0. Each unmasked row of `mean` sums to 1 over unmasked columns, so the
// profile sums to 1 across unmasked frames. Empty mask means all frames real.
FrameAttentionProfile per_frame_scores(const Mat& mean,
                                       const std::vector<std::uint8_t>& mask = {});

// Runs the model in inference mode on one clip and reduces its attention maps.
FrameAttentionProfile attention_profile(const EncodedMatrix& clip,
                                        const TransformerParameters& params,
                                        const ModelConfig& config);

// CSV with header "frame_index,score"; one row per frame, masked included.
void export_profile(const FrameAttentionProfile& profile, const std::filesystem::path& path);

}  // namespace slr

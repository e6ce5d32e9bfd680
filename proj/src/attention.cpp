#include "slr/attention.hpp"

#include <cstdio>

#include "slr/errors.hpp"
#include "slr/io_util.hpp"

namespace slr {

Mat mean_attention(const AttentionTensor& attention) {
    if (attention.layers < 1 || attention.heads < 1 || attention.frames < 1)
        throw DataError("empty attention tensor");
    const int t = attention.frames;
    Mat mean(t, t);
    const double scale = 1.0 / (static_cast<double>(attention.layers) * attention.heads);
    for (int l = 0; l < attention.layers; ++l)
        for (int h = 0; h < attention.heads; ++h) {
            const double* w = attention.w.data() +
                              (static_cast<std::size_t>(l) * attention.heads + h) * t * t;
            for (std::size_t i = 0; i < mean.a.size(); ++i) mean.a[i] += w[i] * scale;
        }
    return mean;
}

FrameAttentionProfile per_frame_scores(const Mat& mean, const std::vector<std::uint8_t>& mask) {
    if (mean.rows != mean.cols || mean.rows < 1) throw DataError("attention mean must be square");
    if (!mask.empty() && static_cast<int>(mask.size()) != mean.rows)
        throw DataError("mask length does not match attention size");
    FrameAttentionProfile profile;
    profile.mask = mask.empty() ? std::vector<std::uint8_t>(mean.rows, 1) : mask;
    profile.score.assign(mean.rows, 0.0);
    int valid = 0;
    for (std::uint8_t m : profile.mask) valid += m ? 1 : 0;
    if (valid == 0) throw DataError("mask has no valid frames");
    for (int u = 0; u < mean.cols; ++u) {
        if (!profile.mask[u]) continue;
        double sum = 0.0;
        for (int t = 0; t < mean.rows; ++t)
            if (profile.mask[t]) sum += mean.at(t, u);
        profile.score[u] = sum / valid;
    }
    return profile;
}

FrameAttentionProfile attention_profile(const EncodedMatrix& clip,
                                        const TransformerParameters& params,
                                        const ModelConfig& config) {
    if (clip.frames < 1) throw DataError("empty clip");
    if (clip.matrix.size() != static_cast<std::size_t>(clip.frames) * config.input_dim)
        throw DataError("clip width does not match model input_dim");
    Batch batch;
    batch.batch = 1;
    batch.frames = clip.frames;
    batch.width = config.input_dim;
    batch.inputs = clip.matrix;
    batch.mask.assign(clip.frames, 1);
    const ForwardResult fwd = forward(batch, params, config, false, 0, true);
    return per_frame_scores(mean_attention(fwd.attention.front()), batch.mask);
}

void export_profile(const FrameAttentionProfile& profile, const std::filesystem::path& path) {
    std::string out = "frame_index,score\n";
    char line[64];
    for (int t = 0; t < profile.frames(); ++t) {
        std::snprintf(line, sizeof(line), "%d,%.10g\n", t, profile.score[t]);
        out += line;
    }
    write_file_atomic(path, out);
}

}  // namespace slr

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slr/landmark.hpp"

namespace slr {

template <class S>
struct MatT {
    int rows = 0;
    int cols = 0;
    std::vector<S> a;

    MatT() = default;
    MatT(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, S(0)) {}

    S* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const S* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
    S& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    S at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return a.size(); }
};

using Mat = MatT<double>;

struct ModelConfig {
    int input_dim = kFeatureDim;
    int d_model = 224;
    int n_layers = 3;
    int n_heads = 8;
    int d_ff = 0;  // 0 = 4 * d_model
    double dropout = 0.1;
    int n_classes = 0;
    int max_frames = 247;

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const;
};

template <class S>
struct LayerParamsT {
    MatT<S> wq, wk, wv, wo;              // d_model x d_model
    std::vector<S> bq, bk, bv, bo;       // d_model
    std::vector<S> ln1_gain, ln1_bias;   // d_model
    MatT<S> w1;                          // d_model x d_ff
    std::vector<S> b1;                   // d_ff
    MatT<S> w2;                          // d_ff x d_model
    std::vector<S> b2;                   // d_model
    std::vector<S> ln2_gain, ln2_bias;   // d_model
};

template <class S>
struct ParamsT {
    MatT<S> embed_w;             // input_dim x d_model
    std::vector<S> embed_b;      // d_model
    std::vector<LayerParamsT<S>> layers;
    MatT<S> head_w;              // d_model x n_classes
    std::vector<S> head_b;       // n_classes
};

// Learnable state is float32 (matching the checkpoint format exactly); all
// arithmetic upcasts to double.
using TransformerParameters = ParamsT<float>;
using ParameterGradients = ParamsT<double>;

template <class S>
struct TensorRef {
    std::string name;
    std::vector<S>* data;
    int rows;  // rows == 0 marks a 1-D tensor of length cols
    int cols;
};

// Tensors in checkpoint declaration order.
template <class S>
std::vector<TensorRef<S>> tensor_refs(ParamsT<S>& params);

ParamsT<double> zero_grads(const ModelConfig& config);

struct Batch {
    int batch = 0;
    int frames = 0;                // padded length
    std::vector<float> inputs;     // batch x frames x input_dim
    std::vector<std::uint8_t> mask;  // batch x frames, 1 = real frame
    std::vector<int> labels;       // may be empty for inference

    const float* sample(int b) const {
        return inputs.data() + static_cast<std::size_t>(b) * frames * width;
    }
    int width = kFeatureDim;
};

struct AttentionTensor {
    int layers = 0;
    int heads = 0;
    int frames = 0;
    std::vector<double> w;  // [layer][head][query][key]

    double at(int l, int h, int t, int u) const {
        return w[((static_cast<std::size_t>(l) * heads + h) * frames + t) * frames + u];
    }
};

struct ForwardResult {
    std::vector<double> logits;              // batch x n_classes
    std::vector<AttentionTensor> attention;  // per sample; empty unless requested
};

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
Mat sinusoidal_pe(int frames, int dim);

TransformerParameters init_params(const ModelConfig& config, std::uint64_t seed);

ForwardResult forward(const Batch& batch, const TransformerParameters& params,
                      const ModelConfig& config, bool train_mode, std::uint64_t seed,
                      bool want_attention = false);

struct LossAndGrads {
    double loss = 0.0;
    ParameterGradients grads;
};

// Mean cross-entropy over the batch with dropout active; gradients are the
// exact analytic derivatives of that loss.
LossAndGrads loss_and_gradients(const Batch& batch, const TransformerParameters& params,
                                const ModelConfig& config, std::uint64_t seed);

// "SLRTCKPT" magic, u32 version, config fields, then each tensor as
// u32 ndim + u32 dims + f32 data, little-endian throughout.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const TransformerParameters& params);

struct Checkpoint {
    ModelConfig config;
    TransformerParameters params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace slr

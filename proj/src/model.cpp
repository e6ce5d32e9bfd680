#include "slr/model.hpp"

#include <cmath>
#include <cstring>

#include "slr/errors.hpp"
#include "slr/io_util.hpp"
#include "slr/rng.hpp"

namespace slr {

void ModelConfig::validate() const {
    if (input_dim < 1) throw UsageError("input_dim must be positive");
    if (d_model < 2 || d_model % 2 != 0) throw UsageError("d_model must be even and >= 2");
    if (n_layers < 1) throw UsageError("n_layers must be >= 1");
    if (n_heads < 1 || d_model % n_heads != 0)
        throw UsageError("n_heads must be >= 1 and divide d_model");
    if (d_ff < 0) throw UsageError("d_ff must be positive (or 0 for 4 * d_model)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
    if (n_classes < 0) throw UsageError("n_classes must be non-negative");
    if (max_frames < 1) throw UsageError("max_frames must be >= 1");
}

namespace {

constexpr double kLnEps = 1e-5;

template <class S>
ParamsT<S> alloc_params(const ModelConfig& config) {
    const int in = config.input_dim, d = config.d_model, f = config.ff_dim(),
              c = config.n_classes;
    ParamsT<S> p;
    p.embed_w = MatT<S>(in, d);
    p.embed_b.assign(d, S(0));
    p.layers.resize(config.n_layers);
    for (auto& l : p.layers) {
        l.wq = MatT<S>(d, d);
        l.wk = MatT<S>(d, d);
        l.wv = MatT<S>(d, d);
        l.wo = MatT<S>(d, d);
        l.bq.assign(d, S(0));
        l.bk.assign(d, S(0));
        l.bv.assign(d, S(0));
        l.bo.assign(d, S(0));
        l.ln1_gain.assign(d, S(1));
        l.ln1_bias.assign(d, S(0));
        l.w1 = MatT<S>(d, f);
        l.b1.assign(f, S(0));
        l.w2 = MatT<S>(f, d);
        l.b2.assign(d, S(0));
        l.ln2_gain.assign(d, S(1));
        l.ln2_bias.assign(d, S(0));
    }
    p.head_w = MatT<S>(d, c);
    p.head_b.assign(c, S(0));
    return p;
}

}  // namespace

template <class S>
std::vector<TensorRef<S>> tensor_refs(ParamsT<S>& params) {
    std::vector<TensorRef<S>> refs;
    auto mat = [&refs](const std::string& name, MatT<S>& m) {
        refs.push_back({name, &m.a, m.rows, m.cols});
    };
    auto vec = [&refs](const std::string& name, std::vector<S>& v) {
        refs.push_back({name, &v, 0, static_cast<int>(v.size())});
    };
    mat("embed_w", params.embed_w);
    vec("embed_b", params.embed_b);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& l = params.layers[i];
        const std::string prefix = "layer" + std::to_string(i) + ".";
        mat(prefix + "wq", l.wq);
        vec(prefix + "bq", l.bq);
        mat(prefix + "wk", l.wk);
        vec(prefix + "bk", l.bk);
        mat(prefix + "wv", l.wv);
        vec(prefix + "bv", l.bv);
        mat(prefix + "wo", l.wo);
        vec(prefix + "bo", l.bo);
        vec(prefix + "ln1_gain", l.ln1_gain);
        vec(prefix + "ln1_bias", l.ln1_bias);
        mat(prefix + "w1", l.w1);
        vec(prefix + "b1", l.b1);
        mat(prefix + "w2", l.w2);
        vec(prefix + "b2", l.b2);
        vec(prefix + "ln2_gain", l.ln2_gain);
        vec(prefix + "ln2_bias", l.ln2_bias);
    }
    mat("head_w", params.head_w);
    vec("head_b", params.head_b);
    return refs;
}

template std::vector<TensorRef<float>> tensor_refs(ParamsT<float>&);
template std::vector<TensorRef<double>> tensor_refs(ParamsT<double>&);

ParamsT<double> zero_grads(const ModelConfig& config) {
    ParamsT<double> g = alloc_params<double>(config);
    for (auto& ref : tensor_refs(g)) std::fill(ref.data->begin(), ref.data->end(), 0.0);
    return g;
}

Mat sinusoidal_pe(int frames, int dim) {
    if (frames < 1) throw UsageError("positional encoding needs at least one frame");
    if (dim < 2 || dim % 2 != 0) throw UsageError("positional encoding dimension must be even");
    Mat pe(frames, dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        for (int pos = 0; pos < frames; ++pos) {
            pe.at(pos, 2 * i) = std::sin(pos * freq);
            pe.at(pos, 2 * i + 1) = std::cos(pos * freq);
        }
    }
    return pe;
}

TransformerParameters init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    if (config.n_classes < 1) throw UsageError("n_classes must be set before initialization");
    TransformerParameters params = alloc_params<float>(config);
    Rng rng(seed);
    for (auto& ref : tensor_refs(params)) {
        if (ref.rows == 0) continue;  // biases and layer-norm terms keep alloc defaults
        const double bound = 1.0 / std::sqrt(static_cast<double>(ref.rows));
        for (float& w : *ref.data) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    return params;
}

namespace {

// out(m x n) = A(m x k) * B(k x n) + broadcast bias; fixed i-k-j loop order so
// results are bit-reproducible.
void linear(const double* a, const double* w, const double* bias, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* o = out + static_cast<std::size_t>(i) * n;
        if (bias)
            std::memcpy(o, bias, sizeof(double) * n);
        else
            std::fill(o, o + n, 0.0);
        const double* ai = a + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* b = w + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) o[j] += av * b[j];
        }
    }
}

// out(k x n) += A(m x k)^T * B(m x n)
void matmul_tn_acc(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        const double* bi = b + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            double* o = out + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) o[j] += av * bi[j];
        }
    }
}

// out(m x k) += dY(m x n) * W(k x n)^T
void matmul_nt_acc(const double* dy, const double* w, double* out, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* dyi = dy + static_cast<std::size_t>(i) * n;
        double* o = out + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double* wk = w + static_cast<std::size_t>(kk) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += dyi[j] * wk[j];
            o[kk] += s;
        }
    }
}

void add_rows_acc(const double* dy, double* out, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double* dyi = dy + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[j] += dyi[j];
    }
}

ParamsT<double> to_double(const TransformerParameters& params) {
    ParamsT<double> out;
    out.embed_w = MatT<double>(params.embed_w.rows, params.embed_w.cols);
    auto& src = const_cast<TransformerParameters&>(params);
    auto srefs = tensor_refs(src);
    // Allocate matching shapes, then copy elementwise.
    out.embed_b.resize(params.embed_b.size());
    out.layers.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        auto& o = out.layers[i];
        o.wq = MatT<double>(l.wq.rows, l.wq.cols);
        o.wk = MatT<double>(l.wk.rows, l.wk.cols);
        o.wv = MatT<double>(l.wv.rows, l.wv.cols);
        o.wo = MatT<double>(l.wo.rows, l.wo.cols);
        o.bq.resize(l.bq.size());
        o.bk.resize(l.bk.size());
        o.bv.resize(l.bv.size());
        o.bo.resize(l.bo.size());
        o.ln1_gain.resize(l.ln1_gain.size());
        o.ln1_bias.resize(l.ln1_bias.size());
        o.w1 = MatT<double>(l.w1.rows, l.w1.cols);
        o.b1.resize(l.b1.size());
        o.w2 = MatT<double>(l.w2.rows, l.w2.cols);
        o.b2.resize(l.b2.size());
        o.ln2_gain.resize(l.ln2_gain.size());
        o.ln2_bias.resize(l.ln2_bias.size());
    }
    out.head_w = MatT<double>(params.head_w.rows, params.head_w.cols);
    out.head_b.resize(params.head_b.size());
    auto drefs = tensor_refs(out);
    for (std::size_t i = 0; i < srefs.size(); ++i) {
        const auto& s = *srefs[i].data;
        auto& d = *drefs[i].data;
        for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<double>(s[j]);
    }
    return out;
}

void check_batch(const Batch& batch, const ModelConfig& config, bool need_labels) {
    if (batch.batch < 1 || batch.frames < 1) throw DataError("empty batch");
    if (batch.width != config.input_dim) throw DataError("batch width does not match model input_dim");
    if (batch.frames > config.max_frames)
        throw DataError("batch has " + std::to_string(batch.frames) + " frames, model max_frames is " +
                        std::to_string(config.max_frames));
    const std::size_t b = batch.batch, t = batch.frames;
    if (batch.inputs.size() != b * t * static_cast<std::size_t>(batch.width))
        throw DataError("batch inputs size mismatch");
    if (batch.mask.size() != b * t) throw DataError("batch mask size mismatch");
    for (std::size_t i = 0; i < b; ++i) {
        bool any = false;
        for (std::size_t u = 0; u < t; ++u) any = any || batch.mask[i * t + u] != 0;
        if (!any) throw DataError("sample " + std::to_string(i) + " is fully masked");
    }
    if (need_labels) {
        if (batch.labels.size() != b) throw DataError("batch labels size mismatch");
        for (int label : batch.labels)
            if (label < 0 || label >= config.n_classes) throw DataError("label out of range");
    }
}

struct LayerCache {
    std::vector<double> h_in, q, k, v, probs, concat, attn_proj, r1, ln1_xhat, h1;
    std::vector<double> z1, f1, ffn, r2, ln2_xhat;
    std::vector<double> ln1_inv, ln2_inv;
    std::vector<std::uint8_t> drop1, drop2;
};

struct SampleCache {
    std::vector<double> x, embedded, h_final, pooled, logits;
    std::vector<std::uint8_t> drop0;
    std::vector<LayerCache> layers;
    int valid_count = 0;
};

void make_dropout_mask(std::vector<std::uint8_t>& mask, std::size_t n, bool active, double p,
                       Rng& rng) {
    mask.assign(n, 1);
    if (!active) return;
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < p ? 0 : 1;
}

void apply_dropout(std::vector<double>& values, const std::vector<std::uint8_t>& mask, double p,
                   bool active) {
    if (!active) return;
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = mask[i] ? values[i] * scale : 0.0;
}

void layer_norm_forward(const std::vector<double>& x, const double* gain, const double* bias,
                        int rows, int dim, std::vector<double>& xhat, std::vector<double>& inv,
                        std::vector<double>& y) {
    xhat.resize(x.size());
    y.resize(x.size());
    inv.resize(rows);
    for (int t = 0; t < rows; ++t) {
        const double* xt = x.data() + static_cast<std::size_t>(t) * dim;
        double* xh = xhat.data() + static_cast<std::size_t>(t) * dim;
        double* yt = y.data() + static_cast<std::size_t>(t) * dim;
        double mean = 0.0;
        for (int j = 0; j < dim; ++j) mean += xt[j];
        mean /= dim;
        double var = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double c = xt[j] - mean;
            var += c * c;
        }
        var /= dim;
        const double is = 1.0 / std::sqrt(var + kLnEps);
        inv[t] = is;
        for (int j = 0; j < dim; ++j) {
            xh[j] = (xt[j] - mean) * is;
            yt[j] = gain[j] * xh[j] + bias[j];
        }
    }
}

// dx for y = gain * xhat + bias with xhat = (x - mean) / sqrt(var + eps).
void layer_norm_backward(const std::vector<double>& dy, const std::vector<double>& xhat,
                         const std::vector<double>& inv, const double* gain, int rows, int dim,
                         std::vector<double>& dx, double* ggain, double* gbias) {
    dx.assign(dy.size(), 0.0);
    for (int t = 0; t < rows; ++t) {
        const double* dyt = dy.data() + static_cast<std::size_t>(t) * dim;
        const double* xh = xhat.data() + static_cast<std::size_t>(t) * dim;
        double* dxt = dx.data() + static_cast<std::size_t>(t) * dim;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double dxh = dyt[j] * gain[j];
            m1 += dxh;
            m2 += dxh * xh[j];
            ggain[j] += dyt[j] * xh[j];
            gbias[j] += dyt[j];
        }
        m1 /= dim;
        m2 /= dim;
        for (int j = 0; j < dim; ++j) {
            const double dxh = dyt[j] * gain[j];
            dxt[j] = inv[t] * (dxh - m1 - xh[j] * m2);
        }
    }
}

void run_sample(const Batch& batch, int b, const ParamsT<double>& w, const ModelConfig& config,
                const Mat& pe, bool train_mode, std::uint64_t seed, SampleCache& cache,
                AttentionTensor* attention) {
    const int t_len = batch.frames;
    const int d = config.d_model;
    const int heads = config.n_heads;
    const int dh = d / heads;
    const int f = config.ff_dim();
    const int in = config.input_dim;
    const int c = config.n_classes;
    const std::uint8_t* mask = batch.mask.data() + static_cast<std::size_t>(b) * t_len;
    const bool drop_active = train_mode && config.dropout > 0.0;
    Rng drop_rng(mix_seed({seed, static_cast<std::uint64_t>(b), 0x5eedd207ull}));
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.x.resize(static_cast<std::size_t>(t_len) * in);
    const float* src = batch.sample(b);
    for (std::size_t i = 0; i < cache.x.size(); ++i) cache.x[i] = static_cast<double>(src[i]);

    cache.embedded.resize(static_cast<std::size_t>(t_len) * d);
    linear(cache.x.data(), w.embed_w.a.data(), w.embed_b.data(), cache.embedded.data(), t_len, in, d);
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < d; ++j) cache.embedded[static_cast<std::size_t>(t) * d + j] += pe.at(t, j);

    make_dropout_mask(cache.drop0, cache.embedded.size(), drop_active, config.dropout, drop_rng);
    std::vector<double> h = cache.embedded;
    apply_dropout(h, cache.drop0, config.dropout, drop_active);

    cache.layers.resize(config.n_layers);
    if (attention) {
        attention->layers = config.n_layers;
        attention->heads = heads;
        attention->frames = t_len;
        attention->w.assign(static_cast<std::size_t>(config.n_layers) * heads * t_len * t_len, 0.0);
    }

    for (int l = 0; l < config.n_layers; ++l) {
        LayerCache& lc = cache.layers[l];
        const auto& lw = w.layers[l];
        lc.h_in = h;

        const std::size_t td = static_cast<std::size_t>(t_len) * d;
        lc.q.resize(td);
        lc.k.resize(td);
        lc.v.resize(td);
        linear(lc.h_in.data(), lw.wq.a.data(), lw.bq.data(), lc.q.data(), t_len, d, d);
        linear(lc.h_in.data(), lw.wk.a.data(), lw.bk.data(), lc.k.data(), t_len, d, d);
        linear(lc.h_in.data(), lw.wv.a.data(), lw.bv.data(), lc.v.data(), t_len, d, d);

        lc.probs.assign(static_cast<std::size_t>(heads) * t_len * t_len, 0.0);
        lc.concat.assign(td, 0.0);
        std::vector<double> scores(t_len);
        for (int hh = 0; hh < heads; ++hh) {
            const int off = hh * dh;
            double* probs_h = lc.probs.data() + static_cast<std::size_t>(hh) * t_len * t_len;
            for (int t = 0; t < t_len; ++t) {
                const double* qt = lc.q.data() + static_cast<std::size_t>(t) * d + off;
                double max_score = -1e300;
                for (int u = 0; u < t_len; ++u) {
                    if (!mask[u]) continue;
                    const double* ku = lc.k.data() + static_cast<std::size_t>(u) * d + off;
                    double s = 0.0;
                    for (int j = 0; j < dh; ++j) s += qt[j] * ku[j];
                    s *= inv_sqrt_dh;
                    scores[u] = s;
                    if (s > max_score) max_score = s;
                }
                double denom = 0.0;
                double* pt = probs_h + static_cast<std::size_t>(t) * t_len;
                for (int u = 0; u < t_len; ++u) {
                    if (!mask[u]) continue;  // masked keys keep weight exactly 0
                    const double e = std::exp(scores[u] - max_score);
                    pt[u] = e;
                    denom += e;
                }
                double* ot = lc.concat.data() + static_cast<std::size_t>(t) * d + off;
                for (int u = 0; u < t_len; ++u) {
                    if (!mask[u]) continue;
                    pt[u] /= denom;
                    const double* vu = lc.v.data() + static_cast<std::size_t>(u) * d + off;
                    const double p = pt[u];
                    for (int j = 0; j < dh; ++j) ot[j] += p * vu[j];
                }
            }
        }
        if (attention) {
            double* dst = attention->w.data() +
                          static_cast<std::size_t>(l) * heads * t_len * t_len;
            std::memcpy(dst, lc.probs.data(), sizeof(double) * lc.probs.size());
        }

        lc.attn_proj.resize(td);
        linear(lc.concat.data(), lw.wo.a.data(), lw.bo.data(), lc.attn_proj.data(), t_len, d, d);
        make_dropout_mask(lc.drop1, td, drop_active, config.dropout, drop_rng);
        std::vector<double> attn_dropped = lc.attn_proj;
        apply_dropout(attn_dropped, lc.drop1, config.dropout, drop_active);

        lc.r1.resize(td);
        for (std::size_t i = 0; i < td; ++i) lc.r1[i] = lc.h_in[i] + attn_dropped[i];
        layer_norm_forward(lc.r1, lw.ln1_gain.data(), lw.ln1_bias.data(), t_len, d, lc.ln1_xhat,
                           lc.ln1_inv, lc.h1);

        lc.z1.resize(static_cast<std::size_t>(t_len) * f);
        linear(lc.h1.data(), lw.w1.a.data(), lw.b1.data(), lc.z1.data(), t_len, d, f);
        lc.f1.resize(lc.z1.size());
        for (std::size_t i = 0; i < lc.z1.size(); ++i) lc.f1[i] = lc.z1[i] > 0.0 ? lc.z1[i] : 0.0;
        lc.ffn.resize(td);
        linear(lc.f1.data(), lw.w2.a.data(), lw.b2.data(), lc.ffn.data(), t_len, f, d);

        make_dropout_mask(lc.drop2, td, drop_active, config.dropout, drop_rng);
        std::vector<double> ffn_dropped = lc.ffn;
        apply_dropout(ffn_dropped, lc.drop2, config.dropout, drop_active);

        lc.r2.resize(td);
        for (std::size_t i = 0; i < td; ++i) lc.r2[i] = lc.h1[i] + ffn_dropped[i];
        std::vector<double> h_out;
        layer_norm_forward(lc.r2, lw.ln2_gain.data(), lw.ln2_bias.data(), t_len, d, lc.ln2_xhat,
                           lc.ln2_inv, h_out);
        h = std::move(h_out);
    }

    cache.h_final = h;
    cache.valid_count = 0;
    cache.pooled.assign(d, 0.0);
    for (int t = 0; t < t_len; ++t) {
        if (!mask[t]) continue;
        ++cache.valid_count;
        const double* ht = h.data() + static_cast<std::size_t>(t) * d;
        for (int j = 0; j < d; ++j) cache.pooled[j] += ht[j];
    }
    for (int j = 0; j < d; ++j) cache.pooled[j] /= cache.valid_count;

    cache.logits.resize(c);
    linear(cache.pooled.data(), w.head_w.a.data(), w.head_b.data(), cache.logits.data(), 1, d, c);
}

void backward_sample(const Batch& batch, int b, const ParamsT<double>& w,
                     const ModelConfig& config, const SampleCache& cache,
                     const std::vector<double>& dlogits, ParamsT<double>& grads) {
    const int t_len = batch.frames;
    const int d = config.d_model;
    const int heads = config.n_heads;
    const int dh = d / heads;
    const int f = config.ff_dim();
    const int in = config.input_dim;
    const int c = config.n_classes;
    const std::uint8_t* mask = batch.mask.data() + static_cast<std::size_t>(b) * t_len;
    const bool drop_active = config.dropout > 0.0;
    const double drop_scale = drop_active ? 1.0 / (1.0 - config.dropout) : 1.0;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t td = static_cast<std::size_t>(t_len) * d;

    // Head.
    matmul_tn_acc(cache.pooled.data(), dlogits.data(), grads.head_w.a.data(), 1, d, c);
    for (int j = 0; j < c; ++j) grads.head_b[j] += dlogits[j];
    std::vector<double> dpooled(d, 0.0);
    matmul_nt_acc(dlogits.data(), w.head_w.a.data(), dpooled.data(), 1, c, d);

    std::vector<double> dh_cur(td, 0.0);
    for (int t = 0; t < t_len; ++t) {
        if (!mask[t]) continue;
        double* row = dh_cur.data() + static_cast<std::size_t>(t) * d;
        for (int j = 0; j < d; ++j) row[j] = dpooled[j] / cache.valid_count;
    }

    std::vector<double> dr2, dr1, dffn, df1, dz1, dattn, dconcat, dq, dk, dv, dh1;
    for (int l = config.n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[l];
        const auto& lw = w.layers[l];
        auto& lg = grads.layers[l];

        layer_norm_backward(dh_cur, lc.ln2_xhat, lc.ln2_inv, lw.ln2_gain.data(), t_len, d, dr2,
                            lg.ln2_gain.data(), lg.ln2_bias.data());

        dh1 = dr2;  // residual branch
        dffn = dr2;
        if (drop_active)
            for (std::size_t i = 0; i < td; ++i) dffn[i] = lc.drop2[i] ? dffn[i] * drop_scale : 0.0;

        matmul_tn_acc(lc.f1.data(), dffn.data(), lg.w2.a.data(), t_len, f, d);
        add_rows_acc(dffn.data(), lg.b2.data(), t_len, d);
        df1.assign(static_cast<std::size_t>(t_len) * f, 0.0);
        matmul_nt_acc(dffn.data(), lw.w2.a.data(), df1.data(), t_len, d, f);
        dz1 = df1;
        for (std::size_t i = 0; i < dz1.size(); ++i)
            if (lc.z1[i] <= 0.0) dz1[i] = 0.0;
        matmul_tn_acc(lc.h1.data(), dz1.data(), lg.w1.a.data(), t_len, d, f);
        add_rows_acc(dz1.data(), lg.b1.data(), t_len, f);
        matmul_nt_acc(dz1.data(), lw.w1.a.data(), dh1.data(), t_len, f, d);

        layer_norm_backward(dh1, lc.ln1_xhat, lc.ln1_inv, lw.ln1_gain.data(), t_len, d, dr1,
                            lg.ln1_gain.data(), lg.ln1_bias.data());

        std::vector<double> dh_in = dr1;  // residual branch
        dattn = dr1;
        if (drop_active)
            for (std::size_t i = 0; i < td; ++i)
                dattn[i] = lc.drop1[i] ? dattn[i] * drop_scale : 0.0;

        matmul_tn_acc(lc.concat.data(), dattn.data(), lg.wo.a.data(), t_len, d, d);
        add_rows_acc(dattn.data(), lg.bo.data(), t_len, d);
        dconcat.assign(td, 0.0);
        matmul_nt_acc(dattn.data(), lw.wo.a.data(), dconcat.data(), t_len, d, d);

        dq.assign(td, 0.0);
        dk.assign(td, 0.0);
        dv.assign(td, 0.0);
        std::vector<double> dprobs(t_len);
        for (int hh = 0; hh < heads; ++hh) {
            const int off = hh * dh;
            const double* probs_h = lc.probs.data() + static_cast<std::size_t>(hh) * t_len * t_len;
            for (int t = 0; t < t_len; ++t) {
                const double* pt = probs_h + static_cast<std::size_t>(t) * t_len;
                const double* dct = dconcat.data() + static_cast<std::size_t>(t) * d + off;
                double rowsum = 0.0;
                for (int u = 0; u < t_len; ++u) {
                    if (!mask[u]) continue;
                    const double* vu = lc.v.data() + static_cast<std::size_t>(u) * d + off;
                    double s = 0.0;
                    for (int j = 0; j < dh; ++j) s += dct[j] * vu[j];
                    dprobs[u] = s;
                    rowsum += s * pt[u];
                    double* dvu = dv.data() + static_cast<std::size_t>(u) * d + off;
                    const double p = pt[u];
                    for (int j = 0; j < dh; ++j) dvu[j] += p * dct[j];
                }
                double* dqt = dq.data() + static_cast<std::size_t>(t) * d + off;
                const double* qt = lc.q.data() + static_cast<std::size_t>(t) * d + off;
                for (int u = 0; u < t_len; ++u) {
                    if (!mask[u]) continue;
                    const double dsu = pt[u] * (dprobs[u] - rowsum) * inv_sqrt_dh;
                    if (dsu == 0.0) continue;
                    const double* ku = lc.k.data() + static_cast<std::size_t>(u) * d + off;
                    double* dku = dk.data() + static_cast<std::size_t>(u) * d + off;
                    for (int j = 0; j < dh; ++j) {
                        dqt[j] += dsu * ku[j];
                        dku[j] += dsu * qt[j];
                    }
                }
            }
        }

        matmul_tn_acc(lc.h_in.data(), dq.data(), lg.wq.a.data(), t_len, d, d);
        add_rows_acc(dq.data(), lg.bq.data(), t_len, d);
        matmul_nt_acc(dq.data(), lw.wq.a.data(), dh_in.data(), t_len, d, d);
        matmul_tn_acc(lc.h_in.data(), dk.data(), lg.wk.a.data(), t_len, d, d);
        add_rows_acc(dk.data(), lg.bk.data(), t_len, d);
        matmul_nt_acc(dk.data(), lw.wk.a.data(), dh_in.data(), t_len, d, d);
        matmul_tn_acc(lc.h_in.data(), dv.data(), lg.wv.a.data(), t_len, d, d);
        add_rows_acc(dv.data(), lg.bv.data(), t_len, d);
        matmul_nt_acc(dv.data(), lw.wv.a.data(), dh_in.data(), t_len, d, d);

        dh_cur = std::move(dh_in);
    }

    if (drop_active)
        for (std::size_t i = 0; i < td; ++i)
            dh_cur[i] = cache.drop0[i] ? dh_cur[i] * drop_scale : 0.0;
    matmul_tn_acc(cache.x.data(), dh_cur.data(), grads.embed_w.a.data(), t_len, in, d);
    add_rows_acc(dh_cur.data(), grads.embed_b.data(), t_len, d);
}

}  // namespace

ForwardResult forward(const Batch& batch, const TransformerParameters& params,
                      const ModelConfig& config, bool train_mode, std::uint64_t seed,
                      bool want_attention) {
    config.validate();
    if (config.n_classes < 1) throw UsageError("n_classes must be >= 1");
    check_batch(batch, config, false);
    const ParamsT<double> w = to_double(params);
    const Mat pe = sinusoidal_pe(batch.frames, config.d_model);

    ForwardResult result;
    result.logits.resize(static_cast<std::size_t>(batch.batch) * config.n_classes);
    if (want_attention) result.attention.resize(batch.batch);

    SampleCache cache;
    for (int b = 0; b < batch.batch; ++b) {
        run_sample(batch, b, w, config, pe, train_mode, seed, cache,
                   want_attention ? &result.attention[b] : nullptr);
        std::memcpy(result.logits.data() + static_cast<std::size_t>(b) * config.n_classes,
                    cache.logits.data(), sizeof(double) * config.n_classes);
    }
    return result;
}

LossAndGrads loss_and_gradients(const Batch& batch, const TransformerParameters& params,
                                const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    if (config.n_classes < 1) throw UsageError("n_classes must be >= 1");
    check_batch(batch, config, true);
    const ParamsT<double> w = to_double(params);
    const Mat pe = sinusoidal_pe(batch.frames, config.d_model);
    const int c = config.n_classes;

    LossAndGrads out;
    out.grads = zero_grads(config);
    SampleCache cache;
    std::vector<double> dlogits(c);
    for (int b = 0; b < batch.batch; ++b) {
        run_sample(batch, b, w, config, pe, true, seed, cache, nullptr);
        double max_logit = cache.logits[0];
        for (int j = 1; j < c; ++j) max_logit = std::max(max_logit, cache.logits[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(cache.logits[j] - max_logit);
        const double lse = max_logit + std::log(sum);
        const int label = batch.labels[b];
        out.loss += (lse - cache.logits[label]) / batch.batch;
        for (int j = 0; j < c; ++j) {
            const double p = std::exp(cache.logits[j] - lse);
            dlogits[j] = (p - (j == label ? 1.0 : 0.0)) / batch.batch;
        }
        backward_sample(batch, b, w, config, cache, dlogits, out.grads);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const TransformerParameters& params) {
    config.validate();
    std::string out;
    out += "SLRTCKPT";
    put_u32(out, 1);  // format version
    put_u32(out, static_cast<std::uint32_t>(config.input_dim));
    put_u32(out, static_cast<std::uint32_t>(config.d_model));
    put_u32(out, static_cast<std::uint32_t>(config.n_layers));
    put_u32(out, static_cast<std::uint32_t>(config.n_heads));
    put_u32(out, static_cast<std::uint32_t>(config.ff_dim()));
    put_u32(out, static_cast<std::uint32_t>(config.n_classes));
    put_u32(out, static_cast<std::uint32_t>(config.max_frames));
    put_f64(out, config.dropout);
    auto& p = const_cast<TransformerParameters&>(params);
    for (const auto& ref : tensor_refs(p)) {
        if (ref.rows > 0) {
            put_u32(out, 2);
            put_u32(out, static_cast<std::uint32_t>(ref.rows));
            put_u32(out, static_cast<std::uint32_t>(ref.cols));
        } else {
            put_u32(out, 1);
            put_u32(out, static_cast<std::uint32_t>(ref.cols));
        }
        for (float v : *ref.data) put_f32(out, v);
    }
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    ByteReader reader{content, 0};
    try {
        if (reader.take(8) != "SLRTCKPT") throw DataError("bad magic");
        const std::uint32_t version = reader.u32();
        if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
        Checkpoint ckpt;
        ckpt.config.input_dim = static_cast<int>(reader.u32());
        ckpt.config.d_model = static_cast<int>(reader.u32());
        ckpt.config.n_layers = static_cast<int>(reader.u32());
        ckpt.config.n_heads = static_cast<int>(reader.u32());
        ckpt.config.d_ff = static_cast<int>(reader.u32());
        ckpt.config.n_classes = static_cast<int>(reader.u32());
        ckpt.config.max_frames = static_cast<int>(reader.u32());
        ckpt.config.dropout = reader.f64();
        try {
            ckpt.config.validate();
        } catch (const UsageError& e) {
            throw DataError(std::string("invalid model config: ") + e.what());
        }
        if (ckpt.config.n_classes < 1) throw DataError("checkpoint has no classes");
        ckpt.params = alloc_params<float>(ckpt.config);
        for (auto& ref : tensor_refs(ckpt.params)) {
            const std::uint32_t ndim = reader.u32();
            if (ref.rows > 0) {
                if (ndim != 2 || reader.u32() != static_cast<std::uint32_t>(ref.rows) ||
                    reader.u32() != static_cast<std::uint32_t>(ref.cols))
                    throw DataError("tensor shape mismatch for " + ref.name);
            } else {
                if (ndim != 1 || reader.u32() != static_cast<std::uint32_t>(ref.cols))
                    throw DataError("tensor shape mismatch for " + ref.name);
            }
            for (float& v : *ref.data) {
                v = reader.f32();
                if (!std::isfinite(v)) throw DataError("non-finite value in " + ref.name);
            }
        }
        if (!reader.done()) throw DataError("trailing bytes");
        return ckpt;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace slr

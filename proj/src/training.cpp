#include "slr/training.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <set>

#include "json.hpp"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"
#include "slr/parallel.hpp"
#include "slr/rng.hpp"

namespace slr {

int Dataset::class_index(const std::string& word_id) const {
    const auto it = std::lower_bound(classes.begin(), classes.end(), word_id);
    if (it == classes.end() || *it != word_id) return -1;
    return static_cast<int>(it - classes.begin());
}

Dataset load_dataset(const Manifest& manifest, const EncodingConfig& config) {
    config.validate();
    if (manifest.entries.empty()) throw DataError("empty manifest");
    Dataset dataset;
    {
        std::set<std::string> words;
        for (const ManifestEntry& e : manifest.entries) words.insert(e.word_id);
        dataset.classes.assign(words.begin(), words.end());
    }
    const std::size_t n = manifest.entries.size();
    dataset.clips.resize(n);
    std::vector<std::string> failures(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const ManifestEntry& e = manifest.entries[i];
            try {
                const Clip clip = load_clip(manifest.resolve(e));
                if (clip.meta.signer_id != e.signer_id || clip.meta.word_id != e.word_id)
                    throw DataError("clip metadata disagrees with manifest row");
                const EncodedClip enc = encode_clip(clip, config);
                LabeledClip& out = dataset.clips[i];
                out.path = e.clip_path;
                out.signer_id = e.signer_id;
                out.word_id = e.word_id;
                out.label = dataset.class_index(e.word_id);
                out.data.frames = enc.frames;
                out.data.matrix = enc.matrix;
            } catch (const Error& err) {
                failures[i] = e.clip_path + ": " + err.what();
            }
        }
    });
    std::string message;
    int failed = 0;
    for (const std::string& f : failures) {
        if (f.empty()) continue;
        ++failed;
        message += "\n  " + f;
    }
    if (failed > 0)
        throw DataError("failed to encode " + std::to_string(failed) + " clip(s):" + message);
    return dataset;
}

Dataset load_dataset_cached(const Manifest& manifest, const EncodingConfig& config,
                            const std::filesystem::path& encoded_dir) {
    if (encoded_dir.empty()) return load_dataset(manifest, config);
    config.validate();
    if (manifest.entries.empty()) throw DataError("empty manifest");

    std::filesystem::create_directories(encoded_dir);
    const std::filesystem::path stamp_path = encoded_dir / "encoding.json";
    const std::string stamp = encoding_config_json(config);
    if (std::filesystem::exists(stamp_path)) {
        if (read_file(stamp_path) != stamp)
            throw DataError(stamp_path.string() +
                            ": cache was written with a different encoding configuration");
    } else {
        write_file_atomic(stamp_path, stamp);
    }

    Dataset dataset;
    {
        std::set<std::string> words;
        for (const ManifestEntry& e : manifest.entries) words.insert(e.word_id);
        dataset.classes.assign(words.begin(), words.end());
    }
    // Flat cache names: clip stem plus a hash of the manifest-relative path,
    // so arbitrary relative paths (including ../) stay inside the cache dir.
    const std::size_t n = manifest.entries.size();
    std::vector<std::filesystem::path> cached(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string normalized =
            std::filesystem::path(manifest.entries[i].clip_path).lexically_normal().generic_string();
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : normalized) {
            h ^= c;
            h *= 1099511628211ull;
        }
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "-%016llx.rqe",
                      static_cast<unsigned long long>(h));
        cached[i] = encoded_dir /
                    (std::filesystem::path(manifest.entries[i].clip_path).stem().string() + suffix);
    }
    dataset.clips.resize(n);
    std::vector<std::string> failures(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const ManifestEntry& e = manifest.entries[i];
            LabeledClip& out = dataset.clips[i];
            try {
                if (std::filesystem::exists(cached[i])) {
                    out.data = load_rqe(cached[i]);
                } else {
                    const Clip clip = load_clip(manifest.resolve(e));
                    if (clip.meta.signer_id != e.signer_id || clip.meta.word_id != e.word_id)
                        throw DataError("clip metadata disagrees with manifest row");
                    const EncodedClip enc = encode_clip(clip, config);
                    save_rqe(enc, cached[i]);
                    out.data.frames = enc.frames;
                    out.data.matrix = enc.matrix;
                }
                out.path = e.clip_path;
                out.signer_id = e.signer_id;
                out.word_id = e.word_id;
                out.label = dataset.class_index(e.word_id);
            } catch (const Error& err) {
                failures[i] = e.clip_path + ": " + err.what();
            }
        }
    });
    std::string message;
    int failed = 0;
    for (const std::string& f : failures) {
        if (f.empty()) continue;
        ++failed;
        message += "\n  " + f;
    }
    if (failed > 0)
        throw DataError("failed to encode " + std::to_string(failed) + " clip(s):" + message);
    return dataset;
}

std::string split_strategy_name(SplitStrategy s) {
    switch (s) {
        case SplitStrategy::fixed_test_signers: return "fixed_test_signers";
        case SplitStrategy::stratified: return "stratified";
        default: return "leave_one_user_out";
    }
}

SplitStrategy split_strategy_from_name(const std::string& name) {
    if (name == "fixed_test_signers") return SplitStrategy::fixed_test_signers;
    if (name == "stratified") return SplitStrategy::stratified;
    if (name == "leave_one_user_out" || name == "louo") return SplitStrategy::louo;
    throw UsageError("unknown split strategy '" + name + "'");
}

void SplitSpec::validate() const {
    if (strategy == SplitStrategy::fixed_test_signers && test_signers.empty())
        throw UsageError("fixed_test_signers strategy requires test signers");
    if (strategy == SplitStrategy::louo && held_out_signer.empty())
        throw UsageError("leave_one_user_out strategy requires a held-out signer");
    if (strategy != SplitStrategy::louo && val_per_pair < 1)
        throw UsageError("val_per_pair must be >= 1");
}

Split SplitAssignment::at(const std::string& path) const {
    const auto it = by_path.find(path);
    if (it == by_path.end()) throw DataError("clip '" + path + "' has no split assignment");
    return it->second;
}

SplitAssignment make_splits(const Manifest& manifest, const SplitSpec& spec) {
    spec.validate();
    if (manifest.entries.empty()) throw DataError("empty manifest");
    std::set<std::string> signers;
    for (const ManifestEntry& e : manifest.entries) signers.insert(e.signer_id);

    SplitAssignment out;
    if (spec.strategy == SplitStrategy::louo) {
        if (!signers.count(spec.held_out_signer))
            throw DataError("unknown signer '" + spec.held_out_signer + "'");
        for (const ManifestEntry& e : manifest.entries)
            out.by_path[e.clip_path] = e.signer_id == spec.held_out_signer ? Split::val : Split::train;
        return out;
    }

    std::set<std::string> test_set;
    if (spec.strategy == SplitStrategy::fixed_test_signers) {
        for (const std::string& s : spec.test_signers) {
            if (!signers.count(s)) throw DataError("unknown signer '" + s + "'");
            test_set.insert(s);
        }
    }

    // Groups iterate in sorted (signer, word) order and group members are
    // sorted by path, so the assignment depends only on content and seed.
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
    for (const ManifestEntry& e : manifest.entries) {
        if (test_set.count(e.signer_id)) {
            out.by_path[e.clip_path] = Split::test;
            continue;
        }
        groups[{e.signer_id, e.word_id}].push_back(e.clip_path);
    }
    Rng rng(spec.seed);
    for (auto& [key, paths] : groups) {
        std::sort(paths.begin(), paths.end());
        const int n_val = std::min<int>(spec.val_per_pair, static_cast<int>(paths.size()));
        if (n_val < spec.val_per_pair)
            std::cerr << "split: pair (" << key.first << ", " << key.second << ") has only "
                      << paths.size() << " clip(s) for " << spec.val_per_pair << " val slot(s)\n";
        for (int i = 0; i < n_val; ++i) {
            const auto j = i + rng.uniform_int(0, static_cast<std::int64_t>(paths.size()) - 1 - i);
            std::swap(paths[i], paths[j]);
        }
        for (std::size_t i = 0; i < paths.size(); ++i)
            out.by_path[paths[i]] = static_cast<int>(i) < n_val ? Split::val : Split::train;
    }
    return out;
}

void save_splits(const std::filesystem::path& path, const Manifest& manifest,
                 const SplitAssignment& splits) {
    Manifest copy = manifest;
    for (ManifestEntry& e : copy.entries) e.split = splits.at(e.clip_path);
    save_manifest(copy, path);
}

SplitAssignment load_splits(const std::filesystem::path& path) {
    const Manifest manifest = load_manifest(path);
    SplitAssignment out;
    for (const ManifestEntry& e : manifest.entries) {
        if (!e.split) throw DataError(path.string() + ": entry '" + e.clip_path + "' has no split");
        out.by_path[e.clip_path] = *e.split;
    }
    return out;
}

double WerReport::wer() const {
    if (ref_tokens == 0) throw DataError("WER undefined: no reference tokens");
    return static_cast<double>(substitutions + deletions + insertions) /
           static_cast<double>(ref_tokens);
}

EditCounts align_tokens(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                        std::map<std::string, std::uint64_t>* per_class_errors) {
    const std::size_t n = ref.size(), m = hyp.size();
    const auto idx = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
    std::vector<int> cost((n + 1) * (m + 1));
    // 0 = diagonal (match or substitution), 1 = deletion, 2 = insertion
    std::vector<std::uint8_t> op((n + 1) * (m + 1));
    for (std::size_t j = 0; j <= m; ++j) {
        cost[idx(0, j)] = static_cast<int>(j);
        op[idx(0, j)] = 2;
    }
    for (std::size_t i = 0; i <= n; ++i) {
        cost[idx(i, 0)] = static_cast<int>(i);
        op[idx(i, 0)] = 1;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const int diag = cost[idx(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const int del = cost[idx(i - 1, j)] + 1;
            const int ins = cost[idx(i, j - 1)] + 1;
            if (diag <= del && diag <= ins) {
                cost[idx(i, j)] = diag;
                op[idx(i, j)] = 0;
            } else if (del <= ins) {
                cost[idx(i, j)] = del;
                op[idx(i, j)] = 1;
            } else {
                cost[idx(i, j)] = ins;
                op[idx(i, j)] = 2;
            }
        }
    }
    EditCounts counts;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const std::uint8_t o = op[idx(i, j)];
        if (o == 0) {
            if (ref[i - 1] != hyp[j - 1]) {
                ++counts.substitutions;
                if (per_class_errors) ++(*per_class_errors)[ref[i - 1]];
            }
            --i;
            --j;
        } else if (o == 1) {
            ++counts.deletions;
            if (per_class_errors) ++(*per_class_errors)[ref[i - 1]];
            --i;
        } else {
            ++counts.insertions;
            if (per_class_errors) ++(*per_class_errors)[hyp[j - 1]];
            --j;
        }
    }
    return counts;
}

WerReport wer(const std::vector<std::vector<std::string>>& references,
              const std::vector<std::vector<std::string>>& hypotheses) {
    if (references.size() != hypotheses.size())
        throw DataError("reference and hypothesis list lengths differ");
    WerReport report;
    for (std::size_t i = 0; i < references.size(); ++i) {
        if (references[i].empty()) throw DataError("empty reference sequence");
        const EditCounts c = align_tokens(references[i], hypotheses[i], &report.per_class_errors);
        report.substitutions += c.substitutions;
        report.deletions += c.deletions;
        report.insertions += c.insertions;
        report.ref_tokens += references[i].size();
    }
    return report;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (!(min_lr > 0.0) || min_lr > learning_rate)
        throw UsageError("min_lr must satisfy 0 < min_lr <= learning_rate");
    if (patience < 1) throw UsageError("patience must be >= 1");
    if (lr_patience < 0) throw UsageError("lr_patience must be >= 0");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) throw UsageError("lr_decay must be in (0, 1]");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw UsageError("adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw UsageError("adam_eps must be positive");
}

Batch make_batch(const Dataset& dataset, const std::vector<int>& indices, int max_frames) {
    if (indices.empty()) throw DataError("empty batch");
    int t_max = 0;
    for (int idx : indices) {
        const LabeledClip& clip = dataset.clips[idx];
        if (clip.data.frames > max_frames)
            throw DataError("clip '" + clip.path + "' has " + std::to_string(clip.data.frames) +
                            " frames, exceeding max_frames " + std::to_string(max_frames));
        t_max = std::max(t_max, clip.data.frames);
    }
    Batch batch;
    batch.batch = static_cast<int>(indices.size());
    batch.frames = t_max;
    batch.width = dataset.feature_dim;
    batch.inputs.assign(static_cast<std::size_t>(batch.batch) * t_max * batch.width, 0.0f);
    batch.mask.assign(static_cast<std::size_t>(batch.batch) * t_max, 0);
    batch.labels.resize(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const LabeledClip& clip = dataset.clips[indices[b]];
        std::copy(clip.data.matrix.begin(), clip.data.matrix.end(),
                  batch.inputs.begin() + static_cast<std::size_t>(b) * t_max * batch.width);
        for (int t = 0; t < clip.data.frames; ++t) batch.mask[b * static_cast<std::size_t>(t_max) + t] = 1;
        batch.labels[b] = clip.label;
    }
    return batch;
}

namespace {

constexpr int kEvalBatch = 32;

int argmax_lowest(const double* logits, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (logits[j] > logits[best]) best = j;
    return best;
}

std::vector<int> predict_all(const Dataset& dataset, const std::vector<int>& indices,
                             const TransformerParameters& params, const ModelConfig& config) {
    std::vector<int> preds;
    preds.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
        const std::size_t end = std::min(indices.size(), start + kEvalBatch);
        const std::vector<int> chunk(indices.begin() + start, indices.begin() + end);
        const Batch batch = make_batch(dataset, chunk, config.max_frames);
        const ForwardResult fwd = forward(batch, params, config, false, 0);
        for (int b = 0; b < batch.batch; ++b)
            preds.push_back(
                argmax_lowest(fwd.logits.data() + static_cast<std::size_t>(b) * config.n_classes,
                              config.n_classes));
    }
    return preds;
}

void adam_update(TransformerParameters& params, const ParamsT<double>& grads, ParamsT<double>& m,
                 ParamsT<double>& v, std::int64_t step, double lr, const TrainConfig& tc) {
    auto pr = tensor_refs(params);
    auto gr = tensor_refs(const_cast<ParamsT<double>&>(grads));
    auto mr = tensor_refs(m);
    auto vr = tensor_refs(v);
    const double bc1 = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < pr.size(); ++i) {
        auto& p = *pr[i].data;
        const auto& g = *gr[i].data;
        auto& mm = *mr[i].data;
        auto& vv = *vr[i].data;
        for (std::size_t j = 0; j < p.size(); ++j) {
            mm[j] = tc.adam_beta1 * mm[j] + (1.0 - tc.adam_beta1) * g[j];
            vv[j] = tc.adam_beta2 * vv[j] + (1.0 - tc.adam_beta2) * g[j] * g[j];
            const double mhat = mm[j] / bc1;
            const double vhat = vv[j] / bc2;
            p[j] = static_cast<float>(static_cast<double>(p[j]) -
                                      lr * mhat / (std::sqrt(vhat) + tc.adam_eps));
        }
    }
}

}  // namespace

TrainResult train(const Dataset& dataset, const SplitAssignment& splits,
                  const ModelConfig& model_config, const TrainConfig& train_config) {
    train_config.validate();
    ModelConfig mc = model_config;
    if (mc.n_classes == 0)
        mc.n_classes = static_cast<int>(dataset.classes.size());
    else if (mc.n_classes != static_cast<int>(dataset.classes.size()))
        throw DataError("model n_classes does not match the dataset class count");
    mc.validate();
    if (mc.input_dim != dataset.feature_dim)
        throw DataError("model input_dim does not match the encoded feature width");

    std::vector<int> train_idx, val_idx;
    for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
        switch (splits.at(dataset.clips[i].path)) {
            case Split::train: train_idx.push_back(static_cast<int>(i)); break;
            case Split::val: val_idx.push_back(static_cast<int>(i)); break;
            default: break;
        }
    }
    if (train_idx.empty()) throw DataError("train split is empty");
    if (val_idx.empty()) throw DataError("val split is empty");

    TransformerParameters params = init_params(mc, mix_seed({train_config.seed, 0x1417ull}));
    ParamsT<double> adam_m = zero_grads(mc);
    ParamsT<double> adam_v = zero_grads(mc);
    std::int64_t step = 0;
    double lr = train_config.learning_rate;
    double best_wer = std::numeric_limits<double>::infinity();
    int bad = 0, bad_lr = 0;

    TrainResult result;
    for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
        std::vector<int> order = train_idx;
        Rng shuffle_rng(mix_seed({train_config.seed, 0x50ffull, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1);
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_config.batch_size);
            const std::vector<int> chunk(order.begin() + start, order.begin() + end);
            const Batch batch = make_batch(dataset, chunk, mc.max_frames);
            const std::uint64_t drop_seed =
                mix_seed({train_config.seed, 0xd409ull, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(batch_index)});
            const LossAndGrads lg = loss_and_gradients(batch, params, mc, drop_seed);
            loss_sum += lg.loss * static_cast<double>(chunk.size());
            ++step;
            adam_update(params, lg.grads, adam_m, adam_v, step, lr, train_config);
            ++batch_index;
        }
        const double train_loss = loss_sum / static_cast<double>(train_idx.size());

        const std::vector<int> preds = predict_all(dataset, val_idx, params, mc);
        std::int64_t errors = 0;
        for (std::size_t i = 0; i < val_idx.size(); ++i)
            if (preds[i] != dataset.clips[val_idx[i]].label) ++errors;
        const double val_wer = static_cast<double>(errors) / static_cast<double>(val_idx.size());

        result.history.push_back({epoch, train_loss, val_wer, lr});
        if (val_wer < best_wer) {
            best_wer = val_wer;
            result.best_epoch = epoch;
            result.best_params = params;
            bad = 0;
            bad_lr = 0;
        } else {
            ++bad;
            ++bad_lr;
        }
        if (bad >= train_config.patience) {
            result.stop_reason = "patience";
            break;
        }
        if (bad_lr >= train_config.lr_patience_epochs()) {
            lr = std::max(lr * train_config.lr_decay, train_config.min_lr);
            bad_lr = 0;
        }
    }
    if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
    result.best_val_wer = best_wer;
    return result;
}

void save_history(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,val_wer,lr\n";
    char line[160];
    for (const EpochStats& row : history) {
        std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g\n", row.epoch, row.train_loss,
                      row.val_wer, row.learning_rate);
        out += line;
    }
    write_file_atomic(path, out);
}

WerReport evaluate(const Dataset& dataset, const SplitAssignment& splits, Split split,
                   const TransformerParameters& params, const ModelConfig& config) {
    std::vector<int> indices;
    for (std::size_t i = 0; i < dataset.clips.size(); ++i)
        if (splits.at(dataset.clips[i].path) == split) indices.push_back(static_cast<int>(i));
    if (indices.empty())
        throw DataError("split '" + std::string(split_name(split)) + "' is empty");
    const std::vector<int> preds = predict_all(dataset, indices, params, config);
    std::vector<std::vector<std::string>> refs, hyps;
    refs.reserve(indices.size());
    hyps.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        refs.push_back({dataset.clips[indices[i]].word_id});
        hyps.push_back({dataset.classes[preds[i]]});
    }
    return wer(refs, hyps);
}

std::string wer_report_json(const WerReport& report) {
    nlohmann::ordered_json doc;
    doc["S"] = report.substitutions;
    doc["D"] = report.deletions;
    doc["I"] = report.insertions;
    doc["N"] = report.ref_tokens;
    doc["wer"] = report.wer();
    nlohmann::ordered_json errors = nlohmann::ordered_json::object();
    for (const auto& [word, count] : report.per_class_errors) errors[word] = count;
    doc["per_class_errors"] = std::move(errors);
    return doc.dump();
}

void save_wer_report(const std::filesystem::path& path, const WerReport& report) {
    write_file_atomic(path, wer_report_json(report));
}

int predict(const EncodedMatrix& clip, const TransformerParameters& params,
            const ModelConfig& config) {
    if (clip.frames < 1) throw DataError("empty clip");
    Batch batch;
    batch.batch = 1;
    batch.frames = clip.frames;
    batch.width = config.input_dim;
    if (clip.matrix.size() != static_cast<std::size_t>(clip.frames) * config.input_dim)
        throw DataError("clip width does not match model input_dim");
    batch.inputs = clip.matrix;
    batch.mask.assign(clip.frames, 1);
    const ForwardResult fwd = forward(batch, params, config, false, 0);
    return argmax_lowest(fwd.logits.data(), config.n_classes);
}

}  // namespace slr

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "slr/encoding.hpp"
#include "slr/landmark.hpp"
#include "slr/model.hpp"

namespace slr {

struct LabeledClip {
    std::string path;       // manifest-relative clip path (identity for split maps)
    std::string signer_id;
    std::string word_id;
    int label = -1;         // index into the sorted class list
    EncodedMatrix data;
};

struct Dataset {
    std::vector<std::string> classes;  // sorted unique word ids
    std::vector<LabeledClip> clips;
    int feature_dim = kFeatureDim;

    int class_index(const std::string& word_id) const;  // -1 if unknown
};

// Encodes every manifest clip with `config`. All clips must share the
// feature dimensionality; classes come from the full manifest.
Dataset load_dataset(const Manifest& manifest, const EncodingConfig& config);

// Same result, but backed by a directory of encoded matrices: hits are read
// back, misses are encoded and written. The cache carries an encoding-config
// stamp and refuses to mix configurations. Empty dir = plain load_dataset.
Dataset load_dataset_cached(const Manifest& manifest, const EncodingConfig& config,
                            const std::filesystem::path& encoded_dir);

enum class SplitStrategy { fixed_test_signers, stratified, louo };

std::string split_strategy_name(SplitStrategy s);
SplitStrategy split_strategy_from_name(const std::string& name);

struct SplitSpec {
    SplitStrategy strategy = SplitStrategy::fixed_test_signers;
    std::vector<std::string> test_signers;  // fixed_test_signers only
    std::string held_out_signer;            // louo only; its clips become val
    int val_per_pair = 1;                   // fixed_test_signers / stratified
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitAssignment {
    std::map<std::string, Split> by_path;  // clip path -> split

    Split at(const std::string& path) const;
};

SplitAssignment make_splits(const Manifest& manifest, const SplitSpec& spec);

void save_splits(const std::filesystem::path& path, const Manifest& manifest,
                 const SplitAssignment& splits);
SplitAssignment load_splits(const std::filesystem::path& path);

// wer = (S + D + I) / N over the whole corpus. Isolated-sign recognition
// scores each clip as a one-token sequence, so S/D/I reduce to plain
// misclassification counts, but the alignment is computed generally.
struct WerReport {
    std::uint64_t substitutions = 0;
    std::uint64_t deletions = 0;
    std::uint64_t insertions = 0;
    std::uint64_t ref_tokens = 0;
    std::map<std::string, std::uint64_t> per_class_errors;  // keyed by ref word id

    double wer() const;
};

struct EditCounts {
    std::uint64_t substitutions = 0;
    std::uint64_t deletions = 0;
    std::uint64_t insertions = 0;
};

// Minimum-edit alignment between token sequences (Levenshtein over tokens).
// Substitutions and deletions are charged to the reference token, insertions
// to the inserted hypothesis token.
EditCounts align_tokens(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp,
                        std::map<std::string, std::uint64_t>* per_class_errors = nullptr);

// Corpus-level WER over parallel token sequences. References must be
// non-empty and list lengths equal.
WerReport wer(const std::vector<std::vector<std::string>>& references,
              const std::vector<std::vector<std::string>>& hypotheses);

struct TrainConfig {
    int batch_size = 32;
    int max_epochs = 200;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int patience = 30;    // early stop after this many non-improving epochs
    int lr_patience = 0;  // decay LR after this many; 0 = max(1, patience / 4)
    double lr_decay = 0.5;
    double min_lr = 1e-7;
    std::uint64_t seed = 0;

    int lr_patience_epochs() const {
        return lr_patience > 0 ? lr_patience : std::max(1, patience / 4);
    }
    void validate() const;
};

struct EpochStats {
    int epoch = 0;          // 1-based
    double train_loss = 0.0;
    double val_wer = 0.0;
    double learning_rate = 0.0;  // LR used for this epoch's updates
};

struct TrainResult {
    TransformerParameters best_params;  // weights from the best-val-WER epoch
    double best_val_wer = 0.0;
    int best_epoch = 0;
    std::vector<EpochStats> history;
    std::string stop_reason;  // "patience" or "max_epochs"
};

TrainResult train(const Dataset& dataset, const SplitAssignment& splits,
                  const ModelConfig& model_config, const TrainConfig& train_config);

void save_history(const std::filesystem::path& path, const std::vector<EpochStats>& history);

// Classifies every clip of `split` and scores hypotheses against references.
WerReport evaluate(const Dataset& dataset, const SplitAssignment& splits, Split split,
                   const TransformerParameters& params, const ModelConfig& config);

std::string wer_report_json(const WerReport& report);
void save_wer_report(const std::filesystem::path& path, const WerReport& report);

// Greedy argmax prediction for a single encoded clip.
int predict(const EncodedMatrix& clip, const TransformerParameters& params,
            const ModelConfig& config);

Batch make_batch(const Dataset& dataset, const std::vector<int>& indices, int max_frames);

}  // namespace slr

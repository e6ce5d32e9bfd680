#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slr/attention.hpp"
#include "slr/encoding.hpp"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"
#include "slr/landmark.hpp"
#include "slr/model.hpp"
#include "slr/run_config.hpp"
#include "slr/synthetic.hpp"
#include "slr/training.hpp"

namespace fs = std::filesystem;
using namespace slr;

namespace {

// Sibling echo path for an artifact: report.json -> report_config.json.
fs::path echo_path(const fs::path& artifact) {
    fs::path p = artifact;
    p.replace_filename(artifact.stem().string() + "_config.json");
    return p;
}

struct SynthArgs {
    SynthConfig config;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& args) {
    const SynthResult result = generate_synthetic(args.config, args.seed);
    const fs::path out(args.out);
    fs::create_directories(out / "clips");
    for (std::size_t i = 0; i < result.clips.size(); ++i)
        save_clip(result.clips[i], out / result.manifest.entries[i].clip_path);
    Manifest manifest = result.manifest;
    manifest.base_dir = out;
    save_manifest(manifest, out / "manifest.csv");

    nlohmann::ordered_json echo;
    echo["classes"] = args.config.n_classes;
    echo["signers"] = args.config.n_signers;
    echo["trials"] = args.config.trials_per_pair;
    echo["frames_min"] = args.config.frames_min;
    echo["frames_max"] = args.config.frames_max;
    echo["scale_min"] = args.config.scale_min;
    echo["scale_max"] = args.config.scale_max;
    echo["translation_max"] = args.config.translation_max;
    echo["jitter_std"] = args.config.jitter_std;
    echo["missing_prob"] = args.config.missing_prob;
    echo["left_handed_prob"] = args.config.left_handed_prob;
    echo["seed"] = args.seed;
    write_file_atomic(out / "synth_config.json", echo.dump(2) + "\n");

    std::printf("wrote %zu clips (%d classes, %d signers) -> %s\n", result.clips.size(),
                args.config.n_classes, args.config.n_signers, args.out.c_str());
    return 0;
}

struct EncodingFlags {
    std::string mode = "rqe";
    int levels = 10;
    int levels_x = 0;
    int levels_y = 0;
    int levels_d = 0;
    double clamp = 1.0;
    std::string flip = "off";
    std::string lower_body = "fixed";

    EncodingConfig to_config() const {
        EncodingConfig config;
        config.mode = encoding_mode_from_name(mode);
        config.levels.x = levels_x > 0 ? levels_x : levels;
        config.levels.y = levels_y > 0 ? levels_y : levels;
        config.levels.d = levels_d > 0 ? levels_d : levels;
        config.clamp_range = clamp;
        config.flip = flip_policy_from_name(flip);
        if (lower_body != "fixed" && lower_body != "free")
            throw UsageError("--lower-body must be 'fixed' or 'free'");
        config.lower_body_fixed = lower_body == "fixed";
        config.validate();
        return config;
    }

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "encoding mode: raw, rqe, rqe-sf")
            ->capture_default_str();
        cmd->add_option("--levels", levels, "quantization levels for all axes")
            ->capture_default_str();
        cmd->add_option("--levels-x", levels_x, "per-axis override for x");
        cmd->add_option("--levels-y", levels_y, "per-axis override for y");
        cmd->add_option("--levels-d", levels_d, "per-axis override for d");
        cmd->add_option("--clamp", clamp, "clamp range R for offsets")->capture_default_str();
        cmd->add_option("--flip", flip, "dominance flip: off, auto, force")
            ->capture_default_str();
        cmd->add_option("--lower-body", lower_body, "lower-body channels: fixed (zeroed) or free")
            ->capture_default_str();
    }
};

struct EncodeArgs {
    std::string manifest;
    std::string out;
    EncodingFlags enc;
};

int cmd_encode(const EncodeArgs& args) {
    const EncodingConfig config = args.enc.to_config();
    const Manifest manifest = load_manifest(args.manifest);
    const Dataset dataset = load_dataset_cached(manifest, config, fs::path(args.out));
    std::printf("encoded %zu clips (%zu classes) -> %s\n", dataset.clips.size(),
                dataset.classes.size(), args.out.c_str());
    return 0;
}

struct SplitArgs {
    std::string manifest;
    std::string out;
    std::string strategy = "fixed_test_signers";
    std::vector<std::string> test_signers;
    std::string held_out;
    int val_per_pair = 1;
    std::uint64_t seed = 0;
};

nlohmann::ordered_json split_spec_json(const SplitSpec& spec) {
    nlohmann::ordered_json doc;
    doc["strategy"] = split_strategy_name(spec.strategy);
    doc["test_signers"] = spec.test_signers;
    doc["held_out_signer"] = spec.held_out_signer;
    doc["val_per_pair"] = spec.val_per_pair;
    doc["seed"] = spec.seed;
    return doc;
}

// Writes `manifest` with split labels to `out_path`, clip paths rewritten
// relative to the output's directory so the CSV remains self-contained.
void write_split_manifest(const Manifest& manifest, const SplitAssignment& splits,
                          const fs::path& out_path) {
    Manifest copy = manifest;
    const fs::path out_dir = fs::absolute(out_path).parent_path();
    for (ManifestEntry& e : copy.entries) {
        e.split = splits.at(e.clip_path);
        e.clip_path =
            fs::relative(fs::absolute(manifest.base_dir / e.clip_path), out_dir).generic_string();
    }
    copy.base_dir = out_dir;
    save_manifest(copy, out_path);
}

int cmd_split(const SplitArgs& args) {
    SplitSpec spec;
    spec.strategy = split_strategy_from_name(args.strategy);
    spec.test_signers = args.test_signers;
    spec.held_out_signer = args.held_out;
    spec.val_per_pair = args.val_per_pair;
    spec.seed = args.seed;
    const Manifest manifest = load_manifest(args.manifest);
    const SplitAssignment splits = make_splits(manifest, spec);
    const fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_split_manifest(manifest, splits, out_path);
    write_file_atomic(echo_path(out_path), split_spec_json(spec).dump(2) + "\n");

    int counts[3] = {0, 0, 0};
    for (const auto& [path, split] : splits.by_path) ++counts[static_cast<int>(split)];
    std::printf("train %d val %d test %d -> %s\n", counts[0], counts[1], counts[2],
                args.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string out_override;
    std::string manifest_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig load_with_overrides(const TrainArgs& args) {
    RunConfig config = parse_run_config(read_file(args.config_path));
    if (!args.manifest_override.empty()) config.manifest = args.manifest_override;
    if (!args.out_override.empty()) config.output_dir = args.out_override;
    if (args.seed_set) {
        config.seed = args.seed;
        config.train.seed = args.seed;
        config.split.seed = args.seed;
    }
    config.validate();
    return config;
}

int cmd_train(const TrainArgs& args) {
    const RunConfig config = load_with_overrides(args);
    const fs::path out(config.output_dir);
    fs::create_directories(out);
    const Manifest manifest = load_manifest(config.manifest);
    const SplitAssignment splits = make_splits(manifest, config.split);
    const Dataset dataset =
        load_dataset_cached(manifest, config.encoding, fs::path(config.encoded_dir));

    ModelConfig mc = config.model;
    mc.n_classes = static_cast<int>(dataset.classes.size());
    const TrainResult result = train(dataset, splits, mc, config.train);

    save_run_config(out / "config.json", config);
    write_split_manifest(manifest, splits, out / "splits.csv");
    save_history(out / "history.csv", result.history);
    save_checkpoint(out / "checkpoint.slrt", mc, result.best_params);

    std::printf("best val wer %.4f at epoch %d (%s) -> %s\n", result.best_val_wer,
                result.best_epoch, result.stop_reason.c_str(), config.output_dir.c_str());
    return 0;
}

struct EvalArgs {
    std::string config_path;
    std::string checkpoint;
    std::string split = "val";
    std::string splits_csv;
    std::string out;
    std::string manifest_override;
};

int cmd_eval(const EvalArgs& args) {
    RunConfig config = parse_run_config(read_file(args.config_path));
    if (!args.manifest_override.empty()) config.manifest = args.manifest_override;
    config.validate();
    const Split split = split_from_name(args.split);
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);

    Manifest manifest;
    SplitAssignment splits;
    if (!args.splits_csv.empty()) {
        manifest = load_manifest(args.splits_csv);
        for (const ManifestEntry& e : manifest.entries) {
            if (!e.split)
                throw DataError(args.splits_csv + ": entry '" + e.clip_path + "' has no split");
            splits.by_path[e.clip_path] = *e.split;
        }
    } else {
        manifest = load_manifest(config.manifest);
        splits = make_splits(manifest, config.split);
    }
    const Dataset dataset =
        load_dataset_cached(manifest, config.encoding, fs::path(config.encoded_dir));
    if (static_cast<int>(dataset.classes.size()) != ckpt.config.n_classes)
        throw DataError("checkpoint expects " + std::to_string(ckpt.config.n_classes) +
                        " classes, manifest has " + std::to_string(dataset.classes.size()));

    const WerReport report = evaluate(dataset, splits, split, ckpt.params, ckpt.config);
    fs::path out_path = args.out.empty()
                            ? fs::path(config.output_dir) / ("wer_" + args.split + ".json")
                            : fs::path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_wer_report(out_path, report);
    save_run_config(echo_path(out_path), config);
    std::printf("wer %.4f\n", report.wer());
    return 0;
}

struct AttendArgs {
    std::string checkpoint;
    std::string clip;
    std::string out;
    EncodingFlags enc;
};

int cmd_attend(const AttendArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const EncodingConfig enc = args.enc.to_config();
    EncodedMatrix matrix;
    if (fs::path(args.clip).extension() == ".rqe") {
        matrix = load_rqe(args.clip);
    } else {
        const EncodedClip encoded = encode_clip(load_clip(args.clip), enc);
        matrix.frames = encoded.frames;
        matrix.matrix = encoded.matrix;
    }
    const FrameAttentionProfile profile = attention_profile(matrix, ckpt.params, ckpt.config);
    const fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    export_profile(profile, out_path);

    nlohmann::ordered_json echo;
    echo["checkpoint"] = args.checkpoint;
    echo["clip"] = args.clip;
    echo["encoding"] = nlohmann::ordered_json::parse(encoding_config_json(enc));
    write_file_atomic(echo_path(out_path), echo.dump(2) + "\n");

    std::printf("wrote %d-frame attention profile -> %s\n", profile.frames(), args.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pose-landmark sign clip pipeline: synthesize, encode, split, train, eval, attend"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled clip corpus");
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--classes", synth_args.config.n_classes, "number of word classes")
        ->capture_default_str();
    synth->add_option("--signers", synth_args.config.n_signers, "number of signers")
        ->capture_default_str();
    synth->add_option("--trials", synth_args.config.trials_per_pair, "trials per signer-word pair")
        ->capture_default_str();
    synth->add_option("--frames-min", synth_args.config.frames_min, "minimum clip length")
        ->capture_default_str();
    synth->add_option("--frames-max", synth_args.config.frames_max, "maximum clip length")
        ->capture_default_str();
    synth->add_option("--scale-min", synth_args.config.scale_min, "signer scale range low")
        ->capture_default_str();
    synth->add_option("--scale-max", synth_args.config.scale_max, "signer scale range high")
        ->capture_default_str();
    synth->add_option("--translation", synth_args.config.translation_max,
                      "signer translation range (plus/minus)")
        ->capture_default_str();
    synth->add_option("--jitter", synth_args.config.jitter_std, "per-frame coordinate noise std")
        ->capture_default_str();
    synth->add_option("--missing", synth_args.config.missing_prob,
                      "per-landmark dropout probability")
        ->capture_default_str();
    synth->add_option("--left-prob", synth_args.config.left_handed_prob,
                      "per-signer left-handed probability")
        ->capture_default_str();
    synth->add_option("--seed", synth_args.seed, "generator seed")->capture_default_str();

    EncodeArgs encode_args;
    auto* encode = app.add_subcommand("encode", "encode manifest clips to feature matrices");
    encode->add_option("--manifest", encode_args.manifest, "manifest CSV")->required();
    encode->add_option("--out", encode_args.out, "output directory")->required();
    encode_args.enc.add_flags(encode);

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "assign train/val/test splits to a manifest");
    split->add_option("--manifest", split_args.manifest, "manifest CSV")->required();
    split->add_option("--out", split_args.out, "output split CSV")->required();
    split->add_option("--strategy", split_args.strategy,
                      "fixed_test_signers, stratified, or leave_one_user_out")
        ->capture_default_str();
    split->add_option("--test-signers", split_args.test_signers, "comma-separated signer ids")
        ->delimiter(',');
    split->add_option("--held-out", split_args.held_out, "held-out signer (leave_one_user_out)");
    split->add_option("--val-per-pair", split_args.val_per_pair,
                      "val clips per signer-word pair")
        ->capture_default_str();
    split->add_option("--seed", split_args.seed, "selection seed")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a classifier from a run config");
    train_cmd->add_option("--config", train_args.config_path, "run config JSON")->required();
    train_cmd->add_option("--out", train_args.out_override, "override output_dir");
    train_cmd->add_option("--manifest", train_args.manifest_override, "override manifest path");
    auto* seed_opt = train_cmd->add_option("--seed", train_args.seed,
                                           "override master seed (train and split seeds follow)");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split");
    eval_cmd->add_option("--config", eval_args.config_path, "run config JSON")->required();
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--split", eval_args.split, "train, val, or test")
        ->capture_default_str();
    eval_cmd->add_option("--splits", eval_args.splits_csv,
                         "split CSV (defaults to re-deriving splits from the config)");
    eval_cmd->add_option("--manifest", eval_args.manifest_override, "override manifest path");
    eval_cmd->add_option("--out", eval_args.out, "report path (default <output_dir>/wer_<split>.json)");

    AttendArgs attend_args;
    auto* attend = app.add_subcommand("attend", "export a per-frame attention profile");
    attend->add_option("--checkpoint", attend_args.checkpoint, "checkpoint file")->required();
    attend->add_option("--clip", attend_args.clip, "clip JSON or encoded .rqe file")->required();
    attend->add_option("--out", attend_args.out, "output CSV")->required();
    attend_args.enc.add_flags(attend);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    train_args.seed_set = seed_opt->count() > 0;

    try {
        if (*synth) return cmd_synth(synth_args);
        if (*encode) return cmd_encode(encode_args);
        if (*split) return cmd_split(split_args);
        if (*train_cmd) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*attend) return cmd_attend(attend_args);
        std::cerr << "error: no command selected\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
}

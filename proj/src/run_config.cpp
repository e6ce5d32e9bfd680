#include "slr/run_config.hpp"

#include "json.hpp"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"

namespace slr {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& message) { throw UsageError("run config: " + message); }

void check_keys(const ordered_json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) bad("section '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known) bad("unknown key '" + it.key() + "' in section '" + section + "'");
    }
}

std::string where(const std::string& section, const char* key) {
    return "key '" + std::string(key) + "' in section '" + section + "'";
}

void get_int(const ordered_json& obj, const std::string& section, const char* key, int& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) bad(where(section, key) + " must be an integer");
    out = v.get<int>();
}

void get_u64(const ordered_json& obj, const std::string& section, const char* key,
             std::uint64_t& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        bad(where(section, key) + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
}

void get_double(const ordered_json& obj, const std::string& section, const char* key,
                double& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) bad(where(section, key) + " must be a number");
    out = v.get<double>();
}

void get_bool(const ordered_json& obj, const std::string& section, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) bad(where(section, key) + " must be a boolean");
    out = v.get<bool>();
}

void get_string(const ordered_json& obj, const std::string& section, const char* key,
                std::string& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_string()) bad(where(section, key) + " must be a string");
    out = v.get<std::string>();
}

EncodingConfig parse_encoding(const ordered_json& obj) {
    EncodingConfig config;
    check_keys(obj, "encoding", {"mode", "levels", "clamp_range", "flip", "lower_body_fixed"});
    std::string name;
    get_string(obj, "encoding", "mode", name);
    if (!name.empty()) config.mode = encoding_mode_from_name(name);
    if (obj.contains("levels")) {
        const auto& lv = obj.at("levels");
        if (lv.is_number_integer()) {
            config.levels.x = config.levels.y = config.levels.d = lv.get<int>();
        } else if (lv.is_object()) {
            check_keys(lv, "encoding.levels", {"x", "y", "d"});
            get_int(lv, "encoding.levels", "x", config.levels.x);
            get_int(lv, "encoding.levels", "y", config.levels.y);
            get_int(lv, "encoding.levels", "d", config.levels.d);
        } else {
            bad("key 'levels' in section 'encoding' must be an integer or an {x, y, d} object");
        }
    }
    get_double(obj, "encoding", "clamp_range", config.clamp_range);
    name.clear();
    get_string(obj, "encoding", "flip", name);
    if (!name.empty()) config.flip = flip_policy_from_name(name);
    get_bool(obj, "encoding", "lower_body_fixed", config.lower_body_fixed);
    return config;
}

ModelConfig parse_model(const ordered_json& obj) {
    ModelConfig config;
    check_keys(obj, "model",
               {"input_dim", "d_model", "n_layers", "n_heads", "d_ff", "dropout", "max_frames"});
    get_int(obj, "model", "input_dim", config.input_dim);
    get_int(obj, "model", "d_model", config.d_model);
    get_int(obj, "model", "n_layers", config.n_layers);
    get_int(obj, "model", "n_heads", config.n_heads);
    get_int(obj, "model", "d_ff", config.d_ff);
    get_double(obj, "model", "dropout", config.dropout);
    get_int(obj, "model", "max_frames", config.max_frames);
    return config;
}

TrainConfig parse_train(const ordered_json& obj, std::uint64_t master_seed) {
    TrainConfig config;
    check_keys(obj, "train",
               {"batch_size", "max_epochs", "learning_rate", "adam_beta1", "adam_beta2",
                "adam_eps", "patience", "lr_patience", "lr_decay", "min_lr", "seed"});
    get_int(obj, "train", "batch_size", config.batch_size);
    get_int(obj, "train", "max_epochs", config.max_epochs);
    get_double(obj, "train", "learning_rate", config.learning_rate);
    get_double(obj, "train", "adam_beta1", config.adam_beta1);
    get_double(obj, "train", "adam_beta2", config.adam_beta2);
    get_double(obj, "train", "adam_eps", config.adam_eps);
    get_int(obj, "train", "patience", config.patience);
    get_int(obj, "train", "lr_patience", config.lr_patience);
    get_double(obj, "train", "lr_decay", config.lr_decay);
    get_double(obj, "train", "min_lr", config.min_lr);
    config.seed = master_seed;
    get_u64(obj, "train", "seed", config.seed);
    return config;
}

SplitSpec parse_split(const ordered_json& obj, std::uint64_t master_seed) {
    SplitSpec spec;
    check_keys(obj, "split",
               {"strategy", "test_signers", "held_out_signer", "val_per_pair", "seed"});
    std::string name;
    get_string(obj, "split", "strategy", name);
    if (!name.empty()) spec.strategy = split_strategy_from_name(name);
    if (obj.contains("test_signers")) {
        const auto& arr = obj.at("test_signers");
        if (!arr.is_array()) bad("key 'test_signers' in section 'split' must be an array");
        for (const auto& v : arr) {
            if (!v.is_string()) bad("test_signers entries must be strings");
            spec.test_signers.push_back(v.get<std::string>());
        }
    }
    get_string(obj, "split", "held_out_signer", spec.held_out_signer);
    get_int(obj, "split", "val_per_pair", spec.val_per_pair);
    spec.seed = master_seed;
    get_u64(obj, "split", "seed", spec.seed);
    return spec;
}

}  // namespace

void RunConfig::validate() const {
    if (manifest.empty()) throw UsageError("run config: 'manifest' is required");
    if (output_dir.empty()) throw UsageError("run config: 'output_dir' is required");
    encoding.validate();
    model.validate();
    train.validate();
    split.validate();
}

RunConfig parse_run_config(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        bad(std::string("not valid JSON: ") + e.what());
    }
    check_keys(doc, "(top level)",
               {"manifest", "encoded_dir", "output_dir", "seed", "encoding", "model", "train",
                "split"});
    RunConfig config;
    get_string(doc, "(top level)", "manifest", config.manifest);
    get_string(doc, "(top level)", "encoded_dir", config.encoded_dir);
    get_string(doc, "(top level)", "output_dir", config.output_dir);
    get_u64(doc, "(top level)", "seed", config.seed);
    if (doc.contains("encoding")) config.encoding = parse_encoding(doc.at("encoding"));
    if (doc.contains("model")) config.model = parse_model(doc.at("model"));
    config.train = parse_train(doc.contains("train") ? doc.at("train") : ordered_json::object(),
                               config.seed);
    config.split = parse_split(doc.contains("split") ? doc.at("split") : ordered_json::object(),
                               config.seed);
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig config = parse_run_config(read_file(path));
    config.validate();
    return config;
}

std::string run_config_json(const RunConfig& config) {
    ordered_json doc;
    doc["manifest"] = config.manifest;
    doc["encoded_dir"] = config.encoded_dir;
    doc["output_dir"] = config.output_dir;
    doc["seed"] = config.seed;

    ordered_json enc;
    enc["mode"] = std::string(encoding_mode_name(config.encoding.mode));
    enc["levels"] = {{"x", config.encoding.levels.x},
                     {"y", config.encoding.levels.y},
                     {"d", config.encoding.levels.d}};
    enc["clamp_range"] = config.encoding.clamp_range;
    enc["flip"] = std::string(flip_policy_name(config.encoding.flip));
    enc["lower_body_fixed"] = config.encoding.lower_body_fixed;
    doc["encoding"] = std::move(enc);

    ordered_json model;
    model["input_dim"] = config.model.input_dim;
    model["d_model"] = config.model.d_model;
    model["n_layers"] = config.model.n_layers;
    model["n_heads"] = config.model.n_heads;
    model["d_ff"] = config.model.ff_dim();
    model["dropout"] = config.model.dropout;
    model["max_frames"] = config.model.max_frames;
    doc["model"] = std::move(model);

    ordered_json train;
    train["batch_size"] = config.train.batch_size;
    train["max_epochs"] = config.train.max_epochs;
    train["learning_rate"] = config.train.learning_rate;
    train["adam_beta1"] = config.train.adam_beta1;
    train["adam_beta2"] = config.train.adam_beta2;
    train["adam_eps"] = config.train.adam_eps;
    train["patience"] = config.train.patience;
    train["lr_patience"] = config.train.lr_patience_epochs();
    train["lr_decay"] = config.train.lr_decay;
    train["min_lr"] = config.train.min_lr;
    train["seed"] = config.train.seed;
    doc["train"] = std::move(train);

    ordered_json split;
    split["strategy"] = split_strategy_name(config.split.strategy);
    split["test_signers"] = config.split.test_signers;
    split["held_out_signer"] = config.split.held_out_signer;
    split["val_per_pair"] = config.split.val_per_pair;
    split["seed"] = config.split.seed;
    doc["split"] = std::move(split);

    return doc.dump(2) + "\n";
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    write_file_atomic(path, run_config_json(config));
}

}  // namespace slr

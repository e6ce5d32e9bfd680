#include <string>

#include "doctest.h"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"
#include "slr/run_config.hpp"
#include "test_util.hpp"

using namespace slr;

namespace {

const char* kMinimal = R"({
  "manifest": "data/manifest.csv",
  "output_dir": "runs/a"
})";

// Parse + validate, the same path load_run_config takes.
std::string expect_usage(const std::string& text) {
    try {
        parse_run_config(text).validate();
    } catch (const UsageError& e) {
        return e.what();
    }
    FAIL("expected UsageError");
    return {};
}

}  // namespace

TEST_CASE("minimal config takes every documented default") {
    const RunConfig c = parse_run_config(kMinimal);
    CHECK(c.manifest == "data/manifest.csv");
    CHECK(c.output_dir == "runs/a");
    CHECK(c.encoded_dir.empty());
    CHECK(c.seed == 0);

    CHECK(c.encoding.mode == EncodingMode::rqe);
    CHECK(c.encoding.levels.x == 10);
    CHECK(c.encoding.levels.y == 10);
    CHECK(c.encoding.levels.d == 10);
    CHECK(c.encoding.clamp_range == 1.0);
    CHECK(c.encoding.flip == FlipPolicy::off);
    CHECK(c.encoding.lower_body_fixed == true);

    CHECK(c.model.input_dim == kFeatureDim);
    CHECK(c.model.d_model == 224);
    CHECK(c.model.n_layers == 3);
    CHECK(c.model.n_heads == 8);
    CHECK(c.model.ff_dim() == 896);
    CHECK(c.model.dropout == 0.1);
    CHECK(c.model.max_frames == 247);

    CHECK(c.train.batch_size == 32);
    CHECK(c.train.max_epochs == 200);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.patience == 30);
    CHECK(c.train.min_lr == 1e-7);

    CHECK(c.split.strategy == SplitStrategy::fixed_test_signers);
    CHECK(c.split.val_per_pair == 1);
}

TEST_CASE("full config round trips through its echo") {
    const char* text = R"({
  "manifest": "m.csv",
  "encoded_dir": "cache",
  "output_dir": "out",
  "seed": 42,
  "encoding": {"mode": "rqe_sf", "levels": {"x": 16, "y": 12, "d": 8},
               "clamp_range": 1.5, "flip": "auto", "lower_body_fixed": false},
  "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "d_ff": 128,
            "dropout": 0.2, "max_frames": 64},
  "train": {"batch_size": 16, "max_epochs": 50, "learning_rate": 0.002,
            "patience": 10, "lr_patience": 3, "lr_decay": 0.25,
            "min_lr": 1e-6, "seed": 7},
  "split": {"strategy": "stratified", "val_per_pair": 2, "seed": 9}
})";
    const RunConfig c = parse_run_config(text);
    CHECK(c.seed == 42);
    CHECK(c.encoding.mode == EncodingMode::rqe_sf);
    CHECK(c.encoding.levels.x == 16);
    CHECK(c.encoding.levels.y == 12);
    CHECK(c.encoding.levels.d == 8);
    CHECK(c.encoding.clamp_range == 1.5);
    CHECK(c.encoding.flip == FlipPolicy::auto_detect);
    CHECK(c.encoding.lower_body_fixed == false);
    CHECK(c.model.d_model == 64);
    CHECK(c.model.ff_dim() == 128);
    CHECK(c.train.lr_patience_epochs() == 3);
    CHECK(c.train.seed == 7);
    CHECK(c.split.strategy == SplitStrategy::stratified);
    CHECK(c.split.seed == 9);

    // The echo materializes defaults; parsing it back is a fixed point.
    const std::string echo = run_config_json(c);
    const RunConfig back = parse_run_config(echo);
    CHECK(run_config_json(back) == echo);
}

TEST_CASE("echo of the minimal config parses to the same defaults") {
    const RunConfig c = parse_run_config(kMinimal);
    const std::string echo = run_config_json(c);
    CHECK(echo.find("\"d_ff\": 896") != std::string::npos);
    CHECK(echo.find("\"lr_patience\": 7") != std::string::npos);  // materialized patience/4
    const RunConfig back = parse_run_config(echo);
    CHECK(back.model.ff_dim() == c.model.ff_dim());
    CHECK(back.train.lr_patience_epochs() == c.train.lr_patience_epochs());
    CHECK(run_config_json(back) == echo);
}

TEST_CASE("master seed fills component seeds unless they are explicit") {
    const RunConfig filled = parse_run_config(R"({
  "manifest": "m.csv", "output_dir": "out", "seed": 1234
})");
    CHECK(filled.train.seed == 1234);
    CHECK(filled.split.seed == 1234);

    const RunConfig partial = parse_run_config(R"({
  "manifest": "m.csv", "output_dir": "out", "seed": 1234,
  "train": {"seed": 5}
})");
    CHECK(partial.train.seed == 5);
    CHECK(partial.split.seed == 1234);
}

TEST_CASE("levels accepts an integer shorthand") {
    const RunConfig c = parse_run_config(R"({
  "manifest": "m.csv", "output_dir": "out",
  "encoding": {"levels": 16}
})");
    CHECK(c.encoding.levels.x == 16);
    CHECK(c.encoding.levels.y == 16);
    CHECK(c.encoding.levels.d == 16);
}

TEST_CASE("unknown keys are rejected by name and section") {
    std::string msg = expect_usage(R"({"manifest": "m", "output_dir": "o", "lr": 1})");
    CHECK(msg.find("lr") != std::string::npos);

    msg = expect_usage(R"({"manifest": "m", "output_dir": "o",
                           "train": {"learning_rte": 0.01}})");
    CHECK(msg.find("learning_rte") != std::string::npos);
    CHECK(msg.find("train") != std::string::npos);

    msg = expect_usage(R"({"manifest": "m", "output_dir": "o",
                           "encoding": {"levels": {"x": 2, "z": 3}}})");
    CHECK(msg.find("z") != std::string::npos);

    msg = expect_usage(R"({"manifest": "m", "output_dir": "o",
                           "split": {"strtegy": "stratified"}})");
    CHECK(msg.find("strtegy") != std::string::npos);
    CHECK(msg.find("split") != std::string::npos);
}

TEST_CASE("value errors are usage errors") {
    CHECK(expect_usage("not json at all").find("JSON") != std::string::npos);
    CHECK(!expect_usage(R"([1, 2, 3])").empty());  // not an object
    CHECK(!expect_usage(R"({"manifest": 5, "output_dir": "o"})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o", "seed": -1})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "encoding": {"mode": "rqe2"}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "encoding": {"levels": 1}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "encoding": {"flip": "always"}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "model": {"d_model": 65, "n_heads": 8}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "train": {"batch_size": 0}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "split": {"strategy": "nope"}})").empty());
    CHECK(!expect_usage(R"({"manifest": "m", "output_dir": "o",
                            "split": {"strategy": "leave_one_user_out"}})").empty());
    // Required paths.
    CHECK(!expect_usage(R"({"output_dir": "o"})").empty());
    CHECK(!expect_usage(R"({"manifest": "m"})").empty());
}

TEST_CASE("louo accepts its long name and requires a signer") {
    const RunConfig c = parse_run_config(R"({
  "manifest": "m.csv", "output_dir": "out",
  "split": {"strategy": "leave_one_user_out", "held_out_signer": "S03"}
})");
    CHECK(c.split.strategy == SplitStrategy::louo);
    CHECK(c.split.held_out_signer == "S03");
}

TEST_CASE("config files round trip on disk") {
    const auto dir = slr_test::make_temp_dir("run_config");
    RunConfig c = parse_run_config(kMinimal);
    // The minimal defaults parse but do not validate: the default split
    // strategy needs test signers. load_run_config enforces that.
    save_run_config(dir / "bare.json", c);
    CHECK_THROWS_AS(load_run_config(dir / "bare.json"), UsageError);

    c.split.strategy = SplitStrategy::stratified;
    save_run_config(dir / "config.json", c);
    const RunConfig back = load_run_config(dir / "config.json");
    CHECK(run_config_json(back) == run_config_json(c));
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), IoError);
}

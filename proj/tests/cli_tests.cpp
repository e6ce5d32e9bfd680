// End-to-end tests that drive the CLI binary. The path to the binary comes
// from the SLR_CLI environment variable (set by ctest).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "slr/encoding.hpp"
#include "slr/io_util.hpp"
#include "slr/landmark.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string output;  // stdout and stderr interleaved
};

std::string cli_path() {
    const char* path = std::getenv("SLR_CLI");
    REQUIRE_MESSAGE(path != nullptr, "SLR_CLI must point at the CLI binary");
    return path;
}

CmdResult run_cli(const fs::path& cwd, const std::string& args) {
    const std::string command =
        "cd '" + cwd.string() + "' && '" + cli_path() + "' " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult result;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) result.output.append(buf, n);
    const int status = pclose(pipe);
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path make_temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("slr_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Byte-compares every regular file of `a` against its counterpart in `b`.
void check_trees_equal(const fs::path& a, const fs::path& b) {
    std::size_t count_a = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        ++count_a;
        const fs::path rel = fs::relative(entry.path(), a);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(b / rel));
        CHECK(slr::read_file(entry.path()) == slr::read_file(b / rel));
    }
    std::size_t count_b = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b))
        if (entry.is_regular_file()) ++count_b;
    CHECK(count_a == count_b);
}

// A small deterministic corpus most tests share.
const fs::path& corpus_dir() {
    static const fs::path dir = [] {
        const fs::path d = make_temp_dir("corpus");
        const CmdResult r = run_cli(
            d, "synth --out . --classes 2 --signers 2 --trials 3 "
               "--frames-min 6 --frames-max 10 --jitter 0.002 --missing 0 --seed 11");
        REQUIRE_MESSAGE(r.code == 0, r.output);
        return d;
    }();
    return dir;
}

void write_run_config(const fs::path& path, const std::string& output_dir,
                      int max_epochs = 6) {
    nlohmann::ordered_json doc;
    doc["manifest"] = "manifest.csv";
    doc["output_dir"] = output_dir;
    doc["seed"] = 11;
    doc["encoding"] = {{"mode", "rqe"}};
    doc["model"] = {{"d_model", 16}, {"n_layers", 1}, {"n_heads", 2},
                    {"d_ff", 32},   {"dropout", 0.1}, {"max_frames", 16}};
    doc["train"] = {{"batch_size", 8}, {"max_epochs", max_epochs}, {"patience", 6},
                    {"learning_rate", 0.003}};
    doc["split"] = {{"strategy", "stratified"}, {"val_per_pair", 1}, {"seed", 2}};
    slr::write_file_atomic(path, doc.dump(2) + "\n");
}

int count_lines(const std::string& text) {
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

}  // namespace

TEST_CASE("help and argument errors") {
    const fs::path dir = make_temp_dir("args");
    CHECK(run_cli(dir, "--help").code == 0);
    const CmdResult help = run_cli(dir, "--help");
    for (const char* name : {"synth", "encode", "split", "train", "eval", "attend"})
        CHECK(help.output.find(name) != std::string::npos);
    CHECK(run_cli(dir, "synth --help").code == 0);

    CHECK(run_cli(dir, "").code == 2);                       // subcommand required
    CHECK(run_cli(dir, "frobnicate").code == 2);             // unknown subcommand
    CHECK(run_cli(dir, "synth --out x --bogus 1").code == 2);
    CHECK(run_cli(dir, "encode --out x").code == 2);         // missing --manifest
    CHECK(run_cli(dir, "synth --out x --classes notanumber").code == 2);
}

TEST_CASE("synth writes a loadable, reproducible corpus") {
    const fs::path dir = make_temp_dir("synth");
    const std::string args =
        "synth --out %s --classes 3 --signers 2 --trials 2 --frames-min 6 "
        "--frames-max 9 --seed 7";
    char buf[256];
    std::snprintf(buf, sizeof buf, args.c_str(), "a");
    const CmdResult first = run_cli(dir, buf);
    CHECK(first.code == 0);
    CHECK(first.output.find("wrote 12 clips (3 classes, 2 signers)") != std::string::npos);

    const slr::Manifest manifest = slr::load_manifest(dir / "a" / "manifest.csv");
    CHECK(manifest.entries.size() == 12);
    CHECK(fs::exists(dir / "a" / "clips" / "S00_W000_t0.json"));
    CHECK(fs::exists(dir / "a" / "synth_config.json"));
    for (const auto& e : manifest.entries) {
        const slr::Clip clip = slr::load_clip(manifest.resolve(e));
        CHECK(clip.frame_count() >= 6);
        CHECK(clip.frame_count() <= 9);
    }

    std::snprintf(buf, sizeof buf, args.c_str(), "b");
    CHECK(run_cli(dir, buf).code == 0);
    check_trees_equal(dir / "a", dir / "b");
}

TEST_CASE("encode caches encodings and enforces its config stamp") {
    const fs::path& corpus = corpus_dir();
    const CmdResult first =
        run_cli(corpus, "encode --manifest manifest.csv --out enc --mode rqe-sf");
    CHECK(first.code == 0);
    CHECK(first.output.find("encoded 12 clips (2 classes)") != std::string::npos);
    CHECK(fs::exists(corpus / "enc" / "encoding.json"));

    int rqe_files = 0;
    fs::path sample;
    for (const auto& entry : fs::directory_iterator(corpus / "enc"))
        if (entry.path().extension() == ".rqe") {
            ++rqe_files;
            sample = entry.path();
        }
    CHECK(rqe_files == 12);

    // Shoulder-free mode zeroes the shoulder block; the lower body defaults
    // to fixed, so those channels are zero too.
    const slr::EncodedMatrix matrix = slr::load_rqe(sample);
    REQUIRE(matrix.frames >= 6);
    for (int t = 0; t < matrix.frames; ++t) {
        for (int c = 33; c < 39; ++c)
            CHECK(matrix.matrix[static_cast<std::size_t>(t) * slr::kFeatureDim + c] == 0.0f);
        for (int c = 69; c < 98; ++c)
            CHECK(matrix.matrix[static_cast<std::size_t>(t) * slr::kFeatureDim + c] == 0.0f);
    }

    // Second run is a pure cache hit and reports the same dataset.
    const CmdResult again =
        run_cli(corpus, "encode --manifest manifest.csv --out enc --mode rqe-sf");
    CHECK(again.code == 0);
    CHECK(again.output == first.output);

    // A different encoding may not reuse the directory.
    const CmdResult clash =
        run_cli(corpus, "encode --manifest manifest.csv --out enc --mode rqe-sf --levels 16");
    CHECK(clash.code == 4);
    CHECK(clash.output.find("encoding") != std::string::npos);

    CHECK(run_cli(corpus, "encode --manifest manifest.csv --out enc2 --mode rqe2").code == 2);
    CHECK(run_cli(corpus, "encode --manifest manifest.csv --out enc2 --lower-body junk").code ==
          2);
    CHECK(run_cli(corpus, "encode --manifest nope.csv --out enc2").code == 3);
}

TEST_CASE("a corrupt cache entry is a data error") {
    const fs::path dir = make_temp_dir("badcache");
    CHECK(run_cli(dir, "synth --out . --classes 1 --signers 1 --trials 2 "
                       "--frames-min 6 --frames-max 8 --seed 3").code == 0);
    CHECK(run_cli(dir, "encode --manifest manifest.csv --out enc").code == 0);
    fs::path victim;
    for (const auto& entry : fs::directory_iterator(dir / "enc"))
        if (entry.path().extension() == ".rqe") victim = entry.path();
    REQUIRE(!victim.empty());
    fs::resize_file(victim, 8);
    const CmdResult r = run_cli(dir, "encode --manifest manifest.csv --out enc");
    CHECK(r.code == 4);
}

TEST_CASE("encode reports every broken clip") {
    const fs::path dir = make_temp_dir("broken");
    CHECK(run_cli(dir, "synth --out . --classes 2 --signers 1 --trials 2 "
                       "--frames-min 6 --frames-max 8 --seed 9").code == 0);
    const slr::Manifest manifest = slr::load_manifest(dir / "manifest.csv");
    slr::Clip clip = slr::load_clip(manifest.resolve(manifest.entries[0]));
    for (auto& frame : clip.frames) frame.pose[slr::pose_idx::left_hip].present = false;
    slr::save_clip(clip, manifest.resolve(manifest.entries[0]));

    const CmdResult r = run_cli(dir, "encode --manifest manifest.csv --out enc");
    CHECK(r.code == 4);
    CHECK(r.output.find("failed to encode 1 clip(s)") != std::string::npos);
    CHECK(r.output.find(manifest.entries[0].clip_path) != std::string::npos);
}

TEST_CASE("split assigns and persists a strategy") {
    const fs::path& corpus = corpus_dir();
    const CmdResult r = run_cli(
        corpus, "split --manifest manifest.csv --out splits/split.csv "
                "--strategy stratified --val-per-pair 1 --seed 3");
    CHECK(r.code == 0);
    // 2 classes x 2 signers x 3 trials: one val clip per (signer, word) pair.
    CHECK(r.output.find("train 8 val 4 test 0") != std::string::npos);
    CHECK(fs::exists(corpus / "splits" / "split_config.json"));

    // The split CSV doubles as a manifest whose paths resolve from its own
    // directory.
    const slr::Manifest back = slr::load_manifest(corpus / "splits" / "split.csv");
    CHECK(back.entries.size() == 12);
    for (const auto& e : back.entries) {
        REQUIRE(e.split.has_value());
        CHECK(fs::exists(back.resolve(e)));
    }

    const CmdResult louo = run_cli(
        corpus, "split --manifest manifest.csv --out splits/louo.csv "
                "--strategy leave_one_user_out --held-out S01");
    CHECK(louo.code == 0);
    CHECK(louo.output.find("train 6 val 6 test 0") != std::string::npos);

    const CmdResult fixed = run_cli(
        corpus, "split --manifest manifest.csv --out splits/fixed.csv "
                "--strategy fixed_test_signers --test-signers S01 --val-per-pair 1");
    CHECK(fixed.code == 0);
    CHECK(fixed.output.find("train 4 val 2 test 6") != std::string::npos);

    CHECK(run_cli(corpus, "split --manifest manifest.csv --out s.csv --strategy nope").code ==
          2);
    CHECK(run_cli(corpus, "split --manifest manifest.csv --out s.csv "
                          "--strategy leave_one_user_out --held-out S99").code == 4);
}

TEST_CASE("train, eval, and attend form a reproducible pipeline") {
    const fs::path& corpus = corpus_dir();
    write_run_config(corpus / "run.json", "run1");

    const CmdResult t1 = run_cli(corpus, "train --config run.json");
    REQUIRE_MESSAGE(t1.code == 0, t1.output);
    CHECK(t1.output.find("best val wer") != std::string::npos);
    for (const char* name : {"config.json", "splits.csv", "history.csv", "checkpoint.slrt"})
        CHECK(fs::exists(corpus / "run1" / name));

    // history.csv has a header plus one row per epoch, at most max_epochs.
    const std::string history = slr::read_file(corpus / "run1" / "history.csv");
    CHECK(history.rfind("epoch,train_loss,val_wer,lr\n", 0) == 0);
    CHECK(count_lines(history) >= 2);
    CHECK(count_lines(history) <= 7);

    // Same config, separate output dir: identical training artifacts.
    const CmdResult t2 = run_cli(corpus, "train --config run.json --out run2");
    REQUIRE_MESSAGE(t2.code == 0, t2.output);
    CHECK(slr::read_file(corpus / "run1" / "checkpoint.slrt") ==
          slr::read_file(corpus / "run2" / "checkpoint.slrt"));
    CHECK(slr::read_file(corpus / "run1" / "history.csv") ==
          slr::read_file(corpus / "run2" / "history.csv"));
    CHECK(t1.output == t2.output.substr(0, t2.output.size() - 5) + "run1\n");

    // A different seed changes the run.
    const CmdResult t3 = run_cli(corpus, "train --config run.json --out run3 --seed 99");
    REQUIRE_MESSAGE(t3.code == 0, t3.output);
    CHECK(slr::read_file(corpus / "run1" / "checkpoint.slrt") !=
          slr::read_file(corpus / "run3" / "checkpoint.slrt"));

    // eval on the saved split manifest reproduces the reported best val WER.
    const CmdResult ev = run_cli(
        corpus, "eval --config run.json --checkpoint run1/checkpoint.slrt "
                "--splits run1/splits.csv --split val --out run1/wer_val.json");
    REQUIRE_MESSAGE(ev.code == 0, ev.output);
    const std::string trained_wer =
        t1.output.substr(t1.output.find("best val wer ") + 13, 6);
    CHECK(ev.output.find("wer " + trained_wer) != std::string::npos);
    CHECK(fs::exists(corpus / "run1" / "wer_val.json"));
    CHECK(fs::exists(corpus / "run1" / "wer_val_config.json"));
    const auto report = nlohmann::json::parse(slr::read_file(corpus / "run1" / "wer_val.json"));
    CHECK(report.at("N").get<int>() == 4);
    CHECK(report.contains("S"));
    CHECK(report.contains("wer"));

    // No test partition in a stratified split.
    const CmdResult no_test = run_cli(
        corpus, "eval --config run.json --checkpoint run1/checkpoint.slrt "
                "--splits run1/splits.csv --split test --out run1/wer_test.json");
    CHECK(no_test.code == 4);

    // attend exports a per-frame profile that sums to 1.
    const CmdResult at = run_cli(
        corpus, "attend --checkpoint run1/checkpoint.slrt --clip clips/S00_W000_t0.json "
                "--out att/profile.csv");
    REQUIRE_MESSAGE(at.code == 0, at.output);
    std::ifstream csv(corpus / "att" / "profile.csv");
    std::string line;
    REQUIRE(static_cast<bool>(std::getline(csv, line)));
    CHECK(line == "frame_index,score");
    double sum = 0.0;
    int rows = 0;
    while (std::getline(csv, line)) {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        CHECK(std::stoi(line.substr(0, comma)) == rows);
        sum += std::stod(line.substr(comma + 1));
        ++rows;
    }
    CHECK(rows >= 6);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fs::exists(corpus / "att" / "profile_config.json"));

    CHECK(run_cli(corpus, "attend --checkpoint nope.slrt --clip clips/S00_W000_t0.json "
                          "--out att/x.csv").code == 3);
    CHECK(run_cli(corpus, "eval --config run.json --checkpoint run1/history.csv "
                          "--splits run1/splits.csv").code == 4);
}

TEST_CASE("train rejects bad run configs with a usage error") {
    const fs::path dir = make_temp_dir("badconfig");
    slr::write_file_atomic(dir / "bad.json",
                           R"({"manifest": "m.csv", "output_dir": "o", "lr": 0.1})");
    const CmdResult r = run_cli(dir, "train --config bad.json");
    CHECK(r.code == 2);
    CHECK(r.output.find("lr") != std::string::npos);

    slr::write_file_atomic(dir / "notjson.json", "{{{");
    CHECK(run_cli(dir, "train --config notjson.json").code == 2);
    CHECK(run_cli(dir, "train --config missing.json").code == 3);
}

TEST_CASE("single-class corpus trains to zero WER") {
    const fs::path dir = make_temp_dir("oneclass");
    CHECK(run_cli(dir, "synth --out . --classes 1 --signers 2 --trials 2 "
                       "--frames-min 6 --frames-max 8 --seed 5").code == 0);
    write_run_config(dir / "run.json", "run", 2);
    const CmdResult t = run_cli(dir, "train --config run.json");
    REQUIRE_MESSAGE(t.code == 0, t.output);
    CHECK(t.output.find("best val wer 0.0000") != std::string::npos);
    const CmdResult ev = run_cli(
        dir, "eval --config run.json --checkpoint run/checkpoint.slrt "
             "--splits run/splits.csv --split val --out run/wer_val.json");
    CHECK(ev.code == 0);
    CHECK(ev.output.find("wer 0.0000") != std::string::npos);
}

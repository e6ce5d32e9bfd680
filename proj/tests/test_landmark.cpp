#include <cmath>

#include "doctest.h"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"
#include "slr/landmark.hpp"
#include "test_util.hpp"

using namespace slr;

TEST_CASE("channel map matches an independently accumulated layout") {
    // Oracle: walk the flattening order, accumulating channel counts.
    int expected_base = 0;
    for (int i = 0; i < kLandmarksPerFrame; ++i) {
        const int count = i == 32 ? 2 : 3;
        CHECK(channel_base(i) == expected_base);
        CHECK(channel_count(i) == count);
        expected_base += count;
    }
    CHECK(expected_base == kFeatureDim);
}

TEST_CASE("channel map frozen anchors") {
    CHECK(channel_base(0) == 0);                      // pose 0
    CHECK(channel_base(11) == 33);                    // left shoulder
    CHECK(channel_base(12) == 36);                    // right shoulder
    CHECK(channel_base(23) == 69);                    // left hip: lower body start
    CHECK(channel_base(32) == 96);                    // pose 32, (x, y) only
    CHECK(channel_count(32) == 2);
    CHECK(channel_base(33) == 98);                    // left hand 0
    CHECK(channel_base(33 + 21) == 161);              // right hand 0
    CHECK(channel_base(74) == 221);                   // right hand 20
    CHECK_THROWS_AS(channel_base(75), DataError);
    CHECK_THROWS_AS(channel_base(-1), DataError);
}

TEST_CASE("flatten_frame places coordinates and zeroes missing landmarks") {
    LandmarkFrame frame;
    frame.pose[0] = {0.5, 0.25, -0.1, true};
    frame.pose[32] = {0.7, 0.8, 123.0, true};  // depth not emitted for pose 32
    frame.left_hand[4] = {0.1, 0.2, 0.3, true};
    frame.right_hand[20] = {0.9, 0.85, 0.05, true};
    const FeatureVector v = flatten_frame(frame);
    CHECK(v[0] == doctest::Approx(0.5));
    CHECK(v[1] == doctest::Approx(0.25));
    CHECK(v[2] == doctest::Approx(-0.1));
    CHECK(v[96] == doctest::Approx(0.7));
    CHECK(v[97] == doctest::Approx(0.8));
    CHECK(v[98 + 3 * 4] == doctest::Approx(0.1));
    CHECK(v[161 + 3 * 20 + 2] == doctest::Approx(0.05));
    // Missing landmarks contribute exact zeros.
    CHECK(v[3] == 0.0f);
    CHECK(v[98] == 0.0f);
}

TEST_CASE("clip JSON round trip preserves values and missing landmarks") {
    Clip clip = slr_test::small_clip(4);
    clip.meta.view = View::lateral;
    clip.meta.source_fps = 30.0;
    clip.frames[1].pose[5].present = false;
    clip.frames[2].left_hand[7].present = false;
    const std::string text = serialize_clip(clip);
    const Clip back = parse_clip(text);
    CHECK(clip_equal(clip, back));
    CHECK(back.meta.view == View::lateral);
    CHECK(back.meta.source_fps.has_value());
    CHECK(*back.meta.source_fps == doctest::Approx(30.0));
    // Serialization is deterministic.
    CHECK(serialize_clip(back) == text);
}

TEST_CASE("parse_clip accepts a handwritten document with nulls") {
    std::string frames = "[";
    for (int i = 0; i < kLandmarksPerFrame; ++i) {
        if (i) frames += ",";
        frames += i == 3 ? "null" : "[0.5,0.5,0.0]";
    }
    frames += "]";
    const std::string text = R"({"signer":"S01","word":"W002","view":"front","frames":[)" +
                             frames + "]}";
    const Clip clip = parse_clip(text);
    CHECK(clip.frame_count() == 1);
    CHECK(clip.meta.signer_id == "S01");
    CHECK_FALSE(clip.frames[0].pose[3].present);
    CHECK(clip.frames[0].pose[4].present);
}

TEST_CASE("parse_clip rejects malformed documents") {
    const std::string good = serialize_clip(slr_test::small_clip(1));
    CHECK_THROWS_AS(parse_clip("not json"), DataError);
    CHECK_THROWS_AS(parse_clip("{}"), DataError);
    CHECK_THROWS_AS(parse_clip(R"({"signer":"a","word":"b","view":"sideways","frames":[]})"),
                    DataError);

    SUBCASE("wrong landmark count names the frame") {
        std::string text = R"({"signer":"a","word":"b","view":"front","frames":[[[0,0,0]]]})";
        try {
            parse_clip(text);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("frame 0") != std::string::npos);
            CHECK(std::string(e.what()).find("75") != std::string::npos);
        }
    }

    SUBCASE("non-finite coordinate is rejected") {
        std::string frames = "[";
        for (int i = 0; i < kLandmarksPerFrame; ++i) {
            if (i) frames += ",";
            frames += i == 7 ? "[1e999,0.5,0.0]" : "[0.5,0.5,0.0]";
        }
        frames += "]";
        const std::string text =
            R"({"signer":"a","word":"b","view":"front","frames":[)" + frames + "]}";
        CHECK_THROWS_AS(parse_clip(text), DataError);
    }

    SUBCASE("unknown key is rejected") {
        std::string text = good;
        text.insert(1, R"("extra":1,)");
        CHECK_THROWS_AS(parse_clip(text), DataError);
    }

    SUBCASE("zero frames is rejected") {
        CHECK_THROWS_AS(parse_clip(R"({"signer":"a","word":"b","view":"front","frames":[]})"),
                        DataError);
    }

    SUBCASE("non-positive fps is rejected") {
        std::string text = good;
        text.insert(1, R"("fps":0,)");
        CHECK_THROWS_AS(parse_clip(text), DataError);
    }
}

TEST_CASE("clip file IO reports the offending path") {
    const auto dir = slr_test::make_temp_dir("landmark_io");
    const Clip clip = slr_test::small_clip(2);
    save_clip(clip, dir / "c.json");
    CHECK(clip_equal(load_clip(dir / "c.json"), clip));
    CHECK_THROWS_AS(load_clip(dir / "absent.json"), IoError);
    write_file_atomic(dir / "broken.json", "{");
    try {
        load_clip(dir / "broken.json");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("broken.json") != std::string::npos);
    }
}

TEST_CASE("manifest round trip with and without splits") {
    const auto dir = slr_test::make_temp_dir("manifest");
    std::filesystem::create_directories(dir / "clips");
    Manifest manifest;
    manifest.base_dir = dir;
    for (int i = 0; i < 3; ++i) {
        ManifestEntry e;
        e.clip_path = "clips/c" + std::to_string(i) + ".json";
        e.signer_id = "S0" + std::to_string(i % 2);
        e.word_id = "W00" + std::to_string(i);
        save_clip(slr_test::small_clip(2), dir / e.clip_path);
        manifest.entries.push_back(e);
    }
    save_manifest(manifest, dir / "manifest.csv");
    Manifest back = load_manifest(dir / "manifest.csv");
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[1].clip_path == "clips/c1.json");
    CHECK(back.entries[1].signer_id == "S01");
    CHECK_FALSE(back.entries[0].split.has_value());

    manifest.entries[0].split = Split::train;
    manifest.entries[1].split = Split::val;
    manifest.entries[2].split = Split::test;
    save_manifest(manifest, dir / "with_splits.csv");
    back = load_manifest(dir / "with_splits.csv");
    CHECK(back.entries[0].split == Split::train);
    CHECK(back.entries[1].split == Split::val);
    CHECK(back.entries[2].split == Split::test);
}

TEST_CASE("manifest validation errors") {
    const auto dir = slr_test::make_temp_dir("manifest_bad");
    std::filesystem::create_directories(dir / "clips");
    save_clip(slr_test::small_clip(2), dir / "clips/c0.json");

    SUBCASE("duplicate clip path") {
        write_file_atomic(dir / "m.csv",
                          "clip_path,signer,word,view\n"
                          "clips/c0.json,S00,W000,front\n"
                          "clips/c0.json,S01,W001,front\n");
        CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
    }
    SUBCASE("missing referenced file") {
        write_file_atomic(dir / "m.csv",
                          "clip_path,signer,word,view\nclips/nope.json,S00,W000,front\n");
        CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
    }
    SUBCASE("bad header") {
        write_file_atomic(dir / "m.csv", "path,who,what\n");
        CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
    }
    SUBCASE("bad view token") {
        write_file_atomic(dir / "m.csv",
                          "clip_path,signer,word,view\nclips/c0.json,S00,W000,diagonal\n");
        CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
    }
}

TEST_CASE("name mappings round trip") {
    CHECK(view_from_name(view_name(View::front)) == View::front);
    CHECK(view_from_name(view_name(View::lateral)) == View::lateral);
    for (Split s : {Split::train, Split::val, Split::test})
        CHECK(split_from_name(split_name(s)) == s);
    CHECK_THROWS_AS(view_from_name("x"), DataError);
    CHECK_THROWS_AS(split_from_name("x"), DataError);
}

TEST_CASE("landmark_equal ignores coordinates of missing landmarks") {
    Landmark a{0.1, 0.2, 0.3, false};
    Landmark b{0.9, 0.8, 0.7, false};
    CHECK(landmark_equal(a, b));
    a.present = true;
    CHECK_FALSE(landmark_equal(a, b));
    b = a;
    CHECK(landmark_equal(a, b));
    b.x = std::nextafter(b.x, 1.0);
    CHECK_FALSE(landmark_equal(a, b));
}

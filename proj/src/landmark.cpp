#include "slr/landmark.hpp"

#include <cctype>
#include <cmath>
#include <set>

#include "json.hpp"
#include "slr/errors.hpp"
#include "slr/io_util.hpp"

namespace slr {

namespace {

using ordered_json = nlohmann::ordered_json;

bool has_whitespace(const std::string& s) {
    for (unsigned char c : s)
        if (std::isspace(c)) return true;
    return false;
}

void check_token(const std::string& value, const char* what) {
    if (value.empty()) throw DataError(std::string(what) + " is empty");
    if (has_whitespace(value)) throw DataError(std::string(what) + " contains whitespace: '" + value + "'");
}

}  // namespace

bool landmark_equal(const Landmark& a, const Landmark& b) {
    if (a.present != b.present) return false;
    if (!a.present) return true;
    return a.x == b.x && a.y == b.y && a.d == b.d;
}

const Landmark& LandmarkFrame::at(int index) const {
    if (index < kPoseCount) return pose[index];
    if (index < kPoseCount + kHandCount) return left_hand[index - kPoseCount];
    return right_hand[index - kPoseCount - kHandCount];
}

Landmark& LandmarkFrame::at(int index) {
    return const_cast<Landmark&>(static_cast<const LandmarkFrame&>(*this).at(index));
}

bool frame_equal(const LandmarkFrame& a, const LandmarkFrame& b) {
    for (int i = 0; i < kLandmarksPerFrame; ++i)
        if (!landmark_equal(a.at(i), b.at(i))) return false;
    return true;
}

std::string_view view_name(View v) {
    return v == View::front ? "front" : "lateral";
}

View view_from_name(std::string_view name) {
    if (name == "front") return View::front;
    if (name == "lateral") return View::lateral;
    throw DataError("unknown view '" + std::string(name) + "'");
}

bool clip_equal(const Clip& a, const Clip& b) {
    if (a.meta.signer_id != b.meta.signer_id || a.meta.word_id != b.meta.word_id ||
        a.meta.view != b.meta.view || a.meta.source_fps != b.meta.source_fps)
        return false;
    if (a.frames.size() != b.frames.size()) return false;
    for (std::size_t t = 0; t < a.frames.size(); ++t)
        if (!frame_equal(a.frames[t], b.frames[t])) return false;
    return true;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw DataError("unknown split '" + std::string(name) + "'");
}

int channel_base(int index) {
    if (index < 0 || index >= kLandmarksPerFrame)
        throw DataError("landmark index " + std::to_string(index) + " out of range");
    if (index <= 32) return 3 * index;                      // pose; 32 -> 96
    if (index < kPoseCount + kHandCount) return 98 + 3 * (index - kPoseCount);
    return 161 + 3 * (index - kPoseCount - kHandCount);
}

int channel_count(int index) {
    return index == 32 ? 2 : 3;
}

Clip parse_clip(std::string_view json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw DataError(std::string("malformed clip JSON: ") + e.what());
    }
    if (!doc.is_object()) throw DataError("clip JSON root is not an object");
    for (const auto& item : doc.items()) {
        const std::string& key = item.key();
        if (key != "signer" && key != "word" && key != "view" && key != "fps" && key != "frames")
            throw DataError("clip JSON: unknown key '" + key + "'");
    }
    for (const char* key : {"signer", "word", "view", "frames"})
        if (!doc.contains(key)) throw DataError(std::string("clip JSON: missing key '") + key + "'");

    Clip clip;
    if (!doc["signer"].is_string() || !doc["word"].is_string() || !doc["view"].is_string())
        throw DataError("clip JSON: signer, word, and view must be strings");
    clip.meta.signer_id = doc["signer"].get<std::string>();
    clip.meta.word_id = doc["word"].get<std::string>();
    check_token(clip.meta.signer_id, "signer");
    check_token(clip.meta.word_id, "word");
    clip.meta.view = view_from_name(doc["view"].get<std::string>());
    if (doc.contains("fps")) {
        if (!doc["fps"].is_number()) throw DataError("clip JSON: fps must be a number");
        const double fps = doc["fps"].get<double>();
        if (!(fps > 0.0) || !std::isfinite(fps)) throw DataError("clip JSON: fps must be positive");
        clip.meta.source_fps = fps;
    }

    const auto& frames = doc["frames"];
    if (!frames.is_array() || frames.empty())
        throw DataError("clip JSON: frames must be a non-empty array");
    clip.frames.resize(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& frame = frames[t];
        if (!frame.is_array() || frame.size() != kLandmarksPerFrame)
            throw DataError("frame " + std::to_string(t) + ": expected " +
                            std::to_string(kLandmarksPerFrame) + " landmarks");
        for (int i = 0; i < kLandmarksPerFrame; ++i) {
            const auto& entry = frame[i];
            Landmark& lm = clip.frames[t].at(i);
            if (entry.is_null()) continue;  // present = false, zeros
            if (!entry.is_array() || entry.size() != 3)
                throw DataError("frame " + std::to_string(t) + ", landmark " + std::to_string(i) +
                                ": expected null or [x, y, d]");
            for (int a = 0; a < 3; ++a)
                if (!entry[a].is_number())
                    throw DataError("frame " + std::to_string(t) + ", landmark " +
                                    std::to_string(i) + ": non-numeric coordinate");
            lm.x = entry[0].get<double>();
            lm.y = entry[1].get<double>();
            lm.d = entry[2].get<double>();
            lm.present = true;
            if (!std::isfinite(lm.x) || !std::isfinite(lm.y) || !std::isfinite(lm.d))
                throw DataError("frame " + std::to_string(t) + ", landmark " + std::to_string(i) +
                                ": non-finite coordinate");
        }
    }
    return clip;
}

std::string serialize_clip(const Clip& clip) {
    check_token(clip.meta.signer_id, "signer");
    check_token(clip.meta.word_id, "word");
    if (clip.frames.empty()) throw DataError("clip has no frames");
    ordered_json doc;
    doc["signer"] = clip.meta.signer_id;
    doc["word"] = clip.meta.word_id;
    doc["view"] = std::string(view_name(clip.meta.view));
    if (clip.meta.source_fps) doc["fps"] = *clip.meta.source_fps;
    ordered_json frames = ordered_json::array();
    for (const LandmarkFrame& frame : clip.frames) {
        ordered_json row = ordered_json::array();
        for (int i = 0; i < kLandmarksPerFrame; ++i) {
            const Landmark& lm = frame.at(i);
            if (lm.present)
                row.push_back(ordered_json::array({lm.x, lm.y, lm.d}));
            else
                row.push_back(nullptr);
        }
        frames.push_back(std::move(row));
    }
    doc["frames"] = std::move(frames);
    return doc.dump();
}

Clip load_clip(const std::filesystem::path& path) {
    try {
        return parse_clip(read_file(path));
    } catch (const IoError&) {
        throw;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_clip(const Clip& clip, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_clip(clip));
}

FeatureVector flatten_frame(const LandmarkFrame& frame) {
    FeatureVector out{};
    for (int i = 0; i < kLandmarksPerFrame; ++i) {
        const Landmark& lm = frame.at(i);
        if (!lm.present) continue;
        const int base = channel_base(i);
        out[base] = static_cast<float>(lm.x);
        out[base + 1] = static_cast<float>(lm.y);
        if (channel_count(i) == 3) out[base + 2] = static_cast<float>(lm.d);
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& csv_path) {
    const std::string content = read_file(csv_path);
    Manifest manifest;
    manifest.base_dir = csv_path.parent_path();
    if (manifest.base_dir.empty()) manifest.base_dir = ".";

    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t nl = content.find('\n', start);
        if (nl == std::string::npos) nl = content.size();
        std::string line = content.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw DataError(csv_path.string() + ": empty manifest");

    bool with_split = false;
    if (lines[0] == "clip_path,signer,word,view,split")
        with_split = true;
    else if (lines[0] != "clip_path,signer,word,view")
        throw DataError(csv_path.string() + ": bad manifest header '" + lines[0] + "'");

    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_csv_line(lines[i]);
        const std::size_t expected = with_split ? 5 : 4;
        if (fields.size() != expected)
            throw DataError(csv_path.string() + ": line " + std::to_string(i + 1) + ": expected " +
                            std::to_string(expected) + " fields");
        ManifestEntry entry;
        entry.clip_path = fields[0];
        entry.signer_id = fields[1];
        entry.word_id = fields[2];
        if (entry.clip_path.empty())
            throw DataError(csv_path.string() + ": line " + std::to_string(i + 1) + ": empty clip_path");
        check_token(entry.signer_id, "signer");
        check_token(entry.word_id, "word");
        entry.view = view_from_name(fields[3]);
        if (with_split && !fields[4].empty()) entry.split = split_from_name(fields[4]);
        if (!seen.insert(entry.clip_path).second)
            throw DataError(csv_path.string() + ": duplicate clip_path '" + entry.clip_path + "'");
        manifest.entries.push_back(std::move(entry));
    }

    for (const ManifestEntry& entry : manifest.entries) {
        const std::filesystem::path p = manifest.resolve(entry);
        if (!std::filesystem::exists(p))
            throw DataError(csv_path.string() + ": referenced clip missing: " + p.string());
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& csv_path) {
    bool with_split = false;
    for (const ManifestEntry& e : manifest.entries)
        if (e.split) with_split = true;
    std::string out = with_split ? "clip_path,signer,word,view,split\n" : "clip_path,signer,word,view\n";
    for (const ManifestEntry& e : manifest.entries) {
        out += e.clip_path;
        out += ',';
        out += e.signer_id;
        out += ',';
        out += e.word_id;
        out += ',';
        out += view_name(e.view);
        if (with_split) {
            out += ',';
            if (e.split) out += split_name(*e.split);
        }
        out += '\n';
    }
    write_file_atomic(csv_path, out);
}

}  // namespace slr

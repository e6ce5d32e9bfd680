#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace slr {

std::string read_file(const std::filesystem::path& path);

// Writes to a temp file in the same directory, then renames over the target.
// Interrupted or failed writes never leave a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Little-endian scalar packing for the binary formats.
inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

// Cursor-based readers; throw DataError on truncation.
struct ByteReader {
    std::string_view data;
    std::size_t pos = 0;

    void require(std::size_t n) const;
    std::string_view take(std::size_t n);
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    bool done() const { return pos == data.size(); }
};

}  // namespace slr

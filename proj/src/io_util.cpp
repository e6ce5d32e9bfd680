#include "slr/io_util.hpp"

#include <atomic>
#include <fstream>
#include <system_error>

#include "slr/errors.hpp"

namespace slr {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return content;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<std::uint64_t> counter{0};
    std::filesystem::path dir = path.parent_path();
    if (dir.empty()) dir = ".";
    const std::filesystem::path tmp =
        dir / (path.filename().string() + ".tmp" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::error_code ec2;
        std::filesystem::remove(tmp, ec2);
        throw IoError("rename to " + path.string() + " failed: " + ec.message());
    }
}

void ByteReader::require(std::size_t n) const {
    if (data.size() - pos < n) throw DataError("truncated input");
}

std::string_view ByteReader::take(std::size_t n) {
    require(n);
    std::string_view v = data.substr(pos, n);
    pos += n;
    return v;
}

std::uint32_t ByteReader::u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

float ByteReader::f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double ByteReader::f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace slr

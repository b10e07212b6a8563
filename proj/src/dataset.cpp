#include "dt/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dt {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error(path + ": write failed");
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset, const std::string& what) {
    throw std::runtime_error(path + ": DTDS parse error at byte " + std::to_string(offset) + ": " +
                             what);
}

}  // namespace

void Dataset::validate() const {
    if (grid_h < 1 || grid_w < 1 || seq_len < 0 || n_sequences < 0)
        throw std::runtime_error("dataset: bad dimensions");
    if (bytes.size() != expected_bytes())
        throw std::runtime_error("dataset: payload is " + std::to_string(bytes.size()) +
                                 " bytes, expected " + std::to_string(expected_bytes()));
    for (std::uint8_t b : bytes)
        if (b > 1) throw std::runtime_error("dataset: channel byte out of {0,1}");
    for (int s = 0; s < n_sequences; ++s) {
        for (int t = 0; t < seq_len; ++t) {
            const std::uint8_t* vis = v(s, t);
            const std::uint8_t* occ = r(s, t);
            for (std::size_t i = 0; i < cells(); ++i)
                if (occ[i] && !vis[i])
                    throw std::runtime_error("dataset: r = 1 on an invisible cell (sequence " +
                                             std::to_string(s) + ", step " + std::to_string(t) +
                                             ")");
        }
    }
}

void write_dataset(const std::string& path, const Dataset& data) {
    data.validate();
    std::vector<std::uint8_t> out;
    out.reserve(28 + data.bytes.size());
    out.insert(out.end(), {'D', 'T', 'D', 'S'});
    put_u32(out, kDatasetVersion);
    put_u32(out, static_cast<std::uint32_t>(data.grid_h));
    put_u32(out, static_cast<std::uint32_t>(data.grid_w));
    put_u32(out, static_cast<std::uint32_t>(data.seq_len));
    put_u32(out, static_cast<std::uint32_t>(data.n_sequences));
    put_u32(out, data.has_ground_truth ? kDatasetFlagGroundTruth : 0u);
    out.insert(out.end(), data.bytes.begin(), data.bytes.end());
    write_file(path, out.data(), out.size());
}

Dataset read_dataset(const std::string& path) {
    const std::vector<std::uint8_t> buf = read_file(path);
    std::size_t off = 0;
    const auto need = [&](std::size_t n, const char* what) {
        if (buf.size() - off < n) parse_fail(path, off, std::string("truncated ") + what);
    };
    need(4, "magic");
    if (buf[0] != 'D' || buf[1] != 'T' || buf[2] != 'D' || buf[3] != 'S')
        parse_fail(path, 0, "bad magic, not a DTDS file");
    off = 4;
    const auto u32 = [&](const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(buf[off + b]) << (8 * b);
        off += 4;
        return v;
    };
    const std::uint32_t version = u32("version");
    if (version != kDatasetVersion)
        parse_fail(path, off - 4, "unsupported version " + std::to_string(version));

    Dataset data;
    data.grid_h = static_cast<int>(u32("grid_h"));
    data.grid_w = static_cast<int>(u32("grid_w"));
    data.seq_len = static_cast<int>(u32("seq_len"));
    data.n_sequences = static_cast<int>(u32("n_sequences"));
    const std::uint32_t flags = u32("flags");
    if (flags & ~kDatasetFlagGroundTruth)
        parse_fail(path, off - 4, "unknown flag bits " + std::to_string(flags));
    data.has_ground_truth = flags & kDatasetFlagGroundTruth;

    if (buf.size() - off != data.expected_bytes())
        parse_fail(path, off,
                   "payload is " + std::to_string(buf.size() - off) + " bytes, header implies " +
                       std::to_string(data.expected_bytes()));
    data.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(off), buf.end());
    data.validate();
    return data;
}

void write_pgm(const std::string& path, const Image& image) {
    char header[48];
    const int n = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", image.w, image.h);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), image.pix.begin(), image.pix.end());
    write_file(path, out.data(), out.size());
}

}  // namespace dt

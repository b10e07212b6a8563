#include "dt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dt {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t off = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error("DTPK parse error at byte " + std::to_string(off) + ": " + msg);
    }
    void need(std::size_t n, const char* what) {
        if (off + n > buf.size()) fail(std::string("truncated ") + what);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(buf[off]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[off + 1])) << 8);
        off += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[off + i])) << (8 * i);
        off += 4;
        return v;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[off++]);
    }
};

}  // namespace

void write_dtpk(const std::string& path, const std::vector<NamedParam>& params) {
    std::string out;
    out += "DTPK";
    put_u32(out, kCheckpointVersion);
    for (const auto& p : params) {
        if (p.name.size() > 0xffff) throw std::invalid_argument("DTPK: parameter name too long");
        if (p.dims.size() > 0xff) throw std::invalid_argument("DTPK: rank too large");
        std::size_t n = 1;
        for (auto d : p.dims) n *= d;
        if (n != p.values.size())
            throw std::invalid_argument("DTPK: dims do not match value count for " + p.name);
        put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out += p.name;
        out.push_back(static_cast<char>(p.dims.size()));
        for (auto d : p.dims) put_u32(out, d);
        for (double v : p.values) put_f32(out, static_cast<float>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedParam> read_dtpk(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(4, "magic");
    if (buf.compare(0, 4, "DTPK") != 0) r.fail("bad magic");
    r.off = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        r.fail("unsupported version " + std::to_string(version));

    std::vector<NamedParam> params;
    while (r.off < buf.size()) {
        NamedParam p;
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        p.name.assign(buf, r.off, name_len);
        r.off += name_len;
        const std::uint8_t rank = r.u8("rank");
        std::size_t n = 1;
        for (int i = 0; i < rank; ++i) {
            p.dims.push_back(r.u32("dim"));
            n *= p.dims.back();
            if (n > (std::size_t{1} << 32)) r.fail("tensor size overflows");
        }
        r.need(n * 4, "tensor data");
        p.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(
                            static_cast<std::uint8_t>(buf[r.off + i * 4 + b]))
                        << (8 * b);
            float fv;
            std::memcpy(&fv, &bits, 4);
            p.values[i] = static_cast<double>(fv);
        }
        r.off += n * 4;
        params.push_back(std::move(p));
    }
    return params;
}

}  // namespace dt

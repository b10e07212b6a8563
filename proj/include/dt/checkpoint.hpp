#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dt {

// One named tensor in a checkpoint. Values are held as doubles in memory but
// stored as little-endian 32-bit floats on disk.
struct NamedParam {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

// "DTPK" checkpoint container:
//   magic "DTPK", version u32 LE, then per parameter:
//   name length u16 LE, UTF-8 name, rank u8, dims u32 LE each,
//   raw little-endian float32 data. Parameters run to end of file.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_dtpk(const std::string& path, const std::vector<NamedParam>& params);

// Throws std::runtime_error with the offending byte offset on malformed input.
std::vector<NamedParam> read_dtpk(const std::string& path);

}  // namespace dt

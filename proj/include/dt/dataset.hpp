#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dt {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kDatasetFlagGroundTruth = 1u;

// A batch of recorded sequences: per step the sensor channels v (visible)
// and r (occupied reading), optionally preceded by the simulator ground
// truth y. One byte per cell per channel, laid out
// (sequence, time, channel, row, col); channel order [y?, v, r].
struct Dataset {
    int grid_h = 0;
    int grid_w = 0;
    int seq_len = 0;
    int n_sequences = 0;
    bool has_ground_truth = false;
    std::vector<std::uint8_t> bytes;

    int channels() const { return has_ground_truth ? 3 : 2; }
    std::size_t cells() const { return static_cast<std::size_t>(grid_h) * grid_w; }
    std::size_t expected_bytes() const {
        return static_cast<std::size_t>(n_sequences) * seq_len * channels() * cells();
    }

    std::uint8_t* frame_channel(int seq, int t, int channel) {
        return bytes.data() +
               ((static_cast<std::size_t>(seq) * seq_len + t) * channels() + channel) * cells();
    }
    const std::uint8_t* frame_channel(int seq, int t, int channel) const {
        return bytes.data() +
               ((static_cast<std::size_t>(seq) * seq_len + t) * channels() + channel) * cells();
    }

    // Channel accessors; y() requires has_ground_truth.
    const std::uint8_t* y(int seq, int t) const { return frame_channel(seq, t, 0); }
    const std::uint8_t* v(int seq, int t) const {
        return frame_channel(seq, t, has_ground_truth ? 1 : 0);
    }
    const std::uint8_t* r(int seq, int t) const {
        return frame_channel(seq, t, has_ground_truth ? 2 : 1);
    }

    // Throws std::runtime_error if sizes disagree, a channel byte is not 0/1,
    // or some cell has r = 1 where v = 0.
    void validate() const;
};

// "DTDS" container: magic, then version, grid_h, grid_w, seq_len,
// n_sequences, flags as u32 little-endian (28-byte header), then the raw
// channel bytes. Round-trips bit-exactly.
void write_dataset(const std::string& path, const Dataset& data);
// Throws std::runtime_error with the offending byte offset on malformed input.
Dataset read_dataset(const std::string& path);

// 8-bit grayscale image, row-major.
struct Image {
    int h = 0, w = 0;
    std::vector<std::uint8_t> pix;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), pix(static_cast<std::size_t>(h_) * w_, 0) {}
    std::uint8_t& at(int i, int j) { return pix[static_cast<std::size_t>(i) * w + j]; }
    std::uint8_t at(int i, int j) const { return pix[static_cast<std::size_t>(i) * w + j]; }
};

// Binary PGM: "P5\n{W} {H}\n255\n" + raw bytes.
void write_pgm(const std::string& path, const Image& image);

}  // namespace dt

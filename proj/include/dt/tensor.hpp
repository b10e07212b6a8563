#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dt {

// Dense row-major (H, W, C) array of doubles; the channel dimension is
// contiguous. This is the universal value type of the network core.
class Tensor {
public:
    Tensor() = default;
    Tensor(int h, int w, int c) : h_(h), w_(w), c_(c) {
        assert(h >= 0 && w >= 0 && c >= 0);
        data_.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    }

    static Tensor full(int h, int w, int c, double value) {
        Tensor t(h, w, c);
        for (double& v : t.data_) v = value;
        return t;
    }

    int h() const { return h_; }
    int w() const { return w_; }
    int c() const { return c_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j, int k) {
        assert(i >= 0 && i < h_ && j >= 0 && j < w_ && k >= 0 && k < c_);
        return data_[(static_cast<std::size_t>(i) * w_ + j) * c_ + k];
    }
    double operator()(int i, int j, int k) const {
        assert(i >= 0 && i < h_ && j >= 0 && j < w_ && k >= 0 && k < c_);
        return data_[(static_cast<std::size_t>(i) * w_ + j) * c_ + k];
    }

    // Pointer to the channel vector of pixel (i, j).
    double* px(int i, int j) { return data_.data() + (static_cast<std::size_t>(i) * w_ + j) * c_; }
    const double* px(int i, int j) const {
        return data_.data() + (static_cast<std::size_t>(i) * w_ + j) * c_;
    }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    bool operator==(const Tensor& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_ && data_ == o.data_;
    }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

// H x W grid of {0,1} bytes; occupancy grids, visibility masks and the raw
// observation channels all use this.
struct ByteGrid {
    int h = 0, w = 0;
    std::vector<std::uint8_t> cells;

    ByteGrid() = default;
    ByteGrid(int h_, int w_) : h(h_), w(w_), cells(static_cast<std::size_t>(h_) * w_, 0) {}

    std::uint8_t& at(int i, int j) {
        assert(i >= 0 && i < h && j >= 0 && j < w);
        return cells[static_cast<std::size_t>(i) * w + j];
    }
    std::uint8_t at(int i, int j) const {
        assert(i >= 0 && i < h && j >= 0 && j < w);
        return cells[static_cast<std::size_t>(i) * w + j];
    }

    bool operator==(const ByteGrid& o) const = default;
};

}  // namespace dt

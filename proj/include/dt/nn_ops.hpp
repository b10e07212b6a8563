#pragma once

#include <span>
#include <string>

#include "dt/tensor.hpp"

namespace dt {

// 2D convolution layer with same-size zero padding. Kernel layout is
// (kh, kw, c_in, c_out) row-major with c_out contiguous; kh and kw must be
// odd so the padding is symmetric.
struct ConvLayer {
    int kh = 0, kw = 0, cin = 0, cout = 0;
    std::vector<double> kernel;  // kh * kw * cin * cout
    std::vector<double> bias;    // cout

    ConvLayer() = default;
    ConvLayer(int kh_, int kw_, int cin_, int cout_)
        : kh(kh_), kw(kw_), cin(cin_), cout(cout_),
          kernel(static_cast<std::size_t>(kh_) * kw_ * cin_ * cout_, 0.0),
          bias(static_cast<std::size_t>(cout_), 0.0) {
        assert(kh_ % 2 == 1 && kw_ % 2 == 1);
    }

    double& k(int ki, int kj, int ci, int co) {
        return kernel[((static_cast<std::size_t>(ki) * kw + kj) * cin + ci) * cout + co];
    }
    double k(int ki, int kj, int ci, int co) const {
        return kernel[((static_cast<std::size_t>(ki) * kw + kj) * cin + ci) * cout + co];
    }

    std::size_t weight_count() const { return kernel.size() + bias.size(); }
};

struct ConvGrads {
    Tensor grad_input;               // empty when not requested
    std::vector<double> grad_kernel;
    std::vector<double> grad_bias;
};

// out(i,j,o) = bias(o) + sum over the kernel window of input * kernel,
// zeros outside the input bounds.
Tensor conv2d_same_forward(const Tensor& input, const ConvLayer& layer);

// Exact gradients of the forward map. grad_input computation can be skipped
// (first layer of a network) by passing want_grad_input = false.
ConvGrads conv2d_same_backward(const Tensor& input, const ConvLayer& layer,
                               const Tensor& grad_out, bool want_grad_input = true);

Tensor sigmoid_forward(const Tensor& input);
// Backward from the cached forward *output*: grad_in = grad_out * y * (1 - y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

struct BceResult {
    double loss = 0.0;
    Tensor grad_p;
    std::size_t masked_cells = 0;
};

// Masked binary cross-entropy over an (H, W, 1) probability grid.
// loss = -sum_{mask=1} [y log p + (1-y) log(1-p)] / max(1, sum mask),
// with p clamped to [1e-7, 1 - 1e-7] before the logs. Cells with mask = 0
// contribute nothing to the loss or the gradient (their targets are never
// read). normalize = false gives the raw-sum variant.
BceResult masked_bce(const Tensor& p, const Tensor& target, const Tensor& mask,
                     bool normalize = true);

// params <- params - lr * grads. Throws if any gradient entry is non-finite
// (before mutating anything); `what` names the parameter in the diagnostic.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              const std::string& what = "params");

inline constexpr double kBceClamp = 1e-7;

}  // namespace dt

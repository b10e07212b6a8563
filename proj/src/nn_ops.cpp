#include "dt/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dt {

namespace {

// Dot product with four independent accumulators. Fixed summation order
// ((s0+s1)+(s2+s3)) keeps results bit-reproducible run to run.
inline double dot4(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline void axpy(double a, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

void check_conv_shapes(const Tensor& input, const ConvLayer& layer) {
    if (layer.kh % 2 == 0 || layer.kw % 2 == 0)
        throw std::invalid_argument("conv2d: kernel dims must be odd");
    if (input.c() != layer.cin)
        throw std::invalid_argument("conv2d: input has " + std::to_string(input.c()) +
                                    " channels, kernel expects " + std::to_string(layer.cin));
    if (input.h() < 1 || input.w() < 1) throw std::invalid_argument("conv2d: empty input");
}

// The hot loops are instantiated for the channel widths the tracker actually
// uses so the per-pixel accumulators live in registers; CT = 0 is the
// runtime-width fallback computing the identical operation sequence.
template <int CT>
void conv_forward_impl(const Tensor& input, const ConvLayer& layer, Tensor& out) {
    const int H = input.h(), W = input.w();
    const int cin = layer.cin;
    const int cout = CT > 0 ? CT : layer.cout;
    const int ph = layer.kh / 2, pw = layer.kw / 2;

    for (int i = 0; i < H; ++i) {
        const int ki_lo = std::max(0, ph - i);
        const int ki_hi = std::min(layer.kh - 1, H - 1 + ph - i);
        for (int j = 0; j < W; ++j) {
            const int kj_lo = std::max(0, pw - j);
            const int kj_hi = std::min(layer.kw - 1, W - 1 + pw - j);
            const int span = kj_hi - kj_lo + 1;
            double* op = out.px(i, j);
            for (int o = 0; o < cout; ++o) op[o] = layer.bias[o];
            for (int ki = ki_lo; ki <= ki_hi; ++ki) {
                const int y = i + ki - ph;
                const double* ip = input.px(y, j + kj_lo - pw);
                const double* kp = layer.kernel.data() +
                                   (static_cast<std::size_t>(ki) * layer.kw + kj_lo) * cin * cout;
                for (int e = 0; e < span * cin; ++e) {
                    const double v = ip[e];
                    const double* kr = kp + static_cast<std::size_t>(e) * cout;
                    for (int o = 0; o < cout; ++o) op[o] += v * kr[o];
                }
            }
        }
    }
}

template <int CT>
void conv_grad_kernel_impl(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out,
                           ConvGrads& g) {
    const int H = input.h(), W = input.w();
    const int cin = layer.cin;
    const int cout = CT > 0 ? CT : layer.cout;
    const int ph = layer.kh / 2, pw = layer.kw / 2;

    for (int i = 0; i < H; ++i) {
        const int ki_lo = std::max(0, ph - i);
        const int ki_hi = std::min(layer.kh - 1, H - 1 + ph - i);
        for (int j = 0; j < W; ++j) {
            const int kj_lo = std::max(0, pw - j);
            const int kj_hi = std::min(layer.kw - 1, W - 1 + pw - j);
            const int span = kj_hi - kj_lo + 1;
            const double* gp = grad_out.px(i, j);
            for (int o = 0; o < cout; ++o) g.grad_bias[o] += gp[o];
            for (int ki = ki_lo; ki <= ki_hi; ++ki) {
                const int y = i + ki - ph;
                const double* ip = input.px(y, j + kj_lo - pw);
                double* kg = g.grad_kernel.data() +
                             (static_cast<std::size_t>(ki) * layer.kw + kj_lo) * cin * cout;
                for (int e = 0; e < span * cin; ++e) {
                    const double v = ip[e];
                    double* kr = kg + static_cast<std::size_t>(e) * cout;
                    for (int o = 0; o < cout; ++o) kr[o] += v * gp[o];
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d_same_forward(const Tensor& input, const ConvLayer& layer) {
    check_conv_shapes(input, layer);
    const int H = input.h(), W = input.w();
    const int cin = layer.cin;
    const int ph = layer.kh / 2, pw = layer.kw / 2;
    Tensor out(H, W, layer.cout);

    if (layer.cout == 1) {
        // Single output channel: the (kj, ci) block of the kernel row and the
        // input pixels along the image row are both contiguous, so each ki
        // contributes one long dot product.
        for (int i = 0; i < H; ++i) {
            const int ki_lo = std::max(0, ph - i);
            const int ki_hi = std::min(layer.kh - 1, H - 1 + ph - i);
            for (int j = 0; j < W; ++j) {
                const int kj_lo = std::max(0, pw - j);
                const int kj_hi = std::min(layer.kw - 1, W - 1 + pw - j);
                const int span = kj_hi - kj_lo + 1;
                double acc = layer.bias[0];
                for (int ki = ki_lo; ki <= ki_hi; ++ki) {
                    const int y = i + ki - ph;
                    const double* ip = input.px(y, j + kj_lo - pw);
                    const double* kp = layer.kernel.data() +
                                       (static_cast<std::size_t>(ki) * layer.kw + kj_lo) * cin;
                    acc += dot4(ip, kp, span * cin);
                }
                out.px(i, j)[0] = acc;
            }
        }
        return out;
    }

    switch (layer.cout) {
        case 8: conv_forward_impl<8>(input, layer, out); break;
        case 16: conv_forward_impl<16>(input, layer, out); break;
        case 24: conv_forward_impl<24>(input, layer, out); break;
        default: conv_forward_impl<0>(input, layer, out); break;
    }
    return out;
}

ConvGrads conv2d_same_backward(const Tensor& input, const ConvLayer& layer,
                               const Tensor& grad_out, bool want_grad_input) {
    check_conv_shapes(input, layer);
    if (grad_out.h() != input.h() || grad_out.w() != input.w() || grad_out.c() != layer.cout)
        throw std::invalid_argument("conv2d backward: grad_out shape mismatch");

    const int H = input.h(), W = input.w();
    const int cin = layer.cin;
    const int ph = layer.kh / 2, pw = layer.kw / 2;

    ConvGrads g;
    g.grad_kernel.assign(layer.kernel.size(), 0.0);
    g.grad_bias.assign(layer.bias.size(), 0.0);

    if (layer.cout == 1) {
        for (int i = 0; i < H; ++i) {
            const int ki_lo = std::max(0, ph - i);
            const int ki_hi = std::min(layer.kh - 1, H - 1 + ph - i);
            for (int j = 0; j < W; ++j) {
                const double gv = grad_out.px(i, j)[0];
                g.grad_bias[0] += gv;
                if (gv == 0.0) continue;
                const int kj_lo = std::max(0, pw - j);
                const int kj_hi = std::min(layer.kw - 1, W - 1 + pw - j);
                const int span = kj_hi - kj_lo + 1;
                for (int ki = ki_lo; ki <= ki_hi; ++ki) {
                    const int y = i + ki - ph;
                    const double* ip = input.px(y, j + kj_lo - pw);
                    double* kg = g.grad_kernel.data() +
                                 (static_cast<std::size_t>(ki) * layer.kw + kj_lo) * cin;
                    axpy(gv, ip, kg, span * cin);
                }
            }
        }
    } else {
        switch (layer.cout) {
            case 8: conv_grad_kernel_impl<8>(input, layer, grad_out, g); break;
            case 16: conv_grad_kernel_impl<16>(input, layer, grad_out, g); break;
            case 24: conv_grad_kernel_impl<24>(input, layer, grad_out, g); break;
            default: conv_grad_kernel_impl<0>(input, layer, grad_out, g); break;
        }
    }

    if (want_grad_input) {
        // grad_input is a same-padded convolution of grad_out with the
        // spatially flipped, channel-transposed kernel.
        ConvLayer flipped(layer.kh, layer.kw, layer.cout, cin);
        for (int ki = 0; ki < layer.kh; ++ki)
            for (int kj = 0; kj < layer.kw; ++kj)
                for (int ci = 0; ci < cin; ++ci)
                    for (int o = 0; o < layer.cout; ++o)
                        flipped.k(layer.kh - 1 - ki, layer.kw - 1 - kj, o, ci) =
                            layer.k(ki, kj, ci, o);
        g.grad_input = conv2d_same_forward(grad_out, flipped);
    }
    return g;
}

Tensor sigmoid_forward(const Tensor& input) {
    Tensor out(input.h(), input.w(), input.c());
    const double* in = input.data();
    double* op = out.data();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double z = in[i];
        // Branch on sign to avoid overflow of exp for large |z|.
        if (z >= 0.0) {
            op[i] = 1.0 / (1.0 + std::exp(-z));
        } else {
            const double e = std::exp(z);
            op[i] = e / (1.0 + e);
        }
    }
    return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
    assert(output.same_shape(grad_out));
    Tensor gin(output.h(), output.w(), output.c());
    const double* y = output.data();
    const double* g = grad_out.data();
    double* gi = gin.data();
    const std::size_t n = output.size();
    for (std::size_t i = 0; i < n; ++i) gi[i] = g[i] * y[i] * (1.0 - y[i]);
    return gin;
}

BceResult masked_bce(const Tensor& p, const Tensor& target, const Tensor& mask, bool normalize) {
    assert(p.same_shape(target) && p.same_shape(mask));
    BceResult r;
    r.grad_p = Tensor(p.h(), p.w(), p.c());

    const double* pv = p.data();
    const double* tv = target.data();
    const double* mv = mask.data();
    double* gv = r.grad_p.data();
    const std::size_t n = p.size();

    double loss = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mv[i] == 0.0) continue;
        ++count;
        const double y = tv[i];
        const double pc = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
        loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
        // Gradient of the clamped loss: zero in the flat (clamped) region.
        if (pv[i] > kBceClamp && pv[i] < 1.0 - kBceClamp)
            gv[i] = (pc - y) / (pc * (1.0 - pc));
    }

    const double denom = normalize ? static_cast<double>(std::max<std::size_t>(1, count)) : 1.0;
    r.loss = loss / denom;
    r.masked_cells = count;
    if (denom != 1.0) {
        const double inv = 1.0 / denom;
        for (std::size_t i = 0; i < n; ++i) gv[i] *= inv;
    }
    return r;
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              const std::string& what) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd_step: size mismatch for " + what);
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("sgd_step: non-finite gradient in " + what + " at index " +
                                     std::to_string(i));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

}  // namespace dt

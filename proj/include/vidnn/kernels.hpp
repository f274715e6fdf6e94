#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "vidnn/parallel.hpp"
#include "vidnn/tensor.hpp"

// Numeric kernels. All kernels are pure functions over value-semantic
// tensors; loop orders are fixed so identical inputs give bit-identical
// outputs run to run. Images are channels-last [H,W,C]; convolution kernels
// are [kh,kw,C_in,C_out]; convolution is cross-correlation (no kernel flip).

namespace vidnn {

enum class Padding { same, valid };

enum class Act { linear, relu, sigmoid, tanh_, softmax };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::linear: return "linear";
        case Act::relu: return "relu";
        case Act::sigmoid: return "sigmoid";
        case Act::tanh_: return "tanh";
        case Act::softmax: return "softmax";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "linear") return Act::linear;
    if (s == "relu") return Act::relu;
    if (s == "sigmoid") return Act::sigmoid;
    if (s == "tanh") return Act::tanh_;
    if (s == "softmax") return Act::softmax;
    throw StructureError("unknown activation '" + s + "'");
}

namespace detail {

inline void axpy(float a, const float* x, float* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline float dot(const float* a, const float* b, int n) {
    float s = 0.0f;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

inline float sigmoid_scalar(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (float& v : y) v = sigmoid_scalar(v);
    return y;
}

inline Tensor tanh_t(const Tensor& x) {
    Tensor y = x;
    for (float& v : y) v = std::tanh(v);
    return y;
}

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y) v = v > 0.0f ? v : 0.0f;
    return y;
}

/// Numerically stable softmax over a rank-1 tensor; max subtraction keeps
/// exp() in range for arbitrarily shifted inputs.
inline Tensor softmax(const Tensor& x) {
    if (x.rank() != 1) throw DimensionError("softmax expects a rank-1 tensor, got " + shape_str(x.shape()));
    Tensor y = x;
    float m = y[0];
    for (float v : y) m = std::max(m, v);
    double sum = 0.0;
    for (float& v : y) {
        v = std::exp(v - m);
        sum += v;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& v : y) v *= inv;
    return y;
}

/// Applies an activation in place. Softmax requires rank-1 input.
inline void apply_act(Tensor& t, Act act) {
    switch (act) {
        case Act::linear: return;
        case Act::relu:
            for (float& v : t) v = v > 0.0f ? v : 0.0f;
            return;
        case Act::sigmoid:
            for (float& v : t) v = sigmoid_scalar(v);
            return;
        case Act::tanh_:
            for (float& v : t) v = std::tanh(v);
            return;
        case Act::softmax:
            t = softmax(t);
            return;
    }
}

// d(activation)/d(pre-activation) expressed through the activation OUTPUT y,
// applied to an upstream gradient g. Softmax uses the full Jacobian.
inline Tensor act_backward(const Tensor& g, const Tensor& y, Act act) {
    require_same_shape(g, y, "act_backward");
    Tensor dz = g;
    switch (act) {
        case Act::linear:
            return dz;
        case Act::relu:
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = y[i] > 0.0f ? dz[i] : 0.0f;
            return dz;
        case Act::sigmoid:
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= y[i] * (1.0f - y[i]);
            return dz;
        case Act::tanh_:
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= 1.0f - y[i] * y[i];
            return dz;
        case Act::softmax: {
            // dz_i = y_i * (g_i - sum_j g_j y_j)
            double inner = 0.0;
            for (std::size_t i = 0; i < dz.size(); ++i) inner += static_cast<double>(g[i]) * y[i];
            const float s = static_cast<float>(inner);
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = y[i] * (g[i] - s);
            return dz;
        }
    }
    return dz;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

/// [M,K] x [K,N] -> [M,N]. For each output element the K contributions are
/// summed left to right, so the result is bit-identical to the naive triple
/// loop (and reproducible across runs and thread counts).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out(Shape{m, n});
    const float* ad = a.data();
    const float* bd = b.data();
    float* od = out.data();
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            float* ci = od + i * n;
            const float* ai = ad + i * k;
            for (int kk = 0; kk < k; ++kk) detail::axpy(ai[kk], bd + static_cast<std::size_t>(kk) * n, ci, n);
        }
    });
    return out;
}

/// [M,N] x [N] -> [M].
inline Tensor matvec(const Tensor& w, const Tensor& x) {
    if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0))
        throw DimensionError("matvec: incompatible shapes " + shape_str(w.shape()) + " x " + shape_str(x.shape()));
    const int m = w.dim(0), n = w.dim(1);
    Tensor y(Shape{m});
    const float* wd = w.data();
    const float* xd = x.data();
    float* yd = y.data();
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) yd[i] = detail::dot(wd + i * n, xd, n);
    });
    return y;
}

/// W^T x a for W [M,N], a [M] -> [N]. Row-major friendly form of the
/// transposed product used by dense/GRU input gradients.
inline Tensor matvec_transposed(const Tensor& w, const Tensor& a) {
    if (w.rank() != 2 || a.rank() != 1 || w.dim(0) != a.dim(0))
        throw DimensionError("matvec_transposed: incompatible shapes " + shape_str(w.shape()) + " x " +
                             shape_str(a.shape()));
    const int m = w.dim(0), n = w.dim(1);
    Tensor y(Shape{n});
    for (int i = 0; i < m; ++i) detail::axpy(a[static_cast<std::size_t>(i)], w.data() + static_cast<std::size_t>(i) * n, y.data(), n);
    return y;
}

/// dW += a (x) x, the rank-1 update of dense/GRU weight gradients.
inline void outer_acc(Tensor& dw, const Tensor& a, const Tensor& x) {
    if (dw.rank() != 2 || dw.dim(0) != a.dim(0) || dw.dim(1) != x.dim(0))
        throw DimensionError("outer_acc: incompatible shapes " + shape_str(dw.shape()) + " vs " +
                             shape_str(a.shape()) + " (x) " + shape_str(x.shape()));
    const int m = dw.dim(0), n = dw.dim(1);
    float* wd = dw.data();
    const float* xd = x.data();
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) detail::axpy(a[i], xd, wd + i * n, n);
    });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

struct ConvGeom {
    int h_out, w_out;    // output extents
    int pad_top, pad_left;
    int h_pad, w_pad;    // padded input extents
};

inline ConvGeom conv_geometry(int h, int w, int kh, int kw, int stride, Padding padding) {
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    ConvGeom g{};
    if (padding == Padding::valid) {
        if (kh > h || kw > w)
            throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                 " larger than input " + std::to_string(h) + "x" + std::to_string(w));
        g.h_out = (h - kh) / stride + 1;
        g.w_out = (w - kw) / stride + 1;
        g.pad_top = g.pad_left = 0;
        g.h_pad = h;
        g.w_pad = w;
    } else {
        // same: out = ceil(in / stride), zero fill, extra pixel on bottom/right.
        g.h_out = (h + stride - 1) / stride;
        g.w_out = (w + stride - 1) / stride;
        const int pad_h = std::max(0, (g.h_out - 1) * stride + kh - h);
        const int pad_w = std::max(0, (g.w_out - 1) * stride + kw - w);
        g.pad_top = pad_h / 2;
        g.pad_left = pad_w / 2;
        g.h_pad = h + pad_h;
        g.w_pad = w + pad_w;
    }
    return g;
}

inline std::vector<float> pad_image(const Tensor& in, const ConvGeom& g) {
    const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
    std::vector<float> pad(static_cast<std::size_t>(g.h_pad) * g.w_pad * c, 0.0f);
    const std::size_t row_bytes = static_cast<std::size_t>(w) * c * sizeof(float);
    for (int y = 0; y < h; ++y) {
        const float* src = in.data() + static_cast<std::size_t>(y) * w * c;
        float* dst = pad.data() + (static_cast<std::size_t>(y + g.pad_top) * g.w_pad + g.pad_left) * c;
        std::memcpy(dst, src, row_bytes);
    }
    return pad;
}

inline void conv_check(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (input.rank() != 3) throw DimensionError("conv2d: input must be [H,W,C], got " + shape_str(input.shape()));
    if (kernels.rank() != 4)
        throw DimensionError("conv2d: kernels must be [kh,kw,C_in,C_out], got " + shape_str(kernels.shape()));
    if (kernels.dim(2) != input.dim(2))
        throw DimensionError("conv2d: input channels " + std::to_string(input.dim(2)) +
                             " do not match kernel C_in " + std::to_string(kernels.dim(2)));
    if (bias.rank() != 1 || bias.dim(0) != kernels.dim(3))
        throw DimensionError("conv2d: bias must be [C_out]=" + std::to_string(kernels.dim(3)) + ", got " +
                             shape_str(bias.shape()));
}

// Stride-1 correlation over a padded source. Four output pixels are
// accumulated together so every kernel row is fetched once per four pixels
// instead of once per pixel (the axpy pattern is otherwise bound on kernel
// traffic). Per output element the accumulation order equals the plain
// one-pixel loop, so results are identical to it bit for bit.
inline void correlate_stride1(const float* src, int wp, const float* ker, int kh, int kw, int cin, const float* bias,
                              float* dst, int h_out, int w_out, int cout) {
    parallel_for(static_cast<std::size_t>(h_out), [&](std::size_t y0, std::size_t y1) {
        std::vector<float> acc_buf(static_cast<std::size_t>(4) * cout);
        float* a0 = acc_buf.data();
        float* a1 = a0 + cout;
        float* a2 = a1 + cout;
        float* a3 = a2 + cout;
        for (std::size_t y = y0; y < y1; ++y) {
            int x = 0;
            for (; x + 4 <= w_out; x += 4) {
                if (bias) {
                    std::memcpy(a0, bias, static_cast<std::size_t>(cout) * sizeof(float));
                    std::memcpy(a1, bias, static_cast<std::size_t>(cout) * sizeof(float));
                    std::memcpy(a2, bias, static_cast<std::size_t>(cout) * sizeof(float));
                    std::memcpy(a3, bias, static_cast<std::size_t>(cout) * sizeof(float));
                } else {
                    std::fill(acc_buf.begin(), acc_buf.end(), 0.0f);
                }
                for (int ky = 0; ky < kh; ++ky) {
                    const float* srow = src + ((y + static_cast<std::size_t>(ky)) * wp + static_cast<std::size_t>(x)) * cin;
                    const float* krow = ker + static_cast<std::size_t>(ky) * kw * cin * cout;
                    for (int kx = 0; kx < kw; ++kx) {
                        const float* spx = srow + static_cast<std::size_t>(kx) * cin;
                        const float* kpx = krow + static_cast<std::size_t>(kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float v0 = spx[ci];
                            const float v1 = spx[cin + ci];
                            const float v2 = spx[2 * cin + ci];
                            const float v3 = spx[3 * cin + ci];
                            const float* kp = kpx + static_cast<std::size_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) {
                                const float kv = kp[co];
                                a0[co] += v0 * kv;
                                a1[co] += v1 * kv;
                                a2[co] += v2 * kv;
                                a3[co] += v3 * kv;
                            }
                        }
                    }
                }
                float* out_px = dst + (y * static_cast<std::size_t>(w_out) + static_cast<std::size_t>(x)) * cout;
                std::memcpy(out_px, acc_buf.data(), static_cast<std::size_t>(4) * cout * sizeof(float));
            }
            for (; x < w_out; ++x) {
                float* acc = dst + (y * static_cast<std::size_t>(w_out) + static_cast<std::size_t>(x)) * cout;
                if (bias)
                    std::memcpy(acc, bias, static_cast<std::size_t>(cout) * sizeof(float));
                else
                    std::fill(acc, acc + cout, 0.0f);
                for (int ky = 0; ky < kh; ++ky) {
                    const float* srow = src + ((y + static_cast<std::size_t>(ky)) * wp + static_cast<std::size_t>(x)) * cin;
                    const float* krow = ker + static_cast<std::size_t>(ky) * kw * cin * cout;
                    for (int kx = 0; kx < kw; ++kx) {
                        const float* spx = srow + static_cast<std::size_t>(kx) * cin;
                        const float* kpx = krow + static_cast<std::size_t>(kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci)
                            axpy(spx[ci], kpx + static_cast<std::size_t>(ci) * cout, acc, cout);
                    }
                }
            }
        }
    });
}

}  // namespace detail

/// Cross-correlation of [H,W,C_in] with [kh,kw,C_in,C_out] plus per-channel
/// bias. `same` zero-pads to H'=ceil(H/stride); `valid` uses no padding.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, Padding padding) {
    detail::conv_check(input, kernels, bias);
    const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
    const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const auto g = detail::conv_geometry(h, w, kh, kw, stride, padding);

    const bool padded = (g.pad_top > 0 || g.pad_left > 0 || g.h_pad != h || g.w_pad != w);
    std::vector<float> pad_buf;
    const float* src = input.data();
    if (padded) {
        pad_buf = detail::pad_image(input, g);
        src = pad_buf.data();
    }

    Tensor out(Shape{g.h_out, g.w_out, cout});
    const float* kd = kernels.data();
    const float* bd = bias.data();
    float* od = out.data();
    const int wp = g.w_pad;

    if (stride == 1) {
        detail::correlate_stride1(src, wp, kd, kh, kw, cin, bd, od, g.h_out, g.w_out, cout);
        return out;
    }

    parallel_for(static_cast<std::size_t>(g.h_out), [&](std::size_t oy0, std::size_t oy1) {
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const int iy0 = static_cast<int>(oy) * stride;
            for (int ox = 0; ox < g.w_out; ++ox) {
                const int ix0 = ox * stride;
                float* acc = od + (oy * g.w_out + ox) * cout;
                std::memcpy(acc, bd, static_cast<std::size_t>(cout) * sizeof(float));
                for (int ky = 0; ky < kh; ++ky) {
                    const float* in_row = src + (static_cast<std::size_t>(iy0 + ky) * wp + ix0) * cin;
                    const float* k_row = kd + static_cast<std::size_t>(ky) * kw * cin * cout;
                    for (int kx = 0; kx < kw; ++kx) {
                        const float* in_px = in_row + static_cast<std::size_t>(kx) * cin;
                        const float* k_px = k_row + static_cast<std::size_t>(kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci)
                            detail::axpy(in_px[ci], k_px + static_cast<std::size_t>(ci) * cout, acc, cout);
                    }
                }
            }
        }
    });
    return out;
}

namespace detail {

// Stride-1 input gradient as a correlation of the fully padded output
// gradient with the flipped, channel-transposed kernel; runs the same axpy
// pattern as the forward pass.
inline Tensor conv2d_grad_input_stride1(const Tensor& dout, const Tensor& kernels, const Shape& input_shape,
                                        const ConvGeom& g) {
    const int h = input_shape[0], w = input_shape[1], cin = input_shape[2];
    const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

    // Kf[ky][kx][co][ci] = K[kh-1-ky][kw-1-kx][ci][co]
    std::vector<float> flipped(kernels.size());
    for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
            for (int ci = 0; ci < cin; ++ci) {
                const float* src =
                    kernels.data() + ((static_cast<std::size_t>(kh - 1 - ky) * kw + (kw - 1 - kx)) * cin + ci) * cout;
                for (int co = 0; co < cout; ++co)
                    flipped[((static_cast<std::size_t>(ky) * kw + kx) * cout + co) * cin + ci] = src[co];
            }

    // pad dout by (kh-1, kw-1) on every side
    const int hp = g.h_out + 2 * (kh - 1);
    const int wp = g.w_out + 2 * (kw - 1);
    std::vector<float> dyp(static_cast<std::size_t>(hp) * wp * cout, 0.0f);
    for (int y = 0; y < g.h_out; ++y)
        std::memcpy(dyp.data() + ((static_cast<std::size_t>(y + kh - 1) * wp) + (kw - 1)) * cout,
                    dout.data() + static_cast<std::size_t>(y) * g.w_out * cout,
                    static_cast<std::size_t>(g.w_out) * cout * sizeof(float));

    // produce the input gradient directly on the cropped grid: the source
    // walk starts at the (pad_top, pad_left) offset inside the padded dout
    Tensor din(input_shape);
    const float* shifted = dyp.data() + (static_cast<std::size_t>(g.pad_top) * wp + g.pad_left) * cout;
    detail::correlate_stride1(shifted, wp, flipped.data(), kh, kw, cout, nullptr, din.data(), h, w, cin);
    return din;
}

}  // namespace detail

/// Gradient of conv2d w.r.t. its input. Every input element is produced by
/// exactly one (thread, loop) position, so results do not depend on the
/// thread count.
inline Tensor conv2d_grad_input(const Tensor& dout, const Tensor& kernels, const Shape& input_shape, int stride,
                                Padding padding) {
    const int h = input_shape[0], w = input_shape[1], cin = input_shape[2];
    const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const auto g = detail::conv_geometry(h, w, kh, kw, stride, padding);
    if (stride == 1) return detail::conv2d_grad_input_stride1(dout, kernels, input_shape, g);

    Tensor din(input_shape);
    const float* dod = dout.data();
    const float* kd = kernels.data();
    float* dd = din.data();

    parallel_for(static_cast<std::size_t>(h), [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y) {
            const int iy = static_cast<int>(y) + g.pad_top;  // padded coords
            for (int x = 0; x < w; ++x) {
                const int ix = x + g.pad_left;
                float* dpx = dd + (y * w + x) * cin;
                for (int ky = 0; ky < kh; ++ky) {
                    const int ty = iy - ky;
                    if (ty < 0 || ty % stride != 0) continue;
                    const int oy = ty / stride;
                    if (oy >= g.h_out) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int tx = ix - kx;
                        if (tx < 0 || tx % stride != 0) continue;
                        const int ox = tx / stride;
                        if (ox >= g.w_out) continue;
                        const float* dorow = dod + (static_cast<std::size_t>(oy) * g.w_out + ox) * cout;
                        const float* k_px = kd + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci)
                            dpx[ci] += detail::dot(dorow, k_px + static_cast<std::size_t>(ci) * cout, cout);
                    }
                }
            }
        }
    });
    return din;
}

/// Gradients of conv2d w.r.t. kernels and bias. Parallel over kernel rows
/// (ky,kx,ci): each thread owns a disjoint slice of dkernels and walks the
/// output in a fixed order, keeping results thread-count invariant.
inline void conv2d_grad_params(const Tensor& dout, const Tensor& input, const Tensor& kernels, int stride,
                               Padding padding, Tensor& dkernels, Tensor& dbias) {
    const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
    const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const auto g = detail::conv_geometry(h, w, kh, kw, stride, padding);

    const bool padded = (g.pad_top > 0 || g.pad_left > 0 || g.h_pad != h || g.w_pad != w);
    std::vector<float> pad_buf;
    const float* src = input.data();
    if (padded) {
        pad_buf = detail::pad_image(input, g);
        src = pad_buf.data();
    }

    dkernels = Tensor(kernels.shape());
    dbias = Tensor(Shape{cout});
    const float* dod = dout.data();
    float* dkd = dkernels.data();
    const int wp = g.w_pad;

    // blocks of four kernel rows (one ky,kx and four adjacent ci) walk the
    // output once together, quartering the dout traffic; each dkernels row
    // is owned by exactly one block, so any thread split gives identical
    // results
    const int ci_blocks = (cin + 3) / 4;
    const std::size_t groups = static_cast<std::size_t>(kh) * kw * ci_blocks;
    parallel_for(groups, [&](std::size_t g0, std::size_t g1) {
        std::vector<float> acc_buf(static_cast<std::size_t>(4) * cout);
        for (std::size_t grp = g0; grp < g1; ++grp) {
            const int cb = static_cast<int>(grp % static_cast<std::size_t>(ci_blocks));
            const int kx = static_cast<int>((grp / static_cast<std::size_t>(ci_blocks)) % kw);
            const int ky = static_cast<int>(grp / (static_cast<std::size_t>(ci_blocks) * kw));
            const int ci0 = cb * 4;
            const int nci = std::min(4, cin - ci0);
            std::fill(acc_buf.begin(), acc_buf.end(), 0.0f);
            float* a0 = acc_buf.data();
            float* a1 = a0 + cout;
            float* a2 = a1 + cout;
            float* a3 = a2 + cout;
            for (int oy = 0; oy < g.h_out; ++oy) {
                const float* in_row = src + (static_cast<std::size_t>(oy * stride + ky) * wp + kx) * cin + ci0;
                const float* do_row = dod + static_cast<std::size_t>(oy) * g.w_out * cout;
                if (nci == 4) {
                    for (int ox = 0; ox < g.w_out; ++ox) {
                        const float* spx = in_row + static_cast<std::size_t>(ox) * stride * cin;
                        const float* dpx = do_row + static_cast<std::size_t>(ox) * cout;
                        const float v0 = spx[0], v1 = spx[1], v2 = spx[2], v3 = spx[3];
                        for (int co = 0; co < cout; ++co) {
                            const float d = dpx[co];
                            a0[co] += v0 * d;
                            a1[co] += v1 * d;
                            a2[co] += v2 * d;
                            a3[co] += v3 * d;
                        }
                    }
                } else {
                    for (int ox = 0; ox < g.w_out; ++ox) {
                        const float* spx = in_row + static_cast<std::size_t>(ox) * stride * cin;
                        const float* dpx = do_row + static_cast<std::size_t>(ox) * cout;
                        for (int j = 0; j < nci; ++j)
                            detail::axpy(spx[j], dpx, acc_buf.data() + static_cast<std::size_t>(j) * cout, cout);
                    }
                }
            }
            float* dk_base = dkd + ((static_cast<std::size_t>(ky) * kw + kx) * cin + ci0) * cout;
            std::memcpy(dk_base, acc_buf.data(), static_cast<std::size_t>(nci) * cout * sizeof(float));
        }
    });

    float* dbd = dbias.data();
    const std::size_t npix = static_cast<std::size_t>(g.h_out) * g.w_out;
    for (std::size_t p = 0; p < npix; ++p) detail::axpy(1.0f, dod + p * cout, dbd, cout);
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

struct PoolResult {
    Tensor out;
    std::vector<std::int32_t> argmax;  // flat index into the input, per output element
};

/// Per-channel window maxima with floor semantics: windows that would overrun
/// the input are dropped. Ties break toward the first element in row-major
/// scan order. Argmax indices feed the backward pass.
inline PoolResult maxpool2d(const Tensor& input, int window, int stride) {
    if (input.rank() != 3) throw DimensionError("maxpool2d: input must be [H,W,C], got " + shape_str(input.shape()));
    if (window < 1 || stride < 1) throw DimensionError("maxpool2d: window and stride must be >= 1");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    if (window > h || window > w)
        throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds input " + std::to_string(h) +
                             "x" + std::to_string(w));
    const int h_out = (h - window) / stride + 1;
    const int w_out = (w - window) / stride + 1;

    PoolResult res{Tensor(Shape{h_out, w_out, c}), {}};
    res.argmax.assign(static_cast<std::size_t>(h_out) * w_out * c, 0);
    const float* in = input.data();
    float* out = res.out.data();
    std::int32_t* am = res.argmax.data();

    for (int oy = 0; oy < h_out; ++oy) {
        for (int ox = 0; ox < w_out; ++ox) {
            float* opx = out + (static_cast<std::size_t>(oy) * w_out + ox) * c;
            std::int32_t* apx = am + (static_cast<std::size_t>(oy) * w_out + ox) * c;
            const int iy0 = oy * stride, ix0 = ox * stride;
            for (int ch = 0; ch < c; ++ch) {
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t best_idx = 0;
                for (int ky = 0; ky < window; ++ky) {
                    const std::size_t row = (static_cast<std::size_t>(iy0 + ky) * w + ix0) * c + ch;
                    for (int kx = 0; kx < window; ++kx) {
                        const float v = in[row + static_cast<std::size_t>(kx) * c];
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<std::int32_t>(row + static_cast<std::size_t>(kx) * c);
                        }
                    }
                }
                opx[ch] = best;
                apx[ch] = best_idx;
            }
        }
    }
    return res;
}

inline Tensor maxpool2d_grad(const Tensor& dout, const std::vector<std::int32_t>& argmax, const Shape& input_shape) {
    Tensor din(input_shape);
    if (dout.size() != argmax.size()) throw DimensionError("maxpool2d_grad: argmax/dout size mismatch");
    for (std::size_t i = 0; i < argmax.size(); ++i) din[static_cast<std::size_t>(argmax[i])] += dout[i];
    return din;
}

}  // namespace vidnn

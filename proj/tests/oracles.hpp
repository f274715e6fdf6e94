#pragma once

// Independent brute-force reference implementations used only by the tests.
// They deliberately share no code with the library kernels: plain nested
// loops, double accumulation, and the written-out update equations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vidnn/gru.hpp"
#include "vidnn/tensor.hpp"

namespace oracle {

using vidnn::Shape;
using vidnn::Tensor;

/// Triple loop i-j-k with left-to-right float accumulation over k: the same
/// summation order the library pins, so results must match bit for bit.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out(Shape{m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int kk = 0; kk < k; ++kk) acc += a.at2(i, kk) * b.at2(kk, j);
            out[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = acc;
        }
    return out;
}

/// Naive six-loop sliding-window cross-correlation with double accumulation.
inline Tensor conv2d(const Tensor& in, const Tensor& ker, const Tensor& bias, int stride, bool same) {
    const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
    const int kh = ker.dim(0), kw = ker.dim(1), cout = ker.dim(3);

    int h_out, w_out, pad_top, pad_left;
    if (same) {
        h_out = (h + stride - 1) / stride;
        w_out = (w + stride - 1) / stride;
        pad_top = std::max(0, (h_out - 1) * stride + kh - h) / 2;
        pad_left = std::max(0, (w_out - 1) * stride + kw - w) / 2;
    } else {
        h_out = (h - kh) / stride + 1;
        w_out = (w - kw) / stride + 1;
        pad_top = pad_left = 0;
    }

    Tensor out(Shape{h_out, w_out, cout});
    for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = bias[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ci = 0; ci < cin; ++ci) {
                            const int iy = oy * stride + ky - pad_top;
                            const int ix = ox * stride + kx - pad_left;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += static_cast<double>(in.at3(iy, ix, ci)) * ker.at4(ky, kx, ci, co);
                        }
                out[(static_cast<std::size_t>(oy) * w_out + ox) * cout + static_cast<std::size_t>(co)] =
                    static_cast<float>(acc);
            }
    return out;
}

/// Exhaustive window scan per channel.
inline Tensor maxpool2d(const Tensor& in, int window, int stride) {
    const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
    const int h_out = (h - window) / stride + 1;
    const int w_out = (w - window) / stride + 1;
    Tensor out(Shape{h_out, w_out, c});
    for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox)
            for (int ch = 0; ch < c; ++ch) {
                float best = -std::numeric_limits<float>::infinity();
                for (int ky = 0; ky < window; ++ky)
                    for (int kx = 0; kx < window; ++kx)
                        best = std::max(best, in.at3(oy * stride + ky, ox * stride + kx, ch));
                out[(static_cast<std::size_t>(oy) * w_out + ox) * c + static_cast<std::size_t>(ch)] = best;
            }
    return out;
}

/// Scalar per-component evaluation of the GRU update:
///   z_i = sigma(sum_j Wz[i][j] x[j] + sum_j Uz[i][j] h[j] + bz[i])
///   r_i = sigma(... r ...)
///   hc_i = tanh(sum_j Wh[i][j] x[j] + sum_j Uh[i][j] (r[j] h[j]) + bh[i])
///   h'_i = (1 - z_i) h[i] + z_i hc_i
inline std::vector<double> gru_cell(const std::vector<double>& x, const std::vector<double>& h,
                                    const vidnn::GruParams& p) {
    const int u = p.units(), d = p.input_dim();
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> z(static_cast<std::size_t>(u)), r(static_cast<std::size_t>(u)), hc(static_cast<std::size_t>(u)),
        out(static_cast<std::size_t>(u));
    for (int i = 0; i < u; ++i) {
        double az = p.b_z[static_cast<std::size_t>(i)];
        double ar = p.b_r[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) {
            az += static_cast<double>(p.w_z.at2(i, j)) * x[static_cast<std::size_t>(j)];
            ar += static_cast<double>(p.w_r.at2(i, j)) * x[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < u; ++j) {
            az += static_cast<double>(p.u_z.at2(i, j)) * h[static_cast<std::size_t>(j)];
            ar += static_cast<double>(p.u_r.at2(i, j)) * h[static_cast<std::size_t>(j)];
        }
        z[static_cast<std::size_t>(i)] = sig(az);
        r[static_cast<std::size_t>(i)] = sig(ar);
    }
    for (int i = 0; i < u; ++i) {
        double ah = p.b_h[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) ah += static_cast<double>(p.w_h.at2(i, j)) * x[static_cast<std::size_t>(j)];
        for (int j = 0; j < u; ++j)
            ah += static_cast<double>(p.u_h.at2(i, j)) * (r[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)]);
        hc[static_cast<std::size_t>(i)] = std::tanh(ah);
    }
    for (int i = 0; i < u; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out[k] = (1.0 - z[k]) * h[k] + z[k] * hc[k];
    }
    return out;
}

/// Direct evaluation of the align-corners bilinear formula per output pixel.
inline Tensor resize_bilinear(const Tensor& img, int oh, int ow) {
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor out(Shape{oh, ow, c});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double sy = oh == 1 ? 0.0 : static_cast<double>(y) * (h - 1) / (oh - 1);
            const double sx = ow == 1 ? 0.0 : static_cast<double>(x) * (w - 1) / (ow - 1);
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y1 = std::min(y0 + 1, h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - y0, fx = sx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const double v = (1 - fy) * ((1 - fx) * img.at3(y0, x0, ch) + fx * img.at3(y0, x1, ch)) +
                                 fy * ((1 - fx) * img.at3(y1, x0, ch) + fx * img.at3(y1, x1, ch));
                out[(static_cast<std::size_t>(y) * ow + x) * c + static_cast<std::size_t>(ch)] = static_cast<float>(v);
            }
        }
    return out;
}

/// Fills a tensor with uniform values from a seeded stream.
inline Tensor random_tensor(vidnn::Rng& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace oracle

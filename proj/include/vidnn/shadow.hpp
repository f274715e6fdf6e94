#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vidnn/model.hpp"

// Double-precision forward evaluation used only by the gradient checker.
// Finite differences divide a tiny loss difference by 2*eps; evaluating
// L(theta +- eps) with float32 arithmetic leaves ~1e-7 noise in the loss and
// ~5e-5 absolute noise in the derivative, which can never assert a 1e-4
// relative tolerance. This path reads the float32 parameters exactly but
// accumulates everything in 64 bits. It is also an independent
// implementation of every layer's forward semantics.

namespace vidnn::shadow {

using DVec = std::vector<double>;

/// Record of every discrete decision a forward pass takes: relu sign bits
/// and maxpool argmax choices. Two perturbed evaluations are smoothly
/// comparable for finite differences only when their traces agree.
struct BranchTrace {
    std::vector<std::int32_t> decisions;
    void push(std::int32_t d) { decisions.push_back(d); }
    bool operator==(const BranchTrace&) const = default;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline DVec dense_eval(const Tensor& w, const Tensor& b, Act act, const DVec& x, BranchTrace* trace) {
    const int m = w.dim(0), n = w.dim(1);
    DVec y(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        double acc = b[static_cast<std::size_t>(i)];
        const float* row = w.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    switch (act) {
        case Act::linear: break;
        case Act::relu:
            for (double& v : y) {
                const bool on = v > 0.0;
                if (trace) trace->push(on ? 1 : 0);
                v = on ? v : 0.0;
            }
            break;
        case Act::sigmoid:
            for (double& v : y) v = sigmoid(v);
            break;
        case Act::tanh_:
            for (double& v : y) v = std::tanh(v);
            break;
        case Act::softmax: {
            double mx = y[0];
            for (double v : y) mx = std::max(mx, v);
            double sum = 0.0;
            for (double& v : y) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (double& v : y) v /= sum;
            break;
        }
    }
    return y;
}

inline DVec conv_eval(const Conv2d& layer, const Shape& in_shape, const DVec& x, BranchTrace* trace) {
    Conv2d& l = const_cast<Conv2d&>(layer);
    const Tensor& ker = l.kernels();
    const Tensor& bias = l.bias();
    const auto hy = layer.hyper();
    int stride = 1;
    Padding padding = Padding::same;
    Act act = Act::linear;
    for (const auto& [k, v] : hy) {
        if (k == "stride") stride = std::stoi(v);
        if (k == "padding") padding = v == "same" ? Padding::same : Padding::valid;
        if (k == "activation") act = act_from_name(v);
    }
    const int h = in_shape[0], w = in_shape[1], cin = in_shape[2];
    const int kh = ker.dim(0), kw = ker.dim(1), cout = ker.dim(3);
    const auto g = vidnn::detail::conv_geometry(h, w, kh, kw, stride, padding);

    // widen the kernel once and zero-pad the input so the hot loop is a
    // plain axpy over the output channels
    DVec kd(ker.size());
    for (std::size_t i = 0; i < ker.size(); ++i) kd[i] = static_cast<double>(ker.data()[i]);
    DVec pad(static_cast<std::size_t>(g.h_pad) * g.w_pad * cin, 0.0);
    for (int yy = 0; yy < h; ++yy)
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(yy) * w * cin),
                  x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(yy + 1) * w * cin),
                  pad.begin() + static_cast<std::ptrdiff_t>(
                                    (static_cast<std::size_t>(yy + g.pad_top) * g.w_pad + g.pad_left) * cin));

    DVec y(static_cast<std::size_t>(g.h_out) * g.w_out * cout);
    parallel_for(static_cast<std::size_t>(g.h_out), [&](std::size_t oy0, std::size_t oy1) {
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
            for (int ox = 0; ox < g.w_out; ++ox) {
                double* acc = y.data() + (oy * g.w_out + ox) * cout;
                for (int co = 0; co < cout; ++co) acc[co] = bias[static_cast<std::size_t>(co)];
                const std::size_t iy0 = oy * static_cast<std::size_t>(stride);
                const std::size_t ix0 = static_cast<std::size_t>(ox) * stride;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const double* px = pad.data() + ((iy0 + ky) * g.w_pad + ix0 + kx) * cin;
                        const double* kp = kd.data() + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const double v = px[ci];
                            const double* krow = kp + static_cast<std::size_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) acc[co] += v * krow[co];
                        }
                    }
            }
        }
    });
    if (act == Act::relu)
        for (double& v : y) {
            const bool on = v > 0.0;
            if (trace) trace->push(on ? 1 : 0);
            v = on ? v : 0.0;
        }
    return y;
}

inline DVec pool_eval(int window, int stride, const Shape& in_shape, const DVec& x, BranchTrace* trace) {
    const int h = in_shape[0], w = in_shape[1], c = in_shape[2];
    const int h_out = (h - window) / stride + 1;
    const int w_out = (w - window) / stride + 1;
    DVec y(static_cast<std::size_t>(h_out) * w_out * c);
    for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox)
            for (int ch = 0; ch < c; ++ch) {
                double best = -1e300;
                std::int32_t best_idx = 0;
                for (int ky = 0; ky < window; ++ky)
                    for (int kx = 0; kx < window; ++kx) {
                        const std::size_t idx = (static_cast<std::size_t>(oy * stride + ky) * w + ox * stride + kx) * c +
                                                static_cast<std::size_t>(ch);
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = static_cast<std::int32_t>(idx);
                        }
                    }
                if (trace) trace->push(best_idx);
                y[(static_cast<std::size_t>(oy) * w_out + ox) * c + static_cast<std::size_t>(ch)] = best;
            }
    return y;
}

inline DVec gru_eval(const GruParams& p, const DVec& x, int t_steps, bool return_sequence) {
    const int u = p.units(), d = p.input_dim();
    DVec h(static_cast<std::size_t>(u), 0.0);
    DVec all;
    if (return_sequence) all.resize(static_cast<std::size_t>(t_steps) * u);
    DVec z(static_cast<std::size_t>(u)), r(static_cast<std::size_t>(u)), hc(static_cast<std::size_t>(u));
    for (int t = 0; t < t_steps; ++t) {
        const double* xt = x.data() + static_cast<std::size_t>(t) * d;
        for (int i = 0; i < u; ++i) {
            double az = p.b_z[static_cast<std::size_t>(i)];
            double ar = p.b_r[static_cast<std::size_t>(i)];
            for (int j = 0; j < d; ++j) {
                az += static_cast<double>(p.w_z.at2(i, j)) * xt[j];
                ar += static_cast<double>(p.w_r.at2(i, j)) * xt[j];
            }
            for (int j = 0; j < u; ++j) {
                az += static_cast<double>(p.u_z.at2(i, j)) * h[static_cast<std::size_t>(j)];
                ar += static_cast<double>(p.u_r.at2(i, j)) * h[static_cast<std::size_t>(j)];
            }
            z[static_cast<std::size_t>(i)] = sigmoid(az);
            r[static_cast<std::size_t>(i)] = sigmoid(ar);
        }
        for (int i = 0; i < u; ++i) {
            double ah = p.b_h[static_cast<std::size_t>(i)];
            for (int j = 0; j < d; ++j) ah += static_cast<double>(p.w_h.at2(i, j)) * xt[j];
            for (int j = 0; j < u; ++j)
                ah += static_cast<double>(p.u_h.at2(i, j)) * (r[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)]);
            hc[static_cast<std::size_t>(i)] = std::tanh(ah);
        }
        for (int i = 0; i < u; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            h[k] = (1.0 - z[k]) * h[k] + z[k] * hc[k];
        }
        if (return_sequence) std::copy(h.begin(), h.end(), all.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * u));
    }
    return return_sequence ? all : h;
}

inline DVec reverse_rows(const DVec& x, int t_steps) {
    const std::size_t d = x.size() / static_cast<std::size_t>(t_steps);
    DVec y(x.size());
    for (int t = 0; t < t_steps; ++t)
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * d),
                  x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t + 1) * d),
                  y.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t_steps - 1 - t) * d));
    return y;
}

}  // namespace detail

/// Evaluates a model forward pass entirely in double precision.
inline DVec forward(Model& model, const DVec& x, const Shape& in_shape, BranchTrace* trace = nullptr);

namespace detail {

inline DVec layer_eval(Layer& layer, const Shape& in_shape, const DVec& x, BranchTrace* trace) {
    if (auto* d = dynamic_cast<Dense*>(&layer)) return dense_eval(d->weight(), d->bias(), d->activation(), x, trace);
    if (auto* c = dynamic_cast<Conv2d*>(&layer)) return conv_eval(*c, in_shape, x, trace);
    if (auto* p = dynamic_cast<MaxPool2d*>(&layer)) {
        int window = 2, stride = 2;
        for (const auto& [k, v] : p->hyper()) {
            if (k == "window") window = std::stoi(v);
            if (k == "stride") stride = std::stoi(v);
        }
        return pool_eval(window, stride, in_shape, x, trace);
    }
    if (dynamic_cast<Flatten*>(&layer) || dynamic_cast<Dropout*>(&layer)) return x;
    if (auto* a = dynamic_cast<Activation*>(&layer)) {
        Act act = Act::linear;
        for (const auto& [k, v] : a->hyper())
            if (k == "fn") act = act_from_name(v);
        DVec y = x;
        switch (act) {
            case Act::relu:
                for (double& v : y) {
                    const bool on = v > 0.0;
                    if (trace) trace->push(on ? 1 : 0);
                    v = on ? v : 0.0;
                }
                break;
            case Act::sigmoid:
                for (double& v : y) v = sigmoid(v);
                break;
            case Act::tanh_:
                for (double& v : y) v = std::tanh(v);
                break;
            default:
                break;
        }
        return y;
    }
    if (auto* g = dynamic_cast<GruLayer*>(&layer)) {
        bool ret_seq = false;
        for (const auto& [k, v] : g->hyper())
            if (k == "return_sequence") ret_seq = (v == "1");
        return gru_eval(g->params(), x, in_shape[0], ret_seq);
    }
    if (auto* b = dynamic_cast<BiGruLayer*>(&layer)) {
        DVec hf = gru_eval(b->fwd(), x, in_shape[0], false);
        DVec hb = gru_eval(b->bwd(), reverse_rows(x, in_shape[0]), in_shape[0], false);
        hf.insert(hf.end(), hb.begin(), hb.end());
        return hf;
    }
    if (auto* td = dynamic_cast<TimeDistributed*>(&layer)) {
        const int t_steps = in_shape[0];
        const Shape frame_shape(in_shape.begin() + 1, in_shape.end());
        const std::size_t frame_n = numel(frame_shape);
        DVec out;
        for (int t = 0; t < t_steps; ++t) {
            DVec frame(x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * frame_n),
                       x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t + 1) * frame_n));
            DVec fo = forward(td->inner(), frame, frame_shape, trace);
            out.insert(out.end(), fo.begin(), fo.end());
        }
        return out;
    }
    throw StructureError(std::string("shadow forward: unsupported layer type '") + layer.type() + "'");
}

}  // namespace detail

inline DVec forward(Model& model, const DVec& x, const Shape& in_shape, BranchTrace* trace) {
    DVec cur = x;
    Shape shape = in_shape;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        cur = detail::layer_eval(model.layer(i), shape, cur, trace);
        shape = model.layer(i).output_shape(shape);
    }
    return cur;
}

inline DVec forward(Model& model, const Tensor& x, BranchTrace* trace = nullptr) {
    DVec xin(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xin[i] = static_cast<double>(x[i]);
    return forward(model, xin, x.shape(), trace);
}

}  // namespace vidnn::shadow

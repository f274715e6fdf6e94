#pragma once

#include <vector>

#include "vidnn/kernels.hpp"
#include "vidnn/rng.hpp"
#include "vidnn/tensor.hpp"

// Gated recurrent unit with distinct update and reset gates:
//   z = sigmoid(W_z x + U_z h_prev + b_z)
//   r = sigmoid(W_r x + U_r h_prev + b_r)
//   hc = tanh(W_h x + U_h (r o h_prev) + b_h)
//   h  = (1 - z) o h_prev + z o hc
// The hidden state is a convex combination of h_prev and a tanh value, so it
// stays inside (-1,1) for any finite inputs once h_0 does.

namespace vidnn {

struct GruParams {
    Tensor w_z, w_r, w_h;  // [units, input_dim]
    Tensor u_z, u_r, u_h;  // [units, units]
    Tensor b_z, b_r, b_h;  // [units]

    static GruParams zeros(int units, int input_dim) {
        GruParams p;
        p.w_z = Tensor(Shape{units, input_dim});
        p.w_r = Tensor(Shape{units, input_dim});
        p.w_h = Tensor(Shape{units, input_dim});
        p.u_z = Tensor(Shape{units, units});
        p.u_r = Tensor(Shape{units, units});
        p.u_h = Tensor(Shape{units, units});
        p.b_z = Tensor(Shape{units});
        p.b_r = Tensor(Shape{units});
        p.b_h = Tensor(Shape{units});
        return p;
    }

    int units() const { return w_z.dim(0); }
    int input_dim() const { return w_z.dim(1); }

    void validate() const {
        const int u = units(), d = input_dim();
        auto want = [](const Tensor& t, int r0, int r1, const char* name) {
            if (t.rank() == 2 ? (t.dim(0) != r0 || t.dim(1) != r1) : (t.dim(0) != r0))
                throw DimensionError(std::string("gru: parameter ") + name + " has shape " + shape_str(t.shape()));
        };
        want(w_r, u, d, "W_r");
        want(w_h, u, d, "W_h");
        want(u_z, u, u, "U_z");
        want(u_r, u, u, "U_r");
        want(u_h, u, u, "U_h");
        if (b_z.rank() != 1 || b_z.dim(0) != u || b_r.dim(0) != u || b_h.dim(0) != u)
            throw DimensionError("gru: bias shapes inconsistent with units=" + std::to_string(u));
    }
};

/// Values saved by one forward step, sufficient for the backward step.
struct GruStepSaved {
    Tensor h_prev, z, r, hcand;
};

/// One GRU step. `saved` is filled when training.
inline Tensor gru_cell(const Tensor& x_t, const Tensor& h_prev, const GruParams& p, GruStepSaved* saved = nullptr) {
    if (x_t.rank() != 1 || x_t.dim(0) != p.input_dim())
        throw DimensionError("gru_cell: input shape " + shape_str(x_t.shape()) + " does not match input_dim " +
                             std::to_string(p.input_dim()));
    if (h_prev.rank() != 1 || h_prev.dim(0) != p.units())
        throw DimensionError("gru_cell: state shape " + shape_str(h_prev.shape()) + " does not match units " +
                             std::to_string(p.units()));
    const int u = p.units();

    Tensor z = matvec(p.w_z, x_t);
    Tensor zu = matvec(p.u_z, h_prev);
    for (int i = 0; i < u; ++i) z[static_cast<std::size_t>(i)] = sigmoid_scalar(z[static_cast<std::size_t>(i)] + zu[static_cast<std::size_t>(i)] + p.b_z[static_cast<std::size_t>(i)]);

    Tensor r = matvec(p.w_r, x_t);
    Tensor ru = matvec(p.u_r, h_prev);
    for (int i = 0; i < u; ++i) r[static_cast<std::size_t>(i)] = sigmoid_scalar(r[static_cast<std::size_t>(i)] + ru[static_cast<std::size_t>(i)] + p.b_r[static_cast<std::size_t>(i)]);

    Tensor rh(Shape{u});
    for (int i = 0; i < u; ++i) rh[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] * h_prev[static_cast<std::size_t>(i)];

    Tensor hc = matvec(p.w_h, x_t);
    Tensor hu = matvec(p.u_h, rh);
    for (int i = 0; i < u; ++i) hc[static_cast<std::size_t>(i)] = std::tanh(hc[static_cast<std::size_t>(i)] + hu[static_cast<std::size_t>(i)] + p.b_h[static_cast<std::size_t>(i)]);

    Tensor h(Shape{u});
    for (int i = 0; i < u; ++i)
        h[static_cast<std::size_t>(i)] = (1.0f - z[static_cast<std::size_t>(i)]) * h_prev[static_cast<std::size_t>(i)] + z[static_cast<std::size_t>(i)] * hc[static_cast<std::size_t>(i)];

    if (saved) {
        saved->h_prev = h_prev;
        saved->z = std::move(z);
        saved->r = std::move(r);
        saved->hcand = std::move(hc);
    }
    return h;
}

/// Runs the cell over x [T,input_dim] from h_0 = 0. Returns all hidden states
/// [T,units] when `return_sequence`, otherwise the final state [units].
inline Tensor gru_sequence(const Tensor& x, const GruParams& p, bool return_sequence,
                           std::vector<GruStepSaved>* saved = nullptr) {
    if (x.rank() != 2) throw DimensionError("gru_sequence: input must be [T,input_dim], got " + shape_str(x.shape()));
    const int t_steps = x.dim(0), d = x.dim(1), u = p.units();
    if (t_steps < 1) throw DataError("gru_sequence: empty sequence");
    if (saved) saved->resize(static_cast<std::size_t>(t_steps));

    Tensor h(Shape{u});  // h_0 = 0
    Tensor all;
    if (return_sequence) all = Tensor(Shape{t_steps, u});
    for (int t = 0; t < t_steps; ++t) {
        Tensor x_t(Shape{d}, std::vector<float>(x.data() + static_cast<std::size_t>(t) * d,
                                                x.data() + static_cast<std::size_t>(t + 1) * d));
        h = gru_cell(x_t, h, p, saved ? &(*saved)[static_cast<std::size_t>(t)] : nullptr);
        if (return_sequence)
            std::copy(h.begin(), h.end(), all.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * u));
    }
    return return_sequence ? all : h;
}

/// Time-reverses the rows of a [T,D] tensor.
inline Tensor reverse_time(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("reverse_time: expected [T,D], got " + shape_str(x.shape()));
    const int t_steps = x.dim(0), d = x.dim(1);
    Tensor y(x.shape());
    for (int t = 0; t < t_steps; ++t)
        std::copy(x.data() + static_cast<std::size_t>(t) * d, x.data() + static_cast<std::size_t>(t + 1) * d,
                  y.data() + static_cast<std::size_t>(t_steps - 1 - t) * d);
    return y;
}

/// Final forward state over x concatenated with the final forward state over
/// time-reversed x: [2*units], forward half first.
inline Tensor bidirectional_gru(const Tensor& x, const GruParams& p_fwd, const GruParams& p_bwd) {
    Tensor hf = gru_sequence(x, p_fwd, false);
    Tensor hb = gru_sequence(reverse_time(x), p_bwd, false);
    const int u = hf.dim(0);
    Tensor out(Shape{2 * u});
    std::copy(hf.begin(), hf.end(), out.begin());
    std::copy(hb.begin(), hb.end(), out.begin() + u);
    return out;
}

// ---------------------------------------------------------------------------
// Backward (BPTT)
// ---------------------------------------------------------------------------

/// Backpropagation through time over one direction. `dy` is either [units]
/// (gradient on the final state) or [T,units] (per-step gradients when the
/// sequence was returned). Parameter gradients accumulate into `dp`; the
/// gradient w.r.t. x is returned.
inline Tensor gru_sequence_backward(const Tensor& x, const std::vector<GruStepSaved>& saved, const GruParams& p,
                                    const Tensor& dy, GruParams& dp) {
    const int t_steps = x.dim(0), d = x.dim(1), u = p.units();
    const bool per_step = dy.rank() == 2;
    Tensor dx(Shape{t_steps, d});

    Tensor dh(Shape{u});
    if (!per_step) dh = dy;

    for (int t = t_steps - 1; t >= 0; --t) {
        const GruStepSaved& s = saved[static_cast<std::size_t>(t)];
        if (per_step)
            for (int i = 0; i < u; ++i) dh[static_cast<std::size_t>(i)] += dy[static_cast<std::size_t>(t) * u + static_cast<std::size_t>(i)];

        Tensor x_t(Shape{d}, std::vector<float>(x.data() + static_cast<std::size_t>(t) * d,
                                                x.data() + static_cast<std::size_t>(t + 1) * d));

        // h = (1-z) o h_prev + z o hc
        Tensor da_z(Shape{u}), da_h(Shape{u}), dh_prev(Shape{u});
        for (int i = 0; i < u; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const float dz = dh[k] * (s.hcand[k] - s.h_prev[k]);
            da_z[k] = dz * s.z[k] * (1.0f - s.z[k]);
            da_h[k] = dh[k] * s.z[k] * (1.0f - s.hcand[k] * s.hcand[k]);
            dh_prev[k] = dh[k] * (1.0f - s.z[k]);
        }

        // candidate path: hc = tanh(W_h x + U_h (r o h_prev) + b_h)
        Tensor rh(Shape{u});
        for (int i = 0; i < u; ++i) rh[static_cast<std::size_t>(i)] = s.r[static_cast<std::size_t>(i)] * s.h_prev[static_cast<std::size_t>(i)];
        outer_acc(dp.w_h, da_h, x_t);
        outer_acc(dp.u_h, da_h, rh);
        for (int i = 0; i < u; ++i) dp.b_h[static_cast<std::size_t>(i)] += da_h[static_cast<std::size_t>(i)];
        Tensor drh = matvec_transposed(p.u_h, da_h);

        Tensor da_r(Shape{u});
        for (int i = 0; i < u; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            dh_prev[k] += drh[k] * s.r[k];
            da_r[k] = drh[k] * s.h_prev[k] * s.r[k] * (1.0f - s.r[k]);
        }

        // gate paths
        outer_acc(dp.w_z, da_z, x_t);
        outer_acc(dp.u_z, da_z, s.h_prev);
        for (int i = 0; i < u; ++i) dp.b_z[static_cast<std::size_t>(i)] += da_z[static_cast<std::size_t>(i)];
        outer_acc(dp.w_r, da_r, x_t);
        outer_acc(dp.u_r, da_r, s.h_prev);
        for (int i = 0; i < u; ++i) dp.b_r[static_cast<std::size_t>(i)] += da_r[static_cast<std::size_t>(i)];

        Tensor dhu_z = matvec_transposed(p.u_z, da_z);
        Tensor dhu_r = matvec_transposed(p.u_r, da_r);
        for (int i = 0; i < u; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            dh_prev[k] += dhu_z[k] + dhu_r[k];
        }

        // input gradient for this step
        Tensor dx_z = matvec_transposed(p.w_z, da_z);
        Tensor dx_r = matvec_transposed(p.w_r, da_r);
        Tensor dx_h = matvec_transposed(p.w_h, da_h);
        float* dxt = dx.data() + static_cast<std::size_t>(t) * d;
        for (int i = 0; i < d; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            dxt[k] = dx_z[k] + dx_r[k] + dx_h[k];
        }

        dh = std::move(dh_prev);
    }
    return dx;
}

/// Glorot-uniform init for the weight matrices, zero biases.
inline void gru_init(GruParams& p, Rng& rng) {
    auto glorot = [&rng](Tensor& t) {
        const float limit = std::sqrt(6.0f / static_cast<float>(t.dim(0) + t.dim(1)));
        for (float& v : t) v = rng.uniform(-limit, limit);
    };
    glorot(p.w_z);
    glorot(p.w_r);
    glorot(p.w_h);
    glorot(p.u_z);
    glorot(p.u_r);
    glorot(p.u_h);
    for (float& v : p.b_z) v = 0.0f;
    for (float& v : p.b_r) v = 0.0f;
    for (float& v : p.b_h) v = 0.0f;
}

}  // namespace vidnn

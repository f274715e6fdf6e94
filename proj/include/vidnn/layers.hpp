#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vidnn/grad.hpp"
#include "vidnn/gru.hpp"
#include "vidnn/kernels.hpp"

// Layer catalogue. Every layer implements one contract: shape inference that
// is a pure function of the input shape, a forward pass that optionally
// records what backward needs on a tape, and a backward pass that maps the
// output gradient to parameter gradients plus the input gradient.

namespace vidnn {

using HyperList = std::vector<std::pair<std::string, std::string>>;

class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    const std::string& name() const { return name_; }
    virtual const char* type() const = 0;

    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor forward(const Tensor& x, Tape* tape) = 0;
    virtual Tensor backward(const Tensor& dy, LayerCtx& ctx, GradStore& grads) const = 0;

    /// Appends this layer's parameters in their fixed serialization order.
    virtual void collect_params(std::vector<Param>& out) {}
    virtual void init(Rng& rng) {}
    virtual HyperList hyper() const { return {}; }

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

protected:
    Tensor pushed(Layer* self, Tensor&& y, Tape* tape, std::unique_ptr<LayerCtx> ctx) {
        if (tape) tape->push(self, std::move(ctx));
        return std::move(y);
    }

    std::string name_;
    bool frozen_ = false;
};

namespace detail {

inline void glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (float& v : t) v = rng.uniform(-limit, limit);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// activation(W x + b) over a rank-1 input.
class Dense : public Layer {
public:
    Dense(std::string name, int in_dim, int units, Act act)
        : Layer(std::move(name)), w_(Shape{units, in_dim}), b_(Shape{units}), act_(act) {}

    const char* type() const override { return "dense"; }
    int units() const { return w_.dim(0); }
    Act activation() const { return act_; }
    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 1 || in[0] != w_.dim(1))
            throw DimensionError("dense '" + name_ + "': expected input [" + std::to_string(w_.dim(1)) + "], got " +
                                 shape_str(in));
        return Shape{w_.dim(0)};
    }

    struct Ctx : LayerCtx {
        Tensor x, y;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        output_shape(x.shape());
        Tensor y = matvec(w_, x);
        for (int i = 0; i < b_.dim(0); ++i) y[static_cast<std::size_t>(i)] += b_[static_cast<std::size_t>(i)];
        apply_act(y, act_);
        if (!tape) return y;
        auto ctx = std::make_unique<Ctx>();
        ctx->x = x;
        ctx->y = y;
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore& grads) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        Tensor dz = act_backward(dy, ctx.y, act_);
        Tensor dw(w_.shape());
        outer_acc(dw, dz, ctx.x);
        grads.add(name_ + ".W", dw);
        grads.add(name_ + ".b", dz);
        return matvec_transposed(w_, dz);
    }

    void collect_params(std::vector<Param>& out) override {
        out.push_back({name_ + ".W", &w_, frozen_});
        out.push_back({name_ + ".b", &b_, frozen_});
    }

    void init(Rng& rng) override {
        detail::glorot_uniform(w_, w_.dim(1), w_.dim(0), rng);
        for (float& v : b_) v = 0.0f;
    }

    HyperList hyper() const override {
        return {{"units", std::to_string(w_.dim(0))},
                {"in", std::to_string(w_.dim(1))},
                {"activation", act_name(act_)}};
    }

private:
    Tensor w_, b_;
    Act act_;
};

/// Free-function form of the dense contract.
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Act act) {
    Tensor y = matvec(w, x);
    if (b.rank() != 1 || b.dim(0) != w.dim(0))
        throw DimensionError("dense: bias shape " + shape_str(b.shape()) + " does not match output " +
                             std::to_string(w.dim(0)));
    for (int i = 0; i < b.dim(0); ++i) y[static_cast<std::size_t>(i)] += b[static_cast<std::size_t>(i)];
    apply_act(y, act);
    return y;
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_channels, int filters, int kernel, int stride, Padding padding, Act act)
        : Layer(std::move(name)),
          kernels_(Shape{kernel, kernel, in_channels, filters}),
          bias_(Shape{filters}),
          stride_(stride),
          padding_(padding),
          act_(act) {
        if (act != Act::linear && act != Act::relu)
            throw StructureError("conv2d '" + name_ + "': only linear/relu activations supported");
    }

    const char* type() const override { return "conv2d"; }
    Tensor& kernels() { return kernels_; }
    Tensor& bias() { return bias_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3 || in[2] != kernels_.dim(2))
            throw DimensionError("conv2d '" + name_ + "': expected input [H,W," + std::to_string(kernels_.dim(2)) +
                                 "], got " + shape_str(in));
        const auto g = detail::conv_geometry(in[0], in[1], kernels_.dim(0), kernels_.dim(1), stride_, padding_);
        return Shape{g.h_out, g.w_out, kernels_.dim(3)};
    }

    struct Ctx : LayerCtx {
        Tensor x, y;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        output_shape(x.shape());
        Tensor y = conv2d(x, kernels_, bias_, stride_, padding_);
        apply_act(y, act_);
        if (!tape) return y;
        auto ctx = std::make_unique<Ctx>();
        ctx->x = x;
        ctx->y = y;
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore& grads) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        Tensor dz = act_backward(dy, ctx.y, act_);
        Tensor dk, db;
        conv2d_grad_params(dz, ctx.x, kernels_, stride_, padding_, dk, db);
        grads.add(name_ + ".K", dk);
        grads.add(name_ + ".b", db);
        return conv2d_grad_input(dz, kernels_, ctx.x.shape(), stride_, padding_);
    }

    void collect_params(std::vector<Param>& out) override {
        out.push_back({name_ + ".K", &kernels_, frozen_});
        out.push_back({name_ + ".b", &bias_, frozen_});
    }

    void init(Rng& rng) override {
        const int rf = kernels_.dim(0) * kernels_.dim(1);
        detail::glorot_uniform(kernels_, rf * kernels_.dim(2), rf * kernels_.dim(3), rng);
        for (float& v : bias_) v = 0.0f;
    }

    HyperList hyper() const override {
        return {{"filters", std::to_string(kernels_.dim(3))},
                {"in_channels", std::to_string(kernels_.dim(2))},
                {"kernel", std::to_string(kernels_.dim(0))},
                {"stride", std::to_string(stride_)},
                {"padding", padding_ == Padding::same ? "same" : "valid"},
                {"activation", act_name(act_)}};
    }

private:
    Tensor kernels_, bias_;
    int stride_;
    Padding padding_;
    Act act_;
};

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

class MaxPool2d : public Layer {
public:
    MaxPool2d(std::string name, int window, int stride)
        : Layer(std::move(name)), window_(window), stride_(stride) {}

    const char* type() const override { return "maxpool2d"; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3)
            throw DimensionError("maxpool2d '" + name_ + "': expected [H,W,C], got " + shape_str(in));
        if (window_ > in[0] || window_ > in[1])
            throw DimensionError("maxpool2d '" + name_ + "': window " + std::to_string(window_) +
                                 " exceeds input " + shape_str(in));
        return Shape{(in[0] - window_) / stride_ + 1, (in[1] - window_) / stride_ + 1, in[2]};
    }

    struct Ctx : LayerCtx {
        std::vector<std::int32_t> argmax;
        Shape in_shape;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        PoolResult res = maxpool2d(x, window_, stride_);
        if (!tape) return std::move(res.out);
        auto ctx = std::make_unique<Ctx>();
        ctx->argmax = std::move(res.argmax);
        ctx->in_shape = x.shape();
        return pushed(this, std::move(res.out), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore&) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        return maxpool2d_grad(dy, ctx.argmax, ctx.in_shape);
    }

    HyperList hyper() const override {
        return {{"window", std::to_string(window_)}, {"stride", std::to_string(stride_)}};
    }

private:
    int window_, stride_;
};

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

class Flatten : public Layer {
public:
    explicit Flatten(std::string name) : Layer(std::move(name)) {}

    const char* type() const override { return "flatten"; }

    Shape output_shape(const Shape& in) const override {
        return Shape{static_cast<int>(numel(in))};
    }

    struct Ctx : LayerCtx {
        Shape in_shape;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        Shape out{static_cast<int>(x.size())};
        Tensor y = x;
        y = std::move(y).reshaped(out);
        if (!tape) return y;
        auto ctx = std::make_unique<Ctx>();
        ctx->in_shape = x.shape();
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore&) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        Tensor dx = dy;
        return std::move(dx).reshaped(ctx.in_shape);
    }
};

/// Row-major linearization; inverse of reshape back to the original shape.
inline Tensor flatten(const Tensor& x) {
    Tensor y = x;
    return std::move(y).reshaped(Shape{static_cast<int>(x.size())});
}

// ---------------------------------------------------------------------------
// Standalone activation
// ---------------------------------------------------------------------------

class Activation : public Layer {
public:
    Activation(std::string name, Act act) : Layer(std::move(name)), act_(act) {
        if (act == Act::softmax)
            throw StructureError("activation '" + name_ + "': use a dense softmax head instead");
    }

    const char* type() const override { return "activation"; }

    Shape output_shape(const Shape& in) const override { return in; }

    struct Ctx : LayerCtx {
        Tensor y;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        Tensor y = x;
        apply_act(y, act_);
        if (!tape) return y;
        auto ctx = std::make_unique<Ctx>();
        ctx->y = y;
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore&) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        return act_backward(dy, ctx.y, act_);
    }

    HyperList hyper() const override { return {{"fn", act_name(act_)}}; }

private:
    Act act_;
};

// ---------------------------------------------------------------------------
// Dropout (off by default throughout the models)
// ---------------------------------------------------------------------------

class Dropout : public Layer {
public:
    Dropout(std::string name, float p) : Layer(std::move(name)), p_(p) {
        if (p < 0.0f || p >= 1.0f) throw StructureError("dropout '" + name_ + "': p must be in [0,1)");
    }

    const char* type() const override { return "dropout"; }

    Shape output_shape(const Shape& in) const override { return in; }

    struct Ctx : LayerCtx {
        std::vector<float> mask;  // empty means identity
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        if (!tape || p_ == 0.0f || tape->dropout_rng == nullptr) {
            if (!tape) return x;
            return pushed(this, Tensor(x), tape, std::make_unique<Ctx>());
        }
        auto ctx = std::make_unique<Ctx>();
        ctx->mask.resize(x.size());
        const float keep = 1.0f - p_;
        const float inv_keep = 1.0f / keep;
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const float m = tape->dropout_rng->uniform(0.0f, 1.0f) < keep ? inv_keep : 0.0f;
            ctx->mask[i] = m;
            y[i] *= m;
        }
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore&) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        if (ctx.mask.empty()) return dy;
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= ctx.mask[i];
        return dx;
    }

    HyperList hyper() const override { return {{"p", std::to_string(p_)}}; }

private:
    float p_;
};

// ---------------------------------------------------------------------------
// GRU layers
// ---------------------------------------------------------------------------

class GruLayer : public Layer {
public:
    GruLayer(std::string name, int input_dim, int units, bool return_sequence)
        : Layer(std::move(name)), params_(GruParams::zeros(units, input_dim)), return_sequence_(return_sequence) {}

    const char* type() const override { return "gru"; }
    GruParams& params() { return params_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[1] != params_.input_dim())
            throw DimensionError("gru '" + name_ + "': expected [T," + std::to_string(params_.input_dim()) +
                                 "], got " + shape_str(in));
        return return_sequence_ ? Shape{in[0], params_.units()} : Shape{params_.units()};
    }

    struct Ctx : LayerCtx {
        Tensor x;
        std::vector<GruStepSaved> saved;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        output_shape(x.shape());
        if (!tape) return gru_sequence(x, params_, return_sequence_);
        auto ctx = std::make_unique<Ctx>();
        ctx->x = x;
        Tensor y = gru_sequence(x, params_, return_sequence_, &ctx->saved);
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore& grads) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        GruParams dp = GruParams::zeros(params_.units(), params_.input_dim());
        Tensor dx = gru_sequence_backward(ctx.x, ctx.saved, params_, dy, dp);
        add_param_grads(grads, name_, dp);
        return dx;
    }

    void collect_params(std::vector<Param>& out) override { collect_gru(out, name_, params_, frozen_); }

    void init(Rng& rng) override { gru_init(params_, rng); }

    HyperList hyper() const override {
        return {{"units", std::to_string(params_.units())},
                {"in", std::to_string(params_.input_dim())},
                {"return_sequence", return_sequence_ ? "1" : "0"}};
    }

    static void collect_gru(std::vector<Param>& out, const std::string& base, GruParams& p, bool frozen) {
        out.push_back({base + ".W_z", &p.w_z, frozen});
        out.push_back({base + ".U_z", &p.u_z, frozen});
        out.push_back({base + ".b_z", &p.b_z, frozen});
        out.push_back({base + ".W_r", &p.w_r, frozen});
        out.push_back({base + ".U_r", &p.u_r, frozen});
        out.push_back({base + ".b_r", &p.b_r, frozen});
        out.push_back({base + ".W_h", &p.w_h, frozen});
        out.push_back({base + ".U_h", &p.u_h, frozen});
        out.push_back({base + ".b_h", &p.b_h, frozen});
    }

    static void add_param_grads(GradStore& grads, const std::string& base, const GruParams& dp) {
        grads.add(base + ".W_z", dp.w_z);
        grads.add(base + ".U_z", dp.u_z);
        grads.add(base + ".b_z", dp.b_z);
        grads.add(base + ".W_r", dp.w_r);
        grads.add(base + ".U_r", dp.u_r);
        grads.add(base + ".b_r", dp.b_r);
        grads.add(base + ".W_h", dp.w_h);
        grads.add(base + ".U_h", dp.u_h);
        grads.add(base + ".b_h", dp.b_h);
    }

private:
    GruParams params_;
    bool return_sequence_;
};

/// Two GRUs over opposite temporal directions; the merged output is the
/// concatenation of their final states, forward half first.
class BiGruLayer : public Layer {
public:
    BiGruLayer(std::string name, int input_dim, int units)
        : Layer(std::move(name)),
          fwd_(GruParams::zeros(units, input_dim)),
          bwd_(GruParams::zeros(units, input_dim)) {}

    const char* type() const override { return "bigru"; }
    GruParams& fwd() { return fwd_; }
    GruParams& bwd() { return bwd_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[1] != fwd_.input_dim())
            throw DimensionError("bigru '" + name_ + "': expected [T," + std::to_string(fwd_.input_dim()) +
                                 "], got " + shape_str(in));
        return Shape{2 * fwd_.units()};
    }

    struct Ctx : LayerCtx {
        Tensor x, x_rev;
        std::vector<GruStepSaved> saved_fwd, saved_bwd;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        output_shape(x.shape());
        if (!tape) return bidirectional_gru(x, fwd_, bwd_);
        auto ctx = std::make_unique<Ctx>();
        ctx->x = x;
        ctx->x_rev = reverse_time(x);
        Tensor hf = gru_sequence(x, fwd_, false, &ctx->saved_fwd);
        Tensor hb = gru_sequence(ctx->x_rev, bwd_, false, &ctx->saved_bwd);
        const int u = fwd_.units();
        Tensor y(Shape{2 * u});
        std::copy(hf.begin(), hf.end(), y.begin());
        std::copy(hb.begin(), hb.end(), y.begin() + u);
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore& grads) const override {
        const auto& ctx = static_cast<const Ctx&>(raw);
        const int u = fwd_.units();
        Tensor dhf(Shape{u}), dhb(Shape{u});
        for (int i = 0; i < u; ++i) {
            dhf[static_cast<std::size_t>(i)] = dy[static_cast<std::size_t>(i)];
            dhb[static_cast<std::size_t>(i)] = dy[static_cast<std::size_t>(u + i)];
        }
        GruParams dpf = GruParams::zeros(u, fwd_.input_dim());
        GruParams dpb = GruParams::zeros(u, bwd_.input_dim());
        Tensor dx = gru_sequence_backward(ctx.x, ctx.saved_fwd, fwd_, dhf, dpf);
        Tensor dx_rev = gru_sequence_backward(ctx.x_rev, ctx.saved_bwd, bwd_, dhb, dpb);
        Tensor dx_rev_flipped = reverse_time(dx_rev);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_rev_flipped[i];
        GruLayer::add_param_grads(grads, name_ + ".fwd", dpf);
        GruLayer::add_param_grads(grads, name_ + ".bwd", dpb);
        return dx;
    }

    void collect_params(std::vector<Param>& out) override {
        GruLayer::collect_gru(out, name_ + ".fwd", fwd_, frozen_);
        GruLayer::collect_gru(out, name_ + ".bwd", bwd_, frozen_);
    }

    void init(Rng& rng) override {
        gru_init(fwd_, rng);
        gru_init(bwd_, rng);
    }

    HyperList hyper() const override {
        return {{"units", std::to_string(fwd_.units())}, {"in", std::to_string(fwd_.input_dim())}};
    }

private:
    GruParams fwd_, bwd_;
};

}  // namespace vidnn

#pragma once

#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vidnn/layers.hpp"

namespace vidnn {

// Ordered pipeline of layers with one input. Construction and surgery are
// exclusive; a built model can serve concurrent inference as long as each
// caller brings its own tape.
class Model {
public:
    Model() = default;
    explicit Model(Shape input_shape) : input_shape_(std::move(input_shape)) {}

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    const Shape& input_shape() const { return input_shape_; }
    void set_input_shape(Shape s) { input_shape_ = std::move(s); }

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }
    std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

    Layer* find_layer(const std::string& name) {
        for (auto& l : layers_)
            if (l->name() == name) return l.get();
        return nullptr;
    }

    /// Walks shape inference through every layer; throws StructureError
    /// naming the junction that fails. Returns the output shape.
    Shape infer_output_shape() const {
        if (input_shape_.empty()) throw StructureError("model has no input shape");
        Shape s = input_shape_;
        for (const auto& l : layers_) {
            try {
                s = l->output_shape(s);
            } catch (const DimensionError& e) {
                throw StructureError("shape inference failed at layer '" + l->name() + "': " + e.what());
            }
        }
        return s;
    }

    Tensor forward(const Tensor& x, Tape* tape = nullptr) {
        if (!input_shape_.empty() && x.shape() != input_shape_)
            throw DimensionError("model input shape " + shape_str(x.shape()) + " does not match expected " +
                                 shape_str(input_shape_));
        Tensor cur = x;
        for (auto& l : layers_) cur = l->forward(cur, tape);
        return cur;
    }

    /// Consumes the tape strictly in reverse forward order, accumulating
    /// parameter gradients and returning the gradient w.r.t. the model input.
    /// The tape is cleared afterwards.
    Tensor backward(const Tensor& dloss, Tape& tape, GradStore& grads) {
        if (tape.empty()) throw StateError("backward called without a completed forward pass");
        Tensor dy = dloss;
        auto& slots = tape.slots();
        for (auto it = slots.rbegin(); it != slots.rend(); ++it) dy = it->layer->backward(dy, *it->ctx, grads);
        tape.clear();
        return dy;
    }

    void collect_params(std::vector<Param>& out) {
        for (auto& l : layers_) l->collect_params(out);
    }

    std::vector<Param> params() {
        std::vector<Param> out;
        collect_params(out);
        return out;
    }

    void init(Rng& rng) {
        for (auto& l : layers_) l->init(rng);
    }

    /// Validates that layer names are unique across the whole model,
    /// including nested sub-networks (they key serialization).
    void validate_names() const {
        std::set<std::string> seen;
        std::vector<const Layer*> all;
        collect_layers(all);
        for (const Layer* l : all)
            if (!seen.insert(l->name()).second)
                throw StructureError("duplicate layer name '" + l->name() + "'");
    }

    void collect_layers(std::vector<const Layer*>& out) const;

private:
    Shape input_shape_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Total number of scalar parameters.
inline std::size_t param_count(Model& m) {
    std::size_t n = 0;
    for (const Param& p : m.params()) n += p.value->size();
    return n;
}

// ---------------------------------------------------------------------------
// TimeDistributed
// ---------------------------------------------------------------------------

/// Applies a sub-network with shared parameters independently to each frame
/// of a [T, ...] input; frame gradients accumulate into the shared
/// parameters in frame order.
class TimeDistributed : public Layer {
public:
    TimeDistributed(std::string name, Model inner) : Layer(std::move(name)), inner_(std::move(inner)) {
        if (inner_.input_shape().empty())
            throw StructureError("time_distributed '" + name_ + "': inner model needs an input shape");
    }

    const char* type() const override { return "time_distributed"; }
    Model& inner() { return inner_; }
    const Model& inner() const { return inner_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() < 2) throw DimensionError("time_distributed '" + name_ + "': expected [T,...], got " + shape_str(in));
        const Shape frame_shape(in.begin() + 1, in.end());
        if (frame_shape != inner_.input_shape())
            throw DimensionError("time_distributed '" + name_ + "': frame shape " + shape_str(frame_shape) +
                                 " does not match inner input " + shape_str(inner_.input_shape()));
        Shape inner_out = inner_.infer_output_shape();
        if (inner_out.size() != 1)
            throw DimensionError("time_distributed '" + name_ + "': inner model must emit a vector, got " +
                                 shape_str(inner_out));
        return Shape{in[0], inner_out[0]};
    }

    struct Ctx : LayerCtx {
        std::vector<Tape> frame_tapes;
        Shape in_shape;
    };

    Tensor forward(const Tensor& x, Tape* tape) override {
        const Shape out_shape = output_shape(x.shape());
        const int t_steps = x.dim(0);
        const std::size_t frame_n = x.size() / static_cast<std::size_t>(t_steps);
        const Shape frame_shape(x.shape().begin() + 1, x.shape().end());
        const int d = out_shape[1];

        Tensor y(out_shape);
        auto ctx = tape ? std::make_unique<Ctx>() : nullptr;
        if (ctx) {
            ctx->frame_tapes.resize(static_cast<std::size_t>(t_steps));
            ctx->in_shape = x.shape();
        }
        for (int t = 0; t < t_steps; ++t) {
            Tensor frame(frame_shape, std::vector<float>(x.data() + static_cast<std::size_t>(t) * frame_n,
                                                         x.data() + static_cast<std::size_t>(t + 1) * frame_n));
            Tensor out;
            try {
                if (ctx) {
                    ctx->frame_tapes[static_cast<std::size_t>(t)].dropout_rng = tape->dropout_rng;
                    out = inner_.forward(frame, &ctx->frame_tapes[static_cast<std::size_t>(t)]);
                } else {
                    out = inner_.forward(frame, nullptr);
                }
            } catch (const DimensionError& e) {
                throw DimensionError("time_distributed '" + name_ + "' frame " + std::to_string(t) + ": " + e.what());
            }
            std::copy(out.begin(), out.end(), y.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * d));
        }
        if (!ctx) return y;
        return pushed(this, std::move(y), tape, std::move(ctx));
    }

    Tensor backward(const Tensor& dy, LayerCtx& raw, GradStore& grads) const override {
        auto& ctx = static_cast<Ctx&>(raw);
        const int t_steps = ctx.in_shape[0];
        const int d = dy.dim(dy.rank() - 1);
        const std::size_t frame_n = numel(ctx.in_shape) / static_cast<std::size_t>(t_steps);

        Tensor dx(ctx.in_shape);
        Model& inner = const_cast<Model&>(inner_);  // backward mutates tapes only
        for (int t = 0; t < t_steps; ++t) {
            Tensor dframe(Shape{d}, std::vector<float>(dy.data() + static_cast<std::size_t>(t) * d,
                                                       dy.data() + static_cast<std::size_t>(t + 1) * d));
            Tensor dxi = inner.backward(dframe, ctx.frame_tapes[static_cast<std::size_t>(t)], grads);
            std::copy(dxi.begin(), dxi.end(), dx.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * frame_n));
        }
        return dx;
    }

    void collect_params(std::vector<Param>& out) override {
        const std::size_t first = out.size();
        const_cast<Model&>(inner_).collect_params(out);
        if (frozen_)
            for (std::size_t i = first; i < out.size(); ++i) out[i].frozen = true;
    }

    void init(Rng& rng) override { inner_.init(rng); }

private:
    Model inner_;
};

inline void Model::collect_layers(std::vector<const Layer*>& out) const {
    for (const auto& l : layers_) {
        out.push_back(l.get());
        if (const auto* td = dynamic_cast<const TimeDistributed*>(l.get())) td->inner().collect_layers(out);
    }
}

// ---------------------------------------------------------------------------
// Architecture descriptor
// ---------------------------------------------------------------------------

// Line-oriented text, one `name type key=value...` entry per line. A
// time_distributed group opens with its own line and closes with `<name> end`.
// Example:
//   input meta shape=10x64x64x3
//   classes meta count=2
//   td time_distributed
//   conv1_1 conv2d filters=64 in_channels=3 kernel=3 stride=1 padding=same activation=relu
//   ...
//   td end
//   bigru bigru units=32 in=32768

namespace detail {

inline std::string shape_to_text(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out;
}

inline Shape shape_from_text(const std::string& text) {
    Shape s;
    std::string cur;
    for (char c : text + "x") {
        if (c == 'x') {
            if (cur.empty()) throw StructureError("bad shape text '" + text + "'");
            s.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return s;
}

inline void emit_layer_lines(const Layer& l, std::string& out);

inline void emit_model_lines(const Model& m, std::string& out) {
    for (std::size_t i = 0; i < m.layer_count(); ++i) emit_layer_lines(m.layer(i), out);
}

inline void emit_layer_lines(const Layer& l, std::string& out) {
    if (const auto* td = dynamic_cast<const TimeDistributed*>(&l)) {
        out += td->name() + " time_distributed\n";
        emit_model_lines(td->inner(), out);
        out += td->name() + " end\n";
        return;
    }
    out += l.name() + " " + l.type();
    for (const auto& [k, v] : l.hyper()) out += " " + k + "=" + v;
    out += "\n";
}

}  // namespace detail

/// Serializes input shape, class count and the ordered layer specs.
inline std::string model_descriptor(const Model& m) {
    std::string out = "input meta shape=" + detail::shape_to_text(m.input_shape()) + "\n";
    Shape final_shape = m.infer_output_shape();
    out += "classes meta count=" + std::to_string(final_shape.back()) + "\n";
    detail::emit_model_lines(m, out);
    return out;
}

namespace detail {

struct DescLine {
    std::string name, type;
    std::map<std::string, std::string> kv;
};

inline DescLine parse_desc_line(const std::string& line, int lineno) {
    std::istringstream iss(line);
    DescLine d;
    if (!(iss >> d.name >> d.type))
        throw StructureError("descriptor line " + std::to_string(lineno) + ": expected 'name type ...'");
    std::string tok;
    while (iss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw StructureError("descriptor line " + std::to_string(lineno) + ": bad token '" + tok + "'");
        d.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return d;
}

inline const std::string& desc_get(const DescLine& d, const std::string& key, int lineno) {
    auto it = d.kv.find(key);
    if (it == d.kv.end())
        throw StructureError("descriptor line " + std::to_string(lineno) + ": layer '" + d.name + "' missing key '" +
                             key + "'");
    return it->second;
}

inline std::unique_ptr<Layer> make_layer(const DescLine& d, int lineno) {
    auto geti = [&](const std::string& key) { return std::stoi(desc_get(d, key, lineno)); };
    if (d.type == "conv2d") {
        const std::string& pad = desc_get(d, "padding", lineno);
        if (pad != "same" && pad != "valid")
            throw StructureError("descriptor line " + std::to_string(lineno) + ": bad padding '" + pad + "'");
        return std::make_unique<Conv2d>(d.name, geti("in_channels"), geti("filters"), geti("kernel"), geti("stride"),
                                        pad == "same" ? Padding::same : Padding::valid,
                                        act_from_name(desc_get(d, "activation", lineno)));
    }
    if (d.type == "maxpool2d") return std::make_unique<MaxPool2d>(d.name, geti("window"), geti("stride"));
    if (d.type == "flatten") return std::make_unique<Flatten>(d.name);
    if (d.type == "dense")
        return std::make_unique<Dense>(d.name, geti("in"), geti("units"), act_from_name(desc_get(d, "activation", lineno)));
    if (d.type == "activation") return std::make_unique<Activation>(d.name, act_from_name(desc_get(d, "fn", lineno)));
    if (d.type == "dropout") return std::make_unique<Dropout>(d.name, std::stof(desc_get(d, "p", lineno)));
    if (d.type == "gru")
        return std::make_unique<GruLayer>(d.name, geti("in"), geti("units"), desc_get(d, "return_sequence", lineno) == "1");
    if (d.type == "bigru") return std::make_unique<BiGruLayer>(d.name, geti("in"), geti("units"));
    throw StructureError("descriptor line " + std::to_string(lineno) + ": unknown layer type '" + d.type + "'");
}

}  // namespace detail

/// Rebuilds a model (parameters zero-initialized) from descriptor text and
/// validates shape inference end to end, including the recorded class count.
inline Model model_from_descriptor(const std::string& text) {
    std::istringstream iss(text);
    std::string line;
    int lineno = 0;

    Model model;
    int declared_classes = -1;
    bool have_input = false;

    // group parsing state: when inside a time_distributed group, layers are
    // collected into `group_model` until the matching `<name> end` line.
    bool in_group = false;
    std::string group_name;
    Model group_model;

    while (std::getline(iss, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto d = detail::parse_desc_line(line, lineno);

        if (d.type == "meta") {
            if (d.name == "input") {
                model.set_input_shape(detail::shape_from_text(detail::desc_get(d, "shape", lineno)));
                have_input = true;
            } else if (d.name == "classes") {
                declared_classes = std::stoi(detail::desc_get(d, "count", lineno));
            } else {
                throw StructureError("descriptor line " + std::to_string(lineno) + ": unknown meta '" + d.name + "'");
            }
            continue;
        }
        if (d.type == "time_distributed") {
            if (in_group)
                throw StructureError("descriptor line " + std::to_string(lineno) + ": nested time_distributed");
            in_group = true;
            group_name = d.name;
            group_model = Model();
            if (!have_input)
                throw StructureError("descriptor line " + std::to_string(lineno) + ": time_distributed before input");
            const Shape& in = model.input_shape();
            group_model.set_input_shape(Shape(in.begin() + 1, in.end()));
            continue;
        }
        if (d.type == "end") {
            if (!in_group || d.name != group_name)
                throw StructureError("descriptor line " + std::to_string(lineno) + ": stray end '" + d.name + "'");
            model.add(std::make_unique<TimeDistributed>(group_name, std::move(group_model)));
            in_group = false;
            continue;
        }
        auto layer = detail::make_layer(d, lineno);
        (in_group ? group_model : model).add(std::move(layer));
    }
    if (in_group) throw StructureError("descriptor: unterminated time_distributed group '" + group_name + "'");
    if (!have_input) throw StructureError("descriptor: missing input line");

    model.validate_names();
    Shape out = model.infer_output_shape();
    if (declared_classes >= 0 && out.back() != declared_classes)
        throw StructureError("descriptor: declared class count " + std::to_string(declared_classes) +
                             " disagrees with inferred output " + shape_str(out));
    return model;
}

}  // namespace vidnn

#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidnn/rng.hpp"
#include "vidnn/tensor.hpp"

namespace vidnn {

/// Named view of a trainable tensor. `frozen` params keep their values
/// through optimizer steps.
struct Param {
    std::string name;
    Tensor* value;
    bool frozen = false;
};

// Accumulates parameter gradients by name. Math never iterates the map;
// consumers walk the model's ordered parameter list and look gradients up,
// so accumulation order (and therefore float rounding) is fixed.
class GradStore {
public:
    void add(const std::string& name, const Tensor& g) {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            grads_.emplace(name, g);
            return;
        }
        require_same_shape(it->second, g, "gradient accumulation");
        float* dst = it->second.data();
        const float* src = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
    }

    const Tensor* find(const std::string& name) const {
        auto it = grads_.find(name);
        return it == grads_.end() ? nullptr : &it->second;
    }

    Tensor* find(const std::string& name) {
        auto it = grads_.find(name);
        return it == grads_.end() ? nullptr : &it->second;
    }

    void scale(float s) {
        for (auto& [_, g] : grads_)
            for (float& v : g) v *= s;
    }

    /// Sums another store into this one (worker reduction).
    void add_store(const GradStore& other) {
        for (const auto& [name, g] : other.grads_) add(name, g);
    }

    bool empty() const { return grads_.empty(); }
    std::size_t count() const { return grads_.size(); }
    void clear() { grads_.clear(); }

private:
    std::unordered_map<std::string, Tensor> grads_;
};

/// Per-call state a layer saves during forward for its backward pass.
struct LayerCtx {
    virtual ~LayerCtx() = default;
};

class Layer;

// Ordered record of one forward pass: (layer, saved activations) pairs,
// consumed strictly in reverse by Model::backward. One tape per training
// pass; tapes are single-threaded.
class Tape {
public:
    struct Slot {
        Layer* layer;
        std::unique_ptr<LayerCtx> ctx;
    };

    void push(Layer* layer, std::unique_ptr<LayerCtx> ctx) {
        slots_.push_back(Slot{layer, std::move(ctx)});
    }

    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    bool empty() const { return slots_.empty(); }
    void clear() { slots_.clear(); }

    /// Mask source for dropout layers; null outside training.
    Rng* dropout_rng = nullptr;

private:
    std::vector<Slot> slots_;
};

}  // namespace vidnn

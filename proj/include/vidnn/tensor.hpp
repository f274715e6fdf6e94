#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "vidnn/errors.hpp"

namespace vidnn {

/// Dimensions of a dense tensor, row-major. An empty shape is the null tensor.
using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return shape.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major float32 tensor. The data length always equals the product
// of the dimensions; dimensions are strictly positive.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(numel(shape_), 0.0f);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (data_.size() != numel(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, float value) {
        Tensor t(std::move(shape));
        for (float& v : t.data_) v = value;
        return t;
    }

    static Tensor from(Shape shape, std::initializer_list<float> values) {
        return Tensor(std::move(shape), std::vector<float>(values));
    }

    /// Identity matrix [n,n].
    static Tensor identity(int n) {
        Tensor t(Shape{n, n});
        for (int i = 0; i < n; ++i) t.data_[static_cast<std::size_t>(i) * n + i] = 1.0f;
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    std::vector<float>::iterator begin() { return data_.begin(); }
    std::vector<float>::iterator end() { return data_.end(); }
    std::vector<float>::const_iterator begin() const { return data_.begin(); }
    std::vector<float>::const_iterator end() const { return data_.end(); }

    // Convenience accessors for tests and low-rate code paths.
    float at2(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
    float at3(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    float at4(int i, int j, int k, int l) const {
        return data_[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    /// Size-preserving reshape; the data is shared by value (copied with the tensor).
    Tensor reshaped(Shape new_shape) const& {
        Tensor t = *this;
        return std::move(t).reshaped(std::move(new_shape));
    }
    Tensor reshaped(Shape new_shape) && {
        check_shape(new_shape);
        if (numel(new_shape) != data_.size())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " (" + std::to_string(data_.size()) +
                                 " values) to " + shape_str(new_shape));
        shape_ = std::move(new_shape);
        return std::move(*this);
    }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static void check_shape(const Shape& shape) {
        for (int d : shape)
            if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }

    Shape shape_;
    std::vector<float> data_;
};

/// Throws unless both tensors have identical shapes.
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace vidnn

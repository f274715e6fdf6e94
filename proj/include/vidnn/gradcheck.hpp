#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "vidnn/model.hpp"
#include "vidnn/shadow.hpp"

// Finite-difference gradient checking. Analytic per-layer gradients are
// compared against central differences (L(t+e) - L(t-e)) / 2e computed with
// the regular float32 forward pass; the scalar loss itself accumulates in
// double to limit cancellation. This suite is the trust anchor for every
// trainable layer.

namespace vidnn {

/// Scalar loss over the model output used for checking. Implementations
/// must be deterministic and smooth around the evaluation point.
class CheckLoss {
public:
    virtual ~CheckLoss() = default;
    virtual double value(const Tensor& out) const = 0;
    virtual double value(const shadow::DVec& out) const = 0;
    virtual Tensor grad(const Tensor& out) const = 0;
};

/// sum_i w_i * out_i with fixed pseudo-random weights; keeps gradients O(1)
/// and exercises every output coordinate.
class WeightedSumLoss : public CheckLoss {
public:
    WeightedSumLoss(const Shape& out_shape, std::uint64_t seed) : weights_(out_shape) {
        Rng rng(seed);
        for (float& w : weights_) w = rng.uniform(0.25f, 1.0f) * (rng.uniform(0.0f, 1.0f) < 0.5f ? -1.0f : 1.0f);
    }

    double value(const Tensor& out) const override {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(weights_[i]) * static_cast<double>(out[i]);
        return s;
    }

    double value(const shadow::DVec& out) const override {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(weights_[i]) * out[i];
        return s;
    }

    Tensor grad(const Tensor& out) const override {
        (void)out;
        return weights_;
    }

private:
    Tensor weights_;
};

/// -log(p[label]) over a softmax output.
class CrossEntropyCheckLoss : public CheckLoss {
public:
    explicit CrossEntropyCheckLoss(int label) : label_(label) {}

    double value(const Tensor& out) const override {
        return -std::log(std::max(static_cast<double>(out[static_cast<std::size_t>(label_)]), 1e-7));
    }

    double value(const shadow::DVec& out) const override {
        return -std::log(std::max(out[static_cast<std::size_t>(label_)], 1e-7));
    }

    Tensor grad(const Tensor& out) const override {
        Tensor g(out.shape());
        g[static_cast<std::size_t>(label_)] =
            -1.0f / std::max(out[static_cast<std::size_t>(label_)], 1e-7f);
        return g;
    }

private:
    int label_;
};

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t sampled = 0;
    std::size_t skipped = 0;  // probes straddling a relu/maxpool kink
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    std::string worst_param;

    bool passes(double tolerance) const { return max_rel_err < tolerance; }

    std::string to_text() const {
        std::size_t width = 9;
        for (const auto& e : entries) width = std::max(width, e.param.size());
        std::string out;
        char line[256];
        std::snprintf(line, sizeof(line), "%-*s  %12s  %12s  %12s  %8s %8s\n", static_cast<int>(width), "parameter",
                      "max_rel_err", "analytic", "numeric", "sampled", "skipped");
        out += line;
        for (const auto& e : entries) {
            std::snprintf(line, sizeof(line), "%-*s  %12.3e  %12.5e  %12.5e  %8zu %8zu\n", static_cast<int>(width),
                          e.param.c_str(), e.max_rel_err, e.analytic, e.numeric, e.sampled, e.skipped);
            out += line;
        }
        std::snprintf(line, sizeof(line), "max relative error %.3e (%s)\n", max_rel_err,
                      worst_param.empty() ? "-" : worst_param.c_str());
        out += line;
        return out;
    }
};

/// Generic central difference, for calibrating the checker itself.
inline double central_diff(const std::function<double(double)>& f, double theta, double eps) {
    return (f(theta + eps) - f(theta - eps)) / (2.0 * eps);
}

namespace detail {

// Denominator floor 1e-4: float32 backward passes carry ~1e-10..1e-8 of
// absolute rounding noise, so coordinates whose true gradient sits below the
// floor are held to |a-n| < tol*floor = 1e-8 absolute agreement instead of a
// meaningless relative comparison.
inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
}

/// Names the first layer whose output goes non-finite, for error reports.
inline std::string first_nonfinite_layer(Model& model, const Tensor& input) {
    Tensor cur = input;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        cur = model.layer(i).forward(cur, nullptr);
        if (!cur.all_finite()) return model.layer(i).name();
    }
    return "(loss)";
}

}  // namespace detail

/// Compares analytic parameter gradients against central differences at
/// `epsilon`. At most `max_samples` scalars per tensor are probed (strided,
/// deterministic). When `check_input` is set, the gradient w.r.t. the model
/// input is probed too, reported as "(input)".
inline GradCheckReport finite_diff_check(Model& model, const Tensor& input, const CheckLoss& loss,
                                          float epsilon = 1e-3f, std::size_t max_samples = 200,
                                          bool check_input = false) {
    if (epsilon <= 0.0f) throw NumericError("finite_diff_check: epsilon must be positive");
    for (const Param& p : model.params())
        if (!p.value->all_finite()) throw NumericError("finite_diff_check: parameter " + p.name + " is not finite");

    Tape tape;
    Tensor out = model.forward(input, &tape);
    const double base_loss = loss.value(out);
    if (!std::isfinite(base_loss))
        throw NumericError("finite_diff_check: non-finite loss; first non-finite output at layer '" +
                           detail::first_nonfinite_layer(model, input) + "'");

    GradStore grads;
    Tensor dinput = model.backward(loss.grad(out), tape, grads);

    GradCheckReport report;
    auto probe = [&](const std::string& name, float* data, std::size_t n, const Tensor& analytic_t) {
        GradCheckEntry entry;
        entry.param = name;
        const std::size_t stride = std::max<std::size_t>(1, n / max_samples);
        for (std::size_t i = 0; i < n; i += stride) {
            const float saved = data[i];
            const float hi = saved + epsilon;
            const float lo = saved - epsilon;
            shadow::BranchTrace trace_hi, trace_lo;
            data[i] = hi;
            const double l_hi = loss.value(shadow::forward(model, input, &trace_hi));
            data[i] = lo;
            const double l_lo = loss.value(shadow::forward(model, input, &trace_lo));
            data[i] = saved;
            if (!std::isfinite(l_hi) || !std::isfinite(l_lo))
                throw NumericError("finite_diff_check: non-finite loss while perturbing " + name);
            if (!(trace_hi == trace_lo)) {
                // the difference quotient straddles a nondifferentiable point
                ++entry.skipped;
                continue;
            }
            const double numeric = (l_hi - l_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
            const double analytic = static_cast<double>(analytic_t[i]);
            const double re = detail::rel_err(analytic, numeric);
            ++entry.sampled;
            if (re > entry.max_rel_err) {
                entry.max_rel_err = re;
                entry.worst_index = i;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
        }
        if (entry.max_rel_err > report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = entry.param;
        }
        report.entries.push_back(std::move(entry));
    };

    for (const Param& p : model.params()) {
        const Tensor* g = grads.find(p.name);
        if (!g) throw StateError("finite_diff_check: no gradient recorded for parameter " + p.name);
        probe(p.name, p.value->data(), p.value->size(), *g);
    }

    if (check_input) {
        Tensor in_copy = input;
        // re-bind the probe lambda over the input buffer; forward uses in_copy
        GradCheckEntry entry;
        entry.param = "(input)";
        const std::size_t n = in_copy.size();
        const std::size_t stride = std::max<std::size_t>(1, n / max_samples);
        for (std::size_t i = 0; i < n; i += stride) {
            const float saved = in_copy[i];
            shadow::BranchTrace trace_hi, trace_lo;
            in_copy[i] = saved + epsilon;
            const double l_hi = loss.value(shadow::forward(model, in_copy, &trace_hi));
            in_copy[i] = saved - epsilon;
            const double l_lo = loss.value(shadow::forward(model, in_copy, &trace_lo));
            const double actual = static_cast<double>(saved + epsilon) - static_cast<double>(saved - epsilon);
            in_copy[i] = saved;
            if (!(trace_hi == trace_lo)) {
                ++entry.skipped;
                continue;
            }
            const double numeric = (l_hi - l_lo) / actual;
            const double analytic = static_cast<double>(dinput[i]);
            const double re = detail::rel_err(analytic, numeric);
            ++entry.sampled;
            if (re > entry.max_rel_err) {
                entry.max_rel_err = re;
                entry.worst_index = i;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
        }
        if (entry.max_rel_err > report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = entry.param;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace vidnn

#pragma once

#include <cmath>
#include <functional>
#include <thread>
#include <unordered_map>
#include <vector>

#include "vidnn/data.hpp"
#include "vidnn/model.hpp"

// Loss, plain SGD, the training loop and evaluation. Batch gradients are
// mean-reduced before every step so the learning-rate scale is independent
// of batch size. Single-worker training is bit-reproducible per seed.

namespace vidnn {

struct TrainConfig {
    float learning_rate = 8e-4f;
    int batch_size = 10;
    int epochs = 250;
    std::uint64_t seed = 42;
    float momentum = 0.0f;  // plain SGD by default
    int workers = 1;

    void validate() const {
        if (!(learning_rate > 0.0f)) throw ConfigError("learning rate must be > 0");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (workers < 1) throw ConfigError("workers must be >= 1");
        if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("momentum must be in [0,1)");
    }
};

struct EpochReport {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_acc = 0.0;
    double eval_acc = 0.0;
};

/// -log(max(pred[label], 1e-7)) over a softmax output.
inline double cross_entropy(const Tensor& pred, int label) {
    if (label < 0 || label >= static_cast<int>(pred.size()))
        throw DataError("cross_entropy: label " + std::to_string(label) + " outside [0," +
                        std::to_string(pred.size()) + ")");
    double sum = 0.0;
    for (float v : pred) sum += v;
    if (std::abs(sum - 1.0) > 1e-4)
        throw NumericError("cross_entropy: prediction does not sum to 1 (got " + std::to_string(sum) + ")");
    return -std::log(std::max(static_cast<double>(pred[static_cast<std::size_t>(label)]), 1e-7));
}

/// dL/dpred for the clamped cross-entropy above.
inline Tensor cross_entropy_grad(const Tensor& pred, int label) {
    Tensor g(pred.shape());
    g[static_cast<std::size_t>(label)] = -1.0f / std::max(pred[static_cast<std::size_t>(label)], 1e-7f);
    return g;
}

/// One plain-SGD step: theta <- theta - lr * grad, elementwise. Parameters
/// without a recorded gradient and frozen parameters are left untouched.
inline void sgd_step(const std::vector<Param>& params, const GradStore& grads, float lr) {
    for (const Param& p : params) {
        if (p.frozen) continue;
        const Tensor* g = grads.find(p.name);
        if (!g) continue;
        require_same_shape(*p.value, *g, ("sgd_step: " + p.name).c_str());
        float* v = p.value->data();
        const float* gd = g->data();
        for (std::size_t i = 0; i < g->size(); ++i) v[i] -= lr * gd[i];
    }
}

/// Fraction of clips whose argmax prediction equals the label; argmax ties
/// break toward the lower class index.
inline int argmax_class(const Tensor& pred) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(pred.size()); ++i)
        if (pred[static_cast<std::size_t>(i)] > pred[static_cast<std::size_t>(best)]) best = i;
    return best;
}

inline double evaluate(Model& model, const std::vector<ClipSample>& samples) {
    if (samples.empty()) throw DataError("evaluate: empty dataset");
    std::size_t correct = 0;
    for (const ClipSample& s : samples)
        if (argmax_class(model.forward(s.frames, nullptr)) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

struct ConfusionCounts {
    // counts[truth][predicted]
    std::vector<std::vector<std::size_t>> counts;
    double accuracy = 0.0;
};

inline ConfusionCounts evaluate_confusion(Model& model, const std::vector<ClipSample>& samples, int classes) {
    if (samples.empty()) throw DataError("evaluate: empty dataset");
    ConfusionCounts c;
    c.counts.assign(static_cast<std::size_t>(classes), std::vector<std::size_t>(static_cast<std::size_t>(classes), 0));
    std::size_t correct = 0;
    for (const ClipSample& s : samples) {
        const int pred = argmax_class(model.forward(s.frames, nullptr));
        ++c.counts[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)];
        if (pred == s.label) ++correct;
    }
    c.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return c;
}

struct TrainResult {
    std::vector<EpochReport> history;
    int best_epoch = 0;         // 1-based; ties keep the earlier epoch
    double best_eval_acc = 0.0;
    std::vector<Tensor> best_params;  // snapshot, model parameter order
};

namespace detail {

struct WorkerAccum {
    GradStore grads;
    double loss_sum = 0.0;
    std::size_t correct = 0;
};

inline void train_samples_range(Model& model, const std::vector<ClipSample>& samples,
                                const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                                std::size_t stride, WorkerAccum& acc, int epoch, std::size_t batch_index,
                                Rng* dropout_rng) {
    for (std::size_t i = begin; i < end; i += stride) {
        const ClipSample& s = samples[order[i]];
        Tape tape;
        tape.dropout_rng = dropout_rng;
        Tensor pred = model.forward(s.frames, &tape);
        const double loss = cross_entropy(pred, s.label);
        if (!std::isfinite(loss))
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_index) + ", clip '" + s.clip_id + "'");
        acc.loss_sum += loss;
        if (argmax_class(pred) == s.label) ++acc.correct;
        model.backward(cross_entropy_grad(pred, s.label), tape, acc.grads);
    }
}

}  // namespace detail

/// Trains in place. Per epoch: seeded shuffle, mean-reduced batch gradients,
/// one SGD step per batch, then evaluation. The snapshot of the best
/// evaluation epoch is retained in the result. `on_epoch` (when set) streams
/// every report as it is produced.
inline TrainResult train(Model& model, const std::vector<ClipSample>& train_set,
                         const std::vector<ClipSample>& eval_set, const TrainConfig& cfg,
                         const std::function<void(const EpochReport&)>& on_epoch = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw DataError("train: empty training set");
    if (eval_set.empty()) throw DataError("train: empty evaluation set");
    model.infer_output_shape();

    std::vector<Param> params = model.params();
    std::unordered_map<std::string, Tensor> velocity;  // only when momentum > 0

    Rng rng(cfg.seed);
    Rng dropout_rng(Rng::derive(cfg.seed, 0x6d61736bULL));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.best_eval_acc = -1.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;

        const std::size_t n = train_set.size();
        const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += bsz, ++batch_index) {
            const std::size_t end = std::min(n, start + bsz);
            GradStore batch_grads;

            if (cfg.workers <= 1) {
                detail::WorkerAccum acc;
                detail::train_samples_range(model, train_set, order, start, end, 1, acc, epoch, batch_index,
                                            &dropout_rng);
                batch_grads = std::move(acc.grads);
                loss_sum += acc.loss_sum;
                correct += acc.correct;
            } else {
                // data-parallel: workers take strided samples, reduction is
                // in worker order (determinism only promised single-worker)
                const int w = cfg.workers;
                std::vector<detail::WorkerAccum> accs(static_cast<std::size_t>(w));
                std::vector<Rng> worker_rngs;
                for (int k = 0; k < w; ++k)
                    worker_rngs.emplace_back(Rng::derive(cfg.seed, 0x77000000ULL + static_cast<std::uint64_t>(k)));
                std::vector<std::thread> pool;
                for (int k = 0; k < w; ++k)
                    pool.emplace_back([&, k] {
                        detail::train_samples_range(model, train_set, order, start + static_cast<std::size_t>(k), end,
                                                    static_cast<std::size_t>(w), accs[static_cast<std::size_t>(k)],
                                                    epoch, batch_index, &worker_rngs[static_cast<std::size_t>(k)]);
                    });
                for (auto& th : pool) th.join();
                for (auto& acc : accs) {
                    batch_grads.add_store(acc.grads);
                    loss_sum += acc.loss_sum;
                    correct += acc.correct;
                }
            }

            batch_grads.scale(1.0f / static_cast<float>(end - start));
            if (cfg.momentum > 0.0f) {
                for (const Param& p : params) {
                    Tensor* g = batch_grads.find(p.name);
                    if (!g) continue;
                    auto it = velocity.try_emplace(p.name, Tensor(g->shape())).first;
                    Tensor& v = it->second;
                    for (std::size_t i = 0; i < g->size(); ++i) {
                        v[i] = cfg.momentum * v[i] + (*g)[i];
                        (*g)[i] = v[i];
                    }
                }
            }
            sgd_step(params, batch_grads, cfg.learning_rate);
        }

        EpochReport report;
        report.epoch = epoch;
        report.mean_loss = loss_sum / static_cast<double>(n);
        report.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        report.eval_acc = evaluate(model, eval_set);
        result.history.push_back(report);
        if (on_epoch) on_epoch(report);

        if (report.eval_acc > result.best_eval_acc) {
            result.best_eval_acc = report.eval_acc;
            result.best_epoch = epoch;
            result.best_params.clear();
            for (const Param& p : params) result.best_params.push_back(*p.value);
        }
    }
    return result;
}

/// Copies a parameter snapshot (as produced in TrainResult) back into the model.
inline void restore_params(Model& model, const std::vector<Tensor>& snapshot) {
    std::vector<Param> params = model.params();
    if (params.size() != snapshot.size()) throw StateError("restore_params: snapshot/model parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(*params[i].value, snapshot[i], "restore_params");
        *params[i].value = snapshot[i];
    }
}

}  // namespace vidnn

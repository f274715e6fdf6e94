#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "vidnn/errors.hpp"

// Run configuration: a single key = value text file ('#' comments), every
// key validated against the schema below before any work starts. Command
// line flags override file values.

namespace vidnn {

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    std::string train_manifest;
    std::string eval_manifest;
    std::string pretrain_manifest;
    std::string backbone_checkpoint;

    int resize_h = 128;
    int resize_w = 176;
    int frames_per_clip = 10;
    int classes = 2;

    int gru_units = 256;
    int fc1_units = 512;
    int fc2_units = 128;
    int backbone_conv_layers = 13;
    bool freeze_backbone = false;
    float dropout = 0.0f;

    float learning_rate = 8e-4f;
    int batch_size = 10;
    int epochs = 250;
    float momentum = 0.0f;

    float pretrain_learning_rate = 1e-3f;
    int pretrain_batch_size = 8;
    int pretrain_epochs = 100;

    int workers = 1;
    int kernel_threads = 0;  // 0 = hardware concurrency

    double split_fraction = 0.8;
    bool stratified_split = false;
    float mean_subtract = 0.0f;  // subtracted after the 1/255 scaling
    float pixel_scale = 1.0f;    // multiplies (pixel - mean_subtract)

    void validate() const {
        auto positive = [](double v, const char* key) {
            if (!(v > 0)) throw ConfigError(std::string("config: ") + key + " must be > 0");
        };
        positive(resize_h, "resize_h");
        positive(resize_w, "resize_w");
        positive(frames_per_clip, "frames_per_clip");
        positive(gru_units, "gru_units");
        positive(fc1_units, "fc1_units");
        positive(fc2_units, "fc2_units");
        positive(learning_rate, "learning_rate");
        positive(batch_size, "batch_size");
        positive(epochs, "epochs");
        positive(pretrain_learning_rate, "pretrain_learning_rate");
        positive(pretrain_batch_size, "pretrain_batch_size");
        positive(pretrain_epochs, "pretrain_epochs");
        positive(workers, "workers");
        if (classes < 2) throw ConfigError("config: classes must be >= 2");
        if (backbone_conv_layers < 1 || backbone_conv_layers > 13)
            throw ConfigError("config: backbone_conv_layers must be in [1,13]");
        if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("config: momentum must be in [0,1)");
        if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("config: dropout must be in [0,1)");
        if (!(split_fraction > 0.0 && split_fraction < 1.0))
            throw ConfigError("config: split_fraction must be inside (0,1)");
        if (!(pixel_scale > 0.0f)) throw ConfigError("config: pixel_scale must be > 0");
        if (kernel_threads < 0) throw ConfigError("config: kernel_threads must be >= 0");
    }
};

namespace detail {

inline std::string cfg_trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

template <typename T>
T cfg_number(const std::string& value, const std::string& key, int lineno);

template <>
inline int cfg_number<int>(const std::string& value, const std::string& key, int lineno) {
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' expects an integer, got '" +
                          value + "'");
    }
}

template <>
inline std::uint64_t cfg_number<std::uint64_t>(const std::string& value, const std::string& key, int lineno) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                          "' expects a nonnegative integer, got '" + value + "'");
    }
}

template <>
inline double cfg_number<double>(const std::string& value, const std::string& key, int lineno) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' expects a number, got '" +
                          value + "'");
    }
}

inline bool cfg_bool(const std::string& value, const std::string& key, int lineno) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' expects true/false, got '" +
                      value + "'");
}

}  // namespace detail

/// Applies one key=value pair (schema-checked). Used by both the file parser
/// and flag overrides.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value, int lineno = 0) {
    using detail::cfg_bool;
    using detail::cfg_number;
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&, int)>> schema = {
        {"seed", [](RunConfig& c, const std::string& v, int ln) { c.seed = cfg_number<std::uint64_t>(v, "seed", ln); }},
        {"out_dir", [](RunConfig& c, const std::string& v, int) { c.out_dir = v; }},
        {"train_manifest", [](RunConfig& c, const std::string& v, int) { c.train_manifest = v; }},
        {"eval_manifest", [](RunConfig& c, const std::string& v, int) { c.eval_manifest = v; }},
        {"pretrain_manifest", [](RunConfig& c, const std::string& v, int) { c.pretrain_manifest = v; }},
        {"backbone_checkpoint", [](RunConfig& c, const std::string& v, int) { c.backbone_checkpoint = v; }},
        {"resize_h", [](RunConfig& c, const std::string& v, int ln) { c.resize_h = cfg_number<int>(v, "resize_h", ln); }},
        {"resize_w", [](RunConfig& c, const std::string& v, int ln) { c.resize_w = cfg_number<int>(v, "resize_w", ln); }},
        {"frames_per_clip",
         [](RunConfig& c, const std::string& v, int ln) { c.frames_per_clip = cfg_number<int>(v, "frames_per_clip", ln); }},
        {"classes", [](RunConfig& c, const std::string& v, int ln) { c.classes = cfg_number<int>(v, "classes", ln); }},
        {"gru_units", [](RunConfig& c, const std::string& v, int ln) { c.gru_units = cfg_number<int>(v, "gru_units", ln); }},
        {"fc1_units", [](RunConfig& c, const std::string& v, int ln) { c.fc1_units = cfg_number<int>(v, "fc1_units", ln); }},
        {"fc2_units", [](RunConfig& c, const std::string& v, int ln) { c.fc2_units = cfg_number<int>(v, "fc2_units", ln); }},
        {"backbone_conv_layers",
         [](RunConfig& c, const std::string& v, int ln) {
             c.backbone_conv_layers = cfg_number<int>(v, "backbone_conv_layers", ln);
         }},
        {"freeze_backbone",
         [](RunConfig& c, const std::string& v, int ln) { c.freeze_backbone = cfg_bool(v, "freeze_backbone", ln); }},
        {"dropout", [](RunConfig& c, const std::string& v, int ln) {
             c.dropout = static_cast<float>(cfg_number<double>(v, "dropout", ln));
         }},
        {"learning_rate",
         [](RunConfig& c, const std::string& v, int ln) {
             c.learning_rate = static_cast<float>(cfg_number<double>(v, "learning_rate", ln));
         }},
        {"batch_size", [](RunConfig& c, const std::string& v, int ln) { c.batch_size = cfg_number<int>(v, "batch_size", ln); }},
        {"epochs", [](RunConfig& c, const std::string& v, int ln) { c.epochs = cfg_number<int>(v, "epochs", ln); }},
        {"momentum", [](RunConfig& c, const std::string& v, int ln) {
             c.momentum = static_cast<float>(cfg_number<double>(v, "momentum", ln));
         }},
        {"pretrain_learning_rate",
         [](RunConfig& c, const std::string& v, int ln) {
             c.pretrain_learning_rate = static_cast<float>(cfg_number<double>(v, "pretrain_learning_rate", ln));
         }},
        {"pretrain_batch_size",
         [](RunConfig& c, const std::string& v, int ln) { c.pretrain_batch_size = cfg_number<int>(v, "pretrain_batch_size", ln); }},
        {"pretrain_epochs",
         [](RunConfig& c, const std::string& v, int ln) { c.pretrain_epochs = cfg_number<int>(v, "pretrain_epochs", ln); }},
        {"workers", [](RunConfig& c, const std::string& v, int ln) { c.workers = cfg_number<int>(v, "workers", ln); }},
        {"kernel_threads",
         [](RunConfig& c, const std::string& v, int ln) { c.kernel_threads = cfg_number<int>(v, "kernel_threads", ln); }},
        {"split_fraction",
         [](RunConfig& c, const std::string& v, int ln) { c.split_fraction = cfg_number<double>(v, "split_fraction", ln); }},
        {"stratified_split",
         [](RunConfig& c, const std::string& v, int ln) { c.stratified_split = cfg_bool(v, "stratified_split", ln); }},
        {"mean_subtract", [](RunConfig& c, const std::string& v, int ln) {
             c.mean_subtract = static_cast<float>(cfg_number<double>(v, "mean_subtract", ln));
         }},
        {"pixel_scale", [](RunConfig& c, const std::string& v, int ln) {
             c.pixel_scale = static_cast<float>(cfg_number<double>(v, "pixel_scale", ln));
         }},
    };
    auto it = schema.find(key);
    if (it == schema.end())
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(cfg, value, lineno);
}

/// Parses a config file over the defaults. The whole file is schema-checked
/// before the caller does any work.
inline RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = detail::cfg_trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::cfg_trim(t.substr(0, eq));
        const std::string value = detail::cfg_trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        apply_config_entry(cfg, key, value, lineno);
    }
    return cfg;
}

}  // namespace vidnn

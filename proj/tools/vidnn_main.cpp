// vidnn command line: synthetic data generation, backbone pretraining, full
// model training, evaluation, single-clip prediction and gradient checking.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error,
// 5 I/O error. Errors print one machine-parsable line:
//   vidnn: error[<category>]: <message>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "vidnn/checkpoint.hpp"
#include "vidnn/config.hpp"
#include "vidnn/data.hpp"
#include "vidnn/gradcheck.hpp"
#include "vidnn/synth.hpp"
#include "vidnn/train.hpp"
#include "vidnn/vgg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vidnn;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string manifest;
    std::int64_t seed = -1;
    int workers = 0;
};

void add_common_flags(CLI::App* cmd, CliOverrides& ov, bool with_checkpoint = false, bool with_manifest = false) {
    cmd->add_option("--config", ov.config_path, "Run configuration file (key = value lines)");
    cmd->add_option("--out", ov.out_dir, "Output directory");
    cmd->add_option("--seed", ov.seed, "Random seed override");
    cmd->add_option("--workers", ov.workers, "Data-parallel workers (default 1; determinism is single-worker)");
    if (with_checkpoint) cmd->add_option("--checkpoint", ov.checkpoint, "Checkpoint path");
    if (with_manifest) cmd->add_option("--manifest", ov.manifest, "Dataset manifest path");
}

/// File config (when given) + flag overrides, flags win. Validated before
/// any work or file output happens.
RunConfig resolve_config(const CliOverrides& ov) {
    RunConfig cfg = ov.config_path.empty() ? RunConfig() : parse_config(ov.config_path);
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
    if (ov.workers > 0) cfg.workers = ov.workers;
    if (!ov.manifest.empty()) cfg.eval_manifest = ov.manifest;
    cfg.validate();

    int kernel_threads = cfg.kernel_threads;
    if (kernel_threads == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        kernel_threads = cfg.workers > 1 ? 1 : static_cast<int>(hw == 0 ? 1 : hw);
    }
    ThreadPool::set_threads(kernel_threads);
    return cfg;
}

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + cfg.out_dir);
}

void apply_normalization(std::vector<ClipSample>& samples, const RunConfig& cfg) {
    if (cfg.mean_subtract == 0.0f && cfg.pixel_scale == 1.0f) return;
    for (ClipSample& s : samples)
        for (float& v : s.frames) v = (v - cfg.mean_subtract) * cfg.pixel_scale;
}

/// Expands clip records into per-image samples for the person-classifier
/// pretraining task (every frame is an independent labeled image).
std::vector<ClipSample> load_image_samples(const std::vector<ClipRecord>& records, int h, int w) {
    std::vector<ClipSample> samples;
    for (const ClipRecord& rec : records)
        for (const std::string& frame : rec.frame_paths) {
            ClipSample s;
            s.label = rec.label;
            s.clip_id = rec.clip_id + ":" + fs::path(frame).filename().string();
            s.frames = resize_bilinear(decode_ppm(frame), h, w);
            samples.push_back(std::move(s));
        }
    return samples;
}

/// Streams `epoch,loss,train_acc,eval_acc` rows to stdout and a CSV file.
class HistoryWriter {
public:
    explicit HistoryWriter(const std::string& path) : file_(path, std::ios::trunc) {
        if (!file_) throw IoError("cannot open history file for writing: " + path);
        file_ << "epoch,loss,train_acc,eval_acc\n";
        file_.flush();
    }

    void operator()(const EpochReport& r) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g", r.epoch, r.mean_loss, r.train_acc, r.eval_acc);
        file_ << line << "\n";
        file_.flush();
        std::printf("%s\n", line);
        std::fflush(stdout);
    }

private:
    std::ofstream file_;
};

int cmd_synth(const CliOverrides& ov, int clips, int frames, const std::string& size_text) {
    RunConfig cfg = resolve_config(ov);
    SynthSpec spec;
    spec.out_dir = cfg.out_dir;
    spec.clips = clips;
    spec.frames = frames;
    spec.seed = cfg.seed;
    const auto x = size_text.find('x');
    if (x == std::string::npos) throw ConfigError("synth: --size expects HxW, got '" + size_text + "'");
    try {
        spec.height = std::stoi(size_text.substr(0, x));
        spec.width = std::stoi(size_text.substr(x + 1));
    } catch (const std::exception&) {
        throw ConfigError("synth: --size expects HxW, got '" + size_text + "'");
    }
    const std::string manifest = generate_synth_dataset(spec);
    std::printf("synthetic dataset: %d clips x %d frames (%dx%d) under %s\n", spec.clips, spec.frames, spec.height,
                spec.width, cfg.out_dir.c_str());
    std::printf("manifest: %s\n", manifest.c_str());
    return 0;
}

int cmd_pretrain(const CliOverrides& ov) {
    RunConfig cfg = resolve_config(ov);
    if (cfg.pretrain_manifest.empty()) throw ConfigError("pretrain: config key 'pretrain_manifest' is required");
    ensure_out_dir(cfg);

    auto records = load_manifest(cfg.pretrain_manifest, 2);
    auto [train_records, eval_records] = split_dataset(records, cfg.split_fraction, cfg.seed, cfg.stratified_split);
    auto train_set = load_image_samples(train_records, cfg.resize_h, cfg.resize_w);
    auto eval_set = load_image_samples(eval_records, cfg.resize_h, cfg.resize_w);
    apply_normalization(train_set, cfg);
    apply_normalization(eval_set, cfg);
    std::printf("pretraining person classifier on %zu images (%zu held out)\n", train_set.size(), eval_set.size());

    Rng rng(cfg.seed);
    Model model = build_vgg16(Shape{cfg.resize_h, cfg.resize_w, 3}, VggHead::person_classifier, 2,
                              cfg.backbone_conv_layers);
    model.init(rng);

    TrainConfig tc;
    tc.learning_rate = cfg.pretrain_learning_rate;
    tc.batch_size = cfg.pretrain_batch_size;
    tc.epochs = cfg.pretrain_epochs;
    tc.seed = cfg.seed;
    tc.momentum = cfg.momentum;
    tc.workers = cfg.workers;

    HistoryWriter history((fs::path(cfg.out_dir) / "pretrain_history.csv").string());
    TrainResult result = train(model, train_set, eval_set, tc, std::ref(history));

    restore_params(model, result.best_params);
    const std::string ckpt = (fs::path(cfg.out_dir) / "backbone.ckpt").string();
    save_checkpoint(model, ckpt);
    std::printf("best epoch %d (eval accuracy %.4f); backbone checkpoint: %s\n", result.best_epoch,
                result.best_eval_acc, ckpt.c_str());
    return 0;
}

int cmd_train(const CliOverrides& ov) {
    RunConfig cfg = resolve_config(ov);
    if (cfg.train_manifest.empty()) throw ConfigError("train: config key 'train_manifest' is required");
    ensure_out_dir(cfg);

    Rng rng(cfg.seed);
    Model backbone;
    if (!cfg.backbone_checkpoint.empty()) {
        Model person = load_checkpoint(cfg.backbone_checkpoint);
        backbone = truncate_head(std::move(person));
        const Shape expect{cfg.resize_h, cfg.resize_w, 3};
        if (backbone.input_shape() != expect)
            throw DataError("train: backbone checkpoint expects input " + shape_str(backbone.input_shape()) +
                            " but the configuration resizes to " + shape_str(expect));
        std::printf("backbone: %s (truncated after flatten)\n", cfg.backbone_checkpoint.c_str());
    } else {
        std::fprintf(stderr, "vidnn: warning: no backbone_checkpoint given, training from fresh initialization\n");
        backbone = build_vgg16(Shape{cfg.resize_h, cfg.resize_w, 3}, VggHead::none, 2, cfg.backbone_conv_layers);
        backbone.init(rng);
    }

    Model model = assemble_bigru_cnn(std::move(backbone), cfg.gru_units, cfg.fc1_units, cfg.fc2_units, cfg.classes,
                                     cfg.frames_per_clip, rng, cfg.dropout);
    if (cfg.freeze_backbone) model.find_layer("td")->set_frozen(true);

    auto records = load_manifest(cfg.train_manifest, cfg.classes);
    std::vector<ClipRecord> train_records, eval_records;
    if (!cfg.eval_manifest.empty()) {
        train_records = std::move(records);
        eval_records = load_manifest(cfg.eval_manifest, cfg.classes);
    } else {
        std::tie(train_records, eval_records) =
            split_dataset(records, cfg.split_fraction, cfg.seed, cfg.stratified_split);
    }
    auto train_set = load_dataset(train_records, cfg.frames_per_clip, cfg.resize_h, cfg.resize_w, cfg.workers);
    auto eval_set = load_dataset(eval_records, cfg.frames_per_clip, cfg.resize_h, cfg.resize_w, cfg.workers);
    apply_normalization(train_set, cfg);
    apply_normalization(eval_set, cfg);
    std::printf("training on %zu clips, evaluating on %zu clips, %zu parameters\n", train_set.size(), eval_set.size(),
                param_count(model));

    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.momentum = cfg.momentum;
    tc.workers = cfg.workers;

    HistoryWriter history((fs::path(cfg.out_dir) / "history.csv").string());
    TrainResult result = train(model, train_set, eval_set, tc, std::ref(history));

    const std::string last = (fs::path(cfg.out_dir) / "model_last.ckpt").string();
    save_checkpoint(model, last);
    restore_params(model, result.best_params);
    const std::string best = (fs::path(cfg.out_dir) / "model_best.ckpt").string();
    save_checkpoint(model, best);
    std::printf("best epoch %d (eval accuracy %.4f)\ncheckpoints: %s, %s\n", result.best_epoch, result.best_eval_acc,
                best.c_str(), last.c_str());
    return 0;
}

int cmd_eval(const CliOverrides& ov) {
    RunConfig cfg = resolve_config(ov);
    if (ov.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    if (cfg.eval_manifest.empty()) throw ConfigError("eval: --manifest (or config eval_manifest) is required");

    Model model = load_checkpoint(ov.checkpoint);
    const Shape& in = model.input_shape();
    if (in.size() != 4) throw DataError("eval: checkpoint is not a clip classifier (input " + shape_str(in) + ")");
    const int classes = model.infer_output_shape().back();

    auto records = load_manifest(cfg.eval_manifest, classes);
    auto samples = load_dataset(records, in[0], in[1], in[2], cfg.workers);
    apply_normalization(samples, cfg);

    ConfusionCounts result = evaluate_confusion(model, samples, classes);
    std::printf("accuracy: %.6f\n", result.accuracy);
    json report;
    report["accuracy"] = result.accuracy;
    report["clips"] = samples.size();
    report["confusion"] = result.counts;  // rows: truth, columns: prediction
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
}

int cmd_predict(const CliOverrides& ov, const std::string& frame_dir) {
    RunConfig cfg = resolve_config(ov);
    if (ov.checkpoint.empty()) throw ConfigError("predict: --checkpoint is required");

    Model model = load_checkpoint(ov.checkpoint);
    const Shape& in = model.input_shape();
    if (in.size() != 4) throw DataError("predict: checkpoint is not a clip classifier (input " + shape_str(in) + ")");

    ClipRecord rec;
    rec.clip_id = frame_dir;
    rec.frame_dir = frame_dir;
    std::error_code ec;
    if (!fs::is_directory(frame_dir, ec)) throw IoError("predict: frame directory not found: " + frame_dir);
    for (const auto& entry : fs::directory_iterator(frame_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm")
            rec.frame_paths.push_back(entry.path().string());
    std::sort(rec.frame_paths.begin(), rec.frame_paths.end());
    if (rec.frame_paths.empty()) throw DataError("predict: no .ppm frames in " + frame_dir);

    ClipSample sample = load_clip(rec, in[0], in[1], in[2]);
    std::vector<ClipSample> one;
    one.push_back(std::move(sample));
    apply_normalization(one, cfg);
    Tensor probs = model.forward(one[0].frames, nullptr);

    json report;
    report["probabilities"] = std::vector<float>(probs.begin(), probs.end());
    report["argmax"] = argmax_class(probs);
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
}

int cmd_gradcheck(const CliOverrides& ov) {
    RunConfig cfg = resolve_config(ov);
    constexpr float kEps = 1e-3f;
    constexpr double kTol = 1e-4;
    double worst = 0.0;
    std::string worst_name;

    auto run_check = [&](const std::string& name, Model& m, const Tensor& input, const CheckLoss& loss,
                         std::size_t samples) {
        GradCheckReport r = finite_diff_check(m, input, loss, kEps, samples, true);
        std::printf("== %s ==\n%s\n", name.c_str(), r.to_text().c_str());
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = name + " / " + r.worst_param;
        }
    };

    Rng rng(cfg.seed);
    auto random_input = [&rng](Shape shape, float lo = -1.0f, float hi = 1.0f) {
        Tensor t(std::move(shape));
        for (float& v : t) v = rng.uniform(lo, hi);
        return t;
    };

    {
        Model m(Shape{6});
        auto d = std::make_unique<Dense>("dense", 6, 4, Act::tanh_);
        d->init(rng);
        m.add(std::move(d));
        WeightedSumLoss loss(m.infer_output_shape(), 17);
        run_check("dense (tanh)", m, random_input(Shape{6}), loss, 200);
    }
    {
        Model m(Shape{6});
        auto d = std::make_unique<Dense>("dense", 6, 4, Act::sigmoid);
        d->init(rng);
        m.add(std::move(d));
        WeightedSumLoss loss(m.infer_output_shape(), 18);
        run_check("dense (sigmoid)", m, random_input(Shape{6}), loss, 200);
    }
    {
        Model m(Shape{8});
        m.add(std::make_unique<Activation>("relu", Act::relu));
        WeightedSumLoss loss(m.infer_output_shape(), 19);
        Tensor x = random_input(Shape{8});
        for (float& v : x) v += v >= 0.0f ? 0.25f : -0.25f;  // keep clear of the kink
        run_check("relu", m, x, loss, 200);
    }
    {
        Model m(Shape{6, 7, 2});
        auto conv = std::make_unique<Conv2d>("conv", 2, 3, 3, 1, Padding::same, Act::linear);
        conv->init(rng);
        m.add(std::move(conv));
        m.add(std::make_unique<Flatten>("flatten"));
        WeightedSumLoss loss(m.infer_output_shape(), 20);
        run_check("conv2d (same)", m, random_input(Shape{6, 7, 2}), loss, 200);
    }
    {
        Model m(Shape{6, 6, 2});
        m.add(std::make_unique<MaxPool2d>("pool", 2, 2));
        m.add(std::make_unique<Flatten>("flatten"));
        WeightedSumLoss loss(m.infer_output_shape(), 21);
        run_check("maxpool2d", m, random_input(Shape{6, 6, 2}, -8.0f, 8.0f), loss, 200);
    }
    {
        Model m(Shape{5});
        auto d = std::make_unique<Dense>("head", 5, 3, Act::softmax);
        d->init(rng);
        m.add(std::move(d));
        CrossEntropyCheckLoss loss(1);
        run_check("softmax + cross-entropy", m, random_input(Shape{5}), loss, 200);
    }
    {
        Model m(Shape{1, 5});
        auto g = std::make_unique<GruLayer>("gru", 5, 4, false);
        g->init(rng);
        m.add(std::move(g));
        WeightedSumLoss loss(m.infer_output_shape(), 22);
        run_check("gru cell", m, random_input(Shape{1, 5}), loss, 200);
    }
    {
        Model m(Shape{4, 5});
        auto g = std::make_unique<BiGruLayer>("bigru", 5, 4);
        g->init(rng);
        m.add(std::move(g));
        WeightedSumLoss loss(m.infer_output_shape(), 23);
        run_check("bidirectional gru", m, random_input(Shape{4, 5}), loss, 200);
    }
    {
        Model inner(Shape{5, 5, 1});
        auto conv = std::make_unique<Conv2d>("tconv", 1, 2, 3, 1, Padding::same, Act::linear);
        conv->init(rng);
        inner.add(std::move(conv));
        inner.add(std::make_unique<Flatten>("tflatten"));
        Model m(Shape{3, 5, 5, 1});
        m.add(std::make_unique<TimeDistributed>("td", std::move(inner)));
        WeightedSumLoss loss(m.infer_output_shape(), 24);
        run_check("time distributed", m, random_input(Shape{3, 5, 5, 1}), loss, 200);
    }
    {
        // the full reduced model: 16x16 frames, T=2, 8 GRU units
        Model backbone = build_vgg16(Shape{16, 16, 3}, VggHead::none, 2, 2);
        backbone.init(rng);
        Model m = assemble_bigru_cnn(std::move(backbone), 8, 32, 16, 2, 2, rng);
        CrossEntropyCheckLoss loss(0);
        run_check("full reduced bigru-cnn", m, random_input(Shape{2, 16, 16, 3}, 0.0f, 1.0f), loss, 120);
    }

    std::printf("gradcheck max relative error %.3e (%s), tolerance %.0e\n", worst, worst_name.c_str(), kTol);
    if (worst < kTol) {
        std::printf("gradcheck PASS\n");
        return 0;
    }
    std::printf("gradcheck FAIL\n");
    throw NumericError("gradient check exceeded tolerance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vidnn: video clip classification with a time-distributed CNN and a bidirectional GRU"};
    app.require_subcommand(1);

    CliOverrides ov;
    int synth_clips = 20;
    int synth_frames = 30;
    std::string synth_size = "64x64";
    std::string predict_dir;

    CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic two-class motion dataset");
    add_common_flags(synth, ov);
    synth->add_option("--clips", synth_clips, "Number of clips (balanced across the two classes)");
    synth->add_option("--frames", synth_frames, "Frames per clip");
    synth->add_option("--size", synth_size, "Frame size as HxW");

    CLI::App* pretrain = app.add_subcommand("pretrain", "Train the person-classifier backbone");
    add_common_flags(pretrain, ov);

    CLI::App* train_cmd = app.add_subcommand("train", "Train the BiGRU-CNN clip classifier");
    add_common_flags(train_cmd, ov);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
    add_common_flags(eval_cmd, ov, true, true);

    CLI::App* predict = app.add_subcommand("predict", "Classify one clip (a directory of frames)");
    add_common_flags(predict, ov, true);
    predict->add_option("frame_dir", predict_dir, "Directory of .ppm frames")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check of every layer type");
    add_common_flags(gradcheck, ov);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(ov, synth_clips, synth_frames, synth_size);
        if (pretrain->parsed()) return cmd_pretrain(ov);
        if (train_cmd->parsed()) return cmd_train(ov);
        if (eval_cmd->parsed()) return cmd_eval(ov);
        if (predict->parsed()) return cmd_predict(ov, predict_dir);
        if (gradcheck->parsed()) return cmd_gradcheck(ov);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "vidnn: error[config]: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "vidnn: error[numeric]: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "vidnn: error[io]: %s\n", e.what());
        return 5;
    } catch (const DataError& e) {
        std::fprintf(stderr, "vidnn: error[data]: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "vidnn: error[internal]: %s\n", e.what());
        return 1;
    }
    return 0;
}

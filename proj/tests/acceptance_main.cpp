// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Library-level criteria run in process; pipeline criteria
// drive the CLI binary (argv[1]) inside a scratch directory (argv[2]).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vidnn/checkpoint.hpp"
#include "vidnn/config.hpp"
#include "vidnn/data.hpp"
#include "vidnn/gradcheck.hpp"
#include "vidnn/train.hpp"
#include "vidnn/vgg.hpp"

namespace fs = std::filesystem;
using namespace vidnn;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

// Epoch budget for the synthetic end-to-end run; convergence lands well
// before this, and the criterion's bound is 150.
constexpr int kE2eEpochs = 40;

void report(const char* name, bool pass, const std::string& details) {
    std::printf("%s  %-28s %s\n", pass ? "PASS" : "FAIL", name, details.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Cli {
    std::string binary;
    fs::path work;

    struct Result {
        int exit_code;
        std::string output;
    };

    Result run(const std::string& args, const std::string& log_name) const {
        const fs::path log = work / log_name;
        const std::string cmd = binary + " " + args + " > " + log.string() + " 2>&1";
        const int raw = std::system(cmd.c_str());
        std::ifstream f(log);
        std::string output((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        return Result{WEXITSTATUS(raw), std::move(output)};
    }
};

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// --------------------------------------------------------------------------

void check_regimen_defaults() {
    // The paper-scale accuracies (98 / 95.5 / 90.25) need the real datasets
    // and long training and are NOT desk targets; this checks that the
    // default configuration runs that documented regimen unchanged.
    RunConfig cfg;
    const bool pass = std::abs(cfg.learning_rate - 8e-4f) < 1e-9f && cfg.batch_size == 10 && cfg.epochs == 250 &&
                      cfg.frames_per_clip == 10 && std::abs(cfg.pretrain_learning_rate - 1e-3f) < 1e-9f &&
                      cfg.pretrain_batch_size == 8 && cfg.pretrain_epochs == 100 && cfg.momentum == 0.0f &&
                      cfg.split_fraction == 0.8;
    report("regimen-defaults", pass,
           "defaults run the documented regimen (lr 8e-4, batch 10, 250 epochs, T=10; pretrain lr 1e-3, batch 8, "
           "100 epochs); paper-scale accuracies are out of desk scope by design");
}

void check_gradient_correctness(const Cli& cli) {
    const auto t0 = Clock::now();
    const Cli::Result r = cli.run("gradcheck --seed 42", "gradcheck.log");
    const double secs = seconds_since(t0);
    // parse the reported maximum
    double max_err = -1.0;
    const auto pos = r.output.find("gradcheck max relative error ");
    if (pos != std::string::npos) max_err = std::atof(r.output.c_str() + pos + 29);
    char details[256];
    std::snprintf(details, sizeof(details), "every layer type + full reduced model; max rel err %.2e (< 1e-4), %.0f s (< 120 s)",
                  max_err, secs);
    report("gradient-correctness", r.exit_code == 0 && max_err >= 0.0 && max_err < 1e-4 && secs < 120.0, details);
}

void check_gru_oracle() {
    Rng meta(90210);
    double worst = 0.0;
    int cases = 0;
    for (int iter = 0; iter < 120; ++iter) {
        const int u = 1 + static_cast<int>(meta.index(8));
        const int d = 1 + static_cast<int>(meta.index(8));
        GruParams p = GruParams::zeros(u, d);
        Rng init(meta.raw());
        gru_init(p, init);
        for (float& v : p.b_z) v = init.uniform(-0.5f, 0.5f);
        for (float& v : p.b_r) v = init.uniform(-0.5f, 0.5f);
        for (float& v : p.b_h) v = init.uniform(-0.5f, 0.5f);
        Tensor x = oracle::random_tensor(meta, Shape{d}, -2.0f, 2.0f);
        Tensor h = oracle::random_tensor(meta, Shape{u}, -0.99f, 0.99f);
        Tensor got = gru_cell(x, h, p);
        std::vector<double> xs(x.begin(), x.end()), hs(h.begin(), h.end());
        std::vector<double> want = oracle::gru_cell(xs, hs, p);
        for (int i = 0; i < u; ++i)
            worst = std::max(worst, std::abs(static_cast<double>(got[static_cast<std::size_t>(i)]) -
                                             want[static_cast<std::size_t>(i)]));
        ++cases;
    }
    char details[160];
    std::snprintf(details, sizeof(details), "%d random instances vs scalar-loop oracle, max abs diff %.2e (< 1e-6)",
                  cases, worst);
    report("gru-oracle-equivalence", worst < 1e-6, details);
}

void check_kernel_oracles() {
    Rng rng(5150);
    double conv_worst = 0.0, pool_worst = 0.0;
    bool matmul_exact = true;
    for (int iter = 0; iter < 120; ++iter) {
        // matmul: bit equality against the same-order triple loop
        {
            const int m = 1 + static_cast<int>(rng.index(8));
            const int k = 1 + static_cast<int>(rng.index(8));
            const int n = 1 + static_cast<int>(rng.index(8));
            Tensor a = oracle::random_tensor(rng, Shape{m, k});
            Tensor b = oracle::random_tensor(rng, Shape{k, n});
            Tensor got = matmul(a, b);
            Tensor want = oracle::matmul(a, b);
            for (std::size_t i = 0; i < want.size(); ++i) matmul_exact = matmul_exact && got[i] == want[i];
        }
        // conv2d
        {
            const int h = 2 + static_cast<int>(rng.index(7));
            const int w = 2 + static_cast<int>(rng.index(7));
            const int cin = 1 + static_cast<int>(rng.index(3));
            const int cout = 1 + static_cast<int>(rng.index(4));
            const int ks = 1 + static_cast<int>(rng.index(std::min(3, std::min(h, w))));
            const int stride = 1 + static_cast<int>(rng.index(2));
            const bool same = rng.index(2) == 0;
            Tensor in = oracle::random_tensor(rng, Shape{h, w, cin});
            Tensor k = oracle::random_tensor(rng, Shape{ks, ks, cin, cout});
            Tensor b = oracle::random_tensor(rng, Shape{cout});
            Tensor got = conv2d(in, k, b, stride, same ? Padding::same : Padding::valid);
            Tensor want = oracle::conv2d(in, k, b, stride, same);
            for (std::size_t i = 0; i < want.size(); ++i)
                conv_worst = std::max(conv_worst, static_cast<double>(std::abs(got[i] - want[i])));
        }
        // maxpool
        {
            const int h = 2 + static_cast<int>(rng.index(7));
            const int w = 2 + static_cast<int>(rng.index(7));
            const int c = 1 + static_cast<int>(rng.index(3));
            const int window = 1 + static_cast<int>(rng.index(std::min(h, w)));
            const int stride = 1 + static_cast<int>(rng.index(3));
            Tensor in = oracle::random_tensor(rng, Shape{h, w, c});
            PoolResult got = maxpool2d(in, window, stride);
            Tensor want = oracle::maxpool2d(in, window, stride);
            for (std::size_t i = 0; i < want.size(); ++i)
                pool_worst = std::max(pool_worst, static_cast<double>(std::abs(got.out[i] - want[i])));
        }
    }
    char details[200];
    std::snprintf(details, sizeof(details),
                  "120 instances each: matmul bit-exact=%s, conv2d max diff %.2e, maxpool max diff %.2e (< 1e-5)",
                  matmul_exact ? "yes" : "NO", conv_worst, pool_worst);
    report("kernel-oracle-equivalence", matmul_exact && conv_worst < 1e-5 && pool_worst < 1e-5, details);
}

void check_bidirectional_decomposition() {
    Rng meta(777);
    bool exact = true;
    for (int iter = 0; iter < 50; ++iter) {
        const int u = 1 + static_cast<int>(meta.index(8));
        const int d = 1 + static_cast<int>(meta.index(8));
        const int t = 1 + static_cast<int>(meta.index(10));
        GruParams pf = GruParams::zeros(u, d), pb = GruParams::zeros(u, d);
        Rng init(meta.raw());
        gru_init(pf, init);
        gru_init(pb, init);
        Tensor x = oracle::random_tensor(meta, Shape{t, d});
        Tensor got = bidirectional_gru(x, pf, pb);
        Tensor hf = gru_sequence(x, pf, false);
        Tensor hb = gru_sequence(reverse_time(x), pb, false);
        for (int i = 0; i < u; ++i) {
            exact = exact && got[static_cast<std::size_t>(i)] == hf[static_cast<std::size_t>(i)];
            exact = exact && got[static_cast<std::size_t>(u + i)] == hb[static_cast<std::size_t>(i)];
        }
    }
    report("bidirectional-decomposition", exact,
           "50 random cases: output == gru_sequence(x) || gru_sequence(reverse(x)), bit-exact");
}

void check_synthetic_end_to_end(const Cli& cli) {
    const auto t0 = Clock::now();
    const fs::path train_data = cli.work / "synth_train";
    const fs::path eval_data = cli.work / "synth_eval";
    const fs::path dev_data = cli.work / "synth_dev";
    const fs::path run_dir = cli.work / "e2e_run";

    Cli::Result s1 = cli.run("synth --out " + train_data.string() + " --seed 7 --clips 20 --frames 30 --size 64x64",
                             "e2e_synth_train.log");
    Cli::Result s2 = cli.run("synth --out " + eval_data.string() + " --seed 8 --clips 20 --frames 30 --size 64x64",
                             "e2e_synth_eval.log");
    Cli::Result s3 = cli.run("synth --out " + dev_data.string() + " --seed 9 --clips 6 --frames 30 --size 64x64",
                             "e2e_synth_dev.log");
    if (s1.exit_code != 0 || s2.exit_code != 0 || s3.exit_code != 0) {
        report("synthetic-end-to-end", false, "synth command failed");
        return;
    }

    // the reduced model pinned by the criterion: first 4 VGG conv layers,
    // 32 GRU units, lr 0.0008, batch 10, T=10, 64x64 clips. Per-epoch
    // evaluation runs against a small dev split; the criterion accuracy is
    // measured afterwards on the full fresh 20-clip set. The epoch budget
    // sits far below the 150-epoch bound.
    std::ofstream cfg(cli.work / "e2e.cfg", std::ios::trunc);
    cfg << "train_manifest = " << (train_data / "manifest.txt").string() << "\n"
        << "eval_manifest = " << (dev_data / "manifest.txt").string() << "\n"
        << "resize_h = 64\nresize_w = 64\nframes_per_clip = 10\n"
        << "backbone_conv_layers = 4\ngru_units = 32\nfc1_units = 64\nfc2_units = 32\n"
        << "learning_rate = 0.0008\nbatch_size = 10\nepochs = " << kE2eEpochs << "\nseed = 7\n"
        << "momentum = 0.9\nmean_subtract = 0.42\npixel_scale = 5.0\n"
        << "out_dir = " << run_dir.string() << "\n";
    cfg.close();

    Cli::Result tr = cli.run("train --config " + (cli.work / "e2e.cfg").string(), "e2e_train.log");
    if (tr.exit_code != 0) {
        report("synthetic-end-to-end", false, "train command failed (see e2e_train.log)");
        return;
    }

    // history: training accuracy must reach 1.0 within the epoch budget
    double best_train = 0.0;
    int first_full_epoch = -1;
    {
        std::ifstream hist(run_dir / "history.csv");
        std::string line;
        std::getline(hist, line);  // header
        while (std::getline(hist, line)) {
            int epoch = 0;
            double loss = 0, train_acc = 0, eval_acc = 0;
            if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &epoch, &loss, &train_acc, &eval_acc) == 4) {
                if (train_acc > best_train) best_train = train_acc;
                if (train_acc == 1.0 && first_full_epoch < 0) first_full_epoch = epoch;
            }
        }
    }

    // fresh-set accuracy through the eval command on the final model
    Cli::Result ev = cli.run("eval --checkpoint " + (run_dir / "model_last.ckpt").string() + " --manifest " +
                                 (eval_data / "manifest.txt").string() +
                                 " --config " + (cli.work / "e2e.cfg").string() + " --out " + run_dir.string(),
                             "e2e_eval.log");
    double eval_acc = -1.0;
    const auto pos = ev.output.find("accuracy: ");
    if (pos != std::string::npos) eval_acc = std::atof(ev.output.c_str() + pos + 10);

    // the overfit model must classify its own training clips via `predict`
    Cli::Result pr = cli.run("predict --checkpoint " + (run_dir / "model_last.ckpt").string() + " --config " +
                                 (cli.work / "e2e.cfg").string() + " " + (train_data / "clip_0001").string(),
                             "e2e_predict.log");
    bool predict_ok = pr.exit_code == 0;
    {
        const auto apos = pr.output.find("\"argmax\": ");
        predict_ok = predict_ok && apos != std::string::npos &&
                     std::atoi(pr.output.c_str() + apos + 10) == 1;  // clip_0001 has label 1
    }

    const double secs = seconds_since(t0);
    char details[300];
    std::snprintf(details, sizeof(details),
                  "train_acc hit 1.0 at epoch %d (<= 150); fresh-set accuracy %.2f (>= 0.90); predict(train clip) %s; "
                  "%.0f s (< 900 s)",
                  first_full_epoch, eval_acc, predict_ok ? "correct" : "WRONG", secs);
    report("synthetic-end-to-end",
           best_train == 1.0 && first_full_epoch > 0 && first_full_epoch <= 150 && ev.exit_code == 0 &&
               eval_acc >= 0.90 && predict_ok && secs < 900.0,
           details);
}

void check_architecture_arithmetic() {
    Model conv_stack = build_vgg16(Shape{32, 32, 3}, VggHead::none);
    const std::size_t stack = param_count(conv_stack);

    Model headless = build_vgg16(Shape{128, 176, 3}, VggHead::none);
    const Shape flat = headless.infer_output_shape();

    Model canonical = build_vgg16(Shape{224, 224, 3}, VggHead::person_classifier, 1000);
    const double total = static_cast<double>(param_count(canonical));

    char details[200];
    std::snprintf(details, sizeof(details), "conv stack %zu (= 14,714,688); flatten(128x176) %d (= 10240); canonical %.0f (within 1%% of 138M)",
                  stack, flat[0], total);
    report("architecture-arithmetic",
           stack == 14714688u && flat == Shape{10240} && std::abs(total - 138e6) <= 0.01 * 138e6, details);
}

void check_sampling_contract() {
    const std::vector<int> expect{0, 4, 8, 12, 16, 20, 24, 28, 32, 36};
    bool pass = uniform_sample(41, 10) == expect;
    Rng rng(11);
    for (int iter = 0; iter < 1000 && pass; ++iter) {
        const int n = 1 + static_cast<int>(rng.index(400));
        const int k = 1 + static_cast<int>(rng.index(50));
        const auto idx = uniform_sample(n, k);
        pass = pass && idx.size() == static_cast<std::size_t>(k);
        for (std::size_t i = 0; i < idx.size() && pass; ++i) {
            pass = idx[i] >= 0 && idx[i] < n && (i == 0 || idx[i] >= idx[i - 1]);
        }
    }
    report("sampling-contract", pass, "uniform_sample(41,10) exact; 1000 random (n,k): length, bounds, monotone");
}

void check_determinism(const Cli& cli) {
    const fs::path data = cli.work / "det_data";
    Cli::Result s = cli.run("synth --out " + data.string() + " --seed 5 --clips 6 --frames 8 --size 32x32",
                            "det_synth.log");
    if (s.exit_code != 0) {
        report("determinism", false, "synth failed");
        return;
    }
    auto run_once = [&](const std::string& tag) {
        const fs::path run_dir = cli.work / ("det_run_" + tag);
        std::ofstream cfg(cli.work / ("det_" + tag + ".cfg"), std::ios::trunc);
        cfg << "train_manifest = " << (data / "manifest.txt").string() << "\n"
            << "resize_h = 32\nresize_w = 32\nframes_per_clip = 4\nbackbone_conv_layers = 2\n"
            << "gru_units = 8\nfc1_units = 16\nfc2_units = 8\nepochs = 2\nbatch_size = 3\nseed = 77\n"
            << "split_fraction = 0.5\nworkers = 1\nout_dir = " << run_dir.string() << "\n";
        cfg.close();
        cli.run("train --config " + (cli.work / ("det_" + tag + ".cfg")).string(), "det_train_" + tag + ".log");
        return run_dir;
    };
    const fs::path a = run_once("a");
    const fs::path b = run_once("b");
    const bool hist_same = read_file(a / "history.csv") == read_file(b / "history.csv");
    const bool best_same = read_file(a / "model_best.ckpt") == read_file(b / "model_best.ckpt");
    const bool last_same = read_file(a / "model_last.ckpt") == read_file(b / "model_last.ckpt");
    const bool nonempty = !read_file(a / "history.csv").empty() && !read_file(a / "model_best.ckpt").empty();
    char details[200];
    std::snprintf(details, sizeof(details), "two identical single-worker runs: history %s, best ckpt %s, last ckpt %s",
                  hist_same ? "bit-identical" : "DIFFER", best_same ? "bit-identical" : "DIFFER",
                  last_same ? "bit-identical" : "DIFFER");
    report("determinism", nonempty && hist_same && best_same && last_same, details);
}

void check_serialization(const Cli& cli) {
    bool pass = true;
    std::string note;

    Rng rng(31337);
    Model m(Shape{4, 8, 8, 3});
    {
        Model backbone = build_vgg16(Shape{8, 8, 3}, VggHead::none, 2, 1);
        backbone.init(rng);
        m = assemble_bigru_cnn(std::move(backbone), 4, 8, 6, 2, 4, rng);
    }
    const fs::path path = cli.work / "serialization.ckpt";
    save_checkpoint(m, path.string());
    Model loaded = load_checkpoint(path.string());
    Tensor x = oracle::random_tensor(rng, Shape{4, 8, 8, 3}, 0.0f, 1.0f);
    Tensor ya = m.forward(x, nullptr);
    Tensor yb = loaded.forward(x, nullptr);
    if (std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(float)) != 0) {
        pass = false;
        note += "round-trip outputs differ; ";
    }

    const std::string blob = read_file(path);
    struct Case {
        const char* name;
        std::string content;
        CheckpointError::Kind kind;
    };
    std::string bad_magic = blob;
    bad_magic[0] = 'x';
    std::string bad_version = blob;
    bad_version[8] = 42;
    const Case cases[] = {
        {"truncated", blob.substr(0, blob.size() / 2), CheckpointError::Kind::truncated},
        {"bad magic", bad_magic, CheckpointError::Kind::bad_magic},
        {"bad version", bad_version, CheckpointError::Kind::bad_version},
        {"trailing bytes", blob + "!", CheckpointError::Kind::trailing_bytes},
    };
    for (const Case& c : cases) {
        const fs::path p = cli.work / "serialization_bad.ckpt";
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(c.content.data(), static_cast<std::streamsize>(c.content.size()));
        out.close();
        try {
            load_checkpoint(p.string());
            pass = false;
            note += std::string(c.name) + " accepted; ";
        } catch (const CheckpointError& e) {
            if (e.kind() != c.kind) {
                pass = false;
                note += std::string(c.name) + " wrong kind; ";
            }
        }
    }

    // the CLI maps checkpoint rejections to exit code 5
    {
        const fs::path p = cli.work / "serialization_bad.ckpt";
        Cli::Result r = cli.run("predict --checkpoint " + p.string() + " " + (cli.work / "det_data" / "clip_0000").string(),
                                "serialization_cli.log");
        if (r.exit_code != 5) {
            pass = false;
            note += "CLI exit code " + std::to_string(r.exit_code) + " != 5; ";
        }
    }
    report("serialization", pass,
           note.empty() ? "round-trip bit-exact; truncated/magic/version/trailing all rejected distinctly; CLI exit 5"
                        : note);
}

void check_split_contract() {
    std::vector<ClipRecord> records(1000);
    for (int i = 0; i < 1000; ++i) records[static_cast<std::size_t>(i)].clip_id = std::to_string(i);
    auto [train, eval] = split_dataset(records, 0.8, 4242);
    auto [train2, eval2] = split_dataset(records, 0.8, 4242);
    std::set<std::string> seen;
    for (const auto& r : train) seen.insert(r.clip_id);
    for (const auto& r : eval) seen.insert(r.clip_id);
    bool deterministic = train.size() == train2.size();
    for (std::size_t i = 0; i < train.size() && deterministic; ++i)
        deterministic = train[i].clip_id == train2[i].clip_id;
    const bool pass = train.size() == 800 && eval.size() == 200 && seen.size() == 1000 && deterministic;
    report("split-contract", pass, "1000 records -> 800/200, disjoint+exhaustive, deterministic per seed");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: acceptance <vidnn-cli-path> <work-dir>\n");
        return 2;
    }
    Cli cli{argv[1], fs::path(argv[2])};
    std::error_code ec;
    fs::remove_all(cli.work, ec);
    fs::create_directories(cli.work, ec);
    if (ec) {
        std::fprintf(stderr, "cannot create work dir %s\n", cli.work.string().c_str());
        return 2;
    }

    const auto t0 = Clock::now();
    check_regimen_defaults();
    check_gradient_correctness(cli);
    check_gru_oracle();
    check_kernel_oracles();
    check_bidirectional_decomposition();
    check_architecture_arithmetic();
    check_sampling_contract();
    check_split_contract();
    check_determinism(cli);
    check_serialization(cli);
    check_synthetic_end_to_end(cli);

    std::printf("%d of 11 criteria passed in %.0f s\n", 11 - g_failures, seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}

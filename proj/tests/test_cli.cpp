#include <catch2/catch_amalgamated.hpp>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

// End-to-end checks of the command-line surface: subcommands, flags, exit
// codes and the machine-parsable error prefix. The binary path comes from
// the build system.

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const fs::path dir = fs::temp_directory_path() / "vidnn_cli_tests";
    fs::create_directories(dir);
    const fs::path out_file = dir / "last_output.txt";
    const std::string cmd = std::string(VIDNN_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    std::ifstream f(out_file);
    std::string output((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return RunResult{WEXITSTATUS(raw), std::move(output)};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "vidnn_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_cfg(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / "vidnn_cli_tests" / name;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    f << content;
    return p.string();
}

}  // namespace

TEST_CASE("help and unknown flags") {
    REQUIRE(run_cli("--help").exit_code == 0);
    REQUIRE(run_cli("synth --no-such-flag").exit_code == 2);
    REQUIRE(run_cli("").exit_code == 2);  // a subcommand is required
}

TEST_CASE("config errors exit with code 2 and the error prefix") {
    const std::string cfg = write_cfg("bad.cfg", "not_a_key = 1\n");
    RunResult r = run_cli("train --config " + cfg);
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("vidnn: error[config]") != std::string::npos);
    REQUIRE(r.output.find("not_a_key") != std::string::npos);

    // missing required manifest key
    RunResult r2 = run_cli("train");
    REQUIRE(r2.exit_code == 2);
}

TEST_CASE("data errors exit with code 3") {
    const fs::path dir = fresh_dir("data_err");
    std::ofstream(dir / "manifest.txt") << "clip_x,notanumber,frames\n";
    const std::string cfg = write_cfg("data_err.cfg", "train_manifest = " + (dir / "manifest.txt").string() +
                                                          "\nresize_h = 32\nresize_w = 32\nbackbone_conv_layers = 1\n");
    RunResult r = run_cli("train --config " + cfg);
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.output.find("vidnn: error[data]") != std::string::npos);
}

TEST_CASE("io errors exit with code 5") {
    RunResult r = run_cli("eval --checkpoint /nonexistent.ckpt --manifest /nonexistent.txt");
    REQUIRE(r.exit_code == 5);
    REQUIRE(r.output.find("vidnn: error[io]") != std::string::npos);
}

TEST_CASE("synth then a short train/eval/predict round trip") {
    const fs::path data_dir = fresh_dir("flow_data");
    const fs::path run_dir = fresh_dir("flow_run");

    RunResult synth = run_cli("synth --out " + data_dir.string() + " --seed 3 --clips 6 --frames 8 --size 32x32");
    REQUIRE(synth.exit_code == 0);
    REQUIRE(fs::exists(data_dir / "manifest.txt"));
    REQUIRE(synth.output.find("manifest") != std::string::npos);

    const std::string cfg = write_cfg("flow.cfg",
                                      "train_manifest = " + (data_dir / "manifest.txt").string() +
                                          "\n"
                                          "resize_h = 32\nresize_w = 32\nframes_per_clip = 4\n"
                                          "backbone_conv_layers = 1\ngru_units = 4\nfc1_units = 8\nfc2_units = 8\n"
                                          "epochs = 1\nbatch_size = 3\nseed = 3\nsplit_fraction = 0.5\n"
                                          "out_dir = " +
                                          run_dir.string() + "\n");
    RunResult train = run_cli("train --config " + cfg);
    INFO(train.output);
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(run_dir / "model_best.ckpt"));
    REQUIRE(fs::exists(run_dir / "history.csv"));

    // history CSV has the documented column header
    std::ifstream hist(run_dir / "history.csv");
    std::string header;
    std::getline(hist, header);
    REQUIRE(header == "epoch,loss,train_acc,eval_acc");

    RunResult eval = run_cli("eval --checkpoint " + (run_dir / "model_best.ckpt").string() + " --manifest " +
                             (data_dir / "manifest.txt").string());
    INFO(eval.output);
    REQUIRE(eval.exit_code == 0);
    REQUIRE(eval.output.find("accuracy:") != std::string::npos);
    REQUIRE(eval.output.find("\"confusion\"") != std::string::npos);

    RunResult predict = run_cli("predict --checkpoint " + (run_dir / "model_best.ckpt").string() + " " +
                                (data_dir / "clip_0000").string());
    INFO(predict.output);
    REQUIRE(predict.exit_code == 0);
    REQUIRE(predict.output.find("probabilities") != std::string::npos);

    // probabilities parse back and sum to 1
    const auto lb = predict.output.find('[');
    const auto rb = predict.output.find(']');
    REQUIRE(lb != std::string::npos);
    const std::string inner = predict.output.substr(lb + 1, rb - lb - 1);
    double sum = 0.0;
    std::size_t pos = 0;
    int count = 0;
    while (pos < inner.size()) {
        std::size_t used = 0;
        sum += std::stod(inner.substr(pos), &used);
        pos += used;
        ++count;
        while (pos < inner.size() && (inner[pos] == ',' || std::isspace(static_cast<unsigned char>(inner[pos])))) ++pos;
    }
    REQUIRE(count == 2);
    REQUIRE(std::abs(sum - 1.0) < 1e-6);

    // corrupt checkpoint -> io error exit code
    {
        std::ofstream bad(run_dir / "bad.ckpt", std::ios::binary | std::ios::trunc);
        bad << "garbage";
    }
    RunResult corrupt = run_cli("eval --checkpoint " + (run_dir / "bad.ckpt").string() + " --manifest " +
                                (data_dir / "manifest.txt").string());
    REQUIRE(corrupt.exit_code == 5);
}

TEST_CASE("flags override config values") {
    const fs::path out_a = fresh_dir("flag_a");
    const fs::path out_b = fresh_dir("flag_b");
    const std::string cfg = write_cfg("flags.cfg", "out_dir = " + out_a.string() + "\nseed = 1\n");
    // --out wins over the config file
    RunResult r = run_cli("synth --config " + cfg + " --out " + out_b.string() + " --clips 2 --frames 4 --size 32x32");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(out_b / "manifest.txt"));
    REQUIRE(!fs::exists(out_a / "manifest.txt"));
}

TEST_CASE("pretrain then transfer into the clip classifier") {
    const fs::path data_dir = fresh_dir("pretrain_data");
    const fs::path pre_dir = fresh_dir("pretrain_run");
    const fs::path fit_dir = fresh_dir("pretrain_fit");

    // synthetic frames double as a binary image dataset for the person task
    RunResult synth = run_cli("synth --out " + data_dir.string() + " --seed 9 --clips 4 --frames 6 --size 32x32");
    REQUIRE(synth.exit_code == 0);

    const std::string pre_cfg = write_cfg("pre.cfg",
                                          "pretrain_manifest = " + (data_dir / "manifest.txt").string() +
                                              "\n"
                                              "resize_h = 32\nresize_w = 32\npretrain_epochs = 1\n"
                                              "pretrain_batch_size = 4\nseed = 9\nsplit_fraction = 0.5\n"
                                              "out_dir = " +
                                              pre_dir.string() + "\n");
    RunResult pre = run_cli("pretrain --config " + pre_cfg);
    INFO(pre.output);
    REQUIRE(pre.exit_code == 0);
    REQUIRE(fs::exists(pre_dir / "backbone.ckpt"));
    REQUIRE(fs::exists(pre_dir / "pretrain_history.csv"));

    const std::string fit_cfg = write_cfg("fit.cfg",
                                          "train_manifest = " + (data_dir / "manifest.txt").string() +
                                              "\n"
                                              "backbone_checkpoint = " + (pre_dir / "backbone.ckpt").string() +
                                              "\n"
                                              "resize_h = 32\nresize_w = 32\nframes_per_clip = 3\n"
                                              "gru_units = 4\nfc1_units = 8\nfc2_units = 8\n"
                                              "epochs = 1\nbatch_size = 2\nseed = 9\nsplit_fraction = 0.5\n"
                                              "out_dir = " +
                                              fit_dir.string() + "\n");
    RunResult fit = run_cli("train --config " + fit_cfg);
    INFO(fit.output);
    REQUIRE(fit.exit_code == 0);
    REQUIRE(fit.output.find("truncated after flatten") != std::string::npos);
    REQUIRE(fs::exists(fit_dir / "model_best.ckpt"));

    // a backbone trained at a different size is rejected as inconsistent data
    const std::string bad_cfg = write_cfg("fit_bad.cfg",
                                          "train_manifest = " + (data_dir / "manifest.txt").string() +
                                              "\n"
                                              "backbone_checkpoint = " + (pre_dir / "backbone.ckpt").string() +
                                              "\n"
                                              "resize_h = 64\nresize_w = 64\nframes_per_clip = 3\n"
                                              "gru_units = 4\nfc1_units = 8\nfc2_units = 8\n"
                                              "epochs = 1\nbatch_size = 2\nseed = 9\nsplit_fraction = 0.5\n"
                                              "out_dir = " +
                                              fit_dir.string() + "\n");
    RunResult bad = run_cli("train --config " + bad_cfg);
    REQUIRE(bad.exit_code == 3);
    REQUIRE(bad.output.find("vidnn: error[data]") != std::string::npos);
}

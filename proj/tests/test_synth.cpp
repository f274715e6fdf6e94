#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vidnn/data.hpp"
#include "vidnn/synth.hpp"

using namespace vidnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "vidnn_synth_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generator writes a balanced manifest") {
    const fs::path dir = fresh_dir("balanced");
    SynthSpec spec;
    spec.out_dir = dir.string();
    spec.clips = 20;
    spec.frames = 12;
    spec.seed = 11;
    const std::string manifest = generate_synth_dataset(spec);

    auto records = load_manifest(manifest);
    REQUIRE(records.size() == 20);
    int pos = 0;
    for (const auto& r : records) {
        pos += r.label;
        REQUIRE(r.frame_paths.size() == 12);
    }
    REQUIRE(pos == 10);
}

TEST_CASE("generator output is bit-identical per seed") {
    const fs::path dir_a = fresh_dir("det_a");
    const fs::path dir_b = fresh_dir("det_b");
    SynthSpec spec;
    spec.clips = 4;
    spec.frames = 8;
    spec.seed = 21;
    spec.out_dir = dir_a.string();
    generate_synth_dataset(spec);
    spec.out_dir = dir_b.string();
    generate_synth_dataset(spec);

    for (int c = 0; c < 4; ++c)
        for (int t = 0; t < 8; ++t) {
            char rel[64];
            std::snprintf(rel, sizeof(rel), "clip_%04d/frame_%03d.ppm", c, t);
            REQUIRE(file_bytes(dir_a / rel) == file_bytes(dir_b / rel));
        }

    const fs::path dir_c = fresh_dir("det_c");
    spec.out_dir = dir_c.string();
    spec.seed = 22;
    generate_synth_dataset(spec);
    REQUIRE(file_bytes(dir_a / "clip_0000/frame_000.ppm") != file_bytes(dir_c / "clip_0000/frame_000.ppm"));
}

TEST_CASE("argmax trajectories respect the class speed bounds") {
    const fs::path dir = fresh_dir("speed");
    SynthSpec spec;
    spec.out_dir = dir.string();
    spec.clips = 12;
    spec.frames = 16;
    spec.seed = 33;
    const std::string manifest = generate_synth_dataset(spec);
    auto records = load_manifest(manifest);

    for (const auto& rec : records) {
        std::vector<std::pair<double, double>> centers;
        for (const auto& frame_path : rec.frame_paths)
            centers.push_back(brightest_center(decode_ppm(frame_path)));

        double total = 0.0;
        for (std::size_t t = 1; t < centers.size(); ++t) {
            const double dy = centers[t].first - centers[t - 1].first;
            const double dx = centers[t].second - centers[t - 1].second;
            const double step = std::sqrt(dy * dy + dx * dx);
            total += step;
            INFO(rec.clip_id << " frame " << t << " step " << step);
            if (rec.label == 1) {
                REQUIRE(step >= kFightMinCenterStep);
                REQUIRE(step <= kFightMaxCenterStep);
            } else {
                REQUIRE(step <= kCalmMaxCenterStep);
            }
        }
        if (rec.label == 0)
            REQUIRE(total / static_cast<double>(centers.size() - 1) <= kCalmMeanCenterStep);
    }
}

TEST_CASE("generator validates its spec") {
    SynthSpec spec;
    spec.out_dir = fresh_dir("bad").string();
    spec.clips = 0;
    REQUIRE_THROWS_AS(generate_synth_dataset(spec), ConfigError);
    spec.clips = 2;
    spec.height = 8;
    REQUIRE_THROWS_AS(generate_synth_dataset(spec), ConfigError);
}

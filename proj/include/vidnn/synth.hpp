#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vidnn/image.hpp"
#include "vidnn/rng.hpp"

// Synthetic two-class motion dataset. Every clip shows the same kind of
// scene - two bright gaussian blobs on a dark background - so a single frame
// carries no class signal; only the motion differs:
//   class 1 ("fight"): the blobs rush toward each other, then grind around
//     a shared center at high speed while overlapping.
//   class 0 ("calm"):  the blobs drift independently at low speed.
// Blob A is brighter than blob B so the per-frame argmax pixel tracks A's
// center, which the tests use to verify the speed bounds below.

namespace vidnn {

struct SynthSpec {
    std::string out_dir;
    int clips = 20;
    int frames = 30;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 1;
};

// Design speeds (px/frame) and the derived argmax-step bounds the generator
// guarantees (argmax adds at most ~1.4px of rounding jitter per frame).
inline constexpr float kFightSpeedLo = 3.5f;
inline constexpr float kFightSpeedHi = 4.5f;
inline constexpr float kCalmSpeedLo = 0.05f;
inline constexpr float kCalmSpeedHi = 0.35f;
inline constexpr double kFightMinCenterStep = 2.5;
inline constexpr double kFightMaxCenterStep = 5.2;
inline constexpr double kCalmMaxCenterStep = 0.9;
inline constexpr double kCalmMeanCenterStep = 0.7;

namespace detail {

struct Vec2 {
    float x = 0.0f, y = 0.0f;
};

inline float dist(const Vec2& a, const Vec2& b) {
    const float dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// Renders two blobs onto a base-brightness background.
inline Tensor render_frame(int h, int w, float base, const Vec2& a, const Vec2& b) {
    constexpr float kSigma = 4.0f;
    constexpr float kAmpA = 0.50f;
    constexpr float kAmpB = 0.40f;
    const float inv2s2 = 1.0f / (2.0f * kSigma * kSigma);
    Tensor img(Shape{h, w, 3});
    float* d = img.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float fx = static_cast<float>(x), fy = static_cast<float>(y);
            const float da2 = (fx - a.x) * (fx - a.x) + (fy - a.y) * (fy - a.y);
            const float db2 = (fx - b.x) * (fx - b.x) + (fy - b.y) * (fy - b.y);
            float v = base + kAmpA * std::exp(-da2 * inv2s2) + kAmpB * std::exp(-db2 * inv2s2);
            if (v > 1.0f) v = 1.0f;
            float* px = d + (static_cast<std::size_t>(y) * w + x) * 3;
            px[0] = v;
            px[1] = v;
            px[2] = v;
        }
    return img;
}

}  // namespace detail

/// Generates the dataset under spec.out_dir (frames + manifest.txt) and
/// returns the manifest path. Deterministic per seed, down to the bytes.
inline std::string generate_synth_dataset(const SynthSpec& spec) {
    if (spec.clips < 1 || spec.frames < 2 || spec.height < 32 || spec.width < 32)
        throw ConfigError("synth: need clips >= 1, frames >= 2 and size >= 32x32");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(spec.out_dir, ec);
    if (ec) throw IoError("synth: cannot create output directory " + spec.out_dir);

    const float margin = 17.0f;
    const float xmax = static_cast<float>(spec.width - 1) - margin;
    const float ymax = static_cast<float>(spec.height - 1) - margin;
    const float orbit_radius = 6.0f;

    std::string manifest_path = (fs::path(spec.out_dir) / "manifest.txt").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("synth: cannot write manifest " + manifest_path);
    manifest << "# synthetic motion dataset: clip_id,label,frame_dir\n";

    for (int c = 0; c < spec.clips; ++c) {
        const int label = c % 2;
        Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(c)));
        char clip_name[32];
        std::snprintf(clip_name, sizeof(clip_name), "clip_%04d", c);
        const fs::path clip_dir = fs::path(spec.out_dir) / clip_name;
        fs::create_directories(clip_dir, ec);
        if (ec) throw IoError("synth: cannot create clip directory " + clip_dir.string());

        // a fixed mid-gray background keeps the conv activations (and with
        // them the gradients) at a healthy scale
        const float base = 0.40f;
        detail::Vec2 a{rng.uniform(margin, xmax), rng.uniform(margin, ymax)};
        detail::Vec2 b{rng.uniform(margin, xmax), rng.uniform(margin, ymax)};

        detail::Vec2 va, vb;
        float fight_speed = 0.0f;

        // fight pairs spiral symmetrically into a shared center: their
        // midpoint never moves, every frame each blob travels fight_speed
        // pixels, and the separation settles at 2*orbit_radius
        detail::Vec2 spiral_center;
        float spiral_angle = 0.0f;
        float spiral_sep = 0.0f;

        if (label == 1) {
            const float min_d = 0.45f * static_cast<float>(std::min(spec.width, spec.height));
            int guard = 0;
            while (detail::dist(a, b) < min_d && ++guard < 256) {
                b.x = rng.uniform(margin, xmax);
                b.y = rng.uniform(margin, ymax);
            }
            fight_speed = rng.uniform(kFightSpeedLo, kFightSpeedHi);
            spiral_center = {(a.x + b.x) * 0.5f, (a.y + b.y) * 0.5f};
            spiral_angle = std::atan2(a.y - spiral_center.y, a.x - spiral_center.x);
            spiral_sep = detail::dist(a, b);
        } else {
            // independent slow drifts, spawned and kept well apart so the
            // brightness peaks never blend
            int guard = 0;
            while (detail::dist(a, b) < 20.0f && ++guard < 256) {
                b.x = rng.uniform(margin, xmax);
                b.y = rng.uniform(margin, ymax);
            }
            const float sa = rng.uniform(kCalmSpeedLo, kCalmSpeedHi);
            const float sb = rng.uniform(kCalmSpeedLo, kCalmSpeedHi);
            const float ta = rng.uniform(0.0f, 6.2831853f);
            const float tb = rng.uniform(0.0f, 6.2831853f);
            va = {sa * std::cos(ta), sa * std::sin(ta)};
            vb = {sb * std::cos(tb), sb * std::sin(tb)};
        }

        for (int t = 0; t < spec.frames; ++t) {
            Tensor frame = detail::render_frame(spec.height, spec.width, base, a, b);
            char frame_name[32];
            std::snprintf(frame_name, sizeof(frame_name), "frame_%03d.ppm", t);
            encode_ppm(frame, (clip_dir / frame_name).string());

            if (label == 1) {
                // split the speed between closing in and circling so the
                // per-frame travel distance stays at fight_speed
                const float v_rad = std::min(fight_speed, std::max(0.0f, (spiral_sep - 2.0f * orbit_radius) * 0.5f));
                const float v_tan = std::sqrt(std::max(0.0f, fight_speed * fight_speed - v_rad * v_rad));
                spiral_sep -= 2.0f * v_rad;
                const float new_radius = spiral_sep * 0.5f;
                spiral_angle += v_tan / std::max(new_radius, orbit_radius * 0.5f);
                a = {spiral_center.x + new_radius * std::cos(spiral_angle),
                     spiral_center.y + new_radius * std::sin(spiral_angle)};
                b = {spiral_center.x - new_radius * std::cos(spiral_angle),
                     spiral_center.y - new_radius * std::sin(spiral_angle)};
            } else {
                auto advance = [&](detail::Vec2& p, detail::Vec2& v) {
                    p.x += v.x;
                    p.y += v.y;
                    if (p.x < margin) { p.x = 2.0f * margin - p.x; v.x = -v.x; }
                    if (p.x > xmax) { p.x = 2.0f * xmax - p.x; v.x = -v.x; }
                    if (p.y < margin) { p.y = 2.0f * margin - p.y; v.y = -v.y; }
                    if (p.y > ymax) { p.y = 2.0f * ymax - p.y; v.y = -v.y; }
                };
                advance(a, va);
                advance(b, vb);
                // elastic swap keeps the drifters from blending their peaks
                if (detail::dist(a, b) < 16.0f) std::swap(va, vb);
            }
        }
        manifest << clip_name << "," << label << "," << clip_name << "\n";
    }
    manifest.flush();
    if (!manifest) throw IoError("synth: failed writing manifest " + manifest_path);
    return manifest_path;
}

/// Argmax pixel of a frame, used by the trajectory tests.
inline std::pair<int, int> brightest_pixel(const Tensor& frame) {
    const int h = frame.dim(0), w = frame.dim(1), c = frame.dim(2);
    float best = -1.0f;
    int by = 0, bx = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float v = frame[(static_cast<std::size_t>(y) * w + x) * c];
            if (v > best) {
                best = v;
                by = y;
                bx = x;
            }
        }
    return {by, bx};
}

/// Subpixel center of the brightest blob: background-subtracted intensity
/// centroid of the 13x13 patch around the argmax (the peak itself is flat
/// at byte resolution, so the raw argmax jitters).
inline std::pair<double, double> brightest_center(const Tensor& frame) {
    const auto [by, bx] = brightest_pixel(frame);
    const int h = frame.dim(0), w = frame.dim(1), c = frame.dim(2);
    constexpr int kR = 6;
    double floor_v = 1.0;
    for (int dy = -kR; dy <= kR; ++dy)
        for (int dx = -kR; dx <= kR; ++dx) {
            const int y = std::clamp(by + dy, 0, h - 1);
            const int x = std::clamp(bx + dx, 0, w - 1);
            floor_v = std::min(floor_v, static_cast<double>(frame[(static_cast<std::size_t>(y) * w + x) * c]));
        }
    double sy = 0.0, sx = 0.0, mass = 0.0;
    for (int dy = -kR; dy <= kR; ++dy)
        for (int dx = -kR; dx <= kR; ++dx) {
            const int y = std::clamp(by + dy, 0, h - 1);
            const int x = std::clamp(bx + dx, 0, w - 1);
            const double v = frame[(static_cast<std::size_t>(y) * w + x) * c] - floor_v;
            sy += v * y;
            sx += v * x;
            mass += v;
        }
    return {sy / mass, sx / mass};
}

}  // namespace vidnn

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <thread>
#include <utility>
#include <fstream>
#include <string>
#include <vector>

#include "vidnn/image.hpp"
#include "vidnn/parallel.hpp"
#include "vidnn/rng.hpp"

// Clip ingestion. A dataset is a UTF-8 manifest with one record per line:
//   clip_id,label,frame_dir
// '#' starts a comment line. Frames are the lexicographically sorted *.ppm
// files inside frame_dir; relative frame_dirs resolve against the manifest's
// directory.

namespace vidnn {

struct ClipRecord {
    std::string clip_id;
    int label = 0;
    std::string frame_dir;
    std::vector<std::string> frame_paths;  // sorted
};

struct ClipSample {
    Tensor frames;  // [T,H,W,3], values in [0,1]
    int label = 0;
    std::string clip_id;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace detail

/// Parses a manifest and discovers each clip's frames. Labels are validated
/// against [0, classes).
inline std::vector<ClipRecord> load_manifest(const std::string& path, int classes = 2) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<ClipRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;

        const auto c1 = t.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : t.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw DataError("manifest parse error at line " + std::to_string(lineno) +
                            ": expected 'clip_id,label,frame_dir'");
        ClipRecord rec;
        rec.clip_id = detail::trim(t.substr(0, c1));
        const std::string label_text = detail::trim(t.substr(c1 + 1, c2 - c1 - 1));
        rec.frame_dir = detail::trim(t.substr(c2 + 1));
        if (rec.clip_id.empty() || rec.frame_dir.empty())
            throw DataError("manifest parse error at line " + std::to_string(lineno) + ": empty field");
        try {
            std::size_t used = 0;
            rec.label = std::stoi(label_text, &used);
            if (used != label_text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError("manifest parse error at line " + std::to_string(lineno) + ": label '" + label_text +
                            "' is not an integer");
        }
        if (rec.label < 0 || rec.label >= classes)
            throw DataError("manifest parse error at line " + std::to_string(lineno) + ": label " +
                            std::to_string(rec.label) + " outside [0," + std::to_string(classes) + ")");

        std::filesystem::path dir(rec.frame_dir);
        if (dir.is_relative()) dir = base / dir;
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec))
            throw DataError("clip '" + rec.clip_id + "': frame directory not found: " + dir.string());
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".ppm")
                rec.frame_paths.push_back(entry.path().string());
        }
        std::sort(rec.frame_paths.begin(), rec.frame_paths.end());
        if (rec.frame_paths.empty())
            throw DataError("clip '" + rec.clip_id + "': no .ppm frames in " + dir.string());
        records.push_back(std::move(rec));
    }
    return records;
}

/// k temporally uniform frame indices over an n-frame clip:
/// index_i = floor(i*n/k). Nondecreasing; repeats when n < k.
inline std::vector<int> uniform_sample(int n_frames, int k) {
    if (n_frames < 1 || k < 1) throw DataError("uniform_sample: n_frames and k must be >= 1");
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        idx[static_cast<std::size_t>(i)] = static_cast<int>(static_cast<std::int64_t>(i) * n_frames / k);
    return idx;
}

/// Decodes, resizes and temporally samples one clip into [T,H,W,3].
inline ClipSample load_clip(const ClipRecord& rec, int t_frames, int out_h, int out_w) {
    const std::vector<int> picks = uniform_sample(static_cast<int>(rec.frame_paths.size()), t_frames);
    ClipSample sample;
    sample.label = rec.label;
    sample.clip_id = rec.clip_id;
    sample.frames = Tensor(Shape{t_frames, out_h, out_w, 3});
    const std::size_t frame_n = static_cast<std::size_t>(out_h) * out_w * 3;
    for (int t = 0; t < t_frames; ++t) {
        Tensor img = decode_ppm(rec.frame_paths[static_cast<std::size_t>(picks[static_cast<std::size_t>(t)])]);
        Tensor resized = resize_bilinear(img, out_h, out_w);
        std::copy(resized.begin(), resized.end(),
                  sample.frames.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * frame_n));
    }
    return sample;
}

/// Loads every record; decoding may run on `workers` threads, output order
/// is manifest order either way.
inline std::vector<ClipSample> load_dataset(const std::vector<ClipRecord>& records, int t_frames, int out_h,
                                            int out_w, int workers = 1) {
    std::vector<ClipSample> samples(records.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < records.size(); ++i) samples[i] = load_clip(records[i], t_frames, out_h, out_w);
        return samples;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int wkr = 0; wkr < workers; ++wkr)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= records.size()) return;
                samples[i] = load_clip(records[i], t_frames, out_h, out_w);
            }
        });
    for (auto& th : pool) th.join();
    return samples;
}

/// Seeded shuffle then split at floor(fraction*n): (train, eval), disjoint
/// and exhaustive, deterministic per seed. `stratified` splits per class
/// before merging.
inline std::pair<std::vector<ClipRecord>, std::vector<ClipRecord>> split_dataset(const std::vector<ClipRecord>& records,
                                                                                 double fraction, std::uint64_t seed,
                                                                                 bool stratified = false) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("split fraction must be inside (0,1), got " + std::to_string(fraction));
    if (records.size() < 2) throw DataError("split_dataset: need at least 2 records");

    auto split_one = [&](std::vector<ClipRecord> group, Rng& rng) {
        rng.shuffle(group);
        const std::size_t cut = static_cast<std::size_t>(std::floor(static_cast<double>(group.size()) * fraction));
        std::vector<ClipRecord> train(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(cut));
        std::vector<ClipRecord> eval(group.begin() + static_cast<std::ptrdiff_t>(cut), group.end());
        return std::make_pair(std::move(train), std::move(eval));
    };

    Rng rng(seed);
    if (!stratified) return split_one(records, rng);

    int max_label = 0;
    for (const auto& r : records) max_label = std::max(max_label, r.label);
    std::vector<ClipRecord> train, eval;
    for (int cls = 0; cls <= max_label; ++cls) {
        std::vector<ClipRecord> group;
        for (const auto& r : records)
            if (r.label == cls) group.push_back(r);
        if (group.empty()) continue;
        auto [tr, ev] = split_one(std::move(group), rng);
        train.insert(train.end(), tr.begin(), tr.end());
        eval.insert(eval.end(), ev.begin(), ev.end());
    }
    return {std::move(train), std::move(eval)};
}

struct Batch {
    Tensor clips;  // [B,T,H,W,3]
    std::vector<int> labels;
};

/// Groups samples in order into [B,T,H,W,3] batches; the final partial batch
/// is kept. All samples must share T,H,W.
inline std::vector<Batch> make_batch(const std::vector<ClipSample>& samples, int size) {
    if (size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(size));
        const Shape& ref = samples[start].frames.shape();
        Shape batch_shape{static_cast<int>(end - start)};
        batch_shape.insert(batch_shape.end(), ref.begin(), ref.end());
        Batch b{Tensor(batch_shape), {}};
        const std::size_t clip_n = samples[start].frames.size();
        for (std::size_t i = start; i < end; ++i) {
            if (samples[i].frames.shape() != ref)
                throw DataError("make_batch: clip '" + samples[i].clip_id + "' has shape " +
                                shape_str(samples[i].frames.shape()) + ", expected " + shape_str(ref));
            std::copy(samples[i].frames.begin(), samples[i].frames.end(),
                      b.clips.begin() + static_cast<std::ptrdiff_t>((i - start) * clip_n));
            b.labels.push_back(samples[i].label);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace vidnn

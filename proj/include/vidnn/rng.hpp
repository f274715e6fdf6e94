#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vidnn {

// Seeded random source for init, shuffling and synthetic data. All draws go
// through explicit helpers so a fixed seed reproduces streams bit-exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    float uniform(float lo, float hi) {
        return std::uniform_real_distribution<float>(lo, hi)(engine_);
    }

    double uniform_double(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    float normal(float mean, float stddev) {
        return std::normal_distribution<float>(mean, stddev)(engine_);
    }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    std::uint64_t raw() { return engine_(); }

    /// Fisher-Yates shuffle, order pinned by this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derives an independent stream, e.g. one per clip. Splitmix-style mix.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace vidnn

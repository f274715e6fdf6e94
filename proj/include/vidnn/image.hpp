#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vidnn/tensor.hpp"

// Binary PPM (P6, maxval 255) decoding/encoding and align-corners bilinear
// resize. Frames decode to [H,W,3] with values in [0,1] (pixel / 255).

namespace vidnn {

namespace detail {

// PPM header fields are separated by whitespace; '#' starts a comment that
// runs to end of line.
inline int ppm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw DataError("ppm decode: malformed header in " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace detail

/// Decodes a binary PPM file into [H,W,3], pixel -> pixel/255.
inline Tensor decode_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image file: " + path);
    char magic[2] = {0, 0};
    f.read(magic, 2);
    if (!f || magic[0] != 'P' || magic[1] != '6')
        throw DataError("ppm decode: not a binary PPM (P6) file: " + path);
    const int w = detail::ppm_int(f, path);
    const int h = detail::ppm_int(f, path);
    const int maxval = detail::ppm_int(f, path);
    if (w < 1 || h < 1) throw DataError("ppm decode: bad dimensions in " + path);
    if (maxval != 255) throw DataError("ppm decode: only maxval 255 supported, got " + std::to_string(maxval) +
                                       " in " + path);
    // the single whitespace after maxval was already consumed by ppm_int

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(f.gcount()) != raw.size())
        throw DataError("ppm decode: truncated pixel data in " + path);

    Tensor img(Shape{h, w, 3});
    constexpr float inv = 1.0f / 255.0f;
    for (std::size_t i = 0; i < raw.size(); ++i) img[i] = static_cast<float>(raw[i]) * inv;
    return img;
}

/// Writes [H,W,3] values in [0,1] as binary PPM, rounding to the nearest of
/// 256 levels.
inline void encode_ppm(const Tensor& img, const std::string& path) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw DimensionError("encode_ppm: expected [H,W,3], got " + shape_str(img.shape()));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open image file for writing: " + path);
    f << "P6\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        float v = img[i];
        if (v < 0.0f) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("failed writing image: " + path);
}

/// Align-corners bilinear resize: src = dst*(in-1)/(out-1), src = 0 when the
/// output extent is 1. Channels are interpolated independently. Identical
/// source and target sizes return a bit-exact copy.
inline Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    if (img.rank() != 3) throw DimensionError("resize_bilinear: expected [H,W,C], got " + shape_str(img.shape()));
    if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output extents must be positive");
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (out_h == h && out_w == w) return img;

    Tensor out(Shape{out_h, out_w, c});
    const float* src = img.data();
    float* dst = out.data();
    const float sy_scale = out_h == 1 ? 0.0f : static_cast<float>(h - 1) / static_cast<float>(out_h - 1);
    const float sx_scale = out_w == 1 ? 0.0f : static_cast<float>(w - 1) / static_cast<float>(out_w - 1);

    for (int y = 0; y < out_h; ++y) {
        const float sy = static_cast<float>(y) * sy_scale;
        const int y0 = static_cast<int>(sy);
        const int y1 = y0 + 1 < h ? y0 + 1 : h - 1;
        const float fy = sy - static_cast<float>(y0);
        for (int x = 0; x < out_w; ++x) {
            const float sx = static_cast<float>(x) * sx_scale;
            const int x0 = static_cast<int>(sx);
            const int x1 = x0 + 1 < w ? x0 + 1 : w - 1;
            const float fx = sx - static_cast<float>(x0);
            const float* p00 = src + (static_cast<std::size_t>(y0) * w + x0) * c;
            const float* p01 = src + (static_cast<std::size_t>(y0) * w + x1) * c;
            const float* p10 = src + (static_cast<std::size_t>(y1) * w + x0) * c;
            const float* p11 = src + (static_cast<std::size_t>(y1) * w + x1) * c;
            float* o = dst + (static_cast<std::size_t>(y) * out_w + x) * c;
            for (int ch = 0; ch < c; ++ch) {
                const float top = p00[ch] + (p01[ch] - p00[ch]) * fx;
                const float bot = p10[ch] + (p11[ch] - p10[ch]) * fx;
                o[ch] = top + (bot - top) * fy;
            }
        }
    }
    return out;
}

}  // namespace vidnn

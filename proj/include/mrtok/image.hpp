#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mrtok/errors.hpp"

namespace mrtok {

enum class UpsampleMode { nearest, bilinear };

/// Dense RGB raster. Samples are 32-bit floats in [0,1], row-major and
/// channel-interleaved: data[(y*width + x)*3 + c]. Immutable by convention
/// once constructed; every operation below returns a fresh image.
struct Image {
    static constexpr int channels = 3;

    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * channels, 0.0f) {
        require(h > 0 && w > 0, "Image: dimensions must be positive");
    }
    Image(int h, int w, std::vector<float> samples) : height(h), width(w), data(std::move(samples)) {
        require(h > 0 && w > 0, "Image: dimensions must be positive");
        require(data.size() == static_cast<std::size_t>(h) * w * channels,
                "Image: data length must be height*width*3");
    }

    static Image filled(int h, int w, float value) {
        Image img(h, w);
        std::fill(img.data.begin(), img.data.end(), value);
        return img;
    }

    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
    bool operator==(const Image& o) const = default;
};

namespace detail {

// Resampling kernels are templated on the sample type: Image operations run
// them on float, the scorers run them on double (scores carry tolerance
// contracts that float intermediates cannot meet).

template <typename T>
std::vector<T> downsample_area_raw(const T* src, int h, int w, int c, int factor) {
    const int oh = h / factor, ow = w / factor;
    std::vector<T> out(static_cast<std::size_t>(oh) * ow * c);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    const T* row = src + ((static_cast<std::size_t>(oy) * factor + dy) * w + static_cast<std::size_t>(ox) * factor) * c;
                    for (int dx = 0; dx < factor; ++dx) acc += static_cast<double>(row[dx * c + ch]);
                }
                out[(static_cast<std::size_t>(oy) * ow + ox) * c + ch] = static_cast<T>(acc * inv);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> upsample_nearest_raw(const T* src, int h, int w, int c, int factor) {
    const int oh = h * factor, ow = w * factor;
    std::vector<T> out(static_cast<std::size_t>(oh) * ow * c);
    for (int oy = 0; oy < oh; ++oy) {
        const int sy = oy / factor;
        for (int ox = 0; ox < ow; ++ox) {
            const int sx = ox / factor;
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<std::size_t>(oy) * ow + ox) * c + ch] =
                    src[(static_cast<std::size_t>(sy) * w + sx) * c + ch];
        }
    }
    return out;
}

// Bilinear with the align-corners-false convention: output index o maps to
// source coordinate (o + 0.5) * (in/out) - 0.5, clamped to the valid range.
template <typename T>
std::vector<T> resize_bilinear_raw(const T* src, int h, int w, int c, int oh, int ow) {
    std::vector<T> out(static_cast<std::size_t>(oh) * ow * c);
    const double sy_scale = static_cast<double>(h) / oh;
    const double sx_scale = static_cast<double>(w) / ow;
    std::vector<int> x0(ow), x1(ow);
    std::vector<double> tx(ow);
    for (int ox = 0; ox < ow; ++ox) {
        double sx = (ox + 0.5) * sx_scale - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        x0[ox] = static_cast<int>(std::floor(sx));
        x1[ox] = std::min(x0[ox] + 1, w - 1);
        tx[ox] = sx - x0[ox];
    }
    for (int oy = 0; oy < oh; ++oy) {
        double sy = (oy + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, h - 1);
        const double ty = sy - y0;
        for (int ox = 0; ox < ow; ++ox) {
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = src[(static_cast<std::size_t>(y0) * w + x0[ox]) * c + ch];
                const double v01 = src[(static_cast<std::size_t>(y0) * w + x1[ox]) * c + ch];
                const double v10 = src[(static_cast<std::size_t>(y1) * w + x0[ox]) * c + ch];
                const double v11 = src[(static_cast<std::size_t>(y1) * w + x1[ox]) * c + ch];
                const double top = v00 + (v01 - v00) * tx[ox];
                const double bot = v10 + (v11 - v10) * tx[ox];
                out[(static_cast<std::size_t>(oy) * ow + ox) * c + ch] = static_cast<T>(top + (bot - top) * ty);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> upsample_raw(const T* src, int h, int w, int c, int factor, UpsampleMode mode) {
    if (mode == UpsampleMode::nearest) return upsample_nearest_raw(src, h, w, c, factor);
    return resize_bilinear_raw(src, h, w, c, h * factor, w * factor);
}

template <typename T>
std::vector<T> blur_raw(const T* src, int h, int w, int c, int factor, UpsampleMode mode) {
    std::vector<T> down = downsample_area_raw(src, h, w, c, factor);
    return upsample_raw(down.data(), h / factor, w / factor, c, factor, mode);
}

template <typename A, typename B>
double mse_raw(const A* a, const B* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

}  // namespace detail

/// Per-channel mean over factor x factor blocks. factor must divide both dims.
inline Image downsample_area(const Image& img, int factor) {
    require(factor >= 1, "downsample_area: factor must be positive");
    require(img.height % factor == 0 && img.width % factor == 0,
            "downsample_area: factor " + std::to_string(factor) + " must divide image dims " +
                std::to_string(img.height) + "x" + std::to_string(img.width));
    return Image(img.height / factor, img.width / factor,
                 detail::downsample_area_raw(img.data.data(), img.height, img.width, Image::channels, factor));
}

inline Image upsample(const Image& img, int factor, UpsampleMode mode) {
    require(factor >= 1, "upsample: factor must be >= 1");
    if (factor == 1) return img;
    return Image(img.height * factor, img.width * factor,
                 detail::upsample_raw(img.data.data(), img.height, img.width, Image::channels, factor, mode));
}

/// Downsample by `factor`, then upsample back to the original size.
inline Image blur(const Image& img, int factor, UpsampleMode mode = UpsampleMode::bilinear) {
    Image down = downsample_area(img, factor);
    return upsample(down, factor, mode);
}

/// Mean squared difference over all samples, accumulated in double.
inline double mse(const Image& a, const Image& b) {
    require(a.same_shape(b), "mse: shape mismatch");
    return detail::mse_raw(a.data.data(), b.data.data(), a.data.size());
}

inline double mse(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "mse: shape mismatch");
    return detail::mse_raw(a.data(), b.data(), a.size());
}

inline double mse(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), "mse: shape mismatch");
    return detail::mse_raw(a.data(), b.data(), a.size());
}

// ---------------------------------------------------------------------------
// Binary PPM (P6), the one interchange format: "P6", whitespace, width,
// height, maxval 255, one whitespace byte, then h*w*3 RGB bytes.

namespace detail {

inline int ppm_next_int(std::istream& in, const char* field) {
    // Skips whitespace and '#' comment lines, then reads one decimal integer.
    int ch = in.peek();
    while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        ch = in.peek();
    }
    int value = 0;
    if (!(in >> value)) throw format_error(std::string("ppm: missing or malformed ") + field);
    if (value <= 0) throw format_error(std::string("ppm: ") + field + " must be positive");
    return value;
}

}  // namespace detail

inline Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("ppm: cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw format_error("ppm: bad magic (want \"P6\") in " + path.string());
    const int width = detail::ppm_next_int(in, "width");
    const int height = detail::ppm_next_int(in, "height");
    const int maxval = detail::ppm_next_int(in, "maxval");
    if (maxval != 255) throw format_error("ppm: maxval must be 255, got " + std::to_string(maxval));
    in.get();  // single whitespace byte after maxval
    const std::size_t n = static_cast<std::size_t>(width) * height * 3;
    std::vector<std::uint8_t> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw format_error("ppm: truncated payload in " + path.string() + " (want " + std::to_string(n) +
                           " bytes, got " + std::to_string(in.gcount()) + ")");
    Image img(height, width);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<float>(bytes[i]) * (1.0f / 255.0f);
    return img;
}

/// Quantization is round-half-up: byte = clamp(floor(sample*255 + 0.5)).
inline void save_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("ppm: cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double q = std::floor(static_cast<double>(img.data[i]) * 255.0 + 0.5);
        bytes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("ppm: write failed for " + path.string());
}

}  // namespace mrtok

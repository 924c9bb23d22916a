#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtok/errors.hpp"
#include "mrtok/image.hpp"
#include "mrtok/quadtree.hpp"
#include "mrtok/rng.hpp"
#include "mrtok/tensor.hpp"

namespace mrtok {

enum class ScorerKind { pixel_blur, feature_based, external_saliency };

struct ScorerConfig {
    ScorerKind kind = ScorerKind::pixel_blur;
    int s_rep = 16;                  // Quadtree representation size
    double scoring_scale = 1.0;      // <1 scores on a downsampled image
    UpsampleMode upsample_mode = UpsampleMode::bilinear;
};

/// Dense feature tensor, row-major (row, col, channel). Feature values are
/// kept in double; the file container stores f32.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int depth = 0;
    int downscale_ratio = 1;  // image pixels per feature cell
    std::vector<double> data;

    double at(int y, int x, int d) const {
        return data[(static_cast<std::size_t>(y) * width + x) * depth + d];
    }
};

/// Per-pixel (or per-cell at an integer downscale) nonnegative weights.
struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;
};

inline SaliencyMap saliency_from_tensor(const TensorF& t) {
    require(t.dims.size() == 2, "saliency map tensor must have rank 2 (H, W)");
    SaliencyMap m;
    m.height = static_cast<int>(t.dims[0]);
    m.width = static_cast<int>(t.dims[1]);
    m.data.assign(t.data.begin(), t.data.end());
    for (double v : m.data) require(std::isfinite(v) && v >= 0.0, "saliency map values must be finite and >= 0");
    return m;
}

inline FeatureMap feature_map_from_tensor(const TensorF& t, int downscale_ratio) {
    require(t.dims.size() == 3, "feature map tensor must have rank 3 (H, W, d)");
    FeatureMap fm;
    fm.height = static_cast<int>(t.dims[0]);
    fm.width = static_cast<int>(t.dims[1]);
    fm.depth = static_cast<int>(t.dims[2]);
    fm.downscale_ratio = downscale_ratio;
    fm.data.assign(t.data.begin(), t.data.end());
    return fm;
}

// ---------------------------------------------------------------------------
// Feature extractor: a plain conv stack described by explicit layer shapes.
// Output spatial dims follow floor((in + 2*pad - kernel)/stride) + 1 per axis,
// with zero padding; the stride product must equal the declared ratio.

enum class Activation { none, relu };

struct ConvLayer {
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    int in_channels = 3;
    int out_channels = 3;
    Activation activation = Activation::none;
    std::vector<float> weight;  // (out, in, ky, kx) row-major
    std::vector<float> bias;    // (out)
};

struct FeatureExtractor {
    std::vector<ConvLayer> layers;
    int downscale_ratio = 1;

    int out_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }

    void validate() const {
        require(!layers.empty(), "extractor: no layers");
        int stride_product = 1;
        int ch = 3;
        for (const auto& l : layers) {
            require(l.kernel >= 1 && l.stride >= 1 && l.padding >= 0, "extractor: bad layer geometry");
            require(l.in_channels == ch, "extractor: channel mismatch between layers");
            require(l.weight.size() == static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel,
                    "extractor: weight shape does not match descriptor");
            require(l.bias.size() == static_cast<std::size_t>(l.out_channels),
                    "extractor: bias shape does not match descriptor");
            ch = l.out_channels;
            stride_product *= l.stride;
        }
        require(stride_product == downscale_ratio,
                "extractor: declared downscale_ratio " + std::to_string(downscale_ratio) +
                    " does not equal stride product " + std::to_string(stride_product));
    }
};

/// 1x1 identity convolution: feat(im) == im. Makes the feature scorer
/// collapse onto the pixel-blur scorer, which the tests exploit.
inline FeatureExtractor identity_extractor() {
    FeatureExtractor fx;
    ConvLayer l;
    l.kernel = 1;
    l.stride = 1;
    l.padding = 0;
    l.in_channels = 3;
    l.out_channels = 3;
    l.activation = Activation::none;
    l.weight.assign(9, 0.0f);
    for (int i = 0; i < 3; ++i) l.weight[static_cast<std::size_t>(i) * 3 + i] = 1.0f;
    l.bias.assign(3, 0.0f);
    fx.layers.push_back(std::move(l));
    fx.downscale_ratio = 1;
    return fx;
}

/// The stock desk-scale extractor: five stride-2 3x3 convs, 32 output
/// channels, x32 downscale. Weights are seeded pseudo-random.
inline FeatureExtractor default_extractor(std::uint32_t seed) {
    FeatureExtractor fx;
    fx.downscale_ratio = 32;
    DetRng rng(seed);
    const int chans[6] = {3, 16, 32, 32, 32, 32};
    for (int i = 0; i < 5; ++i) {
        ConvLayer l;
        l.kernel = 3;
        l.stride = 2;
        l.padding = 1;
        l.in_channels = chans[i];
        l.out_channels = chans[i + 1];
        l.activation = Activation::relu;
        const double bound = std::sqrt(2.0 / (static_cast<double>(l.in_channels) * l.kernel * l.kernel));
        l.weight.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel);
        for (auto& w : l.weight) w = static_cast<float>(rng.uniform(-bound, bound));
        l.bias.assign(static_cast<std::size_t>(l.out_channels), 0.0f);
        fx.layers.push_back(std::move(l));
    }
    fx.validate();
    return fx;
}

namespace detail {

inline void conv_forward_f64(const std::vector<double>& in, int h, int w, const ConvLayer& l, std::vector<double>& out,
                             int& oh, int& ow) {
    oh = (h + 2 * l.padding - l.kernel) / l.stride + 1;
    ow = (w + 2 * l.padding - l.kernel) / l.stride + 1;
    require(oh > 0 && ow > 0, "extractor: layer output dims collapsed to zero");
    out.assign(static_cast<std::size_t>(oh) * ow * l.out_channels, 0.0);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < l.out_channels; ++oc) {
                double acc = static_cast<double>(l.bias[static_cast<std::size_t>(oc)]);
                const float* wbase =
                    l.weight.data() + static_cast<std::size_t>(oc) * l.in_channels * l.kernel * l.kernel;
                for (int ic = 0; ic < l.in_channels; ++ic) {
                    for (int ky = 0; ky < l.kernel; ++ky) {
                        const int iy = oy * l.stride - l.padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < l.kernel; ++kx) {
                            const int ix = ox * l.stride - l.padding + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += static_cast<double>(wbase[(static_cast<std::size_t>(ic) * l.kernel + ky) * l.kernel + kx]) *
                                   in[(static_cast<std::size_t>(iy) * w + ix) * l.in_channels + ic];
                        }
                    }
                }
                if (l.activation == Activation::relu && acc < 0.0) acc = 0.0;
                out[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels + oc] = acc;
            }
        }
    }
}

inline FeatureMap extract_features_f64(const std::vector<double>& raster, int h, int w, const FeatureExtractor& fx) {
    fx.validate();
    require(h % fx.downscale_ratio == 0 && w % fx.downscale_ratio == 0,
            "extract_features: image dims must be divisible by downscale_ratio");
    std::vector<double> cur = raster;
    int ch = h, cw = w;
    std::vector<double> next;
    for (const auto& l : fx.layers) {
        int oh = 0, ow = 0;
        conv_forward_f64(cur, ch, cw, l, next, oh, ow);
        cur.swap(next);
        ch = oh;
        cw = ow;
    }
    require(ch == h / fx.downscale_ratio && cw == w / fx.downscale_ratio,
            "extract_features: layer geometry does not realize the declared downscale_ratio");
    FeatureMap fm;
    fm.height = ch;
    fm.width = cw;
    fm.depth = fx.out_channels();
    fm.downscale_ratio = fx.downscale_ratio;
    fm.data = std::move(cur);
    return fm;
}

inline std::vector<double> image_to_f64(const Image& img) {
    return std::vector<double>(img.data.begin(), img.data.end());
}

/// Mean of a single-channel grid over the (possibly fractional) cell-space
/// rectangle [cy0,cy1) x [cx0,cx1), weighting boundary cells by overlap area.
inline double area_weighted_mean(const std::vector<double>& grid, int gh, int gw, double cy0, double cx0, double cy1,
                                 double cx1) {
    require(cy1 > cy0 && cx1 > cx0, "area_weighted_mean: empty footprint");
    require(cy0 >= 0.0 && cx0 >= 0.0 && cy1 <= gh + 1e-9 && cx1 <= gw + 1e-9,
            "area_weighted_mean: footprint outside grid");
    const int y_begin = static_cast<int>(std::floor(cy0));
    const int y_end = std::min(gh, static_cast<int>(std::ceil(cy1)));
    const int x_begin = static_cast<int>(std::floor(cx0));
    const int x_end = std::min(gw, static_cast<int>(std::ceil(cx1)));
    double total = 0.0, weight = 0.0;
    for (int cy = y_begin; cy < y_end; ++cy) {
        const double hy = std::min<double>(cy + 1, cy1) - std::max<double>(cy, cy0);
        if (hy <= 0.0) continue;
        for (int cx = x_begin; cx < x_end; ++cx) {
            const double wx = std::min<double>(cx + 1, cx1) - std::max<double>(cx, cx0);
            if (wx <= 0.0) continue;
            total += grid[static_cast<std::size_t>(cy) * gw + cx] * hy * wx;
            weight += hy * wx;
        }
    }
    return total / weight;
}

inline std::vector<double> patch_f64(const Image& img, const PatchRect& p) {
    require(p.x >= 0 && p.y >= 0 && p.x + p.size <= img.width && p.y + p.size <= img.height,
            "patch outside image bounds");
    std::vector<double> out(static_cast<std::size_t>(p.size) * p.size * Image::channels);
    std::size_t k = 0;
    for (int y = p.y; y < p.y + p.size; ++y)
        for (int x = p.x; x < p.x + p.size; ++x)
            for (int c = 0; c < Image::channels; ++c) out[k++] = static_cast<double>(img.at(y, x, c));
    return out;
}

}  // namespace detail

inline FeatureMap extract_features(const Image& img, const FeatureExtractor& fx) {
    return detail::extract_features_f64(detail::image_to_f64(img), img.height, img.width, fx);
}

/// Contiguous copy of the feature region under a patch. The patch must align
/// to feature cells.
inline FeatureMap roi_slice(const FeatureMap& fm, const PatchRect& p) {
    const int r = fm.downscale_ratio;
    require(p.x % r == 0 && p.y % r == 0 && p.size % r == 0,
            "roi_slice: patch (" + std::to_string(p.x) + "," + std::to_string(p.y) + "," + std::to_string(p.size) +
                ") does not align to feature cells of " + std::to_string(r) + " px");
    const int cy = p.y / r, cx = p.x / r, cs = p.size / r;
    require(cx + cs <= fm.width && cy + cs <= fm.height, "roi_slice: patch outside feature map");
    FeatureMap out;
    out.height = cs;
    out.width = cs;
    out.depth = fm.depth;
    out.downscale_ratio = r;
    out.data.reserve(static_cast<std::size_t>(cs) * cs * fm.depth);
    for (int y = cy; y < cy + cs; ++y) {
        const double* row = fm.data.data() + (static_cast<std::size_t>(y) * fm.width + cx) * fm.depth;
        out.data.insert(out.data.end(), row, row + static_cast<std::size_t>(cs) * fm.depth);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scorers. All scoring math runs in double regardless of the image's float
// storage; scores feed an argmax, but their oracle tests pin tight tolerances.

/// MSE between each patch and its blurred self, both taken in isolation:
/// the patch is area-downsampled to s_rep x s_rep and upsampled back.
inline PatchScores score_pixel_blur(const Image& img, std::span<const PatchRect> candidates,
                                    const ScorerConfig& cfg) {
    PatchScores scores;
    for (const auto& p : candidates) {
        require(p.size >= cfg.s_rep, "score_pixel_blur: candidate smaller than s_rep");
        require(p.size % cfg.s_rep == 0, "score_pixel_blur: candidate size not divisible by s_rep");
        const int factor = p.size / cfg.s_rep;
        const std::vector<double> patch = detail::patch_f64(img, p);
        if (factor == 1) {
            scores.set(p, 0.0);
            continue;
        }
        const std::vector<double> blurred =
            detail::blur_raw(patch.data(), p.size, p.size, Image::channels, factor, cfg.upsample_mode);
        scores.set(p, detail::mse_raw(patch.data(), blurred.data(), patch.size()));
    }
    return scores;
}

struct FeatureScoreDiag {
    int forward_passes = 0;
    std::vector<int> distinct_sizes;
};

/// MSE between a patch's feature region computed on the original image and on
/// an image blurred by size/s_rep. One extractor pass on the original plus one
/// per distinct candidate size. With scoring_scale < 1 everything runs on a
/// bilinear-downsampled image and the per-cell difference grid is upsampled
/// back to the full-resolution cell grid before pooling.
inline PatchScores score_feature_based(const Image& img, std::span<const PatchRect> candidates,
                                       const FeatureExtractor& fx, const ScorerConfig& cfg,
                                       FeatureScoreDiag* diag = nullptr) {
    fx.validate();
    require(cfg.scoring_scale > 0.0 && cfg.scoring_scale <= 1.0, "score_feature_based: scoring_scale must be in (0,1]");
    std::vector<int> sizes;
    for (const auto& p : candidates) {
        require(p.size >= cfg.s_rep, "score_feature_based: candidate smaller than s_rep");
        require(p.size % cfg.s_rep == 0, "score_feature_based: candidate size not divisible by s_rep");
        if (std::find(sizes.begin(), sizes.end(), p.size) == sizes.end()) sizes.push_back(p.size);
    }
    std::sort(sizes.begin(), sizes.end(), std::greater<>());

    const bool scaled = cfg.scoring_scale < 1.0;
    const int ratio = fx.downscale_ratio;
    std::vector<double> work = detail::image_to_f64(img);
    int wh = img.height, ww = img.width;
    if (scaled) {
        const int sh = static_cast<int>(std::llround(img.height * cfg.scoring_scale));
        const int sw = static_cast<int>(std::llround(img.width * cfg.scoring_scale));
        require(sh > 0 && sw > 0, "score_feature_based: scoring_scale collapses the image");
        work = detail::resize_bilinear_raw(work.data(), img.height, img.width, Image::channels, sh, sw);
        wh = sh;
        ww = sw;
        require(img.height % ratio == 0 && img.width % ratio == 0,
                "score_feature_based: image dims must be divisible by downscale_ratio");
    }
    const FeatureMap f_orig = detail::extract_features_f64(work, wh, ww, fx);
    int passes = 1;

    PatchScores scores;
    for (const int size : sizes) {
        const int factor = size / cfg.s_rep;
        FeatureMap f_blur;
        if (factor == 1) {
            f_blur = f_orig;
        } else {
            require(wh % factor == 0 && ww % factor == 0,
                    "score_feature_based: blur factor " + std::to_string(factor) + " must divide scoring dims " +
                        std::to_string(wh) + "x" + std::to_string(ww));
            const std::vector<double> blurred =
                detail::blur_raw(work.data(), wh, ww, Image::channels, factor, cfg.upsample_mode);
            f_blur = detail::extract_features_f64(blurred, wh, ww, fx);
            ++passes;
        }

        if (!scaled) {
            // Full-scale path: aligned patches slice both maps directly.
            std::vector<double> diff_grid;
            for (const auto& p : candidates) {
                if (p.size != size) continue;
                if (p.x % ratio == 0 && p.y % ratio == 0 && p.size % ratio == 0) {
                    const FeatureMap a = roi_slice(f_blur, p);
                    const FeatureMap b = roi_slice(f_orig, p);
                    scores.set(p, detail::mse_raw(a.data.data(), b.data.data(), a.data.size()));
                } else {
                    if (diff_grid.empty()) {
                        diff_grid.assign(static_cast<std::size_t>(f_orig.height) * f_orig.width, 0.0);
                        for (int y = 0; y < f_orig.height; ++y)
                            for (int x = 0; x < f_orig.width; ++x) {
                                double acc = 0.0;
                                for (int d = 0; d < f_orig.depth; ++d) {
                                    const double dv = f_blur.at(y, x, d) - f_orig.at(y, x, d);
                                    acc += dv * dv;
                                }
                                diff_grid[static_cast<std::size_t>(y) * f_orig.width + x] = acc / f_orig.depth;
                            }
                    }
                    scores.set(p, detail::area_weighted_mean(
                                      diff_grid, f_orig.height, f_orig.width, static_cast<double>(p.y) / ratio,
                                      static_cast<double>(p.x) / ratio, static_cast<double>(p.y + p.size) / ratio,
                                      static_cast<double>(p.x + p.size) / ratio));
                }
            }
        } else {
            // Scaled path: dense per-cell squared-difference grid, upsampled
            // back to the full-resolution cell grid, then pooled per patch.
            std::vector<double> diff(static_cast<std::size_t>(f_orig.height) * f_orig.width, 0.0);
            for (int y = 0; y < f_orig.height; ++y)
                for (int x = 0; x < f_orig.width; ++x) {
                    double acc = 0.0;
                    for (int d = 0; d < f_orig.depth; ++d) {
                        const double dv = f_blur.at(y, x, d) - f_orig.at(y, x, d);
                        acc += dv * dv;
                    }
                    diff[static_cast<std::size_t>(y) * f_orig.width + x] = acc / f_orig.depth;
                }
            const int gh = img.height / ratio, gw = img.width / ratio;
            const std::vector<double> up =
                detail::resize_bilinear_raw(diff.data(), f_orig.height, f_orig.width, 1, gh, gw);
            for (const auto& p : candidates) {
                if (p.size != size) continue;
                scores.set(p, detail::area_weighted_mean(up, gh, gw, static_cast<double>(p.y) / ratio,
                                                         static_cast<double>(p.x) / ratio,
                                                         static_cast<double>(p.y + p.size) / ratio,
                                                         static_cast<double>(p.x + p.size) / ratio));
            }
        }
    }
    if (diag) {
        diag->forward_passes = passes;
        diag->distinct_sizes = sizes;
    }
    return scores;
}

/// Average-pools an externally supplied saliency map over each patch
/// footprint. The map covers the image either at full resolution or at one
/// integer downscale on both axes.
inline PatchScores score_from_saliency_map(const SaliencyMap& map, std::span<const PatchRect> candidates, int image_h,
                                           int image_w) {
    require(map.height > 0 && map.width > 0, "saliency map is empty");
    require(image_h % map.height == 0 && image_w % map.width == 0 && image_h / map.height == image_w / map.width,
            "saliency map dims " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                " have no integer ratio to image " + std::to_string(image_h) + "x" + std::to_string(image_w));
    const int r = image_h / map.height;
    for (double v : map.data) require(std::isfinite(v) && v >= 0.0, "saliency map values must be finite and >= 0");
    PatchScores scores;
    for (const auto& p : candidates) {
        scores.set(p, detail::area_weighted_mean(map.data, map.height, map.width, static_cast<double>(p.y) / r,
                                                 static_cast<double>(p.x) / r, static_cast<double>(p.y + p.size) / r,
                                                 static_cast<double>(p.x + p.size) / r));
    }
    return scores;
}

/// Bundles a scorer configuration into the callable build_mosaic consumes.
inline PatchScorer make_scorer(const ScorerConfig& cfg, std::shared_ptr<const FeatureExtractor> fx = nullptr,
                               std::shared_ptr<const SaliencyMap> saliency = nullptr) {
    switch (cfg.kind) {
        case ScorerKind::pixel_blur:
            return [cfg](const Image& img, std::span<const PatchRect> cands) {
                return score_pixel_blur(img, cands, cfg);
            };
        case ScorerKind::feature_based:
            require(fx != nullptr, "make_scorer: feature_based scorer needs a feature extractor");
            return [cfg, fx](const Image& img, std::span<const PatchRect> cands) {
                return score_feature_based(img, cands, *fx, cfg);
            };
        case ScorerKind::external_saliency:
            require(saliency != nullptr, "make_scorer: external_saliency scorer needs a saliency map");
            return [saliency](const Image& img, std::span<const PatchRect> cands) {
                return score_from_saliency_map(*saliency, cands, img.height, img.width);
            };
    }
    throw contract_error("make_scorer: unknown scorer kind");
}

// ---------------------------------------------------------------------------
// Extractor bundle on disk: a JSON descriptor next to one tensor container
// per weight/bias, referenced by relative path.

inline void save_extractor(const FeatureExtractor& fx, const std::filesystem::path& json_path) {
    fx.validate();
    const std::filesystem::path dir = json_path.parent_path();
    const std::string stem = json_path.stem().string();
    nlohmann::ordered_json j;
    j["downscale_ratio"] = fx.downscale_ratio;
    auto& layers = j["layers"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < fx.layers.size(); ++i) {
        const auto& l = fx.layers[i];
        const std::string wfile = stem + "_l" + std::to_string(i) + "_w.mtok";
        const std::string bfile = stem + "_l" + std::to_string(i) + "_b.mtok";
        save_tensor(TensorF({static_cast<std::uint32_t>(l.out_channels), static_cast<std::uint32_t>(l.in_channels),
                             static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)},
                            l.weight),
                    dir / wfile);
        save_tensor(TensorF({static_cast<std::uint32_t>(l.out_channels)}, l.bias), dir / bfile);
        nlohmann::ordered_json lj;
        lj["kernel"] = l.kernel;
        lj["stride"] = l.stride;
        lj["padding"] = l.padding;
        lj["in_channels"] = l.in_channels;
        lj["out_channels"] = l.out_channels;
        lj["activation"] = l.activation == Activation::relu ? "relu" : "none";
        lj["weight"] = wfile;
        lj["bias"] = bfile;
        layers.push_back(std::move(lj));
    }
    std::ofstream out(json_path);
    if (!out) throw format_error("extractor: cannot open " + json_path.string() + " for writing");
    out << j.dump(2) << "\n";
}

inline FeatureExtractor load_extractor(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw format_error("extractor: cannot open " + json_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("extractor json: ") + e.what());
    }
    const std::filesystem::path dir = json_path.parent_path();
    FeatureExtractor fx;
    try {
        fx.downscale_ratio = j.at("downscale_ratio").get<int>();
        for (const auto& lj : j.at("layers")) {
            ConvLayer l;
            l.kernel = lj.at("kernel").get<int>();
            l.stride = lj.at("stride").get<int>();
            l.padding = lj.at("padding").get<int>();
            l.in_channels = lj.at("in_channels").get<int>();
            l.out_channels = lj.at("out_channels").get<int>();
            const std::string act = lj.at("activation").get<std::string>();
            if (act == "relu")
                l.activation = Activation::relu;
            else if (act == "none")
                l.activation = Activation::none;
            else
                throw format_error("extractor json: unknown activation \"" + act + "\"");
            l.weight = load_tensor(dir / lj.at("weight").get<std::string>()).data;
            l.bias = load_tensor(dir / lj.at("bias").get<std::string>()).data;
            fx.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("extractor json: ") + e.what());
    }
    fx.validate();
    return fx;
}

}  // namespace mrtok

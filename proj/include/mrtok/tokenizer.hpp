#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtok/errors.hpp"
#include "mrtok/image.hpp"
#include "mrtok/quadtree.hpp"
#include "mrtok/rng.hpp"
#include "mrtok/tensor.hpp"

namespace mrtok {

struct TokenizerConfig {
    int s_rep = 16;    // fixed representation size every patch is resized to
    int d_model = 64;  // token width; must be divisible by 4
    int s_min = 16;    // unit of the position grid
    double pos_temperature = 10000.0;
};

inline void validate_tokenizer_config(const TokenizerConfig& cfg) {
    require(cfg.s_rep >= 1 && cfg.s_min >= 1, "tokenizer: sizes must be positive");
    require(cfg.d_model > 0 && cfg.d_model % 4 == 0, "tokenizer: d_model must be a positive multiple of 4");
}

/// One patch's worth of model input: the flattened fixed-size representation
/// plus position metadata (center in s_min cells, source size in pixels).
struct Token {
    std::vector<float> rep;  // 3 * s_rep^2, row-major channel-interleaved
    double cx = 0.0;
    double cy = 0.0;
    int size = 0;
    int x = 0;
    int y = 0;
};

struct TokenSequence {
    std::vector<Token> tokens;
    TokenizerConfig config;
    int image_height = 0;
    int image_width = 0;
};

/// Area-downsamples the patch to s_rep x s_rep and flattens it. A patch
/// already at s_rep passes through untouched, bit for bit.
inline std::vector<float> patch_to_representation(const Image& img, const PatchRect& p, int s_rep) {
    require(p.size >= s_rep && p.size % s_rep == 0,
            "patch_to_representation: patch size " + std::to_string(p.size) + " not a multiple of s_rep " +
                std::to_string(s_rep));
    require(p.x >= 0 && p.y >= 0 && p.x + p.size <= img.width && p.y + p.size <= img.height,
            "patch_to_representation: patch outside image");
    std::vector<float> raw(static_cast<std::size_t>(p.size) * p.size * Image::channels);
    std::size_t k = 0;
    for (int y = p.y; y < p.y + p.size; ++y)
        for (int x = p.x; x < p.x + p.size; ++x)
            for (int c = 0; c < Image::channels; ++c) raw[k++] = img.at(y, x, c);
    if (p.size == s_rep) return raw;
    return detail::downsample_area_raw(raw.data(), p.size, p.size, Image::channels, p.size / s_rep);
}

/// Patch center in units of the s_min grid; a 16^2 patch in cell (r,c) sits at
/// (c+0.5, r+0.5), a 64^2 patch at the origin at (2,2) for s_min 16.
inline std::pair<double, double> patch_center(const PatchRect& p, int s_min) {
    return {(p.x + p.size / 2.0) / s_min, (p.y + p.size / 2.0) / s_min};
}

/// 2D sinusoidal embedding: the x and y coordinates are embedded separately
/// with the classic sin/cos frequency family and concatenated [x-half|y-half].
/// Within a half, pair i holds sin(c*w_i), cos(c*w_i) with
/// w_i = temperature^(-4i/d_model).
inline std::vector<double> position_embedding_2d(double cx, double cy, int d_model, double temperature = 10000.0) {
    require(d_model > 0 && d_model % 4 == 0, "position_embedding_2d: d_model must be a positive multiple of 4");
    const int pairs = d_model / 4;
    std::vector<double> out(static_cast<std::size_t>(d_model));
    for (int i = 0; i < pairs; ++i) {
        const double omega = std::pow(temperature, -4.0 * i / d_model);
        out[2 * static_cast<std::size_t>(i)] = std::sin(cx * omega);
        out[2 * static_cast<std::size_t>(i) + 1] = std::cos(cx * omega);
        out[static_cast<std::size_t>(d_model) / 2 + 2 * i] = std::sin(cy * omega);
        out[static_cast<std::size_t>(d_model) / 2 + 2 * i + 1] = std::cos(cy * omega);
    }
    return out;
}

/// Shared fully connected patch embedding.
struct PatchEmbedder {
    int d_model = 0;
    int input_dim = 0;           // 3 * s_rep^2
    std::vector<float> weight;   // (d_model, input_dim) row-major
    std::vector<float> bias;     // (d_model)

    static PatchEmbedder random(int d_model, int s_rep, std::uint32_t seed) {
        PatchEmbedder e;
        e.d_model = d_model;
        e.input_dim = 3 * s_rep * s_rep;
        e.weight.resize(static_cast<std::size_t>(d_model) * e.input_dim);
        e.bias.assign(static_cast<std::size_t>(d_model), 0.0f);
        DetRng rng(seed);
        const double bound = std::sqrt(1.0 / e.input_dim);
        for (auto& w : e.weight) w = static_cast<float>(rng.uniform(-bound, bound));
        return e;
    }

    void validate() const {
        require(d_model > 0 && input_dim > 0, "embedder: empty shape");
        require(weight.size() == static_cast<std::size_t>(d_model) * input_dim && bias.size() == static_cast<std::size_t>(d_model),
                "embedder: weight/bias shapes inconsistent");
    }

    void save(const std::filesystem::path& weight_path, const std::filesystem::path& bias_path) const {
        validate();
        save_tensor(TensorF({static_cast<std::uint32_t>(d_model), static_cast<std::uint32_t>(input_dim)}, weight),
                    weight_path);
        save_tensor(TensorF({static_cast<std::uint32_t>(d_model)}, bias), bias_path);
    }

    static PatchEmbedder load(const std::filesystem::path& weight_path, const std::filesystem::path& bias_path) {
        const TensorF w = load_tensor(weight_path);
        const TensorF b = load_tensor(bias_path);
        require(w.dims.size() == 2 && b.dims.size() == 1 && w.dims[0] == b.dims[0],
                "embedder: container dims must be (d_model, input) and (d_model)");
        PatchEmbedder e;
        e.d_model = static_cast<int>(w.dims[0]);
        e.input_dim = static_cast<int>(w.dims[1]);
        e.weight = w.data;
        e.bias = b.data;
        return e;
    }
};

inline TokenSequence make_token_sequence(const Image& img, const PatchMosaic& mosaic, const TokenizerConfig& cfg) {
    validate_tokenizer_config(cfg);
    require(mosaic.image_height == img.height && mosaic.image_width == img.width,
            "tokenize: mosaic dims do not match image");
    TokenSequence seq;
    seq.config = cfg;
    seq.image_height = img.height;
    seq.image_width = img.width;
    seq.tokens.reserve(mosaic.patches.size());
    for (const auto& p : canonical_order(mosaic)) {
        Token t;
        t.rep = patch_to_representation(img, p, cfg.s_rep);
        const auto [cx, cy] = patch_center(p, cfg.s_min);
        t.cx = cx;
        t.cy = cy;
        t.size = p.size;
        t.x = p.x;
        t.y = p.y;
        seq.tokens.push_back(std::move(t));
    }
    return seq;
}

/// token = W * rep + b + pos(cx, cy). Accumulation runs in double, the output
/// matrix is f32 row-major (L, d_model).
inline TensorF embed_tokens(const TokenSequence& seq, const PatchEmbedder& embedder) {
    embedder.validate();
    const auto& cfg = seq.config;
    require(embedder.d_model == cfg.d_model, "embed_tokens: embedder d_model mismatch");
    require(embedder.input_dim == 3 * cfg.s_rep * cfg.s_rep, "embed_tokens: embedder input_dim mismatch");
    const std::size_t L = seq.tokens.size();
    require(L > 0, "embed_tokens: empty token sequence");
    TensorF out;
    out.dims = {static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(cfg.d_model)};
    out.data.resize(L * static_cast<std::size_t>(cfg.d_model));
    for (std::size_t t = 0; t < L; ++t) {
        const Token& tok = seq.tokens[t];
        require(tok.rep.size() == static_cast<std::size_t>(embedder.input_dim), "embed_tokens: token rep size mismatch");
        const std::vector<double> pos = position_embedding_2d(tok.cx, tok.cy, cfg.d_model, cfg.pos_temperature);
        for (int j = 0; j < cfg.d_model; ++j) {
            const float* wrow = embedder.weight.data() + static_cast<std::size_t>(j) * embedder.input_dim;
            double acc = 0.0;
            for (int k = 0; k < embedder.input_dim; ++k)
                acc += static_cast<double>(wrow[k]) * static_cast<double>(tok.rep[static_cast<std::size_t>(k)]);
            acc += static_cast<double>(embedder.bias[static_cast<std::size_t>(j)]);
            acc += pos[static_cast<std::size_t>(j)];
            out.data[t * static_cast<std::size_t>(cfg.d_model) + static_cast<std::size_t>(j)] = static_cast<float>(acc);
        }
    }
    return out;
}

struct TokenizeResult {
    TensorF matrix;  // (L, d_model)
    TokenSequence sequence;
};

inline TokenizeResult tokenize(const Image& img, const PatchMosaic& mosaic, const PatchEmbedder& embedder,
                               const TokenizerConfig& cfg) {
    TokenizeResult r;
    r.sequence = make_token_sequence(img, mosaic, cfg);
    r.matrix = embed_tokens(r.sequence, embedder);
    return r;
}

/// Rescales token centers from an inference grid onto the grid seen during
/// training: cx' = cx * train_w / infer_w, cy' = cy * train_h / infer_h.
inline TokenSequence scale_positions(TokenSequence seq, std::pair<int, int> train_grid,
                                     std::pair<int, int> infer_grid) {
    require(train_grid.first > 0 && train_grid.second > 0 && infer_grid.first > 0 && infer_grid.second > 0,
            "scale_positions: grids must be positive");
    const double fx = static_cast<double>(train_grid.first) / infer_grid.first;
    const double fy = static_cast<double>(train_grid.second) / infer_grid.second;
    for (auto& t : seq.tokens) {
        t.cx *= fx;
        t.cy *= fy;
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Token sidecar JSON: position metadata matching the token matrix row order.

inline nlohmann::ordered_json token_sidecar_json(const TokenSequence& seq) {
    nlohmann::ordered_json j;
    j["count"] = seq.tokens.size();
    j["d_model"] = seq.config.d_model;
    j["s_rep"] = seq.config.s_rep;
    j["s_min"] = seq.config.s_min;
    j["image_height"] = seq.image_height;
    j["image_width"] = seq.image_width;
    auto& arr = j["tokens"] = nlohmann::ordered_json::array();
    for (const auto& t : seq.tokens) {
        nlohmann::ordered_json tj;
        tj["x"] = t.x;
        tj["y"] = t.y;
        tj["size"] = t.size;
        tj["cx"] = t.cx;
        tj["cy"] = t.cy;
        arr.push_back(std::move(tj));
    }
    return j;
}

inline void save_token_sidecar(const TokenSequence& seq, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw format_error("token sidecar: cannot open " + path.string() + " for writing");
    out << token_sidecar_json(seq).dump(2) << "\n";
}

}  // namespace mrtok

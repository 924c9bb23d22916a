#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtok/errors.hpp"
#include "mrtok/rng.hpp"
#include "mrtok/tensor.hpp"

namespace mrtok {

/// Desk-scale Transformer encoder configuration. Exists to exercise the
/// variable-length token contract, not to chase accuracy.
struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int mlp_ratio = 4;
    int n_classes = 10;
    double layernorm_eps = 1e-6;
};

inline void validate_model_config(const ModelConfig& cfg) {
    require(cfg.d_model > 0 && cfg.n_heads > 0 && cfg.n_layers > 0 && cfg.mlp_ratio > 0 && cfg.n_classes > 0,
            "model config: all sizes must be positive");
    require(cfg.d_model % cfg.n_heads == 0, "model config: n_heads must divide d_model");
    require(cfg.layernorm_eps > 0.0, "model config: layernorm_eps must be positive");
}

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["n_layers"] = cfg.n_layers;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["n_classes"] = cfg.n_classes;
    j["layernorm_eps"] = cfg.layernorm_eps;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.d_model = j.at("d_model").get<int>();
        cfg.n_heads = j.at("n_heads").get<int>();
        cfg.n_layers = j.at("n_layers").get<int>();
        cfg.mlp_ratio = j.value("mlp_ratio", 4);
        cfg.n_classes = j.at("n_classes").get<int>();
        cfg.layernorm_eps = j.value("layernorm_eps", 1e-6);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("model config json: ") + e.what());
    }
    validate_model_config(cfg);
    return cfg;
}

struct LayerWeights {
    Eigen::MatrixXd wq, wk, wv, wo;  // (d_model, d_model); applied as X * W
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::MatrixXd w1, w2;  // (d_model, mlp) and (mlp, d_model)
    Eigen::VectorXd b1, b2;
    Eigen::VectorXd ln1_g, ln1_b, ln2_g, ln2_b;
};

struct ModelWeights {
    Eigen::VectorXd cls;
    std::vector<LayerWeights> layers;
    Eigen::VectorXd ln_f_g, ln_f_b;
    Eigen::MatrixXd head_w;  // (n_classes, d_model)
    Eigen::VectorXd head_b;
};

namespace detail {

// Init values are generated in double, then snapped to f32 so that a save /
// load cycle through the f32 container is lossless.
inline Eigen::MatrixXd rand_matrix(DetRng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = static_cast<double>(static_cast<float>(rng.uniform(-bound, bound)));
    return m;
}

inline Eigen::VectorXd rand_vector(DetRng& rng, Eigen::Index n, double bound) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = static_cast<double>(static_cast<float>(rng.uniform(-bound, bound)));
    return v;
}

inline Eigen::RowVectorXd layer_norm_row(const Eigen::RowVectorXd& x, const Eigen::VectorXd& g,
                                         const Eigen::VectorXd& b, double eps) {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    return (((x.array() - mean) * inv) * g.transpose().array() + b.transpose().array()).matrix();
}

inline Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                                  double eps) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = layer_norm_row(x.row(r), g, b, eps);
    return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace detail

/// Seeded pseudo-random weights; the generator is std::mt19937 with a fixed
/// integer-to-float mapping, so a seed yields identical weights everywhere.
inline ModelWeights init_weights(const ModelConfig& cfg, std::uint32_t seed) {
    validate_model_config(cfg);
    DetRng rng(seed);
    const int d = cfg.d_model;
    const int m = cfg.d_model * cfg.mlp_ratio;
    const double attn_bound = std::sqrt(1.0 / d);
    const double mlp_bound = std::sqrt(1.0 / d);
    const double mlp2_bound = std::sqrt(1.0 / m);
    ModelWeights w;
    w.cls = detail::rand_vector(rng, d, 0.02);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.wq = detail::rand_matrix(rng, d, d, attn_bound);
        lw.wk = detail::rand_matrix(rng, d, d, attn_bound);
        lw.wv = detail::rand_matrix(rng, d, d, attn_bound);
        lw.wo = detail::rand_matrix(rng, d, d, attn_bound);
        lw.bq = detail::rand_vector(rng, d, attn_bound);
        lw.bk = detail::rand_vector(rng, d, attn_bound);
        lw.bv = detail::rand_vector(rng, d, attn_bound);
        lw.bo = detail::rand_vector(rng, d, attn_bound);
        lw.w1 = detail::rand_matrix(rng, d, m, mlp_bound);
        lw.w2 = detail::rand_matrix(rng, m, d, mlp2_bound);
        lw.b1 = detail::rand_vector(rng, m, mlp_bound);
        lw.b2 = detail::rand_vector(rng, d, mlp2_bound);
        lw.ln1_g = Eigen::VectorXd::Ones(d);
        lw.ln1_b = Eigen::VectorXd::Zero(d);
        lw.ln2_g = Eigen::VectorXd::Ones(d);
        lw.ln2_b = Eigen::VectorXd::Zero(d);
        w.layers.push_back(std::move(lw));
    }
    w.ln_f_g = Eigen::VectorXd::Ones(d);
    w.ln_f_b = Eigen::VectorXd::Zero(d);
    w.head_w = detail::rand_matrix(rng, cfg.n_classes, d, attn_bound);
    w.head_b = detail::rand_vector(rng, cfg.n_classes, attn_bound);
    return w;
}

inline void validate_weights(const ModelWeights& w, const ModelConfig& cfg) {
    validate_model_config(cfg);
    const int d = cfg.d_model;
    const int m = cfg.d_model * cfg.mlp_ratio;
    require(w.cls.size() == d, "weights: cls size mismatch");
    require(static_cast<int>(w.layers.size()) == cfg.n_layers, "weights: layer count mismatch");
    for (const auto& lw : w.layers) {
        require(lw.wq.rows() == d && lw.wq.cols() == d && lw.wk.rows() == d && lw.wv.rows() == d && lw.wo.rows() == d,
                "weights: attention shape mismatch");
        require(lw.w1.rows() == d && lw.w1.cols() == m && lw.w2.rows() == m && lw.w2.cols() == d,
                "weights: mlp shape mismatch");
        require(lw.ln1_g.size() == d && lw.ln2_g.size() == d, "weights: layernorm shape mismatch");
    }
    require(w.head_w.rows() == cfg.n_classes && w.head_w.cols() == d, "weights: head shape mismatch");
}

/// Optional forward diagnostics; row sums should all be 1 up to roundoff.
struct ForwardTrace {
    double min_attention_row_sum = 1.0;
    double max_attention_row_sum = 1.0;
};

/// Pre-LN encoder forward pass over a variable-length token matrix. A CLS
/// vector is prepended and the logits read from its final state.
inline Eigen::VectorXd forward(const Eigen::MatrixXd& tokens, const ModelWeights& w, const ModelConfig& cfg,
                               ForwardTrace* trace = nullptr) {
    validate_weights(w, cfg);
    require(tokens.rows() >= 1, "forward: need at least one token");
    require(tokens.cols() == cfg.d_model, "forward: token width must equal d_model");
    require(tokens.allFinite(), "forward: non-finite token input");

    const Eigen::Index L = tokens.rows() + 1;
    const int d = cfg.d_model;
    const int hd = d / cfg.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Eigen::MatrixXd x(L, d);
    x.row(0) = w.cls.transpose();
    x.bottomRows(tokens.rows()) = tokens;

    if (trace) {
        trace->min_attention_row_sum = std::numeric_limits<double>::infinity();
        trace->max_attention_row_sum = -std::numeric_limits<double>::infinity();
    }

    for (const auto& lw : w.layers) {
        const Eigen::MatrixXd h = detail::layer_norm(x, lw.ln1_g, lw.ln1_b, cfg.layernorm_eps);
        const Eigen::MatrixXd q = (h * lw.wq).rowwise() + lw.bq.transpose();
        const Eigen::MatrixXd k = (h * lw.wk).rowwise() + lw.bk.transpose();
        const Eigen::MatrixXd v = (h * lw.wv).rowwise() + lw.bv.transpose();
        Eigen::MatrixXd concat(L, d);
        for (int head = 0; head < cfg.n_heads; ++head) {
            const auto qh = q.middleCols(static_cast<Eigen::Index>(head) * hd, hd);
            const auto kh = k.middleCols(static_cast<Eigen::Index>(head) * hd, hd);
            const auto vh = v.middleCols(static_cast<Eigen::Index>(head) * hd, hd);
            Eigen::MatrixXd logits = qh * kh.transpose() * scale;
            // Numerically stable softmax: subtract each row's max.
            for (Eigen::Index r = 0; r < L; ++r) {
                const double rmax = logits.row(r).maxCoeff();
                Eigen::ArrayXd e = (logits.row(r).array() - rmax).exp();
                const double sum = e.sum();
                logits.row(r) = (e / sum).matrix();
                if (trace) {
                    const double s = logits.row(r).sum();
                    trace->min_attention_row_sum = std::min(trace->min_attention_row_sum, s);
                    trace->max_attention_row_sum = std::max(trace->max_attention_row_sum, s);
                }
            }
            concat.middleCols(static_cast<Eigen::Index>(head) * hd, hd) = logits * vh;
        }
        x += (concat * lw.wo).rowwise() + lw.bo.transpose();

        const Eigen::MatrixXd h2 = detail::layer_norm(x, lw.ln2_g, lw.ln2_b, cfg.layernorm_eps);
        Eigen::MatrixXd mid = (h2 * lw.w1).rowwise() + lw.b1.transpose();
        for (Eigen::Index r = 0; r < mid.rows(); ++r)
            for (Eigen::Index c = 0; c < mid.cols(); ++c) mid(r, c) = detail::gelu(mid(r, c));
        x += (mid * lw.w2).rowwise() + lw.b2.transpose();
    }

    const Eigen::MatrixXd final_norm = detail::layer_norm(x, w.ln_f_g, w.ln_f_b, cfg.layernorm_eps);
    return w.head_w * final_norm.row(0).transpose() + w.head_b;
}

inline Eigen::MatrixXd token_matrix_from_tensor(const TensorF& t) {
    require(t.dims.size() == 2, "token tensor must have rank 2 (L, d_model)");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = static_cast<double>(t.data[static_cast<std::size_t>(r) * t.dims[1] + static_cast<std::size_t>(c)]);
    return m;
}

inline Eigen::VectorXd forward(const TensorF& tokens, const ModelWeights& w, const ModelConfig& cfg,
                               ForwardTrace* trace = nullptr) {
    return forward(token_matrix_from_tensor(tokens), w, cfg, trace);
}

// ---------------------------------------------------------------------------
// Weight bundle on disk: manifest.json naming each tensor's role, shape and
// file; one f32 container per tensor.

namespace detail {

inline TensorF tensor_from_matrix(const Eigen::MatrixXd& m) {
    TensorF t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.data[static_cast<std::size_t>(r) * static_cast<std::size_t>(m.cols()) + static_cast<std::size_t>(c)] =
                static_cast<float>(m(r, c));
    return t;
}

inline TensorF tensor_from_vector(const Eigen::VectorXd& v) {
    TensorF t;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    return t;
}

inline Eigen::MatrixXd matrix_from_tensor(const TensorF& t) {
    require(t.dims.size() == 2, "weights: expected rank-2 tensor");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = static_cast<double>(t.data[static_cast<std::size_t>(r) * t.dims[1] + static_cast<std::size_t>(c)]);
    return m;
}

inline Eigen::VectorXd vector_from_tensor(const TensorF& t) {
    require(t.dims.size() == 1, "weights: expected rank-1 tensor");
    Eigen::VectorXd v(static_cast<Eigen::Index>(t.dims[0]));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<double>(t.data[static_cast<std::size_t>(i)]);
    return v;
}

}  // namespace detail

inline void save_model(const ModelWeights& w, const ModelConfig& cfg, const std::filesystem::path& dir) {
    validate_weights(w, cfg);
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["config"] = model_config_to_json(cfg);
    auto& tensors = manifest["tensors"] = nlohmann::ordered_json::array();
    const auto add = [&](const std::string& role, const TensorF& t) {
        const std::string file = role + ".mtok";
        save_tensor(t, dir / file);
        nlohmann::ordered_json e;
        e["role"] = role;
        e["file"] = file;
        e["shape"] = t.dims;
        tensors.push_back(std::move(e));
    };
    add("cls", detail::tensor_from_vector(w.cls));
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& lw = w.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "wq", detail::tensor_from_matrix(lw.wq));
        add(p + "wk", detail::tensor_from_matrix(lw.wk));
        add(p + "wv", detail::tensor_from_matrix(lw.wv));
        add(p + "wo", detail::tensor_from_matrix(lw.wo));
        add(p + "bq", detail::tensor_from_vector(lw.bq));
        add(p + "bk", detail::tensor_from_vector(lw.bk));
        add(p + "bv", detail::tensor_from_vector(lw.bv));
        add(p + "bo", detail::tensor_from_vector(lw.bo));
        add(p + "w1", detail::tensor_from_matrix(lw.w1));
        add(p + "w2", detail::tensor_from_matrix(lw.w2));
        add(p + "b1", detail::tensor_from_vector(lw.b1));
        add(p + "b2", detail::tensor_from_vector(lw.b2));
        add(p + "ln1_g", detail::tensor_from_vector(lw.ln1_g));
        add(p + "ln1_b", detail::tensor_from_vector(lw.ln1_b));
        add(p + "ln2_g", detail::tensor_from_vector(lw.ln2_g));
        add(p + "ln2_b", detail::tensor_from_vector(lw.ln2_b));
    }
    add("ln_f_g", detail::tensor_from_vector(w.ln_f_g));
    add("ln_f_b", detail::tensor_from_vector(w.ln_f_b));
    add("head_w", detail::tensor_from_matrix(w.head_w));
    add("head_b", detail::tensor_from_vector(w.head_b));
    std::ofstream out(dir / "manifest.json");
    if (!out) throw format_error("weights: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

inline std::pair<ModelWeights, ModelConfig> load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw format_error("weights: cannot open manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("weights manifest: ") + e.what());
    }
    const ModelConfig cfg = model_config_from_json(manifest.at("config"));
    std::map<std::string, TensorF> tensors;
    try {
        for (const auto& e : manifest.at("tensors"))
            tensors[e.at("role").get<std::string>()] = load_tensor(dir / e.at("file").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("weights manifest: ") + e.what());
    }
    const auto get = [&](const std::string& role) -> const TensorF& {
        const auto it = tensors.find(role);
        if (it == tensors.end()) throw format_error("weights: manifest missing tensor \"" + role + "\"");
        return it->second;
    };
    ModelWeights w;
    w.cls = detail::vector_from_tensor(get("cls"));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerWeights lw;
        lw.wq = detail::matrix_from_tensor(get(p + "wq"));
        lw.wk = detail::matrix_from_tensor(get(p + "wk"));
        lw.wv = detail::matrix_from_tensor(get(p + "wv"));
        lw.wo = detail::matrix_from_tensor(get(p + "wo"));
        lw.bq = detail::vector_from_tensor(get(p + "bq"));
        lw.bk = detail::vector_from_tensor(get(p + "bk"));
        lw.bv = detail::vector_from_tensor(get(p + "bv"));
        lw.bo = detail::vector_from_tensor(get(p + "bo"));
        lw.w1 = detail::matrix_from_tensor(get(p + "w1"));
        lw.w2 = detail::matrix_from_tensor(get(p + "w2"));
        lw.b1 = detail::vector_from_tensor(get(p + "b1"));
        lw.b2 = detail::vector_from_tensor(get(p + "b2"));
        lw.ln1_g = detail::vector_from_tensor(get(p + "ln1_g"));
        lw.ln1_b = detail::vector_from_tensor(get(p + "ln1_b"));
        lw.ln2_g = detail::vector_from_tensor(get(p + "ln2_g"));
        lw.ln2_b = detail::vector_from_tensor(get(p + "ln2_b"));
        w.layers.push_back(std::move(lw));
    }
    w.ln_f_g = detail::vector_from_tensor(get("ln_f_g"));
    w.ln_f_b = detail::vector_from_tensor(get("ln_f_b"));
    w.head_w = detail::matrix_from_tensor(get("head_w"));
    w.head_b = detail::vector_from_tensor(get("head_b"));
    validate_weights(w, cfg);
    return {std::move(w), cfg};
}

}  // namespace mrtok

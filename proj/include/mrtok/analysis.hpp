#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtok/errors.hpp"
#include "mrtok/quadtree.hpp"
#include "mrtok/scorers.hpp"
#include "mrtok/tokenizer.hpp"
#include "mrtok/toyvit.hpp"

namespace mrtok {

// ---------------------------------------------------------------------------
// Rank correlation. Patch scorers are compared through the ranking they
// induce, so ties must be handled; tau-b and mid-rank Spearman are used.

/// Kendall tau-b: (concordant - discordant) / sqrt((n0-n1)(n0-n2)) where n1,
/// n2 are the tie terms of each input. Returns nothing when either input is
/// fully tied (the coefficient is undefined there).
inline std::optional<double> kendall_tau(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "kendall_tau: length mismatch");
    require(a.size() >= 2, "kendall_tau: need at least 2 observations");
    const std::size_t n = a.size();
    long long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            const double prod = da * db;
            if (prod > 0) ++concordant;
            else if (prod < 0) ++discordant;
        }
    }
    const auto tie_term = [n](std::span<const double> v) {
        std::vector<double> sorted(v.begin(), v.end());
        std::sort(sorted.begin(), sorted.end());
        long long ties = 0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && sorted[j] == sorted[i]) ++j;
            const long long t = static_cast<long long>(j - i);
            ties += t * (t - 1) / 2;
            i = j;
        }
        return ties;
    };
    const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;
    const long long n1 = tie_term(a);
    const long long n2 = tie_term(b);
    if (n0 == n1 || n0 == n2) return std::nullopt;
    return static_cast<double>(concordant - discordant) /
           std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

namespace detail {

/// Mid-ranks: tied values share the average of the ranks they span.
inline std::vector<double> mid_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && v[order[j]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Spearman rho: Pearson correlation of mid-ranks.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "spearman: length mismatch");
    require(a.size() >= 2, "spearman: need at least 2 observations");
    const std::vector<double> ra = detail::mid_ranks(a);
    const std::vector<double> rb = detail::mid_ranks(b);
    return detail::pearson(ra, rb);
}

enum class Coefficient { kendall, spearman };

inline std::optional<double> rank_correlation(Coefficient c, std::span<const double> a, std::span<const double> b) {
    return c == Coefficient::kendall ? kendall_tau(a, b) : spearman(a, b);
}

/// Fraction of images where corr(reference, a) is strictly greater than
/// corr(reference, b). Ties and undefined coefficients count only in the
/// denominator.
inline double fraction_closer(std::span<const std::vector<double>> reference, std::span<const std::vector<double>> a,
                              std::span<const std::vector<double>> b, Coefficient coefficient) {
    require(reference.size() == a.size() && reference.size() == b.size(), "fraction_closer: image count mismatch");
    require(!reference.empty(), "fraction_closer: need at least one image");
    std::size_t wins = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        require(reference[i].size() == a[i].size() && reference[i].size() == b[i].size(),
                "fraction_closer: misaligned candidate scores");
        const auto ca = rank_correlation(coefficient, reference[i], a[i]);
        const auto cb = rank_correlation(coefficient, reference[i], b[i]);
        if (ca && cb && *ca > *cb) ++wins;
        else if (ca && !cb) ++wins;
    }
    return static_cast<double>(wins) / static_cast<double>(reference.size());
}

struct PairStats {
    std::optional<double> tau_ref_a, rho_ref_a;
    std::optional<double> tau_ref_b, rho_ref_b;
};

struct RankCorrelationReport {
    std::vector<PairStats> per_image;
    std::optional<double> mean_tau_ref_a, mean_rho_ref_a, mean_tau_ref_b, mean_rho_ref_b;
    double fraction_a_closer_kendall = 0.0;
    double fraction_a_closer_spearman = 0.0;
    bool has_b = false;
};

inline RankCorrelationReport correlate_scores(std::span<const std::vector<double>> reference,
                                              std::span<const std::vector<double>> a,
                                              std::span<const std::vector<double>> b = {}) {
    require(reference.size() == a.size() && !reference.empty(), "correlate: need aligned per-image score sets");
    RankCorrelationReport rep;
    rep.has_b = !b.empty();
    if (rep.has_b) require(b.size() == reference.size(), "correlate: reference/b image count mismatch");
    const auto mean_of = [](const std::vector<double>& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    std::vector<double> taus_a, rhos_a, taus_b, rhos_b;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        PairStats s;
        require(reference[i].size() == a[i].size(), "correlate: misaligned candidates");
        s.tau_ref_a = kendall_tau(reference[i], a[i]);
        s.rho_ref_a = spearman(reference[i], a[i]);
        if (s.tau_ref_a) taus_a.push_back(*s.tau_ref_a);
        if (s.rho_ref_a) rhos_a.push_back(*s.rho_ref_a);
        if (rep.has_b) {
            require(reference[i].size() == b[i].size(), "correlate: misaligned candidates");
            s.tau_ref_b = kendall_tau(reference[i], b[i]);
            s.rho_ref_b = spearman(reference[i], b[i]);
            if (s.tau_ref_b) taus_b.push_back(*s.tau_ref_b);
            if (s.rho_ref_b) rhos_b.push_back(*s.rho_ref_b);
        }
        rep.per_image.push_back(s);
    }
    rep.mean_tau_ref_a = mean_of(taus_a);
    rep.mean_rho_ref_a = mean_of(rhos_a);
    if (rep.has_b) {
        rep.mean_tau_ref_b = mean_of(taus_b);
        rep.mean_rho_ref_b = mean_of(rhos_b);
        rep.fraction_a_closer_kendall = fraction_closer(reference, a, b, Coefficient::kendall);
        rep.fraction_a_closer_spearman = fraction_closer(reference, a, b, Coefficient::spearman);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Mosaic composition: average image-area fraction covered by each patch size.

struct CompositionRow {
    int target_patches = 0;
    std::map<int, double, std::greater<int>> area_fraction_by_size;  // largest size first
};

struct CompositionReport {
    std::vector<int> sizes;  // descending
    std::vector<CompositionRow> rows;
};

inline CompositionReport composition_stats(std::span<const Image> imgs, std::span<const int> patch_targets,
                                           QuadtreeConfig cfg, const PatchScorer& scorer,
                                           TargetMode mode = TargetMode::strict, int jobs = 1) {
    require(!imgs.empty() && !patch_targets.empty(), "composition_stats: need images and targets");
    CompositionReport rep;
    for (int s = cfg.s_max; s >= cfg.s_min; s /= 2) rep.sizes.push_back(s);
    for (const int target : patch_targets) {
        cfg.target_patches = target;
        const std::vector<PatchMosaic> mosaics = build_mosaic_batch(imgs, cfg, scorer, mode, jobs);
        CompositionRow row;
        row.target_patches = target;
        for (const int s : rep.sizes) row.area_fraction_by_size[s] = 0.0;
        for (const auto& m : mosaics) {
            const double area = static_cast<double>(m.image_height) * m.image_width;
            for (const auto& p : m.patches)
                row.area_fraction_by_size[p.size] += static_cast<double>(p.size) * p.size / area;
        }
        for (auto& [s, f] : row.area_fraction_by_size) f /= static_cast<double>(imgs.size());
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

inline std::string composition_csv(const CompositionReport& rep) {
    std::ostringstream out;
    out << "L";
    for (const int s : rep.sizes) out << ",frac" << s;
    out << "\n";
    for (const auto& row : rep.rows) {
        out << row.target_patches;
        for (const int s : rep.sizes) {
            std::ostringstream cell;
            cell.precision(9);
            cell << std::fixed << row.area_fraction_by_size.at(s);
            out << "," << cell.str();
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Analytic multiply-accumulate accounting. Conventions, applied per image:
//   conv:       out_h * out_w * in_ch * out_ch * k^2
//   linear:     tokens * in * out
//   attention:  4*L*d^2 (Q,K,V,O projections) + 2*L^2*d (scores, mixing)
//   mlp block:  2 * L * d * hidden
//   area downsample: one MAC per input sample; nearest upsample: none;
//   bilinear resample: 4 per output sample; mse: one per element.
// LayerNorm, softmax and indexing carry no MACs, matching common counters.

struct ConvDesc {
    int in_h = 0, in_w = 0;
    int kernel = 1, stride = 1, padding = 0;
    int in_ch = 0, out_ch = 0;
};
struct LinearDesc {
    long long in = 0, out = 0, tokens = 1;
};
struct AttentionDesc {
    long long seq_len = 0, d_model = 0;
};
struct QuadtreeLogicDesc {};

using LayerDesc = std::variant<ConvDesc, LinearDesc, AttentionDesc, QuadtreeLogicDesc>;

inline std::uint64_t count_macs(const LayerDesc& desc) {
    if (const auto* c = std::get_if<ConvDesc>(&desc)) {
        const int oh = (c->in_h + 2 * c->padding - c->kernel) / c->stride + 1;
        const int ow = (c->in_w + 2 * c->padding - c->kernel) / c->stride + 1;
        require(oh > 0 && ow > 0, "count_macs: conv output collapses");
        return static_cast<std::uint64_t>(oh) * ow * c->in_ch * c->out_ch * c->kernel * c->kernel;
    }
    if (const auto* l = std::get_if<LinearDesc>(&desc))
        return static_cast<std::uint64_t>(l->tokens) * static_cast<std::uint64_t>(l->in) *
               static_cast<std::uint64_t>(l->out);
    if (const auto* a = std::get_if<AttentionDesc>(&desc)) {
        const auto L = static_cast<std::uint64_t>(a->seq_len);
        const auto d = static_cast<std::uint64_t>(a->d_model);
        return 4 * L * d * d + 2 * L * L * d;
    }
    return 0;  // quadtree logic: indexing and reshaping only
}

inline std::uint64_t count_macs(std::span<const LayerDesc> stack) {
    std::uint64_t total = 0;
    for (const auto& d : stack) total += count_macs(d);
    return total;
}

inline LayerDesc layer_desc_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv")
        return ConvDesc{j.at("in_h").get<int>(),   j.at("in_w").get<int>(),   j.at("kernel").get<int>(),
                        j.at("stride").get<int>(), j.value("padding", 0),     j.at("in_ch").get<int>(),
                        j.at("out_ch").get<int>()};
    if (kind == "linear")
        return LinearDesc{j.at("in").get<long long>(), j.at("out").get<long long>(), j.value("tokens", 1LL)};
    if (kind == "attention") return AttentionDesc{j.at("seq_len").get<long long>(), j.at("d_model").get<long long>()};
    if (kind == "quadtree_logic") return QuadtreeLogicDesc{};
    throw contract_error("count_macs: unknown layer kind \"" + kind + "\"");
}

inline std::uint64_t extractor_macs(const FeatureExtractor& fx, int image_h, int image_w) {
    std::uint64_t total = 0;
    int h = image_h, w = image_w;
    for (const auto& l : fx.layers) {
        total += count_macs(ConvDesc{h, w, l.kernel, l.stride, l.padding, l.in_channels, l.out_channels});
        h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
    }
    return total;
}

inline std::uint64_t blur_macs(int h, int w, int channels, UpsampleMode mode) {
    const std::uint64_t down = static_cast<std::uint64_t>(h) * w * channels;
    const std::uint64_t up =
        mode == UpsampleMode::nearest ? 0 : 4ULL * static_cast<std::uint64_t>(h) * w * channels;
    return down + up;
}

inline std::uint64_t pixel_blur_scorer_macs(std::span<const PatchRect> candidates, UpsampleMode mode) {
    std::uint64_t total = 0;
    for (const auto& p : candidates) {
        const auto n = static_cast<std::uint64_t>(p.size) * p.size * Image::channels;
        total += blur_macs(p.size, p.size, Image::channels, mode) + n;  // blur + mse
    }
    return total;
}

inline std::uint64_t feature_scorer_macs(const FeatureExtractor& fx, int image_h, int image_w, int n_distinct_sizes,
                                         double scoring_scale, UpsampleMode mode) {
    int h = image_h, w = image_w;
    if (scoring_scale < 1.0) {
        h = static_cast<int>(std::llround(image_h * scoring_scale));
        w = static_cast<int>(std::llround(image_w * scoring_scale));
    }
    const auto passes = static_cast<std::uint64_t>(1 + n_distinct_sizes);
    std::uint64_t total = passes * extractor_macs(fx, h, w);
    total += static_cast<std::uint64_t>(n_distinct_sizes) * blur_macs(h, w, Image::channels, mode);
    if (scoring_scale < 1.0) total += 4ULL * static_cast<std::uint64_t>(h) * w * Image::channels;  // input resize
    return total;
}

inline std::uint64_t tokenizer_macs(const PatchMosaic& mosaic, const TokenizerConfig& cfg) {
    std::uint64_t total = 0;
    for (const auto& p : mosaic.patches)
        if (p.size > cfg.s_rep) total += static_cast<std::uint64_t>(p.size) * p.size * Image::channels;
    total += static_cast<std::uint64_t>(mosaic.patches.size()) *
             count_macs(LinearDesc{3LL * cfg.s_rep * cfg.s_rep, cfg.d_model, 1});
    return total;
}

inline std::uint64_t vit_forward_macs(const ModelConfig& cfg, long long n_tokens) {
    const long long L = n_tokens + 1;  // CLS prepended
    std::uint64_t total = 0;
    for (int l = 0; l < cfg.n_layers; ++l) {
        total += count_macs(AttentionDesc{L, cfg.d_model});
        total += count_macs(LinearDesc{cfg.d_model, static_cast<long long>(cfg.d_model) * cfg.mlp_ratio, L});
        total += count_macs(LinearDesc{static_cast<long long>(cfg.d_model) * cfg.mlp_ratio, cfg.d_model, L});
    }
    total += count_macs(LinearDesc{cfg.d_model, cfg.n_classes, 1});
    return total;
}

// ---------------------------------------------------------------------------
// Runtime breakdown harness. Components are timed inside one pipeline run per
// repetition (adjacent timestamps), so per-repetition stage times sum to the
// end-to-end time by construction; medians are reported per component.

struct PipelineConfig {
    QuadtreeConfig quadtree;
    ScorerConfig scorer;
    std::shared_ptr<const FeatureExtractor> extractor;  // for feature_based
    TokenizerConfig tokenizer;
    ModelConfig model;
    std::uint32_t seed = 1;
    TargetMode mode = TargetMode::strict;
};

struct ComponentCost {
    double usecs_per_image = 0.0;
    double gmacs = 0.0;
    std::optional<double> usecs_per_gmac;
};

struct CostReport {
    std::vector<std::pair<std::string, ComponentCost>> components;
    double total_usecs_per_image = 0.0;
    std::size_t batch_size = 0;
    int repetitions = 0;
    int warmup = 0;
    int inner_iters = 1;  // >1 when the timer needed widening
    bool widened = false;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline CostReport bench_breakdown(std::span<const Image> imgs, const PipelineConfig& cfg, int warmup = 5,
                                  int repetitions = 30) {
    require(!imgs.empty(), "bench: need at least one image");
    require(repetitions >= 1 && warmup >= 0, "bench: bad repetition counts");
    const Image& first = imgs[0];
    for (const auto& img : imgs)
        require(img.height == first.height && img.width == first.width, "bench: images must share dims");

    const PatchScorer scorer = make_scorer(cfg.scorer, cfg.extractor);
    const std::vector<PatchRect> candidates = enumerate_candidates(first.height, first.width, cfg.quadtree);
    const PatchEmbedder embedder = PatchEmbedder::random(cfg.tokenizer.d_model, cfg.tokenizer.s_rep, cfg.seed);
    const ModelWeights weights = init_weights(cfg.model, cfg.seed + 1);

    using clock = std::chrono::steady_clock;
    const std::size_t n = imgs.size();

    std::vector<PatchScores> scores(n);
    std::vector<PatchMosaic> mosaics(n);
    std::vector<TokenizeResult> tokens(n);
    std::vector<Eigen::VectorXd> logits(n);

    const auto run_once = [&](std::array<double, 4>& stage_usecs, int inner) {
        const auto t0 = clock::now();
        for (int it = 0; it < inner; ++it)
            for (std::size_t i = 0; i < n; ++i) scores[i] = scorer(imgs[i], candidates);
        const auto t1 = clock::now();
        for (int it = 0; it < inner; ++it)
            for (std::size_t i = 0; i < n; ++i)
                mosaics[i] =
                    build_mosaic_from_scores(first.height, first.width, cfg.quadtree, scores[i], cfg.mode);
        const auto t2 = clock::now();
        for (int it = 0; it < inner; ++it)
            for (std::size_t i = 0; i < n; ++i) {
                tokens[i].sequence = make_token_sequence(imgs[i], mosaics[i], cfg.tokenizer);
                tokens[i].matrix = embed_tokens(tokens[i].sequence, embedder);
            }
        const auto t3 = clock::now();
        for (int it = 0; it < inner; ++it)
            for (std::size_t i = 0; i < n; ++i) logits[i] = forward(tokens[i].matrix, weights, cfg.model);
        const auto t4 = clock::now();
        const auto us = [](clock::time_point a, clock::time_point b) {
            return std::chrono::duration<double, std::micro>(b - a).count();
        };
        const double denom = static_cast<double>(n) * inner;
        stage_usecs = {us(t0, t1) / denom, us(t1, t2) / denom, us(t2, t3) / denom, us(t3, t4) / denom};
    };

    // Calibrate: widen with inner iterations until every stage sample is
    // comfortably above timer resolution.
    int inner = 1;
    std::array<double, 4> probe{};
    run_once(probe, inner);
    constexpr double kMinStageUsecs = 50.0;
    while (inner < 1024) {
        const double min_stage = *std::min_element(probe.begin(), probe.end()) * static_cast<double>(imgs.size()) *
                                 static_cast<double>(inner);
        if (min_stage >= kMinStageUsecs) break;
        inner *= 2;
        run_once(probe, inner);
    }

    const std::vector<PatchMosaic> ref_mosaics = mosaics;
    std::vector<TensorF> ref_tokens(n);
    for (std::size_t i = 0; i < n; ++i) ref_tokens[i] = tokens[i].matrix;
    const std::vector<Eigen::VectorXd> ref_logits = logits;

    std::array<std::vector<double>, 4> samples;
    std::array<double, 4> stage{};
    for (int r = 0; r < warmup + repetitions; ++r) {
        run_once(stage, inner);
        if (r >= warmup)
            for (int s = 0; s < 4; ++s) samples[static_cast<std::size_t>(s)].push_back(stage[static_cast<std::size_t>(s)]);
        for (std::size_t i = 0; i < n; ++i) {
            require(mosaics[i] == ref_mosaics[i], "bench: mosaic output changed across repetitions");
            require(tokens[i].matrix == ref_tokens[i], "bench: token output changed across repetitions");
            require(logits[i] == ref_logits[i], "bench: logits changed across repetitions");
        }
    }

    // MAC accounting mirrors what the measured pipeline actually ran.
    std::vector<int> distinct_sizes;
    for (const auto& c : candidates)
        if (std::find(distinct_sizes.begin(), distinct_sizes.end(), c.size) == distinct_sizes.end())
            distinct_sizes.push_back(c.size);
    double scorer_macs = 0.0;
    if (cfg.scorer.kind == ScorerKind::pixel_blur) {
        scorer_macs = static_cast<double>(pixel_blur_scorer_macs(candidates, cfg.scorer.upsample_mode));
    } else if (cfg.scorer.kind == ScorerKind::feature_based) {
        scorer_macs = static_cast<double>(feature_scorer_macs(*cfg.extractor, first.height, first.width,
                                                              static_cast<int>(distinct_sizes.size()),
                                                              cfg.scorer.scoring_scale, cfg.scorer.upsample_mode));
    }
    double tok_macs = 0.0, vit_macs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        tok_macs += static_cast<double>(tokenizer_macs(ref_mosaics[i], cfg.tokenizer));
        vit_macs += static_cast<double>(vit_forward_macs(cfg.model, static_cast<long long>(ref_mosaics[i].patches.size())));
    }
    tok_macs /= static_cast<double>(n);
    vit_macs /= static_cast<double>(n);

    CostReport rep;
    rep.batch_size = n;
    rep.repetitions = repetitions;
    rep.warmup = warmup;
    rep.inner_iters = inner;
    rep.widened = inner > 1;
    const char* names[4] = {"scorer", "quadtree", "tokenizer", "transformer"};
    const double macs[4] = {scorer_macs, 0.0, tok_macs, vit_macs};
    for (int s = 0; s < 4; ++s) {
        ComponentCost c;
        c.usecs_per_image = detail::median(samples[static_cast<std::size_t>(s)]);
        c.gmacs = macs[s] * 1e-9;
        if (c.gmacs > 0.0) c.usecs_per_gmac = c.usecs_per_image / c.gmacs;
        rep.total_usecs_per_image += c.usecs_per_image;
        rep.components.emplace_back(names[s], c);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Report serialization (JSON plus aligned-column text).

inline nlohmann::ordered_json correlation_report_json(const RankCorrelationReport& rep) {
    const auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    nlohmann::ordered_json j;
    j["images"] = rep.per_image.size();
    auto& arr = j["per_image"] = nlohmann::ordered_json::array();
    for (const auto& s : rep.per_image) {
        nlohmann::ordered_json e;
        e["kendall_ref_a"] = opt(s.tau_ref_a);
        e["spearman_ref_a"] = opt(s.rho_ref_a);
        if (rep.has_b) {
            e["kendall_ref_b"] = opt(s.tau_ref_b);
            e["spearman_ref_b"] = opt(s.rho_ref_b);
        }
        arr.push_back(std::move(e));
    }
    j["mean"]["kendall_ref_a"] = opt(rep.mean_tau_ref_a);
    j["mean"]["spearman_ref_a"] = opt(rep.mean_rho_ref_a);
    if (rep.has_b) {
        j["mean"]["kendall_ref_b"] = opt(rep.mean_tau_ref_b);
        j["mean"]["spearman_ref_b"] = opt(rep.mean_rho_ref_b);
        j["fraction_a_closer"]["kendall"] = rep.fraction_a_closer_kendall;
        j["fraction_a_closer"]["spearman"] = rep.fraction_a_closer_spearman;
    }
    return j;
}

inline std::string correlation_report_text(const RankCorrelationReport& rep) {
    std::ostringstream out;
    const auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string("   n/a");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%6.3f", *v);
        return std::string(buf);
    };
    out << "coefficient   mean(ref,A)";
    if (rep.has_b) out << "   mean(ref,B)   %A closer";
    out << "\n";
    out << "kendall       " << fmt(rep.mean_tau_ref_a);
    if (rep.has_b) {
        out << "        " << fmt(rep.mean_tau_ref_b);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%9.1f%%", 100.0 * rep.fraction_a_closer_kendall);
        out << "  " << buf;
    }
    out << "\n";
    out << "spearman      " << fmt(rep.mean_rho_ref_a);
    if (rep.has_b) {
        out << "        " << fmt(rep.mean_rho_ref_b);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%9.1f%%", 100.0 * rep.fraction_a_closer_spearman);
        out << "  " << buf;
    }
    out << "\n";
    return out.str();
}

inline nlohmann::ordered_json composition_report_json(const CompositionReport& rep) {
    nlohmann::ordered_json j;
    j["sizes"] = rep.sizes;
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.rows) {
        nlohmann::ordered_json e;
        e["target_patches"] = r.target_patches;
        for (const auto& [s, f] : r.area_fraction_by_size) e["frac" + std::to_string(s)] = f;
        rows.push_back(std::move(e));
    }
    return j;
}

inline std::string composition_report_text(const CompositionReport& rep) {
    std::ostringstream out;
    out << "    L";
    for (const int s : rep.sizes) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "  %8s", ("frac" + std::to_string(s)).c_str());
        out << buf;
    }
    out << "\n";
    for (const auto& r : rep.rows) {
        char head[32];
        std::snprintf(head, sizeof(head), "%5d", r.target_patches);
        out << head;
        for (const int s : rep.sizes) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "  %8.4f", r.area_fraction_by_size.at(s));
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

inline nlohmann::ordered_json cost_report_json(const CostReport& rep) {
    nlohmann::ordered_json j;
    j["batch_size"] = rep.batch_size;
    j["repetitions"] = rep.repetitions;
    j["warmup"] = rep.warmup;
    j["inner_iters"] = rep.inner_iters;
    j["widened"] = rep.widened;
    auto& comps = j["components"] = nlohmann::ordered_json::array();
    for (const auto& [name, c] : rep.components) {
        nlohmann::ordered_json e;
        e["component"] = name;
        e["usecs_per_image"] = c.usecs_per_image;
        e["gmacs"] = c.gmacs;
        e["usecs_per_gmac"] = c.usecs_per_gmac ? nlohmann::ordered_json(*c.usecs_per_gmac)
                                               : nlohmann::ordered_json(nullptr);
        comps.push_back(std::move(e));
    }
    j["total_usecs_per_image"] = rep.total_usecs_per_image;
    return j;
}

inline std::string cost_report_text(const CostReport& rep) {
    std::ostringstream out;
    out << "component      usecs/im      GMACs   usecs/GMAC\n";
    for (const auto& [name, c] : rep.components) {
        char buf[128];
        if (c.usecs_per_gmac)
            std::snprintf(buf, sizeof(buf), "%-12s %10.2f %10.6f %12.1f\n", name.c_str(), c.usecs_per_image, c.gmacs,
                          *c.usecs_per_gmac);
        else
            std::snprintf(buf, sizeof(buf), "%-12s %10.2f %10.6f %12s\n", name.c_str(), c.usecs_per_image, c.gmacs,
                          "-");
        out << buf;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s %10.2f\n", "total", rep.total_usecs_per_image);
    out << buf;
    return out.str();
}

}  // namespace mrtok

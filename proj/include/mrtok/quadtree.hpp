#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtok/errors.hpp"
#include "mrtok/image.hpp"
#include "mrtok/morton.hpp"
#include "mrtok/parallel.hpp"

namespace mrtok {

/// Axis-aligned square patch. x/y are the top-left corner in pixels and are
/// always multiples of size (quadrant alignment).
struct PatchRect {
    int x = 0;
    int y = 0;
    int size = 0;

    bool operator==(const PatchRect& o) const = default;
};

struct QuadtreeConfig {
    int s_min = 16;
    int s_max = 64;
    int target_patches = 64;
};

/// How build_mosaic treats a target patch count that the +3-per-split
/// arithmetic cannot hit exactly.
enum class TargetMode { strict, lenient };

inline void validate_quadtree_config(const QuadtreeConfig& cfg) {
    require(cfg.s_min >= 1 && cfg.s_max >= cfg.s_min, "quadtree: need 1 <= s_min <= s_max");
    require(cfg.s_max % cfg.s_min == 0 && std::has_single_bit(static_cast<unsigned>(cfg.s_max / cfg.s_min)),
            "quadtree: s_max must be s_min * 2^k");
}

/// Canonical patch key: the Morton code of the top-left cell in s_min units,
/// with the patch's level above s_min in the low bits to disambiguate sizes.
/// Patches of one mosaic sort by this key into z-order, and the four children
/// of a split sort exactly into their parent's position.
inline std::uint64_t patch_zkey(const PatchRect& p, int s_min) {
    const std::uint64_t code = morton2(static_cast<std::uint32_t>(p.x / s_min), static_cast<std::uint32_t>(p.y / s_min));
    const auto level = static_cast<std::uint64_t>(std::countr_zero(static_cast<unsigned>(p.size / s_min)));
    return (code << 6) | level;
}

/// Mixed-resolution patch mosaic: disjoint square patches exactly covering
/// the image, kept in canonical z-order.
struct PatchMosaic {
    int image_height = 0;
    int image_width = 0;
    int s_min = 1;  // unit of the z-order cell grid
    std::vector<PatchRect> patches;

    bool operator==(const PatchMosaic& o) const {
        return image_height == o.image_height && image_width == o.image_width && patches == o.patches;
    }
};

inline std::array<PatchRect, 4> quadrants(const PatchRect& p) {
    const int h = p.size / 2;
    return {PatchRect{p.x, p.y, h}, PatchRect{p.x + h, p.y, h}, PatchRect{p.x, p.y + h, h},
            PatchRect{p.x + h, p.y + h, h}};
}

inline std::vector<PatchRect> canonical_order(std::vector<PatchRect> patches, int s_min) {
    std::sort(patches.begin(), patches.end(),
              [s_min](const PatchRect& a, const PatchRect& b) { return patch_zkey(a, s_min) < patch_zkey(b, s_min); });
    return patches;
}

inline PatchMosaic initial_grid(int height, int width, const QuadtreeConfig& cfg) {
    validate_quadtree_config(cfg);
    require(height > 0 && width > 0, "initial_grid: dims must be positive");
    require(height % cfg.s_max == 0 && width % cfg.s_max == 0,
            "initial_grid: s_max=" + std::to_string(cfg.s_max) + " must divide image dims " + std::to_string(height) +
                "x" + std::to_string(width));
    PatchMosaic m;
    m.image_height = height;
    m.image_width = width;
    m.s_min = cfg.s_min;
    for (int y = 0; y < height; y += cfg.s_max)
        for (int x = 0; x < width; x += cfg.s_max) m.patches.push_back({x, y, cfg.s_max});
    m.patches = canonical_order(std::move(m.patches), cfg.s_min);
    return m;
}

/// The subset of mosaic patches eligible for splitting (size >= 2*s_min).
inline std::vector<PatchRect> splittable(const PatchMosaic& mosaic, int s_min) {
    std::vector<PatchRect> out;
    for (const auto& p : mosaic.patches)
        if (p.size >= 2 * s_min) out.push_back(p);
    return out;
}

/// Replaces one patch by its four quadrants, preserving canonical order.
inline PatchMosaic split_patch(const PatchMosaic& mosaic, const PatchRect& patch) {
    require(patch.size % 2 == 0 && patch.size >= 2 * mosaic.s_min, "split_patch: patch too small to split");
    const auto it = std::find(mosaic.patches.begin(), mosaic.patches.end(), patch);
    require(it != mosaic.patches.end(), "split_patch: patch not in mosaic");
    PatchMosaic out = mosaic;
    const auto idx = static_cast<std::size_t>(it - mosaic.patches.begin());
    const auto kids = quadrants(patch);
    out.patches[idx] = kids[0];
    out.patches.insert(out.patches.begin() + static_cast<std::ptrdiff_t>(idx) + 1, {kids[1], kids[2], kids[3]});
    return out;
}

/// Every patch that can ever be offered to the scorer: all aligned squares
/// with size in {s_max, s_max/2, ..., 2*s_min}, enumerated level-major
/// (largest size first) and in z-order within a level. For 256^2 images with
/// (s_min, s_max) = (16, 64) this yields 16 + 64 = 80 candidates.
inline std::vector<PatchRect> enumerate_candidates(int height, int width, const QuadtreeConfig& cfg) {
    validate_quadtree_config(cfg);
    std::vector<PatchRect> out;
    for (int size = cfg.s_max; size >= 2 * cfg.s_min; size /= 2) {
        std::vector<PatchRect> level;
        for (int y = 0; y < height; y += size)
            for (int x = 0; x < width; x += size) level.push_back({x, y, size});
        level = canonical_order(std::move(level), cfg.s_min);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

/// Saliency values for candidate patches.
struct PatchScores {
    std::unordered_map<std::uint64_t, double> by_key;

    static std::uint64_t key(const PatchRect& p) {
        return (static_cast<std::uint64_t>(p.x) << 40) | (static_cast<std::uint64_t>(p.y) << 16) |
               static_cast<std::uint64_t>(p.size);
    }
    void set(const PatchRect& p, double score) { by_key[key(p)] = score; }
    bool contains(const PatchRect& p) const { return by_key.count(key(p)) != 0; }
    double at(const PatchRect& p) const {
        const auto it = by_key.find(key(p));
        require(it != by_key.end(), "PatchScores: no score for patch (" + std::to_string(p.x) + "," +
                                        std::to_string(p.y) + "," + std::to_string(p.size) + ")");
        return it->second;
    }
    std::size_t size() const { return by_key.size(); }
};

/// A scorer maps candidate patches of an image to nonnegative saliency.
using PatchScorer = std::function<PatchScores(const Image&, std::span<const PatchRect>)>;

/// Optional record of a mosaic construction, for auditing the greedy loop.
struct BuildTrace {
    std::vector<PatchRect> split_sequence;
    std::vector<std::size_t> counts;  // patch count after each step; counts[0] = initial
};

namespace detail {

struct SplitCandidate {
    double score;
    int level;  // 0 = s_max-sized; deeper levels are larger values
    std::uint64_t morton;
    PatchRect rect;
};

// Greedy split priority: higher score first; ties go to the shallower level
// (larger patch), then to z-order. This reproduces a batched argmax over a
// level-major candidate array, where ties resolve to the first index.
struct SplitWorse {
    bool operator()(const SplitCandidate& a, const SplitCandidate& b) const {
        if (a.score != b.score) return a.score < b.score;
        if (a.level != b.level) return a.level > b.level;
        return a.morton > b.morton;
    }
};

}  // namespace detail

/// The splitting phase in isolation: runs the greedy loop against
/// already-computed scores. The scorer half lives in score-producing code;
/// keeping this separate lets the two be measured independently.
inline PatchMosaic build_mosaic_from_scores(int height, int width, const QuadtreeConfig& cfg,
                                            const PatchScores& scores, TargetMode mode = TargetMode::strict,
                                            BuildTrace* trace = nullptr) {
    validate_quadtree_config(cfg);
    require(height % cfg.s_max == 0 && width % cfg.s_max == 0, "build_mosaic: s_max must divide image dims");
    const std::size_t initial_count =
        static_cast<std::size_t>(height / cfg.s_max) * static_cast<std::size_t>(width / cfg.s_max);
    const std::size_t full_count =
        static_cast<std::size_t>(height / cfg.s_min) * static_cast<std::size_t>(width / cfg.s_min);
    const auto target = static_cast<std::size_t>(cfg.target_patches);
    if (mode == TargetMode::strict) {
        require(cfg.target_patches > 0 && target >= initial_count && target <= full_count &&
                    (target - initial_count) % 3 == 0,
                "build_mosaic: target " + std::to_string(cfg.target_patches) + " unreachable from " +
                    std::to_string(initial_count) + " patches in steps of 3 (strict mode)");
    }

    const std::vector<PatchRect> candidates = enumerate_candidates(height, width, cfg);
    for (const auto& c : candidates) {
        const double s = scores.at(c);
        require(std::isfinite(s) && s >= 0.0, "build_mosaic: scorer must return finite nonnegative values");
    }

    std::priority_queue<detail::SplitCandidate, std::vector<detail::SplitCandidate>, detail::SplitWorse> queue;
    const auto push_if_splittable = [&](const PatchRect& p, int level) {
        if (p.size >= 2 * cfg.s_min)
            queue.push({scores.at(p), level,
                        morton2(static_cast<std::uint32_t>(p.x / cfg.s_min), static_cast<std::uint32_t>(p.y / cfg.s_min)),
                        p});
    };

    PatchMosaic grid = initial_grid(height, width, cfg);
    for (const auto& p : grid.patches) push_if_splittable(p, 0);

    // Split leaves are recorded in a set; the leaf list is reconstructed by a
    // z-order walk afterwards, which is cheaper than list surgery per split.
    std::unordered_map<std::uint64_t, bool> split_keys;
    std::size_t count = initial_count;
    if (trace) {
        trace->split_sequence.clear();
        trace->counts.assign(1, count);
    }
    while (count < target && !queue.empty()) {
        const detail::SplitCandidate top = queue.top();
        queue.pop();
        split_keys[patch_zkey(top.rect, cfg.s_min)] = true;
        for (const auto& kid : quadrants(top.rect)) push_if_splittable(kid, top.level + 1);
        count += 3;
        if (trace) {
            trace->split_sequence.push_back(top.rect);
            trace->counts.push_back(count);
        }
    }

    PatchMosaic out;
    out.image_height = height;
    out.image_width = width;
    out.s_min = cfg.s_min;
    out.patches.reserve(count);
    const std::function<void(const PatchRect&)> emit = [&](const PatchRect& p) {
        if (split_keys.count(patch_zkey(p, cfg.s_min))) {
            for (const auto& kid : quadrants(p)) emit(kid);
        } else {
            out.patches.push_back(p);
        }
    };
    for (const auto& p : grid.patches) emit(p);
    return out;
}

/// Algorithm: start from the uniform s_max grid and repeatedly split the
/// highest-scoring splittable patch into its four quadrants until the patch
/// count reaches the target. Scores are computed once, up front, for every
/// candidate the tree can ever offer.
inline PatchMosaic build_mosaic(const Image& img, const QuadtreeConfig& cfg, const PatchScorer& scorer,
                                TargetMode mode = TargetMode::strict, BuildTrace* trace = nullptr) {
    const std::vector<PatchRect> candidates = enumerate_candidates(img.height, img.width, cfg);
    const PatchScores scores = scorer(img, candidates);
    return build_mosaic_from_scores(img.height, img.width, cfg, scores, mode, trace);
}

/// Per-image results are identical to sequential build_mosaic calls; batching
/// only spreads images over threads.
inline std::vector<PatchMosaic> build_mosaic_batch(std::span<const Image> imgs, const QuadtreeConfig& cfg,
                                                   const PatchScorer& scorer, TargetMode mode = TargetMode::strict,
                                                   int jobs = 1) {
    for (const auto& img : imgs)
        require(img.height == imgs[0].height && img.width == imgs[0].width,
                "build_mosaic_batch: all images must share dims");
    std::vector<PatchMosaic> out(imgs.size());
    parallel_for(imgs.size(), jobs, [&](std::size_t i) { out[i] = build_mosaic(imgs[i], cfg, scorer, mode); });
    return out;
}

inline std::vector<PatchRect> canonical_order(const PatchMosaic& mosaic) {
    return canonical_order(mosaic.patches, mosaic.s_min);
}

// ---------------------------------------------------------------------------
// Mosaic JSON: { "height": H, "width": W, "patches": [[x,y,size], ...] } with
// patches in canonical order. Round-trips losslessly.

inline nlohmann::ordered_json mosaic_to_json(const PatchMosaic& mosaic) {
    nlohmann::ordered_json j;
    j["height"] = mosaic.image_height;
    j["width"] = mosaic.image_width;
    j["s_min"] = mosaic.s_min;
    auto& arr = j["patches"] = nlohmann::ordered_json::array();
    for (const auto& p : mosaic.patches) arr.push_back({p.x, p.y, p.size});
    return j;
}

inline PatchMosaic mosaic_from_json(const nlohmann::json& j) {
    PatchMosaic m;
    try {
        m.image_height = j.at("height").get<int>();
        m.image_width = j.at("width").get<int>();
        m.s_min = j.value("s_min", 1);
        for (const auto& e : j.at("patches")) {
            require(e.is_array() && e.size() == 3, "mosaic json: patch entries must be [x,y,size]");
            m.patches.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("mosaic json: ") + e.what());
    }
    for (const auto& p : m.patches) {
        require(p.size > 0 && p.x % p.size == 0 && p.y % p.size == 0, "mosaic json: misaligned patch");
        require(p.x + p.size <= m.image_width && p.y + p.size <= m.image_height, "mosaic json: patch outside image");
    }
    return m;
}

inline void save_mosaic(const PatchMosaic& mosaic, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw format_error("mosaic: cannot open " + path.string() + " for writing");
    out << mosaic_to_json(mosaic).dump(2) << "\n";
}

inline PatchMosaic load_mosaic(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw format_error("mosaic: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("mosaic json: ") + e.what());
    }
    return mosaic_from_json(j);
}

}  // namespace mrtok

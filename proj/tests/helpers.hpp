// Shared test utilities: deterministic synthetic scorers and an independent
// re-implementation of the greedy split loop.
#pragma once

#include <cstdint>
#include <span>

#include "mrtok/quadtree.hpp"
#include "oracles.hpp"

namespace helpers {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Pure pseudo-random scorer: a fixed hash of (x, y, size, salt) in [0, 1).
inline mrtok::PatchScorer hash_scorer(std::uint64_t salt = 0) {
    return [salt](const mrtok::Image&, std::span<const mrtok::PatchRect> cands) {
        mrtok::PatchScores s;
        for (const auto& p : cands) {
            const std::uint64_t h = splitmix64(mrtok::PatchScores::key(p) ^ salt);
            s.set(p, static_cast<double>(h >> 11) * 0x1.0p-53);
        }
        return s;
    };
}

inline mrtok::PatchScorer constant_scorer(double value = 0.0) {
    return [value](const mrtok::Image&, std::span<const mrtok::PatchRect> cands) {
        mrtok::PatchScores s;
        for (const auto& p : cands) s.set(p, value);
        return s;
    };
}

/// Wraps a scorer, multiplying every score by lambda.
inline mrtok::PatchScorer scaled_scorer(const mrtok::PatchScorer& inner, double lambda) {
    return [inner, lambda](const mrtok::Image& img, std::span<const mrtok::PatchRect> cands) {
        mrtok::PatchScores s = inner(img, cands);
        for (auto& [k, v] : s.by_key) v *= lambda;
        return s;
    };
}

/// Independent greedy loop built from splittable() and split_patch(): argmax
/// over the current splittable set, ties to the larger patch, then to the
/// smaller bit-interleaved cell code.
inline mrtok::PatchMosaic simulate_build(const mrtok::Image& img, const mrtok::QuadtreeConfig& cfg,
                                         const mrtok::PatchScorer& scorer) {
    const auto candidates = mrtok::enumerate_candidates(img.height, img.width, cfg);
    const mrtok::PatchScores scores = scorer(img, candidates);
    mrtok::PatchMosaic mosaic = mrtok::initial_grid(img.height, img.width, cfg);
    while (mosaic.patches.size() < static_cast<std::size_t>(cfg.target_patches)) {
        const auto eligible = mrtok::splittable(mosaic, cfg.s_min);
        if (eligible.empty()) break;
        const mrtok::PatchRect* best = nullptr;
        for (const auto& p : eligible) {
            if (!best) {
                best = &p;
                continue;
            }
            const double sp = scores.at(p), sb = scores.at(*best);
            if (sp > sb) {
                best = &p;
            } else if (sp == sb) {
                if (p.size > best->size) {
                    best = &p;
                } else if (p.size == best->size) {
                    const auto zp = oracles::interleave_bits_slow(static_cast<std::uint32_t>(p.x / cfg.s_min),
                                                                  static_cast<std::uint32_t>(p.y / cfg.s_min));
                    const auto zb = oracles::interleave_bits_slow(static_cast<std::uint32_t>(best->x / cfg.s_min),
                                                                  static_cast<std::uint32_t>(best->y / cfg.s_min));
                    if (zp < zb) best = &p;
                }
            }
        }
        mosaic = mrtok::split_patch(mosaic, *best);
    }
    return mosaic;
}

}  // namespace helpers

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"
#include "mrtok/quadtree.hpp"
#include "mrtok/rng.hpp"
#include "mrtok/scorers.hpp"
#include "oracles.hpp"

using namespace mrtok;

TEST_CASE("initial_grid: counts and coverage") {
    const QuadtreeConfig cfg{16, 64, 64};
    REQUIRE(initial_grid(256, 256, cfg).patches.size() == 16);
    REQUIRE(initial_grid(64, 64, cfg).patches.size() == 1);

    const PatchMosaic rect = initial_grid(128, 256, cfg);
    REQUIRE(rect.patches.size() == 8);
    REQUIRE(oracles::disjoint_exact_cover(rect));

    REQUIRE_THROWS_AS(initial_grid(100, 256, cfg), contract_error);
}

TEST_CASE("canonical order: z-order on a 2x2 grid is TL, TR, BL, BR") {
    const PatchMosaic m = initial_grid(128, 128, QuadtreeConfig{16, 64, 4});
    REQUIRE(m.patches[0] == PatchRect{0, 0, 64});
    REQUIRE(m.patches[1] == PatchRect{64, 0, 64});
    REQUIRE(m.patches[2] == PatchRect{0, 64, 64});
    REQUIRE(m.patches[3] == PatchRect{64, 64, 64});
}

TEST_CASE("splittable: thresholds on patch size") {
    const QuadtreeConfig cfg{16, 64, 16};
    const PatchMosaic grid = initial_grid(256, 256, cfg);
    REQUIRE(splittable(grid, 16).size() == 16);  // all 64^2 patches

    PatchMosaic full;
    full.image_height = full.image_width = 256;
    full.s_min = 16;
    for (int y = 0; y < 256; y += 16)
        for (int x = 0; x < 256; x += 16) full.patches.push_back({x, y, 16});
    REQUIRE(splittable(full, 16).empty());
}

TEST_CASE("split_patch: counts, quadrants, errors") {
    const QuadtreeConfig cfg{16, 64, 64};
    const PatchMosaic grid = initial_grid(256, 256, cfg);
    const PatchMosaic after = split_patch(grid, grid.patches[0]);
    REQUIRE(after.patches.size() == 19);

    const auto kids = quadrants(PatchRect{64, 0, 64});
    REQUIRE(kids[0] == PatchRect{64, 0, 32});
    REQUIRE(kids[1] == PatchRect{96, 0, 32});
    REQUIRE(kids[2] == PatchRect{64, 32, 32});
    REQUIRE(kids[3] == PatchRect{96, 32, 32});

    REQUIRE_THROWS_AS(split_patch(grid, PatchRect{0, 0, 32}), contract_error);
}

TEST_CASE("split_patch: children occupy the parent's canonical position") {
    const QuadtreeConfig cfg{16, 64, 64};
    PatchMosaic m = initial_grid(256, 256, cfg);
    const PatchRect parent = m.patches[0];
    m = split_patch(m, parent);
    const auto kids = quadrants(parent);
    for (int i = 0; i < 4; ++i) REQUIRE(m.patches[static_cast<std::size_t>(i)] == kids[static_cast<std::size_t>(i)]);
    REQUIRE(m.patches == canonical_order(m));
}

TEST_CASE("invariants hold through random split sequences") {
    DetRng rng(41);
    const QuadtreeConfig cfg{16, 64, 64};
    for (int run = 0; run < 5; ++run) {
        PatchMosaic m = initial_grid(128, 128, cfg);
        std::size_t splits = 0;
        while (true) {
            const auto eligible = splittable(m, cfg.s_min);
            if (eligible.empty() || splits >= 10) break;
            m = split_patch(m, eligible[rng.below(static_cast<std::uint32_t>(eligible.size()))]);
            ++splits;
            REQUIRE(m.patches.size() == 4 + 3 * splits);
            REQUIRE(oracles::disjoint_exact_cover(m));
            REQUIRE(m.patches == canonical_order(m));
        }
    }
}

TEST_CASE("enumerate_candidates: 80 splittable patches for the stock config") {
    const auto cands = enumerate_candidates(256, 256, QuadtreeConfig{16, 64, 64});
    REQUIRE(cands.size() == 80);
    // level-major: the 16 coarse patches come first
    for (int i = 0; i < 16; ++i) REQUIRE(cands[static_cast<std::size_t>(i)].size == 64);
    for (std::size_t i = 16; i < 80; ++i) REQUIRE(cands[i].size == 32);
}

TEST_CASE("build_mosaic: paper patch counts come out exactly") {
    const Image img = Image::filled(256, 256, 0.5f);
    const auto scorer = helpers::hash_scorer(1);
    const int targets[] = {64, 79, 100, 121, 169, 196};
    const int splits[] = {16, 21, 28, 35, 51, 60};
    for (int i = 0; i < 6; ++i) {
        BuildTrace trace;
        const PatchMosaic m =
            build_mosaic(img, QuadtreeConfig{16, 64, targets[i]}, scorer, TargetMode::strict, &trace);
        REQUIRE(m.patches.size() == static_cast<std::size_t>(targets[i]));
        REQUIRE(trace.split_sequence.size() == static_cast<std::size_t>(splits[i]));
    }
    BuildTrace trace;
    const PatchMosaic full = build_mosaic(img, QuadtreeConfig{16, 64, 256}, scorer, TargetMode::strict, &trace);
    REQUIRE(full.patches.size() == 256);
    REQUIRE(trace.split_sequence.size() == 80);
    for (const auto& p : full.patches) REQUIRE(p.size == 16);
    // every split target was distinct, i.e. 80 distinct patches were ever splittable
    std::set<std::pair<std::pair<int, int>, int>> seen;
    for (const auto& p : trace.split_sequence) seen.insert({{p.x, p.y}, p.size});
    REQUIRE(seen.size() == 80);
}

TEST_CASE("build_mosaic: tie-break on a constant image splits coarse patches in z-order") {
    const Image img = Image::filled(256, 256, 0.25f);
    BuildTrace trace;
    const PatchMosaic m =
        build_mosaic(img, QuadtreeConfig{16, 64, 64}, helpers::constant_scorer(0.0), TargetMode::strict, &trace);
    REQUIRE(m.patches.size() == 64);
    for (const auto& p : m.patches) REQUIRE(p.size == 32);
    // the 16 splits hit the coarse grid in canonical z-order
    const PatchMosaic grid = initial_grid(256, 256, QuadtreeConfig{16, 64, 64});
    REQUIRE(trace.split_sequence == grid.patches);
}

TEST_CASE("build_mosaic matches an independent greedy simulation") {
    DetRng rng(43);
    const Image img = Image::filled(128, 128, 0.5f);
    for (int run = 0; run < 8; ++run) {
        const int L = 4 + 3 * static_cast<int>(rng.below(21));
        const QuadtreeConfig cfg{16, 64, L};
        const auto scorer = helpers::hash_scorer(run);
        REQUIRE(build_mosaic(img, cfg, scorer) == helpers::simulate_build(img, cfg, scorer));
    }
}

TEST_CASE("build_mosaic: strict mode rejects unreachable targets, lenient overshoots") {
    const Image img = Image::filled(256, 256, 0.5f);
    const auto scorer = helpers::hash_scorer(2);
    REQUIRE_THROWS_AS(build_mosaic(img, QuadtreeConfig{16, 64, 65}, scorer), contract_error);
    REQUIRE_THROWS_AS(build_mosaic(img, QuadtreeConfig{16, 64, 15}, scorer), contract_error);
    REQUIRE_THROWS_AS(build_mosaic(img, QuadtreeConfig{16, 64, 257}, scorer), contract_error);

    const PatchMosaic m = build_mosaic(img, QuadtreeConfig{16, 64, 65}, scorer, TargetMode::lenient);
    REQUIRE(m.patches.size() == 67);  // first count >= 65
    const PatchMosaic full = build_mosaic(img, QuadtreeConfig{16, 64, 1000}, scorer, TargetMode::lenient);
    REQUIRE(full.patches.size() == 256);
}

TEST_CASE("build_mosaic: determinism and monotone refinement") {
    const Image img = Image::filled(128, 128, 0.5f);
    const QuadtreeConfig cfg{16, 64, 40};
    const auto scorer = helpers::hash_scorer(3);
    BuildTrace trace;
    const PatchMosaic a = build_mosaic(img, cfg, scorer, TargetMode::strict, &trace);
    const PatchMosaic b = build_mosaic(img, cfg, scorer);
    REQUIRE(a == b);
    REQUIRE(trace.counts.front() == 4);
    for (std::size_t i = 1; i < trace.counts.size(); ++i) REQUIRE(trace.counts[i] == trace.counts[i - 1] + 3);

    // replaying the recorded splits reproduces the mosaic patch for patch
    PatchMosaic replay = initial_grid(128, 128, cfg);
    for (const auto& s : trace.split_sequence) replay = split_patch(replay, s);
    REQUIRE(replay == a);
}

TEST_CASE("build_mosaic_batch equals sequential runs") {
    DetRng rng(47);
    std::vector<Image> imgs;
    for (int i = 0; i < 6; ++i) imgs.push_back(oracles::random_image(rng, 128, 128));
    const QuadtreeConfig cfg{16, 64, 31};
    const auto scorer = helpers::hash_scorer(4);
    const auto batch = build_mosaic_batch(imgs, cfg, scorer, TargetMode::strict, 3);
    REQUIRE(batch.size() == imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) REQUIRE(batch[i] == build_mosaic(imgs[i], cfg, scorer));

    std::vector<Image> bad = imgs;
    bad.push_back(Image(64, 64));
    REQUIRE_THROWS_AS(build_mosaic_batch(bad, cfg, scorer), contract_error);
}

TEST_CASE("canonical order matches brute-force bit interleaving") {
    DetRng rng(53);
    const QuadtreeConfig cfg{16, 64, 4};
    for (int run = 0; run < 5; ++run) {
        PatchMosaic m = initial_grid(128, 128, cfg);
        for (int s = 0; s < 6; ++s) {
            const auto eligible = splittable(m, cfg.s_min);
            if (eligible.empty()) break;
            m = split_patch(m, eligible[rng.below(static_cast<std::uint32_t>(eligible.size()))]);
        }
        std::vector<PatchRect> slow = m.patches;
        std::sort(slow.begin(), slow.end(), [&](const PatchRect& a, const PatchRect& b) {
            const auto za = oracles::interleave_bits_slow(static_cast<std::uint32_t>(a.x / 16),
                                                          static_cast<std::uint32_t>(a.y / 16));
            const auto zb = oracles::interleave_bits_slow(static_cast<std::uint32_t>(b.x / 16),
                                                          static_cast<std::uint32_t>(b.y / 16));
            return za < zb;
        });
        REQUIRE(canonical_order(m) == slow);
    }
}

TEST_CASE("scaling every score by a positive factor leaves the mosaic unchanged") {
    DetRng rng(59);
    const Image img = Image::filled(128, 128, 0.5f);
    for (int run = 0; run < 10; ++run) {
        const QuadtreeConfig cfg{16, 64, 4 + 3 * static_cast<int>(rng.below(21))};
        const auto scorer = helpers::hash_scorer(100 + run);
        const double lambda = std::exp(rng.uniform(-8.0, 8.0));
        REQUIRE(build_mosaic(img, cfg, scorer) == build_mosaic(img, cfg, helpers::scaled_scorer(scorer, lambda)));
    }
}

TEST_CASE("doubling image and config yields the same topology at doubled coordinates") {
    DetRng rng(61);
    const Image base = oracles::random_image(rng, 128, 128);
    Image doubled(256, 256);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            for (int c = 0; c < 3; ++c) doubled.at(y, x, c) = base.at(y / 2, x / 2, c);

    const auto scorer_base = [](const Image& img, std::span<const PatchRect> cands) {
        return score_pixel_blur(img, cands, ScorerConfig{ScorerKind::pixel_blur, 16, 1.0, UpsampleMode::nearest});
    };
    const auto scorer_doubled = [](const Image& img, std::span<const PatchRect> cands) {
        return score_pixel_blur(img, cands, ScorerConfig{ScorerKind::pixel_blur, 32, 1.0, UpsampleMode::nearest});
    };
    const PatchMosaic small = build_mosaic(base, QuadtreeConfig{16, 64, 40}, scorer_base);
    const PatchMosaic big = build_mosaic(doubled, QuadtreeConfig{32, 128, 40}, scorer_doubled);
    REQUIRE(big.patches.size() == small.patches.size());
    for (std::size_t i = 0; i < small.patches.size(); ++i) {
        REQUIRE(big.patches[i].x == 2 * small.patches[i].x);
        REQUIRE(big.patches[i].y == 2 * small.patches[i].y);
        REQUIRE(big.patches[i].size == 2 * small.patches[i].size);
    }
}

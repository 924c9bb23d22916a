#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mrtok/rng.hpp"
#include "mrtok/scorers.hpp"
#include "oracles.hpp"

using namespace mrtok;

namespace {

ScorerConfig pb_cfg(int s_rep, UpsampleMode mode = UpsampleMode::bilinear, double scale = 1.0) {
    ScorerConfig c;
    c.kind = ScorerKind::pixel_blur;
    c.s_rep = s_rep;
    c.scoring_scale = scale;
    c.upsample_mode = mode;
    return c;
}

std::vector<oracles::ConvSpec> to_oracle_layers(const FeatureExtractor& fx) {
    std::vector<oracles::ConvSpec> out;
    for (const auto& l : fx.layers)
        out.push_back({l.kernel, l.stride, l.padding, l.in_channels, l.out_channels,
                       l.activation == Activation::relu, l.weight, l.bias});
    return out;
}

FeatureExtractor tiny_random_extractor(std::uint32_t seed) {
    FeatureExtractor fx;
    fx.downscale_ratio = 4;
    DetRng rng(seed);
    const int chans[3] = {3, 4, 5};
    for (int i = 0; i < 2; ++i) {
        ConvLayer l;
        l.kernel = 3;
        l.stride = 2;
        l.padding = 1;
        l.in_channels = chans[i];
        l.out_channels = chans[i + 1];
        l.activation = i == 0 ? Activation::relu : Activation::none;
        l.weight.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * 9);
        for (auto& w : l.weight) w = static_cast<float>(rng.uniform(-0.5, 0.5));
        l.bias.resize(static_cast<std::size_t>(l.out_channels));
        for (auto& b : l.bias) b = static_cast<float>(rng.uniform(-0.1, 0.1));
        fx.layers.push_back(std::move(l));
    }
    fx.validate();
    return fx;
}

}  // namespace

TEST_CASE("pixel-blur: constant patches score zero") {
    const Image img = Image::filled(64, 64, 0.33f);
    const std::vector<PatchRect> cands = {{0, 0, 64}, {0, 0, 32}, {32, 32, 32}};
    const PatchScores s = score_pixel_blur(img, cands, pb_cfg(16));
    for (const auto& p : cands) REQUIRE(s.at(p) == 0.0);
}

TEST_CASE("pixel-blur: pixel checkerboard hand case gives 1/12") {
    // Channel 0 alternates 0/1 per pixel, so every 2x2 downsampling cell
    // averages to 0.5 and the blurred patch is flat 0.5 on that channel;
    // MSE on the channel is 0.25, spread over 3 channels -> 1/12.
    Image img(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            img.at(y, x, 0) = static_cast<float>((x + y) % 2);
            img.at(y, x, 1) = 0.5f;
            img.at(y, x, 2) = 0.25f;
        }
    const std::vector<PatchRect> cands = {{0, 0, 32}};
    const PatchScores s = score_pixel_blur(img, cands, pb_cfg(16, UpsampleMode::nearest));
    REQUIRE_THAT(s.at(cands[0]), Catch::Matchers::WithinRel(0.25 / 3.0, 1e-12));
}

TEST_CASE("pixel-blur matches the literal per-patch oracle") {
    DetRng rng(71);
    const Image img = oracles::random_image(rng, 128, 128);
    const auto cands = enumerate_candidates(128, 128, QuadtreeConfig{16, 64, 4});
    for (const UpsampleMode mode : {UpsampleMode::nearest, UpsampleMode::bilinear}) {
        const PatchScores s = score_pixel_blur(img, cands, pb_cfg(16, mode));
        for (const auto& p : cands) {
            const double expect = oracles::pixel_blur_score(img, p, 16, mode == UpsampleMode::nearest);
            REQUIRE_THAT(s.at(p), Catch::Matchers::WithinRel(expect, 1e-10));
        }
    }
}

TEST_CASE("pixel-blur rejects undersized or misaligned candidates") {
    const Image img = Image::filled(64, 64, 0.5f);
    REQUIRE_THROWS_AS(score_pixel_blur(img, std::vector<PatchRect>{{0, 0, 8}}, pb_cfg(16)), contract_error);
    REQUIRE_THROWS_AS(score_pixel_blur(img, std::vector<PatchRect>{{0, 0, 24}}, pb_cfg(16)), contract_error);
}

TEST_CASE("extract_features: identity extractor reproduces the image") {
    DetRng rng(73);
    const Image img = oracles::random_image(rng, 8, 12);
    const FeatureMap fm = extract_features(img, identity_extractor());
    REQUIRE(fm.height == 8);
    REQUIRE(fm.width == 12);
    REQUIRE(fm.depth == 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 12; ++x)
            for (int c = 0; c < 3; ++c) REQUIRE(fm.at(y, x, c) == static_cast<double>(img.at(y, x, c)));
}

TEST_CASE("extract_features: average-pool conv equals downsample_area") {
    DetRng rng(79);
    const Image img = oracles::random_image(rng, 16, 16);
    FeatureExtractor fx;
    fx.downscale_ratio = 4;
    ConvLayer l;
    l.kernel = 4;
    l.stride = 4;
    l.padding = 0;
    l.in_channels = 3;
    l.out_channels = 3;
    l.activation = Activation::none;
    l.weight.assign(static_cast<std::size_t>(3) * 3 * 16, 0.0f);
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 16; ++k) l.weight[(static_cast<std::size_t>(c) * 3 + c) * 16 + k] = 1.0f / 16.0f;
    l.bias.assign(3, 0.0f);
    fx.layers.push_back(std::move(l));
    const FeatureMap fm = extract_features(img, fx);
    const Image down = downsample_area(img, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c)
                REQUIRE_THAT(fm.at(y, x, c), Catch::Matchers::WithinAbs(static_cast<double>(down.at(y, x, c)), 1e-7));
}

TEST_CASE("extract_features matches the nested-loop convolution oracle") {
    DetRng rng(83);
    const Image img = oracles::random_image(rng, 16, 16);
    const FeatureExtractor fx = tiny_random_extractor(5);
    const FeatureMap fm = extract_features(img, fx);
    int oh = 0, ow = 0;
    const auto expect = oracles::conv_stack(oracles::to_f64(img.data), 16, 16, to_oracle_layers(fx), oh, ow);
    REQUIRE(fm.height == oh);
    REQUIRE(fm.width == ow);
    for (std::size_t i = 0; i < expect.size(); ++i)
        REQUIRE_THAT(fm.data[i], Catch::Matchers::WithinAbs(expect[i], 1e-10));
}

TEST_CASE("extract_features validates shapes") {
    FeatureExtractor fx = identity_extractor();
    fx.layers[0].weight.pop_back();
    REQUIRE_THROWS_AS(extract_features(Image::filled(8, 8, 0.5f), fx), contract_error);
    FeatureExtractor fx2 = identity_extractor();
    fx2.downscale_ratio = 2;
    REQUIRE_THROWS_AS(extract_features(Image::filled(8, 8, 0.5f), fx2), contract_error);
}

TEST_CASE("roi_slice: arithmetic, whole image, oracle, misalignment") {
    DetRng rng(89);
    FeatureMap fm;
    fm.height = 8;
    fm.width = 8;
    fm.depth = 5;
    fm.downscale_ratio = 32;
    fm.data.resize(static_cast<std::size_t>(8) * 8 * 5);
    for (auto& v : fm.data) v = rng.uniform01();

    const FeatureMap s = roi_slice(fm, PatchRect{0, 0, 64});
    REQUIRE(s.height == 2);
    REQUIRE(s.width == 2);
    REQUIRE(s.depth == 5);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int d = 0; d < 5; ++d) REQUIRE(s.at(y, x, d) == fm.at(y, x, d));

    const FeatureMap whole = roi_slice(fm, PatchRect{0, 0, 256});
    REQUIRE(whole.data == fm.data);

    for (int run = 0; run < 10; ++run) {
        const int cs = 1 + static_cast<int>(rng.below(4));
        const int cx = static_cast<int>(rng.below(static_cast<std::uint32_t>(8 - cs + 1)));
        const int cy = static_cast<int>(rng.below(static_cast<std::uint32_t>(8 - cs + 1)));
        const FeatureMap sub = roi_slice(fm, PatchRect{cx * 32, cy * 32, cs * 32});
        for (int y = 0; y < cs; ++y)
            for (int x = 0; x < cs; ++x)
                for (int d = 0; d < 5; ++d) REQUIRE(sub.at(y, x, d) == fm.at(cy + y, cx + x, d));
    }

    REQUIRE_THROWS_AS(roi_slice(fm, PatchRect{16, 0, 64}), contract_error);
}

TEST_CASE("feature scorer with the identity extractor equals pixel-blur exactly") {
    DetRng rng(97);
    const Image img = oracles::random_image(rng, 128, 128);
    const auto cands = enumerate_candidates(128, 128, QuadtreeConfig{16, 64, 4});
    ScorerConfig cfg = pb_cfg(16, UpsampleMode::nearest);
    cfg.kind = ScorerKind::feature_based;
    const PatchScores feat = score_feature_based(img, cands, identity_extractor(), cfg);
    const PatchScores blur = score_pixel_blur(img, cands, pb_cfg(16, UpsampleMode::nearest));
    for (const auto& p : cands) REQUIRE(feat.at(p) == blur.at(p));  // bitwise
}

TEST_CASE("feature scorer: constant image scores zero everywhere") {
    const Image img = Image::filled(64, 64, 0.7f);
    const auto cands = enumerate_candidates(64, 64, QuadtreeConfig{8, 32, 4});
    ScorerConfig cfg;
    cfg.kind = ScorerKind::feature_based;
    cfg.s_rep = 8;
    const PatchScores s = score_feature_based(img, cands, tiny_random_extractor(6), cfg);
    for (const auto& p : cands) REQUIRE_THAT(s.at(p), Catch::Matchers::WithinAbs(0.0, 1e-18));
}

TEST_CASE("feature scorer matches the materialize-both-maps oracle") {
    DetRng rng(101);
    const Image img = oracles::random_image(rng, 64, 64);
    const FeatureExtractor fx = tiny_random_extractor(7);
    const auto cands = enumerate_candidates(64, 64, QuadtreeConfig{8, 32, 4});
    FeatureScoreDiag diag;
    ScorerConfig cfg;
    cfg.kind = ScorerKind::feature_based;
    cfg.s_rep = 8;
    cfg.upsample_mode = UpsampleMode::nearest;
    const PatchScores s = score_feature_based(img, cands, fx, cfg, &diag);
    REQUIRE(diag.forward_passes == 3);  // original + one per distinct size {32, 16}
    for (const auto& p : cands) {
        const double expect = oracles::feature_score(img, p, 8, true, to_oracle_layers(fx), fx.downscale_ratio);
        REQUIRE_THAT(s.at(p), Catch::Matchers::WithinRel(expect, 1e-5));
    }
}

TEST_CASE("feature scorer scaled path: three passes, deterministic, zero on constants") {
    const auto cands = enumerate_candidates(256, 256, QuadtreeConfig{16, 64, 16});
    ScorerConfig cfg;
    cfg.kind = ScorerKind::feature_based;
    cfg.s_rep = 16;
    cfg.scoring_scale = 0.75;
    const FeatureExtractor fx = default_extractor(9);

    const Image flat = Image::filled(256, 256, 0.41f);
    FeatureScoreDiag diag;
    const PatchScores zero = score_feature_based(flat, cands, fx, cfg, &diag);
    REQUIRE(diag.forward_passes == 3);
    for (const auto& p : cands) REQUIRE_THAT(zero.at(p), Catch::Matchers::WithinAbs(0.0, 1e-15));

    DetRng rng(103);
    const Image img = oracles::random_image(rng, 256, 256);
    const PatchScores a = score_feature_based(img, cands, fx, cfg);
    const PatchScores b = score_feature_based(img, cands, fx, cfg);
    for (const auto& p : cands) {
        REQUIRE(a.at(p) == b.at(p));
        REQUIRE(std::isfinite(a.at(p)));
        REQUIRE(a.at(p) >= 0.0);
    }
}

TEST_CASE("saliency scorer: uniform, delta, oracle, ratio, errors") {
    const auto cands = enumerate_candidates(64, 64, QuadtreeConfig{8, 32, 4});

    SaliencyMap uniform;
    uniform.height = uniform.width = 64;
    uniform.data.assign(64 * 64, 0.375);
    const PatchScores u = score_from_saliency_map(uniform, cands, 64, 64);
    for (const auto& p : cands) REQUIRE_THAT(u.at(p), Catch::Matchers::WithinRel(0.375, 1e-12));

    SaliencyMap delta;
    delta.height = delta.width = 64;
    delta.data.assign(64 * 64, 0.0);
    delta.data[static_cast<std::size_t>(5) * 64 + 9] = 1.0;  // pixel (x=9, y=5)
    const PatchScores d = score_from_saliency_map(delta, cands, 64, 64);
    for (const auto& p : cands) {
        const bool contains = p.x <= 9 && 9 < p.x + p.size && p.y <= 5 && 5 < p.y + p.size;
        const double expect = contains ? 1.0 / (static_cast<double>(p.size) * p.size) : 0.0;
        REQUIRE_THAT(d.at(p), Catch::Matchers::WithinAbs(expect, 1e-15));
    }

    DetRng rng(107);
    SaliencyMap random_map;
    random_map.height = random_map.width = 64;
    random_map.data.resize(64 * 64);
    for (auto& v : random_map.data) v = rng.uniform01();
    const PatchScores r = score_from_saliency_map(random_map, cands, 64, 64);
    for (const auto& p : cands)
        REQUIRE_THAT(r.at(p), Catch::Matchers::WithinRel(oracles::saliency_pool(random_map.data, 64, p), 1e-12));

    // integer-downscaled map: patch mean equals the mean over covered cells
    SaliencyMap halfres;
    halfres.height = halfres.width = 32;
    halfres.data.resize(32 * 32);
    for (auto& v : halfres.data) v = rng.uniform01();
    const PatchScores h = score_from_saliency_map(halfres, cands, 64, 64);
    for (const auto& p : cands) {
        double acc = 0.0;
        int n = 0;
        for (int y = p.y / 2; y < (p.y + p.size) / 2; ++y)
            for (int x = p.x / 2; x < (p.x + p.size) / 2; ++x) {
                acc += halfres.data[static_cast<std::size_t>(y) * 32 + x];
                ++n;
            }
        REQUIRE_THAT(h.at(p), Catch::Matchers::WithinRel(acc / n, 1e-12));
    }

    SaliencyMap bad;
    bad.height = 48;
    bad.width = 64;
    bad.data.assign(48 * 64, 0.0);
    REQUIRE_THROWS_AS(score_from_saliency_map(bad, cands, 64, 64), contract_error);
}

TEST_CASE("saliency scorer is linear in the map") {
    DetRng rng(109);
    const auto cands = enumerate_candidates(64, 64, QuadtreeConfig{8, 32, 4});
    SaliencyMap a, b, mix;
    a.height = a.width = b.height = b.width = mix.height = mix.width = 64;
    a.data.resize(64 * 64);
    b.data.resize(64 * 64);
    mix.data.resize(64 * 64);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] = rng.uniform01();
        b.data[i] = rng.uniform01();
        mix.data[i] = 2.0 * a.data[i] + 0.5 * b.data[i];
    }
    const PatchScores sa = score_from_saliency_map(a, cands, 64, 64);
    const PatchScores sb = score_from_saliency_map(b, cands, 64, 64);
    const PatchScores sm = score_from_saliency_map(mix, cands, 64, 64);
    for (const auto& p : cands)
        REQUIRE_THAT(sm.at(p), Catch::Matchers::WithinRel(2.0 * sa.at(p) + 0.5 * sb.at(p), 1e-12));
}

TEST_CASE("extractor bundle round-trips through JSON + tensor files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mrtok_test_extractor";
    fs::create_directories(dir);
    const FeatureExtractor fx = default_extractor(21);
    save_extractor(fx, dir / "fx.json");
    const FeatureExtractor back = load_extractor(dir / "fx.json");
    REQUIRE(back.downscale_ratio == fx.downscale_ratio);
    REQUIRE(back.layers.size() == fx.layers.size());
    for (std::size_t i = 0; i < fx.layers.size(); ++i) {
        REQUIRE(back.layers[i].weight == fx.layers[i].weight);
        REQUIRE(back.layers[i].bias == fx.layers[i].bias);
        REQUIRE(back.layers[i].stride == fx.layers[i].stride);
    }
}

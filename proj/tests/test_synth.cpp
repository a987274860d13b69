#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace pseg;

namespace {

const std::vector<TextureKind> kAllKinds{TextureKind::Flat, TextureKind::Ripple, TextureKind::Rocky, TextureKind::Crater};

Layout quadrants(int size) {
    const int h = size / 2;
    std::vector<RectRegion> rects;
    for (int q = 0; q < 4; ++q)
        rects.push_back({(q / 2) * h, (q % 2) * h, (q / 2 + 1) * h, (q % 2 + 1) * h, default_texture(kAllKinds[static_cast<std::size_t>(q)], q)});
    return layout_from_rects(size, size, rects);
}

}  // namespace

TEST(Synth, SingleFlatRegionHasConstantMask) {
    const auto layout = layout_from_rects(64, 64, {{0, 0, 64, 64, default_texture(TextureKind::Flat, 0)}});
    const auto img = generate_image(layout, 3);
    for (int v : img.mask.data()) EXPECT_EQ(v, 0);
    for (double v : img.image.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Synth, SameSeedSameImage) {
    const auto a = generate_image(quadrants(96), 5);
    const auto b = generate_image(quadrants(96), 5);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_NE(a.image, generate_image(quadrants(96), 6).image);
}

TEST(Synth, MaskHistogramEqualsRegionAreas) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto layout = random_layout(80, kAllKinds, rng);
        const auto img = generate_image(layout, 11);
        std::vector<long> from_mask(4, 0), from_regions(4, 0);
        for (int v : img.mask.data()) ++from_mask[static_cast<std::size_t>(v)];
        for (int id : layout.regions.data()) ++from_regions[static_cast<std::size_t>(layout.specs[static_cast<std::size_t>(id)].class_id)];
        EXPECT_EQ(from_mask, from_regions);
    }
}

TEST(Synth, LayoutErrors) {
    const auto flat = default_texture(TextureKind::Flat, 0);
    EXPECT_THROW(layout_from_rects(10, 10, {{0, 0, 10, 6, flat}, {0, 5, 10, 10, flat}}), ValidationError);
    EXPECT_THROW(layout_from_rects(10, 10, {{0, 0, 10, 5, flat}}), ValidationError);
    EXPECT_THROW(layout_from_rects(10, 10, {{0, 0, 11, 10, flat}}), ValidationError);
}

TEST(Synth, QuadrantTexturesAreSeparable) {
    // per-pixel features away from the quadrant seams, z-scored; every pair
    // of class means must be 3x the pooled per-feature standard deviation apart
    const auto img = generate_image(quadrants(256), 1);
    const auto stack = extract_features(img.image);
    std::vector<double> v;
    std::vector<int> lab;
    for (int r = 0; r < 256; ++r)
        for (int c = 0; c < 256; ++c) {
            if (std::abs(r - 128) < 16 || std::abs(c - 128) < 16) continue;
            for (const auto& p : stack.planes) v.push_back(p(r, c));
            lab.push_back(img.mask(r, c));
        }
    FeatureMatrix x(lab.size(), stack.depth(), v);
    x = Normalizer::fit(x).apply(x);
    const std::size_t d = x.n_dims();
    std::vector<std::vector<double>> mu(4, std::vector<double>(d, 0.0)), var(4, std::vector<double>(d, 0.0));
    std::vector<double> cnt(4, 0.0);
    for (std::size_t n = 0; n < lab.size(); ++n) {
        cnt[static_cast<std::size_t>(lab[n])] += 1;
        for (std::size_t k = 0; k < d; ++k) mu[static_cast<std::size_t>(lab[n])][k] += x(n, k);
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (double& m : mu[c]) m /= cnt[c];
    for (std::size_t n = 0; n < lab.size(); ++n) {
        const auto c = static_cast<std::size_t>(lab[n]);
        for (std::size_t k = 0; k < d; ++k) var[c][k] += (x(n, k) - mu[c][k]) * (x(n, k) - mu[c][k]) / cnt[c];
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) {
            double pooled = 0.0;
            for (std::size_t k = 0; k < d; ++k) pooled += (var[a][k] + var[b][k]) / 2.0;
            const double ratio = std::sqrt(squared_distance(mu[a], mu[b])) / std::sqrt(pooled / static_cast<double>(d));
            EXPECT_GE(ratio, 3.0) << texture_name(kAllKinds[a]) << " vs " << texture_name(kAllKinds[b]);
        }
}

TEST(Dataset, FoldPlansAndDeterminism) {
    const auto a = generate_dataset(3, 48, kAllKinds, 3, 9);
    ASSERT_EQ(a.plan.n_folds(), 3u);
    for (const auto& f : a.plan.folds) EXPECT_EQ(f.size(), 1u);
    const auto b = generate_dataset(3, 48, kAllKinds, 3, 9);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.images[i].image, b.images[i].image);
    EXPECT_EQ(a.class_names, (std::vector<std::string>{"flat", "ripple", "rocky", "crater"}));
    EXPECT_EQ(dataset_image(2, 48, kAllKinds, 9).image, a.images[2].image);
}

TEST(Dataset, ExcludedClassNeverAppears) {
    const std::vector<TextureKind> no_crater{TextureKind::Flat, TextureKind::Ripple, TextureKind::Rocky};
    const auto ds = generate_dataset(8, 48, no_crater, 2, 4);
    for (const auto& im : ds.images)
        for (int v : im.mask.data()) EXPECT_LT(v, 3);
}

TEST(Dataset, NinetyEightImagesSplit32_33_33) {
    const auto plan = make_fold_plan(98, 3);
    EXPECT_EQ(plan.folds[0].size(), 32u);
    EXPECT_EQ(plan.folds[1].size(), 33u);
    EXPECT_EQ(plan.folds[2].size(), 33u);
    EXPECT_NO_THROW(plan.validate(98));
}

TEST(Texture, ParseAndValidate) {
    EXPECT_EQ(parse_texture("rocky"), TextureKind::Rocky);
    EXPECT_THROW(parse_texture("sand"), ValidationError);
    auto s = default_texture(TextureKind::Ripple, 0);
    s.wavelength = 0.0;
    EXPECT_THROW(s.validate(), ValidationError);
}

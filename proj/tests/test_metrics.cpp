#include <cmath>

#include <gtest/gtest.h>

#include "fgsb/metrics.hpp"
#include "support.hpp"

using namespace fgsb;
using namespace fgsb::metrics;
using fgsb::testing::random_image;

namespace {

// Fixtures shared with the reference SSIM values below; both are evaluated with a
// Gaussian-weighted reference implementation (sigma 1.5, population covariance).
Image wave_x() {
    Image img(32, 40);
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 40; ++c) {
            img.at(r, c) = static_cast<float>(0.5 + 0.4 * std::sin(0.3 * r) * std::cos(0.2 * c));
        }
    }
    return img;
}

Image wave_y() {
    Image img(32, 40);
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 40; ++c) {
            img.at(r, c) = static_cast<float>(0.5 + 0.35 * std::sin(0.3 * r + 0.4) * std::cos(0.25 * c) +
                                              0.05 * std::cos(0.9 * r * c / 7.0));
        }
    }
    return img;
}

Image complement(const Image& x) {
    Image out = x;
    for (auto& v : out.pixels()) {
        v = 1.0F - v;
    }
    return out;
}

double mse(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

Mask block_mask(std::int64_t h, std::int64_t w, std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1) {
    Mask m(h, w);
    for (auto r = r0; r < r1; ++r) {
        for (auto c = c0; c < c1; ++c) {
            m.set(r, c, true);
        }
    }
    return m;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
    const auto x = random_image(8, 8, 1, 0.0F, 1.0F);
    EXPECT_EQ(psnr(x, x), kPsnrCap);
}

TEST(Psnr, UniformOffsetOfOneTenthIsTwentyDecibels) {
    const auto x = random_image(16, 16, 2, 0.0F, 0.9F);
    Image y = x;
    for (auto& v : y.pixels()) {
        v += 0.1F;
    }
    EXPECT_NEAR(psnr(y, x), 20.0, 1e-5);
}

TEST(Psnr, MatchesFormulaOnRandomPair) {
    const auto a = random_image(20, 30, 3, 0.0F, 1.0F);
    const auto b = random_image(20, 30, 4, 0.0F, 1.0F);
    EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(1.0 / mse(a, b)), 1e-9);
    EXPECT_NEAR(psnr(a, b, 2.0), 10.0 * std::log10(4.0 / mse(a, b)), 1e-9);
}

TEST(Psnr, RegionRestrictsThePixels) {
    Image a(4, 4, 0.5F);
    Image b(4, 4, 0.5F);
    b.at(0, 0) = 0.0F;  // outside the region
    b.at(3, 3) = 0.4F;
    const auto region = block_mask(4, 4, 2, 4, 2, 4);
    EXPECT_NEAR(psnr(b, a, 1.0, &region), 10.0 * std::log10(1.0 / (0.01 / 4.0)), 1e-4);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
    const auto x = random_image(24, 24, 5, 0.2F, 0.8F);
    const auto noise = random_image(24, 24, 6, -1.0F, 1.0F);
    double previous = kPsnrCap + 1.0;
    for (float amp : {0.01F, 0.02F, 0.05F, 0.1F, 0.2F}) {
        Image y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            y.pixels()[i] += amp * noise.pixels()[i];
        }
        const double p = psnr(y, x);
        EXPECT_LT(p, previous);
        previous = p;
    }
}

TEST(Ssim, IdenticalIsOneAndSymmetric) {
    const auto a = wave_x();
    const auto b = wave_y();
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, MatchesReferenceImplementation) {
    EXPECT_NEAR(ssim(wave_x(), wave_y()), 0.41542880706818014, 1e-6);
    EXPECT_NEAR(ssim(wave_x(), complement(wave_x())), -0.7180871496778589, 1e-6);
    EXPECT_LT(ssim(wave_x(), complement(wave_x())), 0.5);
}

TEST(Ssim, ConstantImagesReduceToLuminanceTerm) {
    const double a = 0.3;
    const double b = 0.4;
    const double c1 = 0.01 * 0.01;
    const double oracle = (2 * a * b + c1) / (a * a + b * b + c1);
    EXPECT_NEAR(ssim(Image(16, 16, 0.3F), Image(16, 16, 0.4F)), oracle, 1e-6);
}

TEST(Ssim, RejectsImagesSmallerThanTheWindow) {
    EXPECT_THROW((void)ssim(Image(10, 20), Image(10, 20)), std::invalid_argument);
    EXPECT_THROW((void)ssim(Image(12, 12), Image(12, 13)), std::invalid_argument);
}

TEST(Nrmse, ClosedForms) {
    const auto x = random_image(9, 9, 7, 0.1F, 1.0F);
    EXPECT_EQ(nrmse(x, x), 0.0);
    EXPECT_NEAR(nrmse(Image(5, 5, 1.1F), Image(5, 5, 1.0F)), 0.1, 1e-6);
    EXPECT_THROW((void)nrmse(x, Image(9, 9, 0.0F)), std::invalid_argument);
}

TEST(Nrmse, MatchesNormRatioAndIsScaleFree) {
    const auto a = random_image(12, 15, 8, 0.0F, 1.0F);
    const auto b = random_image(12, 15, 9, 0.0F, 1.0F);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        num += d * d;
        den += static_cast<double>(b.pixels()[i]) * b.pixels()[i];
    }
    EXPECT_NEAR(nrmse(a, b), std::sqrt(num / den), 1e-9);
    Image as = a;
    Image bs = b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        as.pixels()[i] *= 3.5F;
        bs.pixels()[i] *= 3.5F;
    }
    EXPECT_NEAR(nrmse(as, bs), nrmse(a, b), 1e-6);
}

TEST(DiceRecall, TableCases) {
    const auto a = block_mask(20, 20, 0, 10, 0, 10);
    const auto far = block_mask(20, 20, 10, 20, 10, 20);
    const auto shifted = block_mask(20, 20, 0, 10, 5, 15);  // 100 pixels, 50 shared with a

    auto same = dice_recall(a, a);
    EXPECT_EQ(same.dice, 1.0);
    EXPECT_EQ(same.recall, 1.0);
    auto disjoint = dice_recall(a, far);
    EXPECT_EQ(disjoint.dice, 0.0);
    EXPECT_EQ(disjoint.recall, 0.0);
    auto half = dice_recall(shifted, a);
    EXPECT_DOUBLE_EQ(half.dice, 0.5);
    EXPECT_DOUBLE_EQ(half.recall, 0.5);
    auto empty = dice_recall(Mask(20, 20), Mask(20, 20));
    EXPECT_EQ(empty.dice, 1.0);
    EXPECT_EQ(empty.recall, 1.0);
}

TEST(DiceRecall, BoundedAndEqualForEqualSizes) {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 50; ++trial) {
        Mask p(12, 12);
        Mask t(12, 12);
        for (int r = 0; r < 12; ++r) {
            for (int c = 0; c < 12; ++c) {
                p.set(r, c, coin(rng));
                t.set(r, c, coin(rng));
            }
        }
        const auto o = dice_recall(p, t);
        EXPECT_LE(o.dice, 1.0);
        EXPECT_GE(o.dice, 0.0);
        if (p.count() == t.count()) {
            EXPECT_DOUBLE_EQ(o.dice, o.recall);
        }
    }
}

TEST(DiceRecall, RejectsMismatchedShapes) {
    EXPECT_THROW((void)dice_recall(Mask(3, 3), Mask(3, 4)), std::invalid_argument);
}

TEST(Summary, PopulationStatistics) {
    const auto s = summarize({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
    EXPECT_EQ(s.count, 4U);
}

TEST(Evaluate, LesionScoresOnlyOnLesionSlices) {
    Image ref(16, 16, -0.2F);
    Image lesion_ref = ref;
    for (int r = 4; r < 8; ++r) {
        for (int c = 4; c < 8; ++c) {
            lesion_ref.at(r, c) = 0.9F;
        }
    }
    EvaluationOptions opts;
    opts.lesion_threshold = 0.7F;
    const auto clean = evaluate_slice("clean", ref, ref, nullptr, opts);
    const auto hit = evaluate_slice("hit", lesion_ref, lesion_ref, nullptr, opts);
    const auto miss = evaluate_slice("miss", ref, lesion_ref, nullptr, opts);
    EXPECT_FALSE(clean.has_lesion);
    EXPECT_TRUE(hit.has_lesion);
    EXPECT_EQ(*hit.recall, 1.0);
    EXPECT_EQ(*miss.recall, 0.0);
    EXPECT_EQ(hit.psnr, kPsnrCap);

    const auto report = aggregate({clean, hit, miss});
    ASSERT_TRUE(report.recall.has_value());
    EXPECT_EQ(report.recall->count, 2U);
    EXPECT_DOUBLE_EQ(report.recall->mean, 0.5);
    EXPECT_EQ(report.psnr.count, 3U);
    const auto j = report.to_json();
    EXPECT_EQ(j.at("slices").size(), 3U);
    EXPECT_TRUE(j.at("aggregate").contains("recall"));
}

TEST(Evaluate, SuppliedMasksReplaceThresholdedReference) {
    Image ref(16, 16, 0.0F);
    Mask truth = block_mask(16, 16, 0, 4, 0, 4);
    EvaluationOptions opts;
    opts.lesion_threshold = 0.7F;
    const auto s = evaluate_slice("s", ref, ref, &truth, opts);
    EXPECT_TRUE(s.has_lesion);
    EXPECT_EQ(*s.recall, 0.0);
}

TEST(Evaluate, UnitRangeMapping) {
    Image x(1, 3);
    x.at(0, 0) = -1.0F;
    x.at(0, 1) = 0.0F;
    x.at(0, 2) = 1.0F;
    const auto u = to_unit_range(x);
    EXPECT_EQ(u.at(0, 0), 0.0F);
    EXPECT_EQ(u.at(0, 1), 0.5F);
    EXPECT_EQ(u.at(0, 2), 1.0F);
}

#include <cmath>
#include <map>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fgsb/losses.hpp"
#include "fgsb/models.hpp"
#include "fgsb/rng.hpp"
#include "gradcheck.hpp"

using namespace fgsb;
using fgsb::testing::gradcheck;
using fgsb::testing::mini_model_options;
using fgsb::testing::trainable;

namespace {

double scalar(const torch::Tensor& t) { return t.item<double>(); }

/// Critic stand-in returning the same score for every sample.
struct ConstantCritic {
    double c;
    torch::Tensor operator()(const torch::Tensor& x, const torch::Tensor&, const std::optional<torch::Tensor>&) const {
        return torch::full({x.size(0)}, c, x.options());
    }
};

}  // namespace

TEST(Rec, ClosedForms) {
    const auto x = torch::randn({2, 1, 8, 8}, torch::kDouble);
    EXPECT_EQ(scalar(loss_rec(x, x)), 0.0);
    EXPECT_NEAR(scalar(loss_rec(x + 0.2, x)), 0.2, 1e-12);
    const auto y = torch::randn({2, 1, 8, 8}, torch::kDouble);
    double sum = 0.0;
    auto xa = x.accessor<double, 4>();
    auto ya = y.accessor<double, 4>();
    for (int b = 0; b < 2; ++b) {
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                sum += std::abs(xa[b][0][r][c] - ya[b][0][r][c]);
            }
        }
    }
    EXPECT_NEAR(scalar(loss_rec(x, y)), sum / 128.0, 1e-12);
    EXPECT_THROW((void)loss_rec(x, torch::zeros({2, 1, 8, 7})), std::invalid_argument);
}

TEST(Rec, TriangleInequality) {
    torch::manual_seed(1);
    for (int k = 0; k < 20; ++k) {
        const auto a = torch::randn({1, 1, 6, 6}, torch::kDouble);
        const auto b = torch::randn({1, 1, 6, 6}, torch::kDouble);
        const auto c = torch::randn({1, 1, 6, 6}, torch::kDouble);
        EXPECT_LE(scalar(loss_rec(a, c)), scalar(loss_rec(a, b)) + scalar(loss_rec(b, c)) + 1e-12);
    }
}

TEST(Cpl, ClosedFormsAndLocality) {
    const auto x_b = torch::randn({1, 1, 8, 8}, torch::kDouble);
    const auto x_hat = torch::randn({1, 1, 8, 8}, torch::kDouble);
    EXPECT_EQ(scalar(loss_cpl(x_hat, x_b, torch::zeros_like(x_b))), 0.0);
    EXPECT_NEAR(scalar(loss_cpl(x_b + 0.1, x_b, torch::ones_like(x_b))), 0.01, 1e-12);

    auto prior = torch::zeros_like(x_b);
    prior.narrow(2, 2, 3).narrow(3, 1, 4).fill_(1.0);
    const auto perturb = torch::randn_like(x_hat) * 10.0 * (1.0 - prior);
    EXPECT_EQ(scalar(loss_cpl(x_hat, x_b, prior)), scalar(loss_cpl(x_hat + perturb, x_b, prior)));
}

TEST(PatchNce, UniformLogitsGiveLogOfCandidates) {
    for (std::int64_t n : {2, 16, 256}) {
        const auto v = torch::full({2, n, 8}, 1.0 / std::sqrt(8.0), torch::kDouble);
        EXPECT_NEAR(scalar(patchnce_from_embeddings(v, v)), std::log(static_cast<double>(n)), 1e-9);
    }
}

TEST(PatchNce, AlignedPositivesMatchClosedForm) {
    const auto e = torch::eye(256, torch::kDouble).unsqueeze(0);
    const double tau = 0.07;
    const double oracle = -std::log(std::exp(1.0 / tau) / (std::exp(1.0 / tau) + 255.0));
    const double value = scalar(patchnce_from_embeddings(e, e, tau));
    EXPECT_NEAR(value, oracle, 1e-9);
    EXPECT_LT(value, 2e-4);
}

TEST(PatchNce, NonNegativeAndOrderFree) {
    torch::manual_seed(2);
    for (int k = 0; k < 10; ++k) {
        auto q = torch::randn({2, 32, 16}, torch::kDouble);
        auto kk = torch::randn({2, 32, 16}, torch::kDouble);
        q = q / q.norm(2, -1, true);
        kk = kk / kk.norm(2, -1, true);
        const double base = scalar(patchnce_from_embeddings(q, kk));
        EXPECT_GE(base, 0.0);
        const auto perm = torch::randperm(32, torch::kLong);
        EXPECT_NEAR(scalar(patchnce_from_embeddings(q.index_select(1, perm), kk.index_select(1, perm))), base, 1e-12);
    }
    const auto one = torch::ones({1, 1, 4}, torch::kDouble);
    EXPECT_THROW((void)patchnce_from_embeddings(one, one), std::invalid_argument);
}

TEST(Sampling, UniformLocationsAreDistinctAndInRange) {
    auto rng = make_rng(3);
    const auto locs = sample_uniform_locations({{8, 8}, {4, 4}}, 20, rng);
    ASSERT_EQ(locs.per_layer.size(), 2U);
    EXPECT_EQ(locs.per_layer[0].numel(), 20);
    EXPECT_EQ(std::get<0>(torch::_unique(locs.per_layer[0])).numel(), 20);
    EXPECT_EQ(locs.per_layer[1].numel(), 16);  // capped at the grid size
    EXPECT_LT(locs.per_layer[0].max().item<std::int64_t>(), 64);
}

TEST(Sampling, FullPriorIsUniform) {
    auto rng = make_rng(4);
    const auto prior = torch::ones({1, 1, 8, 8});
    std::map<std::int64_t, int> hits;
    const int draws = 4000;
    for (int k = 0; k < draws; ++k) {
        const auto locs = sample_weighted_locations({{4, 4}}, prior, 4, rng);
        const auto flat = locs.per_layer[0].reshape({-1});
        for (std::int64_t i = 0; i < flat.numel(); ++i) {
            ++hits[flat[i].item<std::int64_t>()];
        }
    }
    ASSERT_EQ(hits.size(), 16U);
    for (const auto& [cell, count] : hits) {
        EXPECT_NEAR(count, draws * 4 / 16, 0.15 * draws * 4 / 16) << "cell " << cell;
    }
}

TEST(Sampling, ConcentratedPriorStaysInItsQuadrant) {
    auto rng = make_rng(5);
    auto prior = torch::zeros({1, 1, 64, 64});
    prior.narrow(2, 0, 32).narrow(3, 0, 32).fill_(1.0);
    const std::vector<std::pair<std::int64_t, std::int64_t>> grids{{64, 64}, {32, 32}, {16, 16}};
    std::int64_t inside = 0;
    std::int64_t total = 0;
    for (int k = 0; k < 200; ++k) {
        const auto locs = sample_weighted_locations(grids, prior, 32, rng);
        for (std::size_t l = 0; l < grids.size(); ++l) {
            const auto [h, w] = grids[l];
            const auto flat = locs.per_layer[l].reshape({-1});
            for (std::int64_t i = 0; i < flat.numel(); ++i) {
                const auto cell = flat[i].item<std::int64_t>();
                inside += (cell / w < h / 2 && cell % w < w / 2) ? 1 : 0;
                ++total;
            }
        }
    }
    EXPECT_GE(static_cast<double>(inside) / static_cast<double>(total), 0.9);
}

TEST(Sampling, EmptyPriorFallsBackToUniformStream) {
    auto a = make_rng(6);
    auto b = make_rng(6);
    const std::vector<std::pair<std::int64_t, std::int64_t>> grids{{8, 8}, {4, 4}};
    const auto weighted = sample_weighted_locations(grids, torch::zeros({2, 1, 8, 8}), 10, a);
    const auto uniform = sample_uniform_locations(grids, 10, b);
    for (std::size_t l = 0; l < grids.size(); ++l) {
        EXPECT_TRUE(torch::equal(weighted.per_layer[l].reshape({-1}), uniform.per_layer[l].reshape({-1})));
    }
}

TEST(PatchNce, WeightedLossWithEmptyPriorEqualsUnweighted) {
    auto bundle = make_bundle(mini_model_options(), 7);
    auto rng = make_rng(7);
    const auto x_a = torch::randn({2, 1, 8, 8});
    const auto x_hat = torch::randn({2, 1, 8, 8});
    const auto z = bundle.generator->sample_z(2, rng, x_a.options());
    std::vector<torch::Tensor> feats;
    {
        torch::NoGradGuard no_grad;
        feats = bundle.generator->encode(x_a, 0, z);
    }
    auto r1 = make_rng(70);
    auto r2 = make_rng(70);
    const auto weighted = sample_weighted_locations(feature_grids(feats), torch::zeros({2, 1, 8, 8}), 8, r1);
    const auto uniform = sample_uniform_locations(feature_grids(feats), 8, r2);
    const double a = scalar(loss_patchnce(bundle.generator, bundle.projector, x_hat, x_a, 0, z, weighted));
    const double b = scalar(loss_patchnce(bundle.generator, bundle.projector, x_hat, x_a, 0, z, uniform));
    EXPECT_EQ(a, b);
}

TEST(Identity, ComposesRecAndPatchNce) {
    auto bundle = make_bundle(mini_model_options(), 8);
    auto rng = make_rng(8);
    const auto x_b = torch::randn({2, 1, 8, 8});
    const auto z = bundle.generator->sample_z(2, rng, x_b.options());
    const auto locs = sample_uniform_locations({{8, 8}, {4, 4}, {2, 2}, {2, 2}}, 4, rng);
    const auto idt = loss_identity(bundle.generator, bundle.projector, x_b, 1, z, locs);
    const auto out = bundle.generator->forward(x_b, 1, z);
    EXPECT_TRUE(torch::equal(idt.output, out));
    EXPECT_EQ(scalar(idt.rec), scalar(loss_rec(out, x_b)));
    EXPECT_EQ(scalar(idt.reg), scalar(loss_patchnce(bundle.generator, bundle.projector, out, x_b, 1, z, locs)));
    EXPECT_EQ(scalar(idt.value()), scalar(idt.rec + idt.reg));
    EXPECT_EQ(scalar(loss_rec(x_b, x_b)), 0.0);
}

TEST(Adversarial, LeastSquaresClosedForms) {
    EXPECT_EQ(scalar(lsgan_real(torch::ones({1, 1, 4, 4}))), 0.0);
    EXPECT_EQ(scalar(lsgan_fake(torch::zeros({1, 1, 4, 4}))), 0.0);
    Discriminator d(DiscriminatorOptions{});
    const auto x = torch::randn({1, 1, 32, 32});
    auto set_output = [&](double v) {
        torch::NoGradGuard no_grad;
        d->score->weight.zero_();
        d->score->bias.fill_(v);
    };
    set_output(1.0);
    EXPECT_EQ(scalar(loss_adv_generator(d, x, 0)), 0.0);
    set_output(0.0);
    EXPECT_EQ(scalar(loss_adv_generator(d, x, 0)), 1.0);
    set_output(0.3);
    EXPECT_NEAR(scalar(loss_adv_generator(d, x, 0)), 0.49, 1e-6);
}

TEST(Adversarial, DiscriminatorTermsMatchOracles) {
    torch::manual_seed(9);
    Discriminator d(DiscriminatorOptions{});
    const auto x_hat = torch::randn({2, 1, 32, 32}).requires_grad_(true);
    const auto x_b = torch::randn({2, 1, 32, 32});
    const CropBox box{8, 0, 16};
    const auto loss = loss_adv_discriminator(d, x_hat, x_b, 2, box);
    const auto real = d->forward(x_b, 2);
    EXPECT_NEAR(scalar(loss.fake), scalar(d->forward(x_hat, 2).scores.pow(2).mean()), 1e-6);
    EXPECT_NEAR(scalar(loss.real), scalar((real.scores - 1).pow(2).mean()), 1e-6);
    ASSERT_TRUE(loss.resize_rec && loss.crop_rec);
    const auto rs = d->decode_resize(real, 2);
    EXPECT_NEAR(scalar(*loss.resize_rec), scalar((rs - resize_target(x_b, rs.size(2))).pow(2).mean()), 1e-6);
    EXPECT_NEAR(scalar(*loss.crop_rec), scalar((d->decode_crop(real, box, 2) - crop_target(x_b, box)).pow(2).mean()),
                1e-6);
    for (const auto& t : loss.report().terms) {
        EXPECT_GT(t.value.item<double>(), 0.0) << t.name;
    }
    loss.total().backward();
    EXPECT_FALSE(x_hat.grad().defined());
    EXPECT_THROW((void)loss_adv_discriminator(d, x_hat, x_b, 2, std::nullopt), std::invalid_argument);
}

TEST(Adversarial, GeneratorUpdateLeavesDiscriminatorUntouched) {
    Discriminator d(DiscriminatorOptions{});
    const auto x_hat = torch::randn({1, 1, 32, 32}).requires_grad_(true);
    {
        ParameterFreeze freeze(*d);
        loss_adv_generator(d, x_hat, 1).backward();
    }
    for (const auto& p : d->parameters()) {
        EXPECT_FALSE(p.grad().defined());
        EXPECT_TRUE(p.requires_grad());
    }
    EXPECT_TRUE(x_hat.grad().defined());
}

TEST(MutualInformation, ConstantCriticNulls) {
    const auto x = torch::randn({4, 1, 8, 8}, torch::kDouble);
    const ConstantCritic c{2.5};
    EXPECT_NEAR(scalar(loss_mi_estimator(c, x, x, std::nullopt)), 0.0, 1e-12);
    EXPECT_NEAR(scalar(loss_mi_estimator(c, x, x, std::nullopt, MiForm::paper_literal)), -2.5, 1e-12);
    EXPECT_NEAR(scalar(loss_mi_generator(c, x, x, std::nullopt)), -2.5, 1e-12);
    EXPECT_THROW((void)loss_mi_estimator(c, x.narrow(0, 0, 1), x.narrow(0, 0, 1), std::nullopt),
                 std::invalid_argument);
    EXPECT_NO_THROW((void)loss_mi_estimator(c, x.narrow(0, 0, 1), x.narrow(0, 0, 1), std::nullopt,
                                            MiForm::paper_literal));
}

TEST(MutualInformation, MatchesDirectCriticEvaluation) {
    Critic e(CriticOptions{});
    auto critic = [&](const torch::Tensor& a, const torch::Tensor& b, const std::optional<torch::Tensor>& m) {
        return e->forward(a, b, m);
    };
    const auto x_t = torch::randn({3, 1, 16, 16});
    const auto x_b = torch::randn({3, 1, 16, 16});
    const auto prior = (torch::rand({3, 1, 16, 16}) > 0.7).to(torch::kFloat);
    EXPECT_NEAR(scalar(loss_mi_generator(critic, x_t, x_b, prior)), -scalar(e->forward(x_t, x_b, x_b * prior).mean()),
                1e-6);
    const auto joint = e->forward(x_t, x_b);
    const auto marginal = e->forward(x_t, shift_batch(x_b));
    const double dv = scalar(joint.mean()) - std::log(scalar(marginal.exp().mean()));
    EXPECT_NEAR(scalar(loss_mi_estimator(critic, x_t, x_b, std::nullopt)), -dv, 1e-5);
    EXPECT_NE(scalar(loss_mi_estimator(critic, x_t, x_b, prior)), scalar(loss_mi_estimator(critic, x_t, x_b, std::nullopt)));
}

TEST(MutualInformation, FrozenCriticRoutesGradientToInputsOnly) {
    Critic e(CriticOptions{});
    auto critic = [&](const torch::Tensor& a, const torch::Tensor& b, const std::optional<torch::Tensor>& m) {
        return e->forward(a, b, m);
    };
    const auto x_t = torch::randn({2, 1, 16, 16});
    const auto x_hat = torch::randn({2, 1, 16, 16}).requires_grad_(true);
    {
        ParameterFreeze freeze(*e);
        loss_mi_generator(critic, x_t, x_hat, std::nullopt).backward();
    }
    EXPECT_TRUE(x_hat.grad().defined());
    for (const auto& p : e->parameters()) {
        EXPECT_FALSE(p.grad().defined());
    }
}

TEST(Total, SingleTermScaling) {
    GeneratorTerms terms;
    terms.rec = torch::tensor(0.5, torch::kDouble);
    const auto report = loss_total_generator(terms, LossWeights{});
    EXPECT_DOUBLE_EQ(report.total_value(), 50.0);
    EXPECT_EQ(report.terms.size(), 1U);
    EXPECT_EQ(loss_total_generator(GeneratorTerms{}, LossWeights{}).total_value(), 0.0);
}

TEST(Total, WeightedSumOfAllTerms) {
    torch::manual_seed(10);
    auto draw = [] { return torch::rand({}, torch::kDouble) * 4 - 2; };
    GeneratorTerms t;
    t.adv = draw();
    t.sb = draw();
    t.rec = draw();
    t.reg = draw();
    t.cpl = draw();
    t.wreg = draw();
    t.idt_rec = draw();
    t.idt_reg = draw();
    LossWeights w;
    w.lambda_rec = 3.0;
    w.lambda_reg = 0.5;
    w.lambda_cpl = 7.0;
    w.lambda_wreg = 2.0;
    w.lambda_idt = 0.25;
    w.lambda_sb = 1.5;
    const double oracle = scalar(*t.adv) + 1.5 * scalar(*t.sb) + 3.0 * scalar(*t.rec) + 0.5 * scalar(*t.reg) +
                          7.0 * scalar(*t.cpl) + 2.0 * scalar(*t.wreg) + 0.25 * 3.0 * scalar(*t.idt_rec) +
                          0.25 * 0.5 * scalar(*t.idt_reg);
    const auto report = loss_total_generator(t, w);
    EXPECT_NEAR(report.total_value(), oracle, 1e-12);
    double own = 0.0;
    for (const auto& term : report.terms) {
        own += term.weight * term.value.item<double>();
    }
    EXPECT_EQ(report.total_value(), own);
    EXPECT_EQ(report.terms.size(), 8U);
}

TEST(Weights, DefaultsAndValidation) {
    const LossWeights w;
    EXPECT_EQ(w.lambda_rec, 100.0);
    EXPECT_EQ(w.lambda_cpl, 10.0);
    EXPECT_EQ(w.lambda_reg, 1.0);
    EXPECT_EQ(w.lambda_wreg, 1.0);
    EXPECT_EQ(w.lambda_idt, 1.0);
    EXPECT_EQ(w.lambda_sb, 1.0);
    auto bad = w;
    bad.lambda_cpl = -1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    GeneratorTerms terms;
    terms.rec = torch::tensor(0.1);
    EXPECT_THROW((void)loss_total_generator(terms, bad), std::invalid_argument);
}

TEST(Report, RequireFiniteNamesTheTerm) {
    GeneratorTerms t;
    t.rec = torch::tensor(std::nan(""), torch::kDouble);
    const auto report = loss_total_generator(t, LossWeights{});
    try {
        report.require_finite("step 3");
        FAIL() << "expected a throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("rec"), std::string::npos);
    }
}

// Finite-difference checks of every term, double precision, miniature networks.

class LossGradients : public ::testing::Test {
protected:
    void SetUp() override {
        bundle = make_bundle(mini_model_options(), 11);
        bundle.to(torch::kDouble);
        rng = make_rng(11);
        x_a = torch::randn({2, 1, 8, 8}, torch::kDouble);
        x_b = torch::randn({2, 1, 8, 8}, torch::kDouble);
        prior = (torch::rand({2, 1, 8, 8}, torch::kDouble) > 0.5).to(torch::kDouble);
        z = bundle.generator->sample_z(2, rng, x_a.options());
        locs = sample_uniform_locations({{8, 8}, {4, 4}, {2, 2}, {2, 2}}, 4, rng);
    }

    torch::Tensor x_hat() { return bundle.generator->forward(x_a, 1, z); }

    void expect_agreement(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& wrt) {
        const auto res = gradcheck(f, wrt);
        EXPECT_GT(res.checked, 5U);
        EXPECT_LT(res.worst, 1e-4) << res.detail;
    }

    ModelBundle bundle;
    Rng rng = make_rng(0);
    torch::Tensor x_a, x_b, prior, z;
    PatchLocations locs;
};

TEST_F(LossGradients, Rec) { expect_agreement([&] { return loss_rec(x_hat(), x_b); }, trainable(*bundle.generator)); }

TEST_F(LossGradients, Cpl) {
    expect_agreement([&] { return loss_cpl(x_hat(), x_b, prior); }, trainable(*bundle.generator));
}

TEST_F(LossGradients, PatchNce) {
    auto wrt = trainable(*bundle.generator);
    for (auto& p : trainable(*bundle.projector)) {
        wrt.push_back(p);
    }
    expect_agreement([&] { return loss_patchnce(bundle.generator, bundle.projector, x_hat(), x_a, 1, z, locs); }, wrt);
}

TEST_F(LossGradients, Identity) {
    expect_agreement([&] { return loss_identity(bundle.generator, bundle.projector, x_b, 1, z, locs).value(); },
                     trainable(*bundle.generator));
}

TEST_F(LossGradients, AdversarialDiscriminator) {
    auto x_b16 = torch::randn({2, 1, 16, 16}, torch::kDouble);
    auto x_hat16 = torch::randn({2, 1, 16, 16}, torch::kDouble);
    expect_agreement(
        [&] { return loss_adv_discriminator(bundle.discriminator, x_hat16, x_b16, 1, CropBox{4, 4, 8}).total(); },
        trainable(*bundle.discriminator));
}

TEST_F(LossGradients, AdversarialGenerator) {
    ParameterFreeze freeze(*bundle.discriminator);
    const auto x16 = torch::randn({2, 1, 16, 16}, torch::kDouble);
    expect_agreement([&] { return loss_adv_generator(bundle.discriminator, bundle.generator->forward(x16, 1, z), 1); },
                     trainable(*bundle.generator));
}

TEST_F(LossGradients, MiEstimator) {
    auto critic = [&](const torch::Tensor& a, const torch::Tensor& b, const std::optional<torch::Tensor>& m) {
        return bundle.critic->forward(a, b, m);
    };
    expect_agreement([&] { return loss_mi_estimator(critic, x_a, x_b, prior); }, trainable(*bundle.critic));
}

TEST_F(LossGradients, MiGenerator) {
    auto critic = [&](const torch::Tensor& a, const torch::Tensor& b, const std::optional<torch::Tensor>& m) {
        return bundle.critic->forward(a, b, m);
    };
    ParameterFreeze freeze(*bundle.critic);
    expect_agreement([&] { return loss_mi_generator(critic, x_a, x_hat(), prior); }, trainable(*bundle.generator));
}

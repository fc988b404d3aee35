#include <array>
#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fgsb/bridge.hpp"
#include "fgsb/rng.hpp"

using namespace fgsb;

TEST(Timestep, SupportForSingleStep) {
    auto rng = make_rng(1);
    bool seen[2] = {false, false};
    for (int k = 0; k < 200; ++k) {
        const auto t = sample_timestep(rng, 1);
        ASSERT_TRUE(t == 0 || t == 1);
        seen[t] = true;
    }
    EXPECT_TRUE(seen[0] && seen[1]);
}

TEST(Timestep, UniformFrequencies) {
    auto rng = make_rng(2);
    std::array<int, 6> counts{};
    const int n = 60000;
    for (int k = 0; k < n; ++k) {
        ++counts.at(static_cast<std::size_t>(sample_timestep(rng, 5)));
    }
    for (int c : counts) {
        EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 6.0, 0.01);
    }
}

TEST(Timestep, ReproducibleForSeed) {
    auto a = make_rng(3);
    auto b = make_rng(3);
    for (int k = 0; k < 50; ++k) {
        EXPECT_EQ(sample_timestep(a, 5), sample_timestep(b, 5));
    }
    EXPECT_THROW((void)sample_timestep(a, 0), std::invalid_argument);
}

TEST(Posterior, EndpointsAreDeterministic) {
    auto rng = make_rng(4);
    const auto a = torch::randn({2, 1, 8, 8});
    const auto b = torch::randn({2, 1, 8, 8});
    EXPECT_TRUE(torch::equal(bridge_posterior_sample(a, b, 0.0, 0.5, rng), a));
    EXPECT_TRUE(torch::equal(bridge_posterior_sample(a, b, 1.0, 0.5, rng), b));
    EXPECT_THROW((void)bridge_posterior_sample(a, b, 1.5, 0.5, rng), std::out_of_range);
    EXPECT_THROW((void)bridge_posterior_sample(a, b, -0.1, 0.5, rng), std::out_of_range);
}

TEST(Posterior, MidpointMoments) {
    auto rng = make_rng(5);
    const auto a = torch::zeros({10000, 1, 1, 1}, torch::kDouble);
    const auto b = torch::ones({10000, 1, 1, 1}, torch::kDouble);
    const auto x = bridge_posterior_sample(a, b, 0.5, 0.04, rng);
    EXPECT_NEAR(x.mean().item<double>(), 0.5, 0.01);
    EXPECT_NEAR(x.std(/*unbiased=*/false).item<double>(), 0.1, 0.005);
}

TEST(Posterior, MomentsWithinThreeStandardErrors) {
    const double tau = 0.2;
    const std::int64_t n = 20000;
    for (double t : {0.25, 0.5, 0.75}) {
        auto rng = make_rng(static_cast<std::uint64_t>(t * 100));
        const auto a = torch::full({n, 1, 1, 1}, -0.4, torch::kDouble);
        const auto b = torch::full({n, 1, 1, 1}, 0.6, torch::kDouble);
        const auto x = bridge_posterior_sample(a, b, t, tau, rng);
        const double var = t * (1 - t) * tau;
        const double mean = t * 0.6 + (1 - t) * -0.4;
        const double se_mean = std::sqrt(var / n);
        const double se_var = var * std::sqrt(2.0 / (n - 1));
        EXPECT_NEAR(x.mean().item<double>(), mean, 3 * se_mean) << "t=" << t;
        EXPECT_NEAR(x.var(/*unbiased=*/true).item<double>(), var, 3 * se_var) << "t=" << t;
    }
}

TEST(TrainingTransition, NoiselessCases) {
    auto rng = make_rng(6);
    const auto xb = torch::randn({1, 1, 6, 6});
    const auto prev = torch::randn({1, 1, 6, 6});
    EXPECT_TRUE(torch::equal(training_transition(xb, prev, 1.0, 0.0, rng), xb));
    EXPECT_TRUE(torch::equal(training_transition(xb, prev, 0.0, 0.0, rng), prev));
    const auto mid = training_transition(torch::ones({1, 1, 4, 4}), torch::zeros({1, 1, 4, 4}), 0.5, 0.0, rng);
    EXPECT_TRUE(torch::equal(mid, torch::full({1, 1, 4, 4}, 0.5)));
}

TEST(TrainingTransition, LinearInBothImages) {
    auto rng = make_rng(7);
    const auto opts = torch::TensorOptions().dtype(torch::kDouble);
    const auto b1 = torch::randn({1, 1, 5, 5}, opts);
    const auto b2 = torch::randn({1, 1, 5, 5}, opts);
    const auto p1 = torch::randn({1, 1, 5, 5}, opts);
    const auto p2 = torch::randn({1, 1, 5, 5}, opts);
    const double s = 0.37;
    const double alpha = 1.7;
    const double beta = -0.6;
    const auto lhs = training_transition(alpha * b1 + beta * b2, alpha * p1 + beta * p2, s, 0.0, rng);
    const auto rhs =
        alpha * training_transition(b1, p1, s, 0.0, rng) + beta * training_transition(b2, p2, s, 0.0, rng);
    EXPECT_LT((lhs - rhs).abs().max().item<double>(), 1e-14);
}

TEST(TrainingTransition, NoiseVarianceIsTau) {
    auto rng = make_rng(8);
    const auto zero = torch::zeros({20000}, torch::kDouble);
    const auto x = training_transition(zero, zero, 0.5, 0.09, rng);
    EXPECT_NEAR(x.std().item<double>(), 0.3, 0.01);
    EXPECT_THROW((void)training_transition(zero, zero, 1.2, 0.0, rng), std::out_of_range);
}

TEST(InferenceTransition, IdentityWithoutNoise) {
    auto rng = make_rng(9);
    const auto x = torch::randn({2, 1, 8, 8});
    EXPECT_TRUE(torch::equal(inference_transition(x, 0.0, rng), x));
}

TEST(InferenceTransition, NoiseStdAndDeterminism) {
    auto rng = make_rng(10);
    const auto x = torch::randn({1, 1, 100, 100}, torch::kDouble);
    const auto out = inference_transition(x, 0.04, rng);
    EXPECT_NEAR((out - x).std().item<double>(), 0.2, 0.005);
    auto a = make_rng(11);
    auto b = make_rng(11);
    EXPECT_TRUE(torch::equal(inference_transition(x, 0.04, a), inference_transition(x, 0.04, b)));
}

TEST(Schedule, DecidedFormula) {
    const auto one = default_s_schedule(1);
    ASSERT_EQ(one.size(), 2U);
    EXPECT_DOUBLE_EQ(one[1], 0.9);
    const auto five = default_s_schedule(5);
    ASSERT_EQ(five.size(), 6U);
    EXPECT_DOUBLE_EQ(five[1], 0.9);
    for (int i = 1; i <= 5; ++i) {
        EXPECT_NEAR(five[static_cast<std::size_t>(i)], 0.9 * (1.0 - (i - 1) / 5.0), 1e-15);
    }
    for (int i = 2; i <= 5; ++i) {
        EXPECT_LT(five[static_cast<std::size_t>(i)], five[static_cast<std::size_t>(i - 1)]);
    }
    for (std::int64_t nfe = 1; nfe <= 40; ++nfe) {
        for (double v : default_s_schedule(nfe)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Config, ValidationAndLookup) {
    auto c = BridgeConfig::with_defaults(4, 0.02);
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.s(1), 0.9);
    EXPECT_THROW((void)c.s(0), std::out_of_range);
    EXPECT_THROW((void)c.s(5), std::out_of_range);
    auto bad = c;
    bad.s_schedule.pop_back();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = c;
    bad.s_schedule[3] = 0.95;  // increases after index 1
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = c;
    bad.tau = -1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = c;
    bad.nfe = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Rng, StateRoundTripAndDerivedSeeds) {
    auto a = make_rng(12);
    (void)sample_timestep(a, 5);
    const auto state = rng_state(a);
    const auto first = torch::randn({8}, a);
    auto b = make_rng(99);
    set_rng_state(b, state);
    EXPECT_TRUE(torch::equal(torch::randn({8}, b), first));
    EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
    EXPECT_NE(derive_seed(0, 1), derive_seed(1, 1));
    EXPECT_EQ(derive_seed(5, 7), derive_seed(5, 7));
}

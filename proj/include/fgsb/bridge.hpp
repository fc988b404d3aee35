#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "fgsb/rng.hpp"

namespace fgsb {

/// Time-step machinery shared by training-time generation and inference.
struct BridgeConfig {
    std::int64_t nfe = 5;
    double tau = 0.01;  ///< noise variance of the transitions
    /// Reference weight per produced step; index 0 is a placeholder, size nfe + 1.
    std::vector<double> s_schedule;

    /// nfe/tau with the default linear-decay schedule.
    [[nodiscard]] static BridgeConfig with_defaults(std::int64_t nfe = 5, double tau = 0.01);

    /// Weight used when producing step `step` (1 <= step <= nfe).
    [[nodiscard]] double s(std::int64_t step) const;

    void validate() const;
};

/// s[i] = 0.9 * (1 - (i - 1) / nfe) for i in [1, nfe]; s[0] = 1 is never read.
[[nodiscard]] std::vector<double> default_s_schedule(std::int64_t nfe);

/// Uniform draw from {0, ..., nfe}.
[[nodiscard]] std::int64_t sample_timestep(Rng& rng, std::int64_t nfe);

/// Draw from N(t * x_B + (1 - t) * x_A, t (1 - t) tau I).
[[nodiscard]] torch::Tensor bridge_posterior_sample(const torch::Tensor& x_A, const torch::Tensor& x_B, double t,
                                                    double tau, Rng& rng);

/// s * x_B + (1 - s) * x_hat_prev + eps, eps ~ N(0, tau I).
[[nodiscard]] torch::Tensor training_transition(const torch::Tensor& x_B, const torch::Tensor& x_hat_prev, double s,
                                                double tau, Rng& rng);

/// x_hat_prev + eps, eps ~ N(0, tau I).
[[nodiscard]] torch::Tensor inference_transition(const torch::Tensor& x_hat_prev, double tau, Rng& rng);

/// Carried state of one generation pass.
struct TrajectoryState {
    torch::Tensor x_t;    ///< generator input at `step`
    torch::Tensor x_hat;  ///< generator prediction at `step`
    std::int64_t step = 0;
};

}  // namespace fgsb

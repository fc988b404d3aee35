#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "fgsb/dataset.hpp"
#include "fgsb/image.hpp"
#include "fgsb/models.hpp"
#include "fgsb/rng.hpp"

namespace fgsb {

struct TrainConfig;

struct InferenceConfig {
    std::int64_t nfe = 5;
    double tau = 0.01;
    std::uint64_t seed = 0;
    std::optional<Canvas> canvas;  ///< training canvas; sources of another shape are rejected

    void validate() const;
};

/// nfe and tau as the trained configuration runs them (no_sb gives one step, no_noise tau 0).
[[nodiscard]] InferenceConfig inference_defaults(const TrainConfig& config);

/// Refinement chain on a batch [B, 1, H, W]: x <- source; for i < nfe: x_hat <- G(x, i, z_i),
/// x <- x_hat + eps. Returns the last x_hat. Draws z and eps from `rng`.
[[nodiscard]] torch::Tensor synthesize_tensor(Generator& generator, const torch::Tensor& source, std::int64_t nfe,
                                              double tau, Rng& rng);

/// One slice with the stream seeded by config.seed.
[[nodiscard]] Image synthesize(const Image& source, ModelBundle& bundle, const InferenceConfig& config);

/// Slice k runs synthesize with seed derive_seed(config.seed, k).
[[nodiscard]] std::vector<Image> synthesize_stack(const std::vector<Image>& sources, ModelBundle& bundle,
                                                  const InferenceConfig& config);

[[nodiscard]] torch::Tensor image_to_tensor(const Image& image, torch::Dtype dtype = torch::kFloat);
[[nodiscard]] Image tensor_to_image(const torch::Tensor& tensor);

}  // namespace fgsb

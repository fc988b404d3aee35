#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "fgsb/models.hpp"
#include "fgsb/rng.hpp"

namespace fgsb {

/// Coefficients of the generator objective.
struct LossWeights {
    double lambda_rec = 100.0;
    double lambda_reg = 1.0;
    double lambda_cpl = 10.0;
    double lambda_wreg = 1.0;
    double lambda_idt = 1.0;
    double lambda_sb = 1.0;

    /// Throws std::invalid_argument naming the first negative or non-finite weight.
    void validate() const;
};

struct LossTerm {
    std::string name;
    torch::Tensor value;  ///< scalar
    double weight = 1.0;
};

/// Named weighted terms and their sum.
struct LossReport {
    std::vector<LossTerm> terms;
    torch::Tensor total;

    [[nodiscard]] bool has(const std::string& name) const;
    [[nodiscard]] double value(const std::string& name) const;
    [[nodiscard]] double total_value() const { return total.item<double>(); }

    /// Throws std::runtime_error naming the first non-finite term.
    void require_finite(const std::string& context) const;

    /// {"name": value, ..., "total": value}
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

// ---------------------------------------------------------------------------
// Reconstruction and masked terms
// ---------------------------------------------------------------------------

/// Mean absolute error.
[[nodiscard]] torch::Tensor loss_rec(const torch::Tensor& x_hat, const torch::Tensor& x_B);

/// Mean over pixels of prior * (x_hat - x_B)^2.
[[nodiscard]] torch::Tensor loss_cpl(const torch::Tensor& x_hat, const torch::Tensor& x_B, const torch::Tensor& prior);

// ---------------------------------------------------------------------------
// Contrastive patch terms
// ---------------------------------------------------------------------------

inline constexpr double kNceTemperature = 0.07;
inline constexpr std::int64_t kNcePatches = 256;

/// InfoNCE over embeddings [B, N, C]: the query at location n is positive with the key at
/// n and negative with the other N - 1 keys of the same image. Mean cross-entropy.
[[nodiscard]] torch::Tensor patchnce_from_embeddings(const torch::Tensor& queries, const torch::Tensor& keys,
                                                     double temperature = kNceTemperature);

/// Spatial grids (H, W) of each feature layer.
[[nodiscard]] std::vector<std::pair<std::int64_t, std::int64_t>> feature_grids(const std::vector<torch::Tensor>& feats);

/// min(n, H*W) distinct locations per layer drawn uniformly, shared across the batch.
[[nodiscard]] PatchLocations sample_uniform_locations(const std::vector<std::pair<std::int64_t, std::int64_t>>& grids,
                                                      std::int64_t n, Rng& rng);

/// Locations drawn per sample with probability proportional to the prior density pooled
/// onto each layer grid. When a sample's support holds fewer than n cells the whole
/// support is taken and the rest is filled uniformly from outside it. A batch whose
/// priors are all empty falls back to sample_uniform_locations with the same rng.
[[nodiscard]] PatchLocations sample_weighted_locations(const std::vector<std::pair<std::int64_t, std::int64_t>>& grids,
                                                       const torch::Tensor& prior, std::int64_t n, Rng& rng);

/// Mean over layers of the InfoNCE loss between projected query and key features.
[[nodiscard]] torch::Tensor loss_patchnce(const std::vector<torch::Tensor>& query_feats,
                                          const std::vector<torch::Tensor>& key_feats, PatchProjector& projector,
                                          const PatchLocations& locations, double temperature = kNceTemperature);

/// Encodes x_hat (queries) and x_A (keys) with the generator encoder, then loss_patchnce.
[[nodiscard]] torch::Tensor loss_patchnce(Generator& generator, PatchProjector& projector, const torch::Tensor& x_hat,
                                          const torch::Tensor& x_A, std::int64_t step, const torch::Tensor& z,
                                          const PatchLocations& locations, double temperature = kNceTemperature);

struct IdentityLoss {
    torch::Tensor output;  ///< generator output for the target input
    torch::Tensor rec;
    torch::Tensor reg;

    [[nodiscard]] torch::Tensor value() const { return rec + reg; }
};

/// Feeds x_B through the generator at `step` and scores the output against x_B.
[[nodiscard]] IdentityLoss loss_identity(Generator& generator, PatchProjector& projector, const torch::Tensor& x_B,
                                         std::int64_t step, const torch::Tensor& z, const PatchLocations& locations,
                                         double temperature = kNceTemperature);

// ---------------------------------------------------------------------------
// Adversarial terms (least squares)
// ---------------------------------------------------------------------------

[[nodiscard]] inline torch::Tensor lsgan_real(const torch::Tensor& scores) { return (scores - 1.0).pow(2).mean(); }
[[nodiscard]] inline torch::Tensor lsgan_fake(const torch::Tensor& scores) { return scores.pow(2).mean(); }

struct DiscriminatorLoss {
    torch::Tensor fake;
    torch::Tensor real;
    std::optional<torch::Tensor> resize_rec;
    std::optional<torch::Tensor> crop_rec;

    [[nodiscard]] torch::Tensor total() const;
    [[nodiscard]] LossReport report() const;
};

/// Patch least-squares terms plus, when the discriminator carries decoders, the
/// reconstructions of the real image's down-sample and crop. x_hat is detached.
[[nodiscard]] DiscriminatorLoss loss_adv_discriminator(Discriminator& discriminator, const torch::Tensor& x_hat,
                                                       const torch::Tensor& x_B, std::int64_t step,
                                                       const std::optional<CropBox>& crop);

/// mean (D(x_hat) - 1)^2 over the patch map.
[[nodiscard]] torch::Tensor loss_adv_generator(Discriminator& discriminator, const torch::Tensor& x_hat,
                                               std::int64_t step);

// ---------------------------------------------------------------------------
// Mutual-information terms
// ---------------------------------------------------------------------------

enum class MiForm {
    donsker_varadhan,  ///< -(mean joint - log mean exp marginal)
    paper_literal,     ///< -mean joint
};

/// Donsker-Varadhan lower bound: mean(joint) - log(mean(exp(marginal))).
[[nodiscard]] inline torch::Tensor dv_lower_bound(const torch::Tensor& joint, const torch::Tensor& marginal) {
    const auto n = static_cast<double>(marginal.numel());
    return joint.mean() - (torch::logsumexp(marginal.reshape({-1}), 0) - std::log(n));
}

/// Pairs sample i with sample i + 1 (mod B): mismatched endpoints for the marginal term.
[[nodiscard]] inline torch::Tensor shift_batch(const torch::Tensor& x) { return torch::roll(x, {1}, {0}); }

/// Critic objective. `critic(x_t, x_end, masked)` returns one score per sample; the
/// masked third input is x_end * prior when a prior is given.
template <typename CriticFn>
[[nodiscard]] torch::Tensor loss_mi_estimator(CriticFn&& critic, const torch::Tensor& x_t, const torch::Tensor& x_B,
                                              const std::optional<torch::Tensor>& prior,
                                              MiForm form = MiForm::donsker_varadhan) {
    auto masked = [&](const torch::Tensor& end, const std::optional<torch::Tensor>& p) -> std::optional<torch::Tensor> {
        if (!p) {
            return std::nullopt;
        }
        return end * *p;
    };
    auto joint = critic(x_t, x_B, masked(x_B, prior));
    if (form == MiForm::paper_literal) {
        return -joint.mean();
    }
    if (x_B.size(0) < 2) {
        throw std::invalid_argument("Donsker-Varadhan estimator needs a batch of at least 2 for marginal pairs");
    }
    const auto shuffled = shift_batch(x_B);
    std::optional<torch::Tensor> shuffled_prior;
    if (prior) {
        shuffled_prior = shift_batch(*prior);
    }
    auto marginal = critic(x_t, shuffled, masked(shuffled, shuffled_prior));
    return -dv_lower_bound(joint, marginal);
}

/// Generator side: -mean critic(x_t, x_hat[, x_hat * prior]). The caller keeps the
/// critic's parameters frozen (see ParameterFreeze).
template <typename CriticFn>
[[nodiscard]] torch::Tensor loss_mi_generator(CriticFn&& critic, const torch::Tensor& x_t, const torch::Tensor& x_hat,
                                              const std::optional<torch::Tensor>& prior) {
    std::optional<torch::Tensor> masked;
    if (prior) {
        masked = x_hat * *prior;
    }
    return -critic(x_t, x_hat, masked).mean();
}

/// Disables requires_grad on a module's parameters for the guard's lifetime.
class ParameterFreeze {
public:
    explicit ParameterFreeze(torch::nn::Module& module);
    ~ParameterFreeze();
    ParameterFreeze(const ParameterFreeze&) = delete;
    ParameterFreeze& operator=(const ParameterFreeze&) = delete;

private:
    std::vector<torch::Tensor> params_;
    std::vector<bool> previous_;
};

// ---------------------------------------------------------------------------
// Total generator objective
// ---------------------------------------------------------------------------

/// Active generator terms; absent terms are left out of the report.
struct GeneratorTerms {
    std::optional<torch::Tensor> adv;
    std::optional<torch::Tensor> sb;
    std::optional<torch::Tensor> rec;
    std::optional<torch::Tensor> reg;
    std::optional<torch::Tensor> cpl;
    std::optional<torch::Tensor> wreg;
    std::optional<torch::Tensor> idt_rec;  ///< weighted lambda_idt * lambda_rec
    std::optional<torch::Tensor> idt_reg;  ///< weighted lambda_idt * lambda_reg
};

[[nodiscard]] LossReport loss_total_generator(const GeneratorTerms& terms, const LossWeights& weights);

}  // namespace fgsb

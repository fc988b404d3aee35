#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "fgsb/bridge.hpp"
#include "fgsb/dataset.hpp"
#include "fgsb/losses.hpp"
#include "fgsb/models.hpp"
#include "fgsb/rng.hpp"

namespace fgsb {

struct AblationFlags {
    bool no_sb = false;      ///< single forward pass, no bridge loss, no critic
    bool no_ssl_d = false;   ///< plain patch discriminator
    bool no_noise = false;   ///< tau forced to 0
    bool use_prior = true;   ///< context-preserving and weighted contrastive terms
};

struct TrainConfig {
    std::int64_t epochs = 50;
    double lr = 1e-4;
    std::optional<std::int64_t> lr_decay_start;  ///< unset: epochs / 2
    std::int64_t batch_size = 2;
    double flip_probability = 0.5;
    std::uint64_t seed = 0;
    LossWeights weights;
    BridgeConfig bridge = BridgeConfig::with_defaults();
    AblationFlags ablation;
    MiForm mi_form = MiForm::donsker_varadhan;
    std::int64_t nce_patches = kNcePatches;
    std::int64_t identity_every = 1;    ///< identity loss cadence in steps
    std::int64_t checkpoint_every = 0;  ///< in epochs; 0 keeps only the final checkpoint
    ModelOptions model;                 ///< widths; flags and max_step come from the ablation

    void validate() const;
    [[nodiscard]] std::int64_t decay_start() const { return lr_decay_start.value_or(epochs / 2); }
};

/// What actually runs once ablation flags are applied.
struct Components {
    bool iterative = true;
    bool critic = true;
    bool decoders = true;
    bool prior = true;
    std::int64_t nfe = 5;  ///< inference steps
    double tau = 0.01;
};

[[nodiscard]] Components apply_ablation(const TrainConfig& config);

/// config.model with critic, decoders and step range set from the ablation.
[[nodiscard]] ModelOptions effective_model_options(const TrainConfig& config);

/// Constant until decay_start, then lr * (epochs - epoch) / (epochs - decay_start).
[[nodiscard]] double lr_at(std::int64_t epoch, const TrainConfig& config);

struct Batch {
    torch::Tensor x_A;    ///< [B, 1, H, W]
    torch::Tensor x_B;
    torch::Tensor prior;  ///< zeros where a pair carries no mask
    bool has_prior = false;
};

[[nodiscard]] Batch make_batch(const std::vector<SlicePair>& pairs, torch::Dtype dtype = torch::kFloat);

struct Optimizers {
    std::unique_ptr<torch::optim::Adam> generator;  ///< generator and projector
    std::unique_ptr<torch::optim::Adam> discriminator;
    std::unique_ptr<torch::optim::Adam> critic;     ///< null without a critic
};

struct TrainState {
    TrainConfig config;
    Canvas canvas;
    ModelBundle bundle;
    Optimizers optim;
    Rng rng;
    std::int64_t epoch = 0;        ///< completed epochs
    std::int64_t global_step = 0;  ///< completed steps
};

[[nodiscard]] TrainState make_train_state(const TrainConfig& config, Canvas canvas);

void set_learning_rate(TrainState& state, double lr);

struct StepReport {
    std::int64_t timestep = 0;
    LossReport discriminator;
    std::optional<LossReport> critic;
    LossReport generator;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// One D -> E -> G update on `batch`. Throws std::runtime_error naming the first
/// non-finite term, before any parameter of that update changes.
StepReport train_step(const Batch& batch, TrainState& state);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kCheckpointVersion = 1;

struct CheckpointInfo {
    std::int64_t version = 0;
    TrainConfig config;
    Canvas canvas;
    std::int64_t epoch = 0;
    std::int64_t global_step = 0;
    std::string config_digest;
    std::vector<std::string> parameter_names;  ///< "network.parameter" for every stored tensor
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
[[nodiscard]] TrainState load_checkpoint(const std::filesystem::path& path);
[[nodiscard]] CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Hex FNV-1a digest of the canonical config JSON.
[[nodiscard]] std::string config_digest(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::filesystem::path run_dir;
    std::optional<std::filesystem::path> resume;  ///< checkpoint to continue from
    std::optional<std::int64_t> stop_after_epoch;  ///< end early, as if interrupted
    std::function<void(std::int64_t epoch, const nlohmann::ordered_json& summary)> on_epoch;
};

struct TrainResult {
    std::filesystem::path checkpoint;  ///< last written checkpoint
    std::int64_t epochs_completed = 0;
    std::int64_t steps = 0;
};

/// Pair order and flips of an epoch depend only on (seed, epoch).
[[nodiscard]] std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_pairs, std::int64_t batch_size,
                                                                  std::uint64_t seed, std::int64_t epoch);

/// Writes config.json, metrics.jsonl (one record per step) and checkpoints/ under run_dir.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const TrainOptions& options);

}  // namespace fgsb

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace fgsb {

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct GeneratorOptions {
    std::int64_t channels = 1;
    std::int64_t ngf = 8;          ///< stem width; doubles at each downsampling
    std::int64_t n_blocks = 6;     ///< adaptive-norm residual blocks
    std::int64_t time_dim = 32;    ///< sinusoidal step embedding width
    std::int64_t z_dim = 64;
    std::int64_t cond_dim = 64;    ///< width of the joint (step, z) conditioning vector
    std::int64_t max_step = 5;     ///< largest accepted step index (the bridge nfe)
};

struct DiscriminatorOptions {
    std::int64_t channels = 1;
    std::int64_t ndf = 16;
    std::int64_t n_layers = 3;     ///< stride-2 stages; 3 gives a 70x70 receptive field
    std::int64_t time_dim = 32;
    bool time_conditioned = true;  ///< backbone conditioning; decoders are always conditioned
    bool with_decoders = true;     ///< self-supervised resize/crop decoders
    std::int64_t decoder_channels = 16;
    std::int64_t max_step = 5;
};

struct CriticOptions {
    std::int64_t channels = 1;     ///< per image; the critic sees three stacked images
    std::int64_t nef = 16;
    std::int64_t n_layers = 3;
    double output_bound = 10.0;    ///< scores squashed to (-bound, bound) by a scaled tanh; 0 leaves them raw
};

struct ProjectorOptions {
    std::vector<std::int64_t> in_channels;  ///< one entry per encoder feature layer
    std::int64_t nc = 64;
};

/// Sinusoidal embedding of an integer step, shape [dim].
[[nodiscard]] torch::Tensor step_embedding(std::int64_t step, std::int64_t dim, const torch::TensorOptions& options);

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Conv -> instance norm -> (1 + gamma(c)) * h + beta(c).
struct AdaptiveConvImpl : torch::nn::Module {
    AdaptiveConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, std::int64_t cond_dim,
                     bool reflect_pad);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::Linear modulation{nullptr};
};
TORCH_MODULE(AdaptiveConv);

struct AdaptiveResBlockImpl : torch::nn::Module {
    AdaptiveResBlockImpl(std::int64_t channels, std::int64_t cond_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

    AdaptiveConv first{nullptr};
    AdaptiveConv second{nullptr};
};
TORCH_MODULE(AdaptiveResBlock);

/// Step- and latent-conditioned encoder / residual / decoder image mapper.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorOptions options = {});

    /// x: [B, C, H, W] with H, W divisible by 4; z: [B, z_dim]. Output in [-1, 1].
    torch::Tensor forward(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z);

    /// Encoder activations used by the contrastive loss: stem, two downsamplings and
    /// the middle residual block.
    std::vector<torch::Tensor> encode(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z);

    /// Channel count of each encode() layer.
    [[nodiscard]] std::vector<std::int64_t> feature_channels() const;

    /// Draws z ~ N(0, I) for a batch.
    [[nodiscard]] torch::Tensor sample_z(std::int64_t batch, at::Generator& rng, const torch::TensorOptions& options) const;

    [[nodiscard]] const GeneratorOptions& options() const noexcept { return options_; }

    torch::nn::Conv2d head{nullptr};  ///< final projection before tanh

private:
    torch::Tensor conditioning(std::int64_t step, const torch::Tensor& z);
    torch::Tensor run(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z,
                      std::vector<torch::Tensor>* features, bool stop_after_features);

    GeneratorOptions options_;
    torch::nn::Sequential time_mlp{nullptr};
    torch::nn::Sequential z_mlp{nullptr};
    AdaptiveConv stem{nullptr};
    torch::nn::ModuleList down{nullptr};
    torch::nn::ModuleList blocks{nullptr};
    torch::nn::ModuleList up{nullptr};
};
TORCH_MODULE(Generator);

// ---------------------------------------------------------------------------
// Discriminator with self-supervised decoders
// ---------------------------------------------------------------------------

/// Square crop in pixel coordinates.
struct CropBox {
    std::int64_t top = 0;
    std::int64_t left = 0;
    std::int64_t size = 0;
};

struct DiscriminatorOutput {
    torch::Tensor scores;                 ///< patch score map [B, 1, h, w]
    std::vector<torch::Tensor> features;  ///< activations of every backbone stage
};

/// Conv followed by a per-channel bias computed from the step embedding.
struct TimeConvImpl : torch::nn::Module {
    TimeConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                 std::int64_t emb_dim, bool conditioned);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::Linear time_bias{nullptr};
};
TORCH_MODULE(TimeConv);

/// Four step-conditioned convolutions; the first `n_upsample` double the resolution.
struct DecoderImpl : torch::nn::Module {
    DecoderImpl(std::int64_t in, std::int64_t width, std::int64_t out, std::int64_t n_upsample, std::int64_t emb_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

    std::int64_t n_upsample = 0;
    torch::nn::ModuleList layers{nullptr};
};
TORCH_MODULE(Decoder);

class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(DiscriminatorOptions options = {});

    DiscriminatorOutput forward(const torch::Tensor& x, std::int64_t step);

    /// Reconstructs the down-sampled input from the final backbone features.
    torch::Tensor decode_resize(const DiscriminatorOutput& out, std::int64_t step);

    /// Reconstructs the crop of the input at `box` from the penultimate features.
    torch::Tensor decode_crop(const DiscriminatorOutput& out, const CropBox& box, std::int64_t step);

    [[nodiscard]] bool has_decoders() const noexcept { return options_.with_decoders; }

    /// Pixel stride of the penultimate feature map; crop boxes must align to it.
    [[nodiscard]] std::int64_t feature_stride() const noexcept { return std::int64_t{1} << options_.n_layers; }

    /// Output side of decode_resize for a square input of side `canvas`.
    [[nodiscard]] std::int64_t resize_side(std::int64_t canvas) const noexcept { return canvas / feature_stride() * 4; }

    /// Throws std::out_of_range for boxes outside the canvas or off the feature grid.
    void check_crop(const CropBox& box, std::int64_t height, std::int64_t width) const;

    [[nodiscard]] const DiscriminatorOptions& options() const noexcept { return options_; }

    torch::nn::Conv2d score{nullptr};

private:
    torch::Tensor embed(std::int64_t step, const torch::TensorOptions& options);

    DiscriminatorOptions options_;
    std::int64_t emb_dim_ = 0;
    torch::nn::Sequential time_mlp{nullptr};
    torch::nn::ModuleList backbone{nullptr};
    Decoder resize_decoder{nullptr};
    Decoder crop_decoder{nullptr};
};
TORCH_MODULE(Discriminator);

/// Bilinear down-sample of a real image to `side` x `side`.
[[nodiscard]] torch::Tensor resize_target(const torch::Tensor& image, std::int64_t side);

/// image[..., top:top+size, left:left+size].
[[nodiscard]] torch::Tensor crop_target(const torch::Tensor& image, const CropBox& box);

// ---------------------------------------------------------------------------
// Mutual-information critic
// ---------------------------------------------------------------------------

/// Scores an (intermediate, endpoint[, masked endpoint]) triple with one scalar per sample.
class CriticImpl : public torch::nn::Module {
public:
    explicit CriticImpl(CriticOptions options = {});

    /// Missing `masked` is treated as an all-zero image. Returns [B].
    torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& x_end,
                          const std::optional<torch::Tensor>& masked = std::nullopt);

    [[nodiscard]] const CriticOptions& options() const noexcept { return options_; }

private:
    CriticOptions options_;
    torch::nn::Sequential body{nullptr};
    torch::nn::Linear out{nullptr};
};
TORCH_MODULE(Critic);

// ---------------------------------------------------------------------------
// Patch projector
// ---------------------------------------------------------------------------

/// Per-layer two-layer MLP mapping sampled encoder features to unit-norm embeddings.
class PatchProjectorImpl : public torch::nn::Module {
public:
    explicit PatchProjectorImpl(ProjectorOptions options);

    /// Embeds [B, N, C_layer] features of one layer to [B, N, nc], L2-normalized.
    torch::Tensor project(std::size_t layer, const torch::Tensor& sampled);

    [[nodiscard]] std::size_t layers() const noexcept { return mlps->size(); }
    [[nodiscard]] const ProjectorOptions& options() const noexcept { return options_; }

private:
    ProjectorOptions options_;
    torch::nn::ModuleList mlps{nullptr};
};
TORCH_MODULE(PatchProjector);

/// Spatial locations per layer as flat indices into the H*W grid, shape [B, N].
struct PatchLocations {
    std::vector<torch::Tensor> per_layer;
};

/// Gathers features at `locations` and projects them: one [B, N, nc] tensor per layer.
[[nodiscard]] std::vector<torch::Tensor> sample_patch_embeddings(const std::vector<torch::Tensor>& feats_by_layer,
                                                                 const PatchLocations& locations,
                                                                 PatchProjector& projector);

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

struct ModelOptions {
    GeneratorOptions generator;
    DiscriminatorOptions discriminator;
    CriticOptions critic;
    std::int64_t projector_nc = 64;
    bool with_critic = true;
};

/// The four trainable networks. `critic` is null when the bridge loss is ablated.
struct ModelBundle {
    Generator generator{nullptr};
    Discriminator discriminator{nullptr};
    Critic critic{nullptr};
    PatchProjector projector{nullptr};
    ModelOptions options;

    /// Named sub-trees in checkpoint order; absent networks are skipped.
    [[nodiscard]] std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> networks() const;

    void to(torch::Dtype dtype);
    void train(bool on = true);
};

/// Builds a bundle with deterministic initialisation for `seed`.
[[nodiscard]] ModelBundle make_bundle(const ModelOptions& options, std::uint64_t seed);

/// Exact trainable-parameter count.
[[nodiscard]] std::int64_t count_parameters(const torch::nn::Module& module);

/// Per-network counts keyed by sub-tree name, plus "total".
[[nodiscard]] std::map<std::string, std::int64_t> count_parameters(const ModelBundle& bundle);

}  // namespace fgsb

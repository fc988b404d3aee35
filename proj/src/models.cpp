#include "fgsb/models.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fgsb {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

constexpr double kLeakySlope = 0.2;

torch::Tensor leaky(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope)); }

torch::Tensor upsample2(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

void check_step(std::int64_t step, std::int64_t max_step, const char* who) {
    if (step < 0 || step > max_step) {
        throw std::out_of_range(std::string(who) + ": step " + std::to_string(step) + " outside [0, " +
                                std::to_string(max_step) + "]");
    }
}

}  // namespace

torch::Tensor step_embedding(std::int64_t step, std::int64_t dim, const torch::TensorOptions& options) {
    const std::int64_t half = dim / 2;
    std::vector<double> emb(static_cast<std::size_t>(dim), 0.0);
    for (std::int64_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        emb[static_cast<std::size_t>(k)] = std::sin(static_cast<double>(step) * freq);
        emb[static_cast<std::size_t>(half + k)] = std::cos(static_cast<double>(step) * freq);
    }
    return torch::tensor(emb, torch::kDouble).to(options);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

AdaptiveConvImpl::AdaptiveConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                                   std::int64_t cond_dim, bool reflect_pad) {
    auto opts = nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2);
    if (reflect_pad) {
        opts.padding_mode(torch::kReflect);
    }
    conv = register_module("conv", nn::Conv2d(opts));
    modulation = register_module("modulation", nn::Linear(cond_dim, 2 * out));
}

torch::Tensor AdaptiveConvImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
    auto h = conv(x);
    h = torch::instance_norm(h, {}, {}, {}, {}, /*use_input_stats=*/true, 0.1, 1e-5, /*cudnn_enabled=*/false);
    const auto channels = h.size(1);
    auto gb = modulation(cond).view({cond.size(0), 2 * channels, 1, 1});
    auto gamma = gb.narrow(1, 0, channels);
    auto beta = gb.narrow(1, channels, channels);
    return h * (1.0 + gamma) + beta;
}

AdaptiveResBlockImpl::AdaptiveResBlockImpl(std::int64_t channels, std::int64_t cond_dim) {
    first = register_module("first", AdaptiveConv(channels, channels, 3, 1, cond_dim, true));
    second = register_module("second", AdaptiveConv(channels, channels, 3, 1, cond_dim, true));
}

torch::Tensor AdaptiveResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
    auto h = torch::relu(first(x, cond));
    return x + second(h, cond);
}

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(options) {
    if (options_.ngf < 1 || options_.n_blocks < 0 || options_.time_dim < 2 || options_.z_dim < 1 ||
        options_.cond_dim < 1 || options_.max_step < 0) {
        throw std::invalid_argument("invalid generator options");
    }
    const auto ngf = options_.ngf;
    const auto cond = options_.cond_dim;
    time_mlp = register_module("time_mlp", nn::Sequential(nn::Linear(options_.time_dim, cond),
                                                          nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                                                          nn::Linear(cond, cond)));
    z_mlp = register_module("z_mlp", nn::Sequential(nn::Linear(options_.z_dim, cond),
                                                    nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                                                    nn::Linear(cond, cond)));
    stem = register_module("stem", AdaptiveConv(options_.channels, ngf, 7, 1, cond, true));
    down = register_module("down", nn::ModuleList(AdaptiveConv(ngf, 2 * ngf, 3, 2, cond, true),
                                                  AdaptiveConv(2 * ngf, 4 * ngf, 3, 2, cond, true)));
    blocks = register_module("blocks", nn::ModuleList());
    for (std::int64_t i = 0; i < options_.n_blocks; ++i) {
        blocks->push_back(AdaptiveResBlock(4 * ngf, cond));
    }
    up = register_module("up", nn::ModuleList(AdaptiveConv(4 * ngf, 2 * ngf, 3, 1, cond, false),
                                              AdaptiveConv(2 * ngf, ngf, 3, 1, cond, false)));
    head = register_module(
        "head", nn::Conv2d(nn::Conv2dOptions(ngf, options_.channels, 7).padding(3).padding_mode(torch::kReflect)));
}

torch::Tensor GeneratorImpl::conditioning(std::int64_t step, const torch::Tensor& z) {
    check_step(step, options_.max_step, "generator");
    if (z.dim() != 2 || z.size(1) != options_.z_dim) {
        throw std::invalid_argument("generator: z must have shape [B, " + std::to_string(options_.z_dim) + "]");
    }
    auto t = time_mlp->forward(step_embedding(step, options_.time_dim, z.options()).unsqueeze(0));
    return t + z_mlp->forward(z);
}

torch::Tensor GeneratorImpl::run(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z,
                                 std::vector<torch::Tensor>* features, bool stop_after_features) {
    if (x.dim() != 4 || x.size(1) != options_.channels || x.size(2) % 4 != 0 || x.size(3) % 4 != 0) {
        throw std::invalid_argument("generator: input must be [B, C, H, W] with H and W divisible by 4");
    }
    if (z.size(0) != x.size(0)) {
        throw std::invalid_argument("generator: z batch differs from the image batch");
    }
    const auto cond = conditioning(step, z);
    const std::size_t mid = options_.n_blocks > 0 ? static_cast<std::size_t>((options_.n_blocks - 1) / 2) : 0;

    auto h = torch::relu(stem(x, cond));
    if (features != nullptr) {
        features->push_back(h);
    }
    for (const auto& layer : *down) {
        h = torch::relu(layer->as<AdaptiveConvImpl>()->forward(h, cond));
        if (features != nullptr) {
            features->push_back(h);
        }
    }
    if (stop_after_features && blocks->size() == 0) {
        return h;
    }
    for (std::size_t i = 0; i < blocks->size(); ++i) {
        h = blocks[i]->as<AdaptiveResBlockImpl>()->forward(h, cond);
        if (i == mid && features != nullptr) {
            features->push_back(h);
            if (stop_after_features) {
                return h;
            }
        }
    }
    for (const auto& layer : *up) {
        h = torch::relu(layer->as<AdaptiveConvImpl>()->forward(upsample2(h), cond));
    }
    return torch::tanh(head(h));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z) {
    return run(x, step, z, nullptr, false);
}

std::vector<torch::Tensor> GeneratorImpl::encode(const torch::Tensor& x, std::int64_t step, const torch::Tensor& z) {
    std::vector<torch::Tensor> features;
    run(x, step, z, &features, true);
    return features;
}

std::vector<std::int64_t> GeneratorImpl::feature_channels() const {
    const auto ngf = options_.ngf;
    std::vector<std::int64_t> channels{ngf, 2 * ngf, 4 * ngf};
    if (options_.n_blocks > 0) {
        channels.push_back(4 * ngf);
    }
    return channels;
}

torch::Tensor GeneratorImpl::sample_z(std::int64_t batch, at::Generator& rng, const torch::TensorOptions& options) const {
    return torch::randn({batch, options_.z_dim}, rng, options);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

TimeConvImpl::TimeConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                           std::int64_t padding, std::int64_t emb_dim, bool conditioned) {
    conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)));
    if (conditioned) {
        time_bias = register_module("time_bias", nn::Linear(emb_dim, out));
    }
}

torch::Tensor TimeConvImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = conv(x);
    if (time_bias) {
        h = h + time_bias(emb).view({1, -1, 1, 1});
    }
    return h;
}

DecoderImpl::DecoderImpl(std::int64_t in, std::int64_t width, std::int64_t out, std::int64_t n_up, std::int64_t emb_dim)
    : n_upsample(n_up) {
    layers = register_module("layers", nn::ModuleList());
    std::int64_t channels = in;
    for (int i = 0; i < 3; ++i) {
        layers->push_back(TimeConv(channels, width, 3, 1, 1, emb_dim, true));
        channels = width;
    }
    layers->push_back(TimeConv(channels, out, 3, 1, 1, emb_dim, true));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = x;
    for (std::size_t i = 0; i < layers->size(); ++i) {
        if (static_cast<std::int64_t>(i) < n_upsample) {
            h = upsample2(h);
        }
        h = layers[i]->as<TimeConvImpl>()->forward(h, emb);
        h = i + 1 < layers->size() ? leaky(h) : torch::tanh(h);
    }
    return h;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) : options_(options) {
    if (options_.ndf < 1 || options_.n_layers < 1 || options_.time_dim < 2) {
        throw std::invalid_argument("invalid discriminator options");
    }
    if (options_.with_decoders && options_.n_layers > 3) {
        throw std::invalid_argument("self-supervised decoders support at most 3 discriminator stages");
    }
    emb_dim_ = 2 * options_.time_dim;
    time_mlp = register_module("time_mlp", nn::Sequential(nn::Linear(options_.time_dim, emb_dim_),
                                                          nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                                                          nn::Linear(emb_dim_, emb_dim_)));
    backbone = register_module("backbone", nn::ModuleList());
    const bool cond = options_.time_conditioned;
    std::int64_t channels = options_.ndf;
    backbone->push_back(TimeConv(options_.channels, channels, 4, 2, 1, emb_dim_, cond));
    for (std::int64_t k = 1; k < options_.n_layers; ++k) {
        const auto next = options_.ndf * std::min<std::int64_t>(std::int64_t{1} << k, 8);
        backbone->push_back(TimeConv(channels, next, 4, 2, 1, emb_dim_, cond));
        channels = next;
    }
    const auto penultimate_channels = channels;
    const auto final_channels = options_.ndf * std::min<std::int64_t>(std::int64_t{1} << options_.n_layers, 8);
    backbone->push_back(TimeConv(channels, final_channels, 4, 1, 1, emb_dim_, cond));
    score = register_module("score", nn::Conv2d(nn::Conv2dOptions(final_channels, 1, 4).stride(1).padding(1)));

    if (options_.with_decoders) {
        const auto width = options_.decoder_channels;
        resize_decoder =
            register_module("resize_decoder", Decoder(final_channels, width, options_.channels, 2, emb_dim_));
        crop_decoder = register_module("crop_decoder",
                                       Decoder(penultimate_channels, width, options_.channels, options_.n_layers, emb_dim_));
    }
}

torch::Tensor DiscriminatorImpl::embed(std::int64_t step, const torch::TensorOptions& options) {
    check_step(step, options_.max_step, "discriminator");
    return time_mlp->forward(step_embedding(step, options_.time_dim, options).unsqueeze(0)).squeeze(0);
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x, std::int64_t step) {
    if (x.dim() != 4 || x.size(1) != options_.channels) {
        throw std::invalid_argument("discriminator: input must be [B, C, H, W]");
    }
    const auto emb = embed(step, x.options());
    DiscriminatorOutput out;
    auto h = x;
    for (const auto& layer : *backbone) {
        h = leaky(layer->as<TimeConvImpl>()->forward(h, emb));
        out.features.push_back(h);
    }
    out.scores = score(h);
    return out;
}

torch::Tensor DiscriminatorImpl::decode_resize(const DiscriminatorOutput& out, std::int64_t step) {
    if (!options_.with_decoders) {
        throw std::logic_error("discriminator was built without decoders");
    }
    const auto& final_features = out.features.back();
    const auto& grid = out.features[out.features.size() - 2];
    auto aligned = F::interpolate(final_features, F::InterpolateFuncOptions()
                                                      .size(std::vector<std::int64_t>{grid.size(2), grid.size(3)})
                                                      .mode(torch::kBilinear)
                                                      .align_corners(false));
    return resize_decoder(aligned, embed(step, final_features.options()));
}

void DiscriminatorImpl::check_crop(const CropBox& box, std::int64_t height, std::int64_t width) const {
    const auto stride = feature_stride();
    if (box.size <= 0 || box.top < 0 || box.left < 0 || box.top + box.size > height || box.left + box.size > width) {
        throw std::out_of_range("crop box lies outside the canvas");
    }
    if (box.top % stride != 0 || box.left % stride != 0 || box.size % stride != 0) {
        throw std::out_of_range("crop box must align to the discriminator feature stride " + std::to_string(stride));
    }
}

torch::Tensor DiscriminatorImpl::decode_crop(const DiscriminatorOutput& out, const CropBox& box, std::int64_t step) {
    if (!options_.with_decoders) {
        throw std::logic_error("discriminator was built without decoders");
    }
    const auto& grid = out.features[out.features.size() - 2];
    const auto stride = feature_stride();
    check_crop(box, grid.size(2) * stride, grid.size(3) * stride);
    auto window = grid.narrow(2, box.top / stride, box.size / stride).narrow(3, box.left / stride, box.size / stride);
    return crop_decoder(window, embed(step, grid.options()));
}

torch::Tensor resize_target(const torch::Tensor& image, std::int64_t side) {
    if (image.size(2) == side && image.size(3) == side) {
        return image.clone();
    }
    return F::interpolate(image, F::InterpolateFuncOptions()
                                     .size(std::vector<std::int64_t>{side, side})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
}

torch::Tensor crop_target(const torch::Tensor& image, const CropBox& box) {
    if (box.size <= 0 || box.top < 0 || box.left < 0 || box.top + box.size > image.size(2) ||
        box.left + box.size > image.size(3)) {
        throw std::out_of_range("crop box lies outside the image");
    }
    return image.narrow(2, box.top, box.size).narrow(3, box.left, box.size);
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

CriticImpl::CriticImpl(CriticOptions options) : options_(options) {
    if (options_.nef < 1 || options_.n_layers < 1 || !(options_.output_bound >= 0.0)) {
        throw std::invalid_argument("invalid critic options");
    }
    body = register_module("body", nn::Sequential());
    std::int64_t channels = 3 * options_.channels;
    std::int64_t width = options_.nef;
    for (std::int64_t k = 0; k < options_.n_layers; ++k) {
        body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, width, 4).stride(2).padding(1)));
        body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
        channels = width;
        width *= 2;
    }
    out = register_module("out", nn::Linear(channels, 1));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& x_t, const torch::Tensor& x_end,
                                  const std::optional<torch::Tensor>& masked) {
    if (!x_t.sizes().equals(x_end.sizes()) || (masked && !masked->sizes().equals(x_end.sizes()))) {
        throw std::invalid_argument("critic: input shapes differ");
    }
    auto third = masked ? *masked : torch::zeros_like(x_end);
    auto h = body->forward(torch::cat({x_t, x_end, third}, 1));
    auto score = out(h.mean({2, 3})).squeeze(1);
    // The generator maximises the raw score, which the contrastive objective leaves
    // free to drift by a constant, so it is kept bounded.
    if (options_.output_bound > 0.0) {
        score = options_.output_bound * torch::tanh(score / options_.output_bound);
    }
    return score;
}

// ---------------------------------------------------------------------------
// Projector
// ---------------------------------------------------------------------------

PatchProjectorImpl::PatchProjectorImpl(ProjectorOptions options) : options_(std::move(options)) {
    if (options_.in_channels.empty() || options_.nc < 1) {
        throw std::invalid_argument("invalid projector options");
    }
    mlps = register_module("mlps", nn::ModuleList());
    for (auto c : options_.in_channels) {
        mlps->push_back(nn::Sequential(nn::Linear(c, options_.nc), nn::ReLU(), nn::Linear(options_.nc, options_.nc)));
    }
}

torch::Tensor PatchProjectorImpl::project(std::size_t layer, const torch::Tensor& sampled) {
    if (layer >= mlps->size()) {
        throw std::out_of_range("projector layer index out of range");
    }
    auto h = mlps[layer]->as<nn::SequentialImpl>()->forward(sampled);
    return h / (h.norm(2, -1, true) + 1e-7);
}

std::vector<torch::Tensor> sample_patch_embeddings(const std::vector<torch::Tensor>& feats_by_layer,
                                                   const PatchLocations& locations, PatchProjector& projector) {
    if (locations.per_layer.size() != feats_by_layer.size()) {
        throw std::invalid_argument("patch locations must cover every feature layer");
    }
    std::vector<torch::Tensor> out;
    out.reserve(feats_by_layer.size());
    for (std::size_t l = 0; l < feats_by_layer.size(); ++l) {
        const auto& feat = feats_by_layer[l];
        const auto batch = feat.size(0);
        const auto channels = feat.size(1);
        const auto cells = feat.size(2) * feat.size(3);
        auto idx = locations.per_layer[l];
        if (idx.dim() == 1) {
            idx = idx.unsqueeze(0);
        }
        if (idx.numel() == 0 || idx.min().item<std::int64_t>() < 0 || idx.max().item<std::int64_t>() >= cells) {
            throw std::out_of_range("patch location outside the feature grid of layer " + std::to_string(l));
        }
        idx = idx.expand({batch, idx.size(1)});
        auto flat = feat.reshape({batch, channels, cells}).permute({0, 2, 1});
        auto picked = flat.gather(1, idx.unsqueeze(-1).expand({batch, idx.size(1), channels}));
        out.push_back(projector->project(l, picked));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> ModelBundle::networks() const {
    std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> out;
    out.emplace_back("generator", generator.ptr());
    out.emplace_back("discriminator", discriminator.ptr());
    if (critic) {
        out.emplace_back("critic", critic.ptr());
    }
    out.emplace_back("projector", projector.ptr());
    return out;
}

void ModelBundle::to(torch::Dtype dtype) {
    for (auto& [name, net] : networks()) {
        net->to(dtype);
    }
}

void ModelBundle::train(bool on) {
    for (auto& [name, net] : networks()) {
        net->train(on);
    }
}

ModelBundle make_bundle(const ModelOptions& options, std::uint64_t seed) {
    torch::manual_seed(seed);
    ModelBundle bundle;
    bundle.options = options;
    bundle.generator = Generator(options.generator);
    bundle.discriminator = Discriminator(options.discriminator);
    if (options.with_critic) {
        bundle.critic = Critic(options.critic);
    }
    bundle.projector = PatchProjector(ProjectorOptions{bundle.generator->feature_channels(), options.projector_nc});
    return bundle;
}

std::int64_t count_parameters(const nn::Module& module) {
    std::int64_t total = 0;
    for (const auto& p : module.parameters(/*recurse=*/true)) {
        total += p.numel();
    }
    return total;
}

std::map<std::string, std::int64_t> count_parameters(const ModelBundle& bundle) {
    std::map<std::string, std::int64_t> counts;
    std::int64_t total = 0;
    for (const auto& [name, net] : bundle.networks()) {
        counts[name] = count_parameters(*net);
        total += counts[name];
    }
    counts["total"] = total;
    return counts;
}

}  // namespace fgsb

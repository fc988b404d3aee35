#include "fgsb/inference.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "fgsb/bridge.hpp"
#include "fgsb/trainer.hpp"

namespace fgsb {

void InferenceConfig::validate() const {
    if (nfe < 1) {
        throw std::invalid_argument("inference.nfe must be >= 1");
    }
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("inference.tau must be finite and >= 0");
    }
}

InferenceConfig inference_defaults(const TrainConfig& config) {
    const auto comp = apply_ablation(config);
    InferenceConfig out;
    out.nfe = comp.nfe;
    out.tau = comp.tau;
    out.seed = config.seed;
    return out;
}

torch::Tensor synthesize_tensor(Generator& generator, const torch::Tensor& source, std::int64_t nfe, double tau,
                                Rng& rng) {
    if (nfe < 1) {
        throw std::invalid_argument("synthesize: nfe must be >= 1");
    }
    if (nfe - 1 > generator->options().max_step) {
        throw std::invalid_argument("synthesize: nfe " + std::to_string(nfe) + " exceeds the generator's trained steps");
    }
    torch::NoGradGuard no_grad;
    const auto n = source.size(0);
    torch::Tensor x = source;
    torch::Tensor x_hat;
    for (std::int64_t i = 0; i < nfe; ++i) {
        const auto z = generator->sample_z(n, rng, source.options());
        x_hat = generator->forward(x, i, z);
        if (i + 1 < nfe) {
            x = inference_transition(x_hat, tau, rng);
        }
    }
    return x_hat;
}

torch::Tensor image_to_tensor(const Image& image, torch::Dtype dtype) {
    auto t = torch::empty({1, 1, image.height(), image.width()}, torch::kFloat);
    std::memcpy(t.data_ptr<float>(), image.pixels().data(), image.size() * sizeof(float));
    return t.to(dtype);
}

Image tensor_to_image(const torch::Tensor& tensor) {
    const auto t = tensor.detach().to(torch::kFloat).contiguous();
    if (t.numel() != t.size(-1) * t.size(-2)) {
        throw std::invalid_argument("tensor_to_image: expected a single-channel single image");
    }
    Image out(t.size(-2), t.size(-1));
    std::memcpy(out.pixels().data(), t.data_ptr<float>(), out.size() * sizeof(float));
    return out;
}

Image synthesize(const Image& source, ModelBundle& bundle, const InferenceConfig& config) {
    config.validate();
    if (config.canvas && (source.height() != config.canvas->height || source.width() != config.canvas->width)) {
        throw std::invalid_argument("synthesize: source is " + std::to_string(source.height()) + "x" +
                                    std::to_string(source.width()) + " but the model was trained on " +
                                    std::to_string(config.canvas->height) + "x" + std::to_string(config.canvas->width));
    }
    auto rng = make_rng(config.seed);
    const auto dtype = bundle.generator->parameters().front().scalar_type();
    return tensor_to_image(synthesize_tensor(bundle.generator, image_to_tensor(source, dtype), config.nfe, config.tau, rng));
}

std::vector<Image> synthesize_stack(const std::vector<Image>& sources, ModelBundle& bundle,
                                    const InferenceConfig& config) {
    std::vector<Image> out;
    out.reserve(sources.size());
    for (std::size_t k = 0; k < sources.size(); ++k) {
        auto per_slice = config;
        per_slice.seed = derive_seed(config.seed, k);
        try {
            out.push_back(synthesize(sources[k], bundle, per_slice));
        } catch (const std::exception& e) {
            throw std::runtime_error("slice " + std::to_string(k) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace fgsb

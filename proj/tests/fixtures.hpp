#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fgsb/dataset.hpp"
#include "fgsb/trainer.hpp"

namespace fgsb::testing {

/// Small phantom: `subjects` training subjects plus one test subject, 32x32.
inline DatasetManifest tiny_phantom(std::int64_t subjects = 1, std::int64_t slices = 4, std::uint64_t seed = 3) {
    PhantomOptions o;
    o.seed = seed;
    o.n_subjects = subjects + 1;
    o.n_test_subjects = 1;
    o.slices_per_subject = slices;
    o.canvas = Canvas{32, 32};
    o.lesion_rate = 0.75;
    return generate_phantom_dataset(o);
}

/// Narrow networks and few contrastive patches so a training step takes milliseconds.
inline TrainConfig tiny_config(std::int64_t epochs = 2) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 2;
    c.nce_patches = 16;
    c.model.generator.ngf = 4;
    c.model.generator.n_blocks = 1;
    c.model.generator.time_dim = 8;
    c.model.generator.z_dim = 8;
    c.model.generator.cond_dim = 8;
    c.model.discriminator.ndf = 4;
    c.model.discriminator.n_layers = 2;
    c.model.discriminator.time_dim = 8;
    c.model.discriminator.decoder_channels = 4;
    c.model.critic.nef = 4;
    c.model.critic.n_layers = 2;
    c.model.projector_nc = 8;
    return c;
}

inline std::vector<torch::Tensor> flat_parameters(const ModelBundle& bundle) {
    std::vector<torch::Tensor> out;
    for (const auto& [name, net] : bundle.networks()) {
        for (const auto& p : net->parameters()) {
            out.push_back(p.detach().clone());
        }
    }
    return out;
}

inline bool same_tensors(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!torch::equal(a[i], b[i])) {
            return false;
        }
    }
    return true;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace fgsb::testing

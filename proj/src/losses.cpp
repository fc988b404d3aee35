#include "fgsb/losses.hpp"

#include <algorithm>
#include <cmath>

namespace fgsb {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
    const std::pair<const char*, double> all[] = {{"lambda_rec", lambda_rec}, {"lambda_reg", lambda_reg},
                                                  {"lambda_cpl", lambda_cpl}, {"lambda_wreg", lambda_wreg},
                                                  {"lambda_idt", lambda_idt}, {"lambda_sb", lambda_sb}};
    for (const auto& [name, value] : all) {
        if (!std::isfinite(value) || value < 0.0) {
            throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and non-negative");
        }
    }
}

bool LossReport::has(const std::string& name) const {
    return std::ranges::any_of(terms, [&](const LossTerm& t) { return t.name == name; });
}

double LossReport::value(const std::string& name) const {
    for (const auto& t : terms) {
        if (t.name == name) {
            return t.value.item<double>();
        }
    }
    throw std::out_of_range("no loss term named " + name);
}

void LossReport::require_finite(const std::string& context) const {
    for (const auto& t : terms) {
        const double v = t.value.item<double>();
        if (!std::isfinite(v)) {
            throw std::runtime_error(context + ": loss term '" + t.name + "' is not finite (" + std::to_string(v) + ")");
        }
    }
    if (total.defined() && !std::isfinite(total.item<double>())) {
        throw std::runtime_error(context + ": total loss is not finite");
    }
}

nlohmann::ordered_json LossReport::to_json() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& t : terms) {
        out[t.name] = t.value.item<double>();
    }
    if (total.defined()) {
        out["total"] = total.item<double>();
    }
    return out;
}

torch::Tensor loss_rec(const torch::Tensor& x_hat, const torch::Tensor& x_B) {
    if (!x_hat.sizes().equals(x_B.sizes())) {
        throw std::invalid_argument("loss_rec: shapes differ");
    }
    return (x_hat - x_B).abs().mean();
}

torch::Tensor loss_cpl(const torch::Tensor& x_hat, const torch::Tensor& x_B, const torch::Tensor& prior) {
    if (!x_hat.sizes().equals(x_B.sizes())) {
        throw std::invalid_argument("loss_cpl: shapes differ");
    }
    return (prior * (x_hat - x_B).pow(2)).expand_as(x_hat).mean();
}

torch::Tensor patchnce_from_embeddings(const torch::Tensor& queries, const torch::Tensor& keys, double temperature) {
    if (queries.dim() != 3 || !queries.sizes().equals(keys.sizes())) {
        throw std::invalid_argument("patchnce: queries and keys must share shape [B, N, C]");
    }
    const auto batch = queries.size(0);
    const auto n = queries.size(1);
    if (n < 2) {
        throw std::invalid_argument("patchnce needs at least 2 locations so that negatives exist");
    }
    auto logits = torch::bmm(queries, keys.transpose(1, 2)) / temperature;
    auto targets = torch::arange(n, torch::TensorOptions().dtype(torch::kLong)).repeat({batch});
    return F::cross_entropy(logits.reshape({batch * n, n}), targets);
}

std::vector<std::pair<std::int64_t, std::int64_t>> feature_grids(const std::vector<torch::Tensor>& feats) {
    std::vector<std::pair<std::int64_t, std::int64_t>> grids;
    grids.reserve(feats.size());
    for (const auto& f : feats) {
        grids.emplace_back(f.size(2), f.size(3));
    }
    return grids;
}

PatchLocations sample_uniform_locations(const std::vector<std::pair<std::int64_t, std::int64_t>>& grids,
                                        std::int64_t n, Rng& rng) {
    PatchLocations locations;
    for (const auto& [h, w] : grids) {
        const auto cells = h * w;
        const auto m = std::min(n, cells);
        locations.per_layer.push_back(torch::randperm(cells, rng, torch::kLong).narrow(0, 0, m).unsqueeze(0));
    }
    return locations;
}

PatchLocations sample_weighted_locations(const std::vector<std::pair<std::int64_t, std::int64_t>>& grids,
                                         const torch::Tensor& prior, std::int64_t n, Rng& rng) {
    auto mask = prior.detach().to(torch::kDouble);
    while (mask.dim() < 4) {
        mask = mask.unsqueeze(0);
    }
    if (mask.sum().item<double>() <= 0.0) {
        return sample_uniform_locations(grids, n, rng);
    }
    const auto batch = mask.size(0);
    PatchLocations locations;
    for (const auto& [h, w] : grids) {
        const auto cells = h * w;
        const auto m = std::min(n, cells);
        auto density = F::adaptive_avg_pool2d(mask, F::AdaptiveAvgPool2dFuncOptions({h, w})).reshape({batch, cells});
        std::vector<torch::Tensor> rows;
        for (std::int64_t b = 0; b < batch; ++b) {
            const auto weights = density[b];
            const auto inside = weights > 0.0;
            const auto support = inside.sum().item<std::int64_t>();
            if (support == 0) {
                rows.push_back(torch::randperm(cells, rng, torch::kLong).narrow(0, 0, m));
            } else if (support >= m) {
                rows.push_back(torch::multinomial(weights, m, /*replacement=*/false, rng));
            } else {
                auto in_idx = torch::nonzero(inside).reshape({-1});
                auto out_idx = torch::nonzero(~inside).reshape({-1});
                auto fill = out_idx.index_select(0, torch::randperm(out_idx.size(0), rng, torch::kLong).narrow(0, 0, m - support));
                rows.push_back(torch::cat({in_idx, fill}));
            }
        }
        locations.per_layer.push_back(torch::stack(rows));
    }
    return locations;
}

torch::Tensor loss_patchnce(const std::vector<torch::Tensor>& query_feats, const std::vector<torch::Tensor>& key_feats,
                            PatchProjector& projector, const PatchLocations& locations, double temperature) {
    if (query_feats.size() != key_feats.size() || query_feats.empty()) {
        throw std::invalid_argument("patchnce: query and key feature stacks differ");
    }
    const auto queries = sample_patch_embeddings(query_feats, locations, projector);
    const auto keys = sample_patch_embeddings(key_feats, locations, projector);
    torch::Tensor total;
    for (std::size_t l = 0; l < queries.size(); ++l) {
        auto term = patchnce_from_embeddings(queries[l], keys[l], temperature);
        total = total.defined() ? total + term : term;
    }
    return total / static_cast<double>(queries.size());
}

torch::Tensor loss_patchnce(Generator& generator, PatchProjector& projector, const torch::Tensor& x_hat,
                            const torch::Tensor& x_A, std::int64_t step, const torch::Tensor& z,
                            const PatchLocations& locations, double temperature) {
    return loss_patchnce(generator->encode(x_hat, step, z), generator->encode(x_A, step, z), projector, locations,
                         temperature);
}

IdentityLoss loss_identity(Generator& generator, PatchProjector& projector, const torch::Tensor& x_B, std::int64_t step,
                           const torch::Tensor& z, const PatchLocations& locations, double temperature) {
    IdentityLoss out;
    out.output = generator->forward(x_B, step, z);
    out.rec = loss_rec(out.output, x_B);
    out.reg = loss_patchnce(generator, projector, out.output, x_B, step, z, locations, temperature);
    return out;
}

torch::Tensor DiscriminatorLoss::total() const {
    auto sum = fake + real;
    if (resize_rec) {
        sum = sum + *resize_rec;
    }
    if (crop_rec) {
        sum = sum + *crop_rec;
    }
    return sum;
}

LossReport DiscriminatorLoss::report() const {
    LossReport r;
    r.terms.push_back({"d_fake", fake.detach(), 1.0});
    r.terms.push_back({"d_real", real.detach(), 1.0});
    if (resize_rec) {
        r.terms.push_back({"d_resize_rec", resize_rec->detach(), 1.0});
    }
    if (crop_rec) {
        r.terms.push_back({"d_crop_rec", crop_rec->detach(), 1.0});
    }
    r.total = total().detach();
    return r;
}

DiscriminatorLoss loss_adv_discriminator(Discriminator& discriminator, const torch::Tensor& x_hat,
                                         const torch::Tensor& x_B, std::int64_t step,
                                         const std::optional<CropBox>& crop) {
    DiscriminatorLoss out;
    const auto fake_out = discriminator->forward(x_hat.detach(), step);
    const auto real_out = discriminator->forward(x_B, step);
    out.fake = lsgan_fake(fake_out.scores);
    out.real = lsgan_real(real_out.scores);
    if (discriminator->has_decoders()) {
        if (!crop) {
            throw std::invalid_argument("loss_adv_discriminator: a crop box is required with decoders");
        }
        const auto resized = discriminator->decode_resize(real_out, step);
        out.resize_rec = (resized - resize_target(x_B, resized.size(2))).pow(2).mean();
        const auto cropped = discriminator->decode_crop(real_out, *crop, step);
        out.crop_rec = (cropped - crop_target(x_B, *crop)).pow(2).mean();
    }
    return out;
}

torch::Tensor loss_adv_generator(Discriminator& discriminator, const torch::Tensor& x_hat, std::int64_t step) {
    return lsgan_real(discriminator->forward(x_hat, step).scores);
}

ParameterFreeze::ParameterFreeze(torch::nn::Module& module) : params_(module.parameters()) {
    previous_.reserve(params_.size());
    for (auto& p : params_) {
        previous_.push_back(p.requires_grad());
        p.set_requires_grad(false);
    }
}

ParameterFreeze::~ParameterFreeze() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        params_[i].set_requires_grad(previous_[i]);
    }
}

LossReport loss_total_generator(const GeneratorTerms& terms, const LossWeights& weights) {
    weights.validate();
    LossReport report;
    auto add = [&](const char* name, const std::optional<torch::Tensor>& value, double weight) {
        if (value) {
            report.terms.push_back({name, *value, weight});
        }
    };
    add("adv", terms.adv, 1.0);
    add("sb", terms.sb, weights.lambda_sb);
    add("rec", terms.rec, weights.lambda_rec);
    add("reg", terms.reg, weights.lambda_reg);
    add("cpl", terms.cpl, weights.lambda_cpl);
    add("wreg", terms.wreg, weights.lambda_wreg);
    add("idt_rec", terms.idt_rec, weights.lambda_idt * weights.lambda_rec);
    add("idt_reg", terms.idt_reg, weights.lambda_idt * weights.lambda_reg);
    if (report.terms.empty()) {
        report.total = torch::zeros({}, torch::kDouble);
        return report;
    }
    torch::Tensor total;
    for (const auto& t : report.terms) {
        auto weighted = t.value * t.weight;
        total = total.defined() ? total + weighted : weighted;
    }
    report.total = total;
    return report;
}

}  // namespace fgsb

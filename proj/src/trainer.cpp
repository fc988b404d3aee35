#include "fgsb/trainer.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fgsb/config.hpp"

namespace fgsb {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw std::invalid_argument("train.epochs must be >= 1");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("train.lr must be finite and > 0");
    }
    if (decay_start() < 0 || decay_start() >= epochs) {
        throw std::invalid_argument("train.lr_decay_start must lie in [0, epochs)");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("train.batch_size must be >= 1");
    }
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
        throw std::invalid_argument("train.flip_probability must lie in [0, 1]");
    }
    if (nce_patches < 2) {
        throw std::invalid_argument("train.nce_patches must be >= 2");
    }
    if (identity_every < 0 || checkpoint_every < 0) {
        throw std::invalid_argument("train.identity_every and train.checkpoint_every must be >= 0");
    }
    if (!ablation.no_sb && mi_form == MiForm::donsker_varadhan && batch_size < 2) {
        throw std::invalid_argument("train.batch_size must be >= 2 for the Donsker-Varadhan bridge loss");
    }
    weights.validate();
    bridge.validate();
}

Components apply_ablation(const TrainConfig& config) {
    Components c;
    c.iterative = !config.ablation.no_sb;
    c.critic = !config.ablation.no_sb;
    c.decoders = !config.ablation.no_ssl_d;
    c.prior = config.ablation.use_prior;
    c.nfe = c.iterative ? config.bridge.nfe : 1;
    c.tau = config.ablation.no_noise ? 0.0 : config.bridge.tau;
    return c;
}

ModelOptions effective_model_options(const TrainConfig& config) {
    const auto comp = apply_ablation(config);
    auto options = config.model;
    const auto max_step = comp.iterative ? config.bridge.nfe : 0;
    options.generator.max_step = max_step;
    options.discriminator.max_step = max_step;
    options.discriminator.with_decoders = comp.decoders;
    options.with_critic = comp.critic;
    return options;
}

double lr_at(std::int64_t epoch, const TrainConfig& config) {
    if (epoch < 0 || epoch >= config.epochs) {
        throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(config.epochs) + ")");
    }
    const auto start = config.decay_start();
    if (epoch < start) {
        return config.lr;
    }
    return config.lr * static_cast<double>(config.epochs - epoch) / static_cast<double>(config.epochs - start);
}

Batch make_batch(const std::vector<SlicePair>& pairs, torch::Dtype dtype) {
    if (pairs.empty()) {
        throw std::invalid_argument("make_batch: empty batch");
    }
    const auto h = pairs.front().source.height();
    const auto w = pairs.front().source.width();
    const auto b = static_cast<std::int64_t>(pairs.size());
    Batch batch;
    batch.x_A = torch::empty({b, 1, h, w}, torch::kFloat);
    batch.x_B = torch::empty({b, 1, h, w}, torch::kFloat);
    batch.prior = torch::zeros({b, 1, h, w}, torch::kFloat);
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        if (p.source.height() != h || p.source.width() != w || !p.source.same_shape(p.target)) {
            throw std::invalid_argument("make_batch: pairs differ in shape");
        }
        std::memcpy(batch.x_A[i].data_ptr<float>(), p.source.pixels().data(), p.source.size() * sizeof(float));
        std::memcpy(batch.x_B[i].data_ptr<float>(), p.target.pixels().data(), p.target.size() * sizeof(float));
        if (p.prior_mask) {
            batch.has_prior = true;
            auto dst = batch.prior[i].data_ptr<float>();
            const auto src = p.prior_mask->values();
            for (std::size_t k = 0; k < src.size(); ++k) {
                dst[k] = static_cast<float>(src[k]);
            }
        }
    }
    batch.x_A = batch.x_A.to(dtype);
    batch.x_B = batch.x_B.to(dtype);
    batch.prior = batch.prior.to(dtype);
    return batch;
}

namespace {

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr) {
    return std::make_unique<torch::optim::Adam>(std::move(params),
                                                torch::optim::AdamOptions(lr).betas({0.5, 0.999}));
}

std::vector<torch::Tensor> concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TrainState make_train_state(const TrainConfig& config, Canvas canvas) {
    config.validate();
    TrainState state{config, canvas, make_bundle(effective_model_options(config), config.seed), {},
                     make_rng(derive_seed(config.seed, 0x7261696eULL))};
    auto& b = state.bundle;
    const double lr = lr_at(0, config);
    state.optim.generator = make_adam(concat(b.generator->parameters(), b.projector->parameters()), lr);
    state.optim.discriminator = make_adam(b.discriminator->parameters(), lr);
    if (b.critic) {
        state.optim.critic = make_adam(b.critic->parameters(), lr);
    }
    b.train(true);
    return state;
}

void set_learning_rate(TrainState& state, double lr) {
    for (auto* opt : {state.optim.generator.get(), state.optim.discriminator.get(), state.optim.critic.get()}) {
        if (opt == nullptr) {
            continue;
        }
        for (auto& group : opt->param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        }
    }
}

nlohmann::ordered_json StepReport::to_json() const {
    nlohmann::ordered_json j;
    j["timestep"] = timestep;
    j["discriminator"] = discriminator.to_json();
    if (critic) {
        j["critic"] = critic->to_json();
    }
    j["generator"] = generator.to_json();
    return j;
}

namespace {

CropBox sample_crop(const Discriminator& d, std::int64_t height, std::int64_t width, Rng& rng) {
    const auto stride = d->feature_stride();
    const auto size = std::max(stride, std::min(height, width) / 2 / stride * stride);
    const auto rows = (height - size) / stride + 1;
    const auto cols = (width - size) / stride + 1;
    const auto pick = torch::randint(0, rows * cols, {1}, rng, torch::kLong).item<std::int64_t>();
    return CropBox{(pick / cols) * stride, (pick % cols) * stride, size};
}

}  // namespace

StepReport train_step(const Batch& batch, TrainState& state) {
    const auto& cfg = state.config;
    const auto comp = apply_ablation(cfg);
    auto& b = state.bundle;
    auto& rng = state.rng;
    const auto n = batch.x_A.size(0);
    const auto options = batch.x_A.options();
    const bool use_prior = comp.prior && batch.has_prior;
    const std::optional<torch::Tensor> prior = use_prior ? std::optional<torch::Tensor>(batch.prior) : std::nullopt;

    StepReport report;
    const std::int64_t T = comp.iterative ? sample_timestep(rng, cfg.bridge.nfe) : 0;
    report.timestep = T;

    // Generation stage: steps 0..T-1 carry the prediction forward without gradients.
    torch::Tensor x_t = batch.x_A;
    {
        torch::NoGradGuard no_grad;
        for (std::int64_t i = 0; i < T; ++i) {
            const auto z = b.generator->sample_z(n, rng, options);
            const auto x_hat = b.generator->forward(x_t, i, z);
            x_t = training_transition(batch.x_B, x_hat, cfg.bridge.s(i + 1), comp.tau, rng);
        }
    }
    const auto z = b.generator->sample_z(n, rng, options);
    const auto x_hat = b.generator->forward(x_t, T, z);

    // Discriminator.
    std::optional<CropBox> crop;
    if (comp.decoders) {
        crop = sample_crop(b.discriminator, batch.x_B.size(2), batch.x_B.size(3), rng);
    }
    {
        const auto d_loss = loss_adv_discriminator(b.discriminator, x_hat, batch.x_B, T, crop);
        report.discriminator = d_loss.report();
        report.discriminator.require_finite("discriminator update");
        state.optim.discriminator->zero_grad();
        d_loss.total().backward();
        state.optim.discriminator->step();
    }

    auto critic_fn = [&](const torch::Tensor& a, const torch::Tensor& e, const std::optional<torch::Tensor>& m) {
        return b.critic->forward(a, e, m);
    };

    // MI estimator.
    if (comp.critic) {
        const auto e_loss = loss_mi_estimator(critic_fn, x_t, batch.x_B, prior, cfg.mi_form);
        LossReport r;
        r.terms.push_back({"mi_estimator", e_loss.detach(), 1.0});
        r.total = e_loss.detach();
        r.require_finite("MI estimator update");
        report.critic = r;
        state.optim.critic->zero_grad();
        e_loss.backward();
        state.optim.critic->step();
    }

    // Generator.
    {
        ParameterFreeze freeze_d(*b.discriminator);
        std::optional<ParameterFreeze> freeze_e;
        if (b.critic) {
            freeze_e.emplace(*b.critic);
        }
        GeneratorTerms terms;
        terms.adv = loss_adv_generator(b.discriminator, x_hat, T);
        if (comp.critic) {
            terms.sb = loss_mi_generator(critic_fn, x_t, x_hat, prior);
        }
        terms.rec = loss_rec(x_hat, batch.x_B);
        const auto feats_hat = b.generator->encode(x_hat, T, z);
        const auto feats_src = b.generator->encode(batch.x_A, T, z);
        const auto grids = feature_grids(feats_hat);
        const auto locations = sample_uniform_locations(grids, cfg.nce_patches, rng);
        terms.reg = loss_patchnce(feats_hat, feats_src, b.projector, locations);
        if (use_prior) {
            terms.cpl = loss_cpl(x_hat, batch.x_B, batch.prior);
            const auto weighted = sample_weighted_locations(grids, batch.prior, cfg.nce_patches, rng);
            terms.wreg = loss_patchnce(feats_hat, feats_src, b.projector, weighted);
        }
        if (cfg.identity_every > 0 && state.global_step % cfg.identity_every == 0) {
            const auto idt = loss_identity(b.generator, b.projector, batch.x_B, T, z, locations);
            terms.idt_rec = idt.rec;
            terms.idt_reg = idt.reg;
        }
        auto g_report = loss_total_generator(terms, cfg.weights);
        g_report.require_finite("generator update");
        state.optim.generator->zero_grad();
        g_report.total.backward();
        state.optim.generator->step();
        for (auto& t : g_report.terms) {
            t.value = t.value.detach();
        }
        g_report.total = g_report.total.detach();
        report.generator = std::move(g_report);
    }
    ++state.global_step;
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

std::string config_digest(const TrainConfig& config) {
    const auto text = to_json(config).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

namespace {

constexpr const char* kMagic = "fgsb-checkpoint";

torch::Tensor bytes_tensor(const std::string& s) {
    auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kUInt8);
    std::memcpy(t.data_ptr<std::uint8_t>(), s.data(), s.size());
    return t;
}

std::string tensor_bytes(const torch::Tensor& t) {
    const auto c = t.contiguous();
    return {reinterpret_cast<const char*>(c.data_ptr<std::uint8_t>()), static_cast<std::size_t>(c.numel())};
}

nlohmann::ordered_json header_json(const TrainState& state) {
    nlohmann::ordered_json h;
    h["magic"] = kMagic;
    h["version"] = kCheckpointVersion;
    h["epoch"] = state.epoch;
    h["global_step"] = state.global_step;
    h["canvas"] = {{"height", state.canvas.height}, {"width", state.canvas.width}};
    h["config_digest"] = config_digest(state.config);
    h["config"] = to_json(state.config);
    auto names = nlohmann::ordered_json::array();
    for (const auto& [net, module] : state.bundle.networks()) {
        for (const auto& p : module->named_parameters()) {
            names.push_back(net + "." + p.key());
        }
    }
    h["parameters"] = names;
    return h;
}

nlohmann::json read_header(torch::serialize::InputArchive& archive, const fs::path& path) {
    torch::Tensor raw;
    if (!archive.try_read("header", raw)) {
        throw std::runtime_error(path.string() + ": not an fgsb checkpoint (no header)");
    }
    auto h = nlohmann::json::parse(tensor_bytes(raw));
    if (h.value("magic", "") != kMagic) {
        throw std::runtime_error(path.string() + ": not an fgsb checkpoint (bad magic)");
    }
    if (h.at("version").get<std::int64_t>() != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " + h.at("version").dump());
    }
    return h;
}

CheckpointInfo info_from_header(const nlohmann::json& h) {
    CheckpointInfo info;
    info.version = h.at("version").get<std::int64_t>();
    info.config = train_config_from_json(h.at("config"), "config");
    info.canvas = Canvas{h.at("canvas").at("height").get<std::int64_t>(), h.at("canvas").at("width").get<std::int64_t>()};
    info.epoch = h.at("epoch").get<std::int64_t>();
    info.global_step = h.at("global_step").get<std::int64_t>();
    info.config_digest = h.at("config_digest").get<std::string>();
    info.parameter_names = h.at("parameters").get<std::vector<std::string>>();
    return info;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state) {
    torch::serialize::OutputArchive archive;
    archive.write("header", bytes_tensor(header_json(state).dump()));
    for (const auto& [name, module] : state.bundle.networks()) {
        torch::serialize::OutputArchive sub;
        module->save(sub);
        archive.write("net_" + name, sub);
    }
    auto save_optim = [&](const char* name, const std::unique_ptr<torch::optim::Adam>& opt) {
        if (opt) {
            torch::serialize::OutputArchive sub;
            opt->save(sub);
            archive.write(std::string("optim_") + name, sub);
        }
    };
    save_optim("generator", state.optim.generator);
    save_optim("discriminator", state.optim.discriminator);
    save_optim("critic", state.optim.critic);
    const auto rng_bytes = rng_state(state.rng);
    archive.write("rng", bytes_tensor(std::string(rng_bytes.begin(), rng_bytes.end())));
    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    // Write then rename so an interrupted save never leaves a truncated checkpoint.
    const auto tmp = fs::path(path.string() + ".tmp");
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
    if (!fs::exists(path)) {
        throw std::runtime_error("checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    return info_from_header(read_header(archive, path));
}

TrainState load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) {
        throw std::runtime_error("checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    const auto info = info_from_header(read_header(archive, path));
    if (config_digest(info.config) != info.config_digest) {
        throw std::runtime_error(path.string() + ": config digest mismatch");
    }
    auto state = make_train_state(info.config, info.canvas);
    for (const auto& [name, module] : state.bundle.networks()) {
        torch::serialize::InputArchive sub;
        if (!archive.try_read("net_" + name, sub)) {
            throw std::runtime_error(path.string() + ": missing network " + name);
        }
        module->load(sub);
    }
    auto load_optim = [&](const char* name, const std::unique_ptr<torch::optim::Adam>& opt) {
        if (opt) {
            torch::serialize::InputArchive sub;
            if (!archive.try_read(std::string("optim_") + name, sub)) {
                throw std::runtime_error(path.string() + ": missing optimizer " + name);
            }
            opt->load(sub);
        }
    };
    load_optim("generator", state.optim.generator);
    load_optim("discriminator", state.optim.discriminator);
    load_optim("critic", state.optim.critic);
    torch::Tensor rng_raw;
    archive.read("rng", rng_raw);
    const auto bytes = tensor_bytes(rng_raw);
    set_rng_state(state.rng, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    state.epoch = info.epoch;
    state.global_step = info.global_step;
    return state;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_pairs, std::int64_t batch_size, std::uint64_t seed,
                                                    std::int64_t epoch) {
    const auto bs = static_cast<std::size_t>(batch_size);
    if (n_pairs < bs) {
        throw std::invalid_argument("train split holds " + std::to_string(n_pairs) + " pairs, fewer than batch_size " +
                                    std::to_string(batch_size));
    }
    std::vector<std::size_t> order(n_pairs);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle(derive_seed(seed, 0x5348554600000000ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle);
    std::vector<std::vector<std::size_t>> batches;
    // Incomplete trailing batches are dropped; the estimator needs full batches.
    for (std::size_t start = 0; start + bs <= n_pairs; start += bs) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + bs));
    }
    return batches;
}

namespace {

fs::path checkpoint_path(const fs::path& run_dir, std::int64_t epoch) {
    std::ostringstream name;
    name << "epoch_";
    name.width(4);
    name.fill('0');
    name << epoch << ".pt";
    return run_dir / "checkpoints" / name.str();
}

// Keeps metric records up to `last_step` so a resumed run continues the same stream.
void truncate_metrics(const fs::path& path, std::int64_t last_step) {
    if (!fs::exists(path)) {
        return;
    }
    std::ifstream in(path);
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto j = nlohmann::json::parse(line);
        if (j.at("step").get<std::int64_t>() <= last_step) {
            kept.push_back(line);
        }
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : kept) {
        out << l << '\n';
    }
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    const auto pairs = manifest.pairs(Split::train);
    if (pairs.empty()) {
        throw std::invalid_argument("train: the manifest holds no training pairs");
    }
    if (options.run_dir.empty()) {
        throw std::invalid_argument("train: run_dir must be set");
    }
    fs::create_directories(options.run_dir / "checkpoints");

    TrainState state = options.resume ? load_checkpoint(*options.resume) : make_train_state(config, manifest.canvas);
    if (options.resume) {
        if (config_digest(state.config) != config_digest(config)) {
            throw std::invalid_argument("train: resume checkpoint was written with a different config");
        }
        if (state.canvas.height != manifest.canvas.height || state.canvas.width != manifest.canvas.width) {
            throw std::invalid_argument("train: resume checkpoint canvas differs from the dataset canvas");
        }
    }
    {
        std::ofstream cfg(options.run_dir / "config.json");
        cfg << to_json(config).dump(2) << '\n';
    }
    const auto metrics_path = options.run_dir / "metrics.jsonl";
    if (options.resume) {
        truncate_metrics(metrics_path, state.global_step);
    } else {
        std::ofstream(metrics_path, std::ios::trunc);
    }
    std::ofstream metrics(metrics_path, std::ios::app);

    TrainResult result;
    const auto last_epoch = std::min(config.epochs, options.stop_after_epoch.value_or(config.epochs));
    while (state.epoch < last_epoch) {
        const auto epoch = state.epoch;
        const double lr = lr_at(epoch, config);
        set_learning_rate(state, lr);
        std::mt19937_64 flips(derive_seed(config.seed, 0x464c495000000000ULL + static_cast<std::uint64_t>(epoch)));
        std::map<std::string, double> sums;
        std::int64_t steps = 0;
        for (const auto& idx : epoch_batches(pairs.size(), config.batch_size, config.seed, epoch)) {
            std::vector<SlicePair> chosen;
            chosen.reserve(idx.size());
            for (auto i : idx) {
                chosen.push_back(augment_hflip(*pairs[i], config.flip_probability, flips));
            }
            const auto report = train_step(make_batch(chosen), state);
            nlohmann::ordered_json record;
            record["epoch"] = epoch;
            record["step"] = state.global_step;
            record["lr"] = lr;
            record["timestep"] = report.timestep;
            record["losses"] = report.to_json();
            metrics << record.dump() << '\n';
            for (const auto& t : report.generator.terms) {
                sums["g_" + t.name] += t.value.item<double>();
            }
            sums["g_total"] += report.generator.total_value();
            sums["d_total"] += report.discriminator.total_value();
            if (report.critic) {
                sums["e_total"] += report.critic->total_value();
            }
            ++steps;
        }
        metrics.flush();
        ++state.epoch;
        if (options.on_epoch) {
            nlohmann::ordered_json summary;
            summary["epoch"] = epoch;
            summary["lr"] = lr;
            for (const auto& [k, v] : sums) {
                summary[k] = v / static_cast<double>(std::max<std::int64_t>(steps, 1));
            }
            options.on_epoch(epoch, summary);
        }
        const bool cadence = config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0;
        if (cadence || state.epoch == last_epoch) {
            result.checkpoint = checkpoint_path(options.run_dir, state.epoch);
            save_checkpoint(result.checkpoint, state);
        }
    }
    if (result.checkpoint.empty()) {
        result.checkpoint = checkpoint_path(options.run_dir, state.epoch);
        save_checkpoint(result.checkpoint, state);
    }
    result.epochs_completed = state.epoch;
    result.steps = state.global_step;
    return result;
}

}  // namespace fgsb

#include "fgsb/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

extern char** environ;

namespace fgsb {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Walks one JSON object, remembering which keys were read so leftovers can be rejected.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    void get(const char* key, std::int64_t& out) {
        if (const auto* v = take(key)) {
            if (!v->is_number_integer()) {
                throw ConfigError(where(key) + ": expected an integer");
            }
            out = v->get<std::int64_t>();
        }
    }

    void get(const char* key, std::uint64_t& out) {
        if (const auto* v = take(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
                throw ConfigError(where(key) + ": expected a non-negative integer");
            }
            out = v->get<std::uint64_t>();
        }
    }

    void get(const char* key, std::optional<std::int64_t>& out) {
        if (const auto* v = take(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            if (!v->is_number_integer()) {
                throw ConfigError(where(key) + ": expected an integer or null");
            }
            out = v->get<std::int64_t>();
        }
    }

    void get(const char* key, double& out) {
        if (const auto* v = take(key)) {
            if (!v->is_number()) {
                throw ConfigError(where(key) + ": expected a number");
            }
            out = v->get<double>();
        }
    }

    void get(const char* key, std::optional<double>& out) {
        if (const auto* v = take(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            if (!v->is_number()) {
                throw ConfigError(where(key) + ": expected a number or null");
            }
            out = v->get<double>();
        }
    }

    void get(const char* key, bool& out) {
        if (const auto* v = take(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(where(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void get(const char* key, std::string& out) {
        if (const auto* v = take(key)) {
            if (!v->is_string()) {
                throw ConfigError(where(key) + ": expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void get(const char* key, std::vector<double>& out) {
        if (const auto* v = take(key)) {
            if (!v->is_array() || !std::ranges::all_of(*v, [](const json& e) { return e.is_number(); })) {
                throw ConfigError(where(key) + ": expected an array of numbers");
            }
            out = v->get<std::vector<double>>();
        }
    }

    /// Nested object, or nullptr when absent.
    const json* sub(const char* key) { return take(key); }

    [[nodiscard]] std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(where(key.c_str()) + ": unknown key");
            }
        }
    }

private:
    const json* take(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string mi_form_name(MiForm form) {
    return form == MiForm::donsker_varadhan ? "donsker_varadhan" : "paper_literal";
}

MiForm mi_form_from(const std::string& name, const std::string& where) {
    if (name == "donsker_varadhan") {
        return MiForm::donsker_varadhan;
    }
    if (name == "paper_literal") {
        return MiForm::paper_literal;
    }
    throw ConfigError(where + ": expected \"donsker_varadhan\" or \"paper_literal\"");
}

// Re-raise validation failures as ConfigError so callers see one error type.
template <typename Fn>
void validated(Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

ordered_json to_json(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["lr_decay_start"] = c.decay_start();
    j["batch_size"] = c.batch_size;
    j["flip_probability"] = c.flip_probability;
    j["seed"] = c.seed;
    j["mi_form"] = mi_form_name(c.mi_form);
    j["nce_patches"] = c.nce_patches;
    j["identity_every"] = c.identity_every;
    j["checkpoint_every"] = c.checkpoint_every;
    j["weights"] = {{"lambda_rec", c.weights.lambda_rec}, {"lambda_reg", c.weights.lambda_reg},
                    {"lambda_cpl", c.weights.lambda_cpl}, {"lambda_wreg", c.weights.lambda_wreg},
                    {"lambda_idt", c.weights.lambda_idt}, {"lambda_sb", c.weights.lambda_sb}};
    j["ablation"] = {{"no_sb", c.ablation.no_sb},
                     {"no_ssl_d", c.ablation.no_ssl_d},
                     {"no_noise", c.ablation.no_noise},
                     {"use_prior", c.ablation.use_prior}};
    j["bridge"] = {{"nfe", c.bridge.nfe}, {"tau", c.bridge.tau}, {"s_schedule", c.bridge.s_schedule}};
    const auto& m = c.model;
    j["model"] = {{"generator",
                   {{"ngf", m.generator.ngf},
                    {"n_blocks", m.generator.n_blocks},
                    {"time_dim", m.generator.time_dim},
                    {"z_dim", m.generator.z_dim},
                    {"cond_dim", m.generator.cond_dim}}},
                  {"discriminator",
                   {{"ndf", m.discriminator.ndf},
                    {"n_layers", m.discriminator.n_layers},
                    {"time_dim", m.discriminator.time_dim},
                    {"time_conditioned", m.discriminator.time_conditioned},
                    {"decoder_channels", m.discriminator.decoder_channels}}},
                  {"critic", {{"nef", m.critic.nef}, {"n_layers", m.critic.n_layers}, {"output_bound", m.critic.output_bound}}},
                  {"projector_nc", m.projector_nc}};
    return j;
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
    TrainConfig c;
    Fields f(j, path);
    f.get("epochs", c.epochs);
    f.get("lr", c.lr);
    f.get("lr_decay_start", c.lr_decay_start);
    f.get("batch_size", c.batch_size);
    f.get("flip_probability", c.flip_probability);
    f.get("seed", c.seed);
    std::string form = mi_form_name(c.mi_form);
    f.get("mi_form", form);
    c.mi_form = mi_form_from(form, f.where("mi_form"));
    f.get("nce_patches", c.nce_patches);
    f.get("identity_every", c.identity_every);
    f.get("checkpoint_every", c.checkpoint_every);
    if (const auto* w = f.sub("weights")) {
        Fields g(*w, f.where("weights"));
        g.get("lambda_rec", c.weights.lambda_rec);
        g.get("lambda_reg", c.weights.lambda_reg);
        g.get("lambda_cpl", c.weights.lambda_cpl);
        g.get("lambda_wreg", c.weights.lambda_wreg);
        g.get("lambda_idt", c.weights.lambda_idt);
        g.get("lambda_sb", c.weights.lambda_sb);
        g.finish();
    }
    if (const auto* a = f.sub("ablation")) {
        Fields g(*a, f.where("ablation"));
        g.get("no_sb", c.ablation.no_sb);
        g.get("no_ssl_d", c.ablation.no_ssl_d);
        g.get("no_noise", c.ablation.no_noise);
        g.get("use_prior", c.ablation.use_prior);
        g.finish();
    }
    if (const auto* b = f.sub("bridge")) {
        Fields g(*b, f.where("bridge"));
        std::int64_t nfe = c.bridge.nfe;
        double tau = c.bridge.tau;
        std::vector<double> schedule;
        g.get("nfe", nfe);
        g.get("tau", tau);
        g.get("s_schedule", schedule);
        g.finish();
        if (nfe < 1) {
            throw ConfigError(g.where("nfe") + ": must be >= 1");
        }
        c.bridge = BridgeConfig::with_defaults(nfe, tau);
        if (!schedule.empty()) {
            c.bridge.s_schedule = schedule;
        }
    }
    if (const auto* m = f.sub("model")) {
        Fields g(*m, f.where("model"));
        if (const auto* gen = g.sub("generator")) {
            Fields h(*gen, g.where("generator"));
            h.get("ngf", c.model.generator.ngf);
            h.get("n_blocks", c.model.generator.n_blocks);
            h.get("time_dim", c.model.generator.time_dim);
            h.get("z_dim", c.model.generator.z_dim);
            h.get("cond_dim", c.model.generator.cond_dim);
            h.finish();
        }
        if (const auto* dis = g.sub("discriminator")) {
            Fields h(*dis, g.where("discriminator"));
            h.get("ndf", c.model.discriminator.ndf);
            h.get("n_layers", c.model.discriminator.n_layers);
            h.get("time_dim", c.model.discriminator.time_dim);
            h.get("time_conditioned", c.model.discriminator.time_conditioned);
            h.get("decoder_channels", c.model.discriminator.decoder_channels);
            h.finish();
        }
        if (const auto* cri = g.sub("critic")) {
            Fields h(*cri, g.where("critic"));
            h.get("nef", c.model.critic.nef);
            h.get("n_layers", c.model.critic.n_layers);
            h.get("output_bound", c.model.critic.output_bound);
            h.finish();
        }
        g.get("projector_nc", c.model.projector_nc);
        g.finish();
    }
    f.finish();
    validated([&] { c.validate(); });
    return c;
}

void RunConfig::validate() const {
    train.validate();
    if (device != "cpu") {
        throw ConfigError("device: only \"cpu\" is supported by this build");
    }
    if (inference.nfe && *inference.nfe < 1) {
        throw ConfigError("inference.nfe: must be >= 1");
    }
    if (inference.tau && !(*inference.tau >= 0.0)) {
        throw ConfigError("inference.tau: must be >= 0");
    }
    if (out_dir.empty()) {
        throw ConfigError("out_dir: must not be empty");
    }
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["device"] = c.device;
    j["out_dir"] = c.out_dir.string();
    j["data"] = {{"manifest", c.manifest ? ordered_json(c.manifest->string()) : ordered_json(nullptr)}};
    j["train"] = to_json(c.train);
    const auto defaults = inference_defaults(c.train);
    j["inference"] = {{"nfe", c.inference.nfe.value_or(defaults.nfe)},
                      {"tau", c.inference.tau.value_or(defaults.tau)},
                      {"seed", c.inference.seed}};
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Fields f(j, "");
    f.get("device", c.device);
    std::string out = c.out_dir.string();
    f.get("out_dir", out);
    c.out_dir = out;
    if (const auto* d = f.sub("data")) {
        Fields g(*d, "data");
        if (const auto* m = g.sub("manifest"); m != nullptr && !m->is_null()) {
            if (!m->is_string()) {
                throw ConfigError("data.manifest: expected a string");
            }
            c.manifest = m->get<std::string>();
        }
        g.finish();
    }
    if (const auto* t = f.sub("train")) {
        c.train = train_config_from_json(*t, "train");
    }
    if (const auto* i = f.sub("inference")) {
        Fields g(*i, "inference");
        g.get("nfe", c.inference.nfe);
        g.get("tau", c.inference.tau);
        g.get("seed", c.inference.seed);
        g.finish();
    }
    f.finish();
    c.validate();
    return c;
}

void apply_env_overrides(json& j, const std::vector<std::string>& environment) {
    constexpr std::string_view prefix = "FGSB_";
    for (const auto& entry : environment) {
        if (!entry.starts_with(prefix)) {
            continue;
        }
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        std::string name = entry.substr(prefix.size(), eq - prefix.size());
        std::ranges::transform(name, name.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        const std::string raw = entry.substr(eq + 1);
        std::vector<std::string> keys;
        std::size_t start = 0;
        while (true) {
            const auto sep = name.find("__", start);
            keys.push_back(name.substr(start, sep - start));
            if (sep == std::string::npos) {
                break;
            }
            start = sep + 2;
        }
        if (std::ranges::any_of(keys, [](const std::string& k) { return k.empty(); })) {
            throw ConfigError("environment override " + entry.substr(0, eq) + ": malformed key path");
        }
        json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
        if (value.is_discarded()) {
            value = raw;
        }
        json* node = &j;
        for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
            if (!node->is_object()) {
                throw ConfigError("environment override " + entry.substr(0, eq) + ": path crosses a non-object");
            }
            node = &(*node)[keys[k]];
            if (node->is_null()) {
                *node = json::object();
            }
        }
        if (!node->is_object()) {
            throw ConfigError("environment override " + entry.substr(0, eq) + ": path crosses a non-object");
        }
        (*node)[keys.back()] = value;
    }
}

std::vector<std::string> process_environment() {
    std::vector<std::string> out;
    for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
        out.emplace_back(*e);
    }
    return out;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& environment) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    apply_env_overrides(j, environment);
    auto config = run_config_from_json(j);
    if (config.manifest && config.manifest->is_relative()) {
        config.manifest = path.parent_path() / *config.manifest;
    }
    return config;
}

}  // namespace fgsb

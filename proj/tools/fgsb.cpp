// fgsb: command-line front end for phantom generation, training, synthesis,
// evaluation and ablation runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgsb/config.hpp"
#include "fgsb/dataset.hpp"
#include "fgsb/models.hpp"
#include "fgsb/pipeline.hpp"
#include "fgsb/trainer.hpp"

namespace fs = std::filesystem;
using namespace fgsb;

namespace {

struct Common {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::string device = "cpu";
    std::optional<fs::path> out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
    auto* opt = cmd->add_option("--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    if (needs_config) {
        opt->required();
    }
    cmd->add_option("--seed", c.seed, "overrides train.seed and inference.seed");
    cmd->add_option("--device", c.device, "compute device; only cpu is available")->check(CLI::IsMember({"cpu"}));
    cmd->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
    RunConfig config;
    if (c.config) {
        config = load_run_config(*c.config, process_environment());
    } else {
        nlohmann::json j = nlohmann::json::object();
        apply_env_overrides(j, process_environment());
        config = run_config_from_json(j);
    }
    if (c.seed) {
        config.train.seed = *c.seed;
        config.inference.seed = *c.seed;
    }
    config.device = c.device;
    if (c.out) {
        config.out_dir = *c.out;
    }
    config.validate();
    return config;
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fully guided Schrodinger bridge for paired image-to-image translation"};
    app.require_subcommand(1);
    app.footer("Environment: FGSB_<SECTION>__<KEY>=value overrides config keys, e.g. FGSB_TRAIN__EPOCHS=10.");

    // make-phantom
    auto* phantom_cmd = app.add_subcommand("make-phantom", "write a synthetic paired dataset");
    PhantomOptions phantom;
    fs::path phantom_out;
    std::int64_t phantom_size = 64;
    phantom_cmd->add_option("--out", phantom_out, "dataset directory")->required();
    phantom_cmd->add_option("--seed", phantom.seed);
    phantom_cmd->add_option("--subjects", phantom.n_subjects)->check(CLI::PositiveNumber);
    phantom_cmd->add_option("--slices", phantom.slices_per_subject)->check(CLI::PositiveNumber);
    phantom_cmd->add_option("--test-subjects", phantom.n_test_subjects)->check(CLI::NonNegativeNumber);
    phantom_cmd->add_option("--size", phantom_size, "square canvas side")->check(CLI::Range(16, 1024));
    phantom_cmd->add_option("--lesion-rate", phantom.lesion_rate)->check(CLI::Range(0.0, 1.0));

    // export-split
    auto* export_cmd = app.add_subcommand("export-split", "write one split as source/, target/ and mask/ slice folders");
    fs::path export_manifest;
    fs::path export_out;
    std::string export_split_name = "test";
    export_cmd->add_option("--manifest", export_manifest)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--split", export_split_name)->check(CLI::IsMember({"train", "test"}));
    export_cmd->add_option("--out", export_out)->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a bundle on the manifest's train split");
    Common train_common;
    add_common(train_cmd, train_common, true);
    std::optional<fs::path> resume;
    train_cmd->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

    // synthesize
    auto* synth_cmd = app.add_subcommand("synthesize", "translate source slices with a trained checkpoint");
    fs::path checkpoint;
    fs::path input_dir;
    fs::path synth_out;
    InferenceOverrides overrides;
    synth_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--input", input_dir, "directory of .fgsb/.png source slices")->required()->check(CLI::ExistingDirectory);
    synth_cmd->add_option("--out", synth_out)->required();
    synth_cmd->add_option("--nfe", overrides.nfe)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--tau", overrides.tau)->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--seed", overrides.seed);
    std::string synth_device = "cpu";
    synth_cmd->add_option("--device", synth_device)->check(CLI::IsMember({"cpu"}));

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against references");
    fs::path pred_dir;
    fs::path ref_dir;
    fs::path eval_out;
    pipeline::EvaluateOptions eval;
    std::optional<float> lesion_threshold;
    std::optional<float> foreground_level = -0.95F;
    bool whole_canvas = false;
    eval_cmd->add_option("--pred", pred_dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--ref", ref_dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--masks", eval.mask_dir, "ground-truth lesion masks")->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--sources", eval.source_dir, "source slices for the comparison grid")
        ->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--run", eval.run_dir, "training run whose loss curves to plot")->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--lesion-threshold", lesion_threshold, "threshold for lesion masks in [-1, 1]");
    eval_cmd->add_option("--foreground-level", foreground_level, "reference level bounding the PSNR/NRMSE region");
    eval_cmd->add_flag("--whole-canvas", whole_canvas, "score PSNR/NRMSE over every pixel");
    eval_cmd->add_option("--out", eval_out)->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train and score a set of ablation variants");
    Common ablate_common;
    add_common(ablate_cmd, ablate_common, true);
    std::vector<std::string> variants = pipeline::default_ablation_variants();
    ablate_cmd->add_option("--variants", variants, "variant names; '+' joins flags")->delimiter(',');
    std::optional<float> ablate_threshold = 0.7F;
    ablate_cmd->add_option("--lesion-threshold", ablate_threshold);

    // params
    auto* params_cmd = app.add_subcommand("params", "report trainable parameter counts");
    Common params_common;
    add_common(params_cmd, params_common, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*phantom_cmd) {
            phantom.canvas = Canvas{phantom_size, phantom_size};
            const auto manifest = generate_phantom_dataset(phantom);
            const auto path = write_dataset(manifest, phantom_out);
            print_json({{"manifest", path.string()},
                        {"train", manifest.count(Split::train)},
                        {"test", manifest.count(Split::test)}});
        } else if (*export_cmd) {
            const auto split = split_from_string(export_split_name);
            pipeline::export_split(load_manifest(export_manifest), split, export_out);
            print_json({{"out", export_out.string()}, {"split", export_split_name}});
        } else if (*train_cmd) {
            const auto config = resolve(train_common);
            const auto out = pipeline::run_train(config, resume, &std::cerr);
            print_json({{"run_dir", out.run_dir.string()}, {"checkpoint", out.checkpoint.string()}});
        } else if (*synth_cmd) {
            const auto names = pipeline::synthesize_directory(checkpoint, input_dir, overrides, synth_out);
            print_json({{"out", synth_out.string()}, {"slices", names.size()}});
        } else if (*eval_cmd) {
            eval.metric.lesion_threshold = lesion_threshold;
            eval.metric.foreground_level = whole_canvas ? std::nullopt : foreground_level;
            const auto report = pipeline::evaluate_directories(pred_dir, ref_dir, eval, eval_out);
            print_json(report.to_json().at("aggregate"));
        } else if (*ablate_cmd) {
            const auto config = resolve(ablate_common);
            metrics::EvaluationOptions metric;
            metric.lesion_threshold = ablate_threshold;
            const auto result = pipeline::run_ablation(config, variants, metric, &std::cerr);
            nlohmann::ordered_json out;
            for (const auto& run : result.runs) {
                out[run.name] = run.report.to_json().at("aggregate");
            }
            print_json(out);
        } else if (*params_cmd) {
            const auto config = resolve(params_common);
            const auto bundle = make_bundle(effective_model_options(config.train), config.train.seed);
            nlohmann::ordered_json out;
            for (const auto& [name, count] : count_parameters(bundle)) {
                out[name] = count;
            }
            print_json(out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

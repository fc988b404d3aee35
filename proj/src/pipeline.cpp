#include "fgsb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fgsb/inference.hpp"
#include "fgsb/plots.hpp"
#include "fgsb/slice_io.hpp"

namespace fgsb::pipeline {

using nlohmann::ordered_json;

std::string slice_name(const SlicePair& pair) {
    std::ostringstream s;
    s << pair.subject_id << '_' << std::setw(4) << std::setfill('0') << pair.slice_index;
    return s.str();
}

std::vector<std::pair<std::string, fs::path>> list_slices(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::invalid_argument("not a directory: " + dir.string());
    }
    std::vector<std::pair<std::string, fs::path>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".fgsb" || ext == ".png")) {
            out.emplace_back(entry.path().stem().string(), entry.path());
        }
    }
    std::ranges::sort(out);
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].first == out[i - 1].first) {
            throw std::invalid_argument(dir.string() + ": slice " + out[i].first + " exists in two formats");
        }
    }
    return out;
}

namespace {

void write_json(const fs::path& path, const ordered_json& j) {
    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

}  // namespace

TrainOutputs run_train(const RunConfig& config, const std::optional<fs::path>& resume, std::ostream* log) {
    config.validate();
    if (!config.manifest) {
        throw ConfigError("data.manifest: required for training");
    }
    const auto manifest = load_manifest(*config.manifest);
    fs::create_directories(config.out_dir);
    write_json(config.out_dir / "resolved_config.json", to_json(config));

    TrainOptions options;
    options.run_dir = config.out_dir;
    options.resume = resume;
    if (log != nullptr) {
        options.on_epoch = [log, &config](std::int64_t epoch, const ordered_json& summary) {
            *log << "epoch " << epoch + 1 << '/' << config.train.epochs << ' ' << summary.dump() << std::endl;
        };
    }
    const auto result = train(manifest, config.train, options);
    write_loss_curves(config.out_dir / "metrics.jsonl", config.out_dir / "plots");
    return {config.out_dir, result.checkpoint};
}

void write_loss_curves(const fs::path& metrics_jsonl, const fs::path& plots_dir) {
    std::ifstream in(metrics_jsonl);
    if (!in) {
        throw std::runtime_error("cannot read " + metrics_jsonl.string());
    }
    // epoch -> series name -> (sum, count)
    std::map<std::string, std::map<std::int64_t, std::pair<double, std::int64_t>>> totals;
    std::map<std::string, std::map<std::int64_t, std::pair<double, std::int64_t>>> terms;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto j = nlohmann::json::parse(line);
        const auto epoch = j.at("epoch").get<std::int64_t>();
        const auto& losses = j.at("losses");
        auto add = [&](auto& table, const std::string& name, double v) {
            auto& cell = table[name][epoch];
            cell.first += v;
            cell.second += 1;
        };
        for (const auto& [section, label] : {std::pair{"generator", "G"}, {"discriminator", "D"}, {"critic", "E"}}) {
            if (losses.contains(section)) {
                add(totals, label, losses.at(section).at("total").get<double>());
            }
        }
        for (const auto& [name, value] : losses.at("generator").items()) {
            if (name != "total") {
                add(terms, name, value.get<double>());
            }
        }
    }
    auto to_series = [](const auto& table) {
        std::vector<plots::Series> out;
        for (const auto& [name, by_epoch] : table) {
            plots::Series s{name, {}};
            for (const auto& [epoch, cell] : by_epoch) {
                s.points.emplace_back(static_cast<double>(epoch + 1), cell.first / static_cast<double>(cell.second));
            }
            out.push_back(std::move(s));
        }
        return out;
    };
    plots::write_line_chart(plots_dir / "loss_totals.svg", "Per-epoch mean objective", "epoch", to_series(totals));
    plots::write_line_chart(plots_dir / "generator_terms.svg", "Per-epoch mean generator terms (unweighted)", "epoch",
                            to_series(terms));
}

InferenceConfig resolve_inference(const CheckpointInfo& info, const InferenceOverrides& overrides) {
    auto config = inference_defaults(info.config);
    config.canvas = info.canvas;
    config.nfe = overrides.nfe.value_or(config.nfe);
    config.tau = overrides.tau.value_or(config.tau);
    config.seed = overrides.seed;
    config.validate();
    return config;
}

std::vector<std::string> synthesize_directory(const fs::path& checkpoint, const fs::path& input_dir,
                                              const InferenceOverrides& overrides, const fs::path& out_dir) {
    auto state = load_checkpoint(checkpoint);
    state.bundle.train(false);
    const auto config = resolve_inference(read_checkpoint_info(checkpoint), overrides);
    const auto inputs = list_slices(input_dir);
    std::vector<Image> sources;
    std::vector<std::string> names;
    for (const auto& [stem, path] : inputs) {
        sources.push_back(io::read_slice(path));
        names.push_back(stem);
    }
    const auto outputs = synthesize_stack(sources, state.bundle, config);
    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < outputs.size(); ++k) {
        io::write_slice(out_dir / (names[k] + ".fgsb"), outputs[k]);
    }
    return names;
}

void export_split(const DatasetManifest& manifest, Split split, const fs::path& out_dir) {
    fs::create_directories(out_dir / "source");
    fs::create_directories(out_dir / "target");
    for (const auto* pair : manifest.pairs(split)) {
        const auto stem = slice_name(*pair);
        io::write_slice(out_dir / "source" / (stem + ".fgsb"), pair->source);
        io::write_slice(out_dir / "target" / (stem + ".fgsb"), pair->target);
        if (pair->prior_mask) {
            fs::create_directories(out_dir / "mask");
            io::write_mask(out_dir / "mask" / (stem + ".fgsb"), *pair->prior_mask);
        }
    }
}

namespace {

Image abs_difference(const Image& a, const Image& b) {
    Image out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.pixels()[i] = std::abs(a.pixels()[i] - b.pixels()[i]) - 1.0F;
    }
    return out;
}

std::map<std::string, fs::path> index_by_stem(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    for (auto& [stem, path] : list_slices(dir)) {
        out.emplace(stem, path);
    }
    return out;
}

}  // namespace

metrics::MetricReport evaluate_directories(const fs::path& pred_dir, const fs::path& ref_dir,
                                           const EvaluateOptions& options, const fs::path& out_dir) {
    const auto refs = list_slices(ref_dir);
    if (refs.empty()) {
        throw std::invalid_argument("no reference slices in " + ref_dir.string());
    }
    const auto preds = index_by_stem(pred_dir);
    const auto masks = options.mask_dir ? index_by_stem(*options.mask_dir) : std::map<std::string, fs::path>{};
    const auto sources = options.source_dir ? index_by_stem(*options.source_dir) : std::map<std::string, fs::path>{};

    std::vector<metrics::SliceMetrics> rows;
    std::vector<std::pair<bool, std::vector<Image>>> tiles;
    for (const auto& [stem, ref_path] : refs) {
        const auto it = preds.find(stem);
        if (it == preds.end()) {
            throw std::invalid_argument("prediction missing for reference slice " + stem);
        }
        const auto pred = io::read_slice(it->second);
        const auto ref = io::read_slice(ref_path);
        std::optional<Mask> truth;
        if (options.mask_dir) {
            const auto m = masks.find(stem);
            if (m == masks.end()) {
                throw std::invalid_argument("mask missing for reference slice " + stem);
            }
            truth = io::read_mask(m->second);
        }
        try {
            rows.push_back(metrics::evaluate_slice(stem, pred, ref, truth ? &*truth : nullptr, options.metric));
        } catch (const std::exception& e) {
            throw std::invalid_argument("slice " + stem + ": " + e.what());
        }
        std::vector<Image> row;
        if (const auto s = sources.find(stem); s != sources.end()) {
            row.push_back(io::read_slice(s->second));
        }
        row.push_back(pred);
        row.push_back(ref);
        row.push_back(abs_difference(pred, ref));
        tiles.emplace_back(rows.back().has_lesion, std::move(row));
    }
    auto report = metrics::aggregate(std::move(rows));
    fs::create_directories(out_dir);
    write_json(out_dir / "report.json", report.to_json());

    // Lesion-bearing slices first so the grids show the interesting cases.
    std::stable_sort(tiles.begin(), tiles.end(), [](const auto& a, const auto& b) { return a.first && !b.first; });
    std::vector<std::vector<Image>> grid;
    for (std::size_t i = 0; i < tiles.size() && i < options.grid_rows; ++i) {
        grid.push_back(tiles[i].second);
    }
    if (!grid.empty()) {
        plots::write_image_grid(out_dir / "grids" / "comparison.png", grid);
    }

    std::vector<plots::Bar> bars{{"SSIM", report.ssim.mean, report.ssim.std},
                                 {"NRMSE", report.nrmse.mean, report.nrmse.std}};
    if (report.dice) {
        bars.push_back({"Dice", report.dice->mean, report.dice->std});
        bars.push_back({"Recall", report.recall->mean, report.recall->std});
    }
    plots::write_bar_chart(out_dir / "plots" / "metrics.svg", "Evaluation (mean, whiskers 1 std)", "value", bars);
    plots::Series psnr{"PSNR", {}};
    for (std::size_t i = 0; i < report.slices.size(); ++i) {
        psnr.points.emplace_back(static_cast<double>(i), report.slices[i].psnr);
    }
    plots::write_line_chart(out_dir / "plots" / "psnr_per_slice.svg", "PSNR per slice (dB)", "slice", {psnr});
    if (options.run_dir) {
        write_loss_curves(*options.run_dir / "metrics.jsonl", out_dir / "plots");
    }
    return report;
}

std::vector<std::string> default_ablation_variants() {
    return {"full", "no_sb", "no_ssl_d", "no_noise", "nfe1", "nfe3"};
}

TrainConfig apply_variant(const TrainConfig& base, const std::string& variant) {
    auto config = base;
    std::size_t start = 0;
    while (start <= variant.size()) {
        const auto end = std::min(variant.find('+', start), variant.size());
        const auto token = variant.substr(start, end - start);
        if (token == "full") {
        } else if (token == "no_sb") {
            config.ablation.no_sb = true;
        } else if (token == "no_ssl_d") {
            config.ablation.no_ssl_d = true;
        } else if (token == "no_noise") {
            config.ablation.no_noise = true;
        } else if (token == "no_prior") {
            config.ablation.use_prior = false;
        } else if (token.starts_with("nfe") && token.size() > 3 &&
                   std::ranges::all_of(token.substr(3), [](char c) { return c >= '0' && c <= '9'; })) {
            const auto nfe = std::stoll(token.substr(3));
            if (nfe < 1) {
                throw ConfigError("variant " + variant + ": nfe must be >= 1");
            }
            config.bridge = BridgeConfig::with_defaults(nfe, base.bridge.tau);
        } else {
            throw ConfigError("variant " + variant + ": unknown component '" + token + "'");
        }
        start = end + 1;
    }
    config.validate();
    return config;
}

namespace {

ordered_json aggregate_json(const metrics::MetricReport& report) { return report.to_json().at("aggregate"); }

void ablation_charts(const AblationResult& result, const fs::path& plots_dir) {
    auto chart = [&](const char* metric, auto pick, const std::vector<const AblationRun*>& runs, const fs::path& file,
                     const std::string& title, bool with_identity) {
        std::vector<plots::Bar> bars;
        if (with_identity) {
            const auto s = pick(result.identity);
            if (s) {
                bars.push_back({"identity", s->mean, s->std});
            }
        }
        for (const auto* run : runs) {
            if (const auto s = pick(run->report)) {
                bars.push_back({run->name, s->mean, s->std});
            }
        }
        if (!bars.empty()) {
            plots::write_bar_chart(file, title, metric, bars);
        }
    };
    using Pick = std::optional<metrics::Summary> (*)(const metrics::MetricReport&);
    const std::vector<std::pair<const char*, Pick>> picks{
        {"psnr", [](const metrics::MetricReport& r) -> std::optional<metrics::Summary> { return r.psnr; }},
        {"ssim", [](const metrics::MetricReport& r) -> std::optional<metrics::Summary> { return r.ssim; }},
        {"nrmse", [](const metrics::MetricReport& r) -> std::optional<metrics::Summary> { return r.nrmse; }},
        {"recall", [](const metrics::MetricReport& r) { return r.recall; }},
    };
    std::vector<const AblationRun*> all;
    std::vector<const AblationRun*> by_nfe;
    for (const auto& run : result.runs) {
        all.push_back(&run);
    }
    for (const char* name : {"nfe1", "nfe3", "full"}) {
        for (const auto& run : result.runs) {
            if (run.name == name) {
                by_nfe.push_back(&run);
            }
        }
    }
    for (const auto& [metric, pick] : picks) {
        chart(metric, pick, all, plots_dir / (std::string("ablation_") + metric + ".svg"),
              std::string("Ablation: ") + metric, true);
        if (by_nfe.size() > 1) {
            chart(metric, pick, by_nfe, plots_dir / (std::string("nfe_") + metric + ".svg"),
                  std::string("NFE comparison: ") + metric, false);
        }
    }
}

}  // namespace

AblationResult run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                            const metrics::EvaluationOptions& evaluation, std::ostream* log) {
    base.validate();
    if (!base.manifest) {
        throw ConfigError("data.manifest: required for ablation");
    }
    if (variants.empty()) {
        throw std::invalid_argument("ablation: no variants requested");
    }
    std::vector<TrainConfig> configs;
    for (const auto& v : variants) {
        configs.push_back(apply_variant(base.train, v));
    }
    const auto manifest = load_manifest(*base.manifest);
    const auto reference = base.out_dir / "reference";
    export_split(manifest, Split::test, reference);

    EvaluateOptions eval;
    eval.metric = evaluation;
    eval.source_dir = reference / "source";

    AblationResult result;
    result.identity = evaluate_directories(reference / "source", reference / "target", eval, base.out_dir / "identity");

    ordered_json summary;
    summary["identity"] = aggregate_json(result.identity);
    summary["variants"] = ordered_json::array();
    for (std::size_t i = 0; i < variants.size(); ++i) {
        RunConfig cfg = base;
        cfg.train = configs[i];
        cfg.out_dir = base.out_dir / variants[i];
        cfg.inference.nfe.reset();
        cfg.inference.tau.reset();
        if (log != nullptr) {
            *log << "variant " << variants[i] << " -> " << cfg.out_dir.string() << std::endl;
        }
        const auto trained = run_train(cfg, std::nullopt, log);
        synthesize_directory(trained.checkpoint, reference / "source", cfg.inference, cfg.out_dir / "synth");
        auto run_eval = eval;
        run_eval.run_dir = cfg.out_dir;
        auto report = evaluate_directories(cfg.out_dir / "synth", reference / "target", run_eval,
                                           cfg.out_dir / "evaluation");
        ordered_json entry;
        entry["name"] = variants[i];
        entry["run_dir"] = variants[i];
        entry["config_digest"] = config_digest(cfg.train);
        entry["aggregate"] = aggregate_json(report);
        summary["variants"].push_back(entry);
        result.runs.push_back({variants[i], cfg.out_dir, trained.checkpoint, std::move(report)});
    }
    write_json(base.out_dir / "summary.json", summary);
    ablation_charts(result, base.out_dir / "plots");
    return result;
}

}  // namespace fgsb::pipeline

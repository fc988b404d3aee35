#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fgsb/config.hpp"
#include "fgsb/dataset.hpp"
#include "fgsb/metrics.hpp"
#include "fgsb/trainer.hpp"

namespace fgsb::pipeline {

namespace fs = std::filesystem;

/// Stem used for a slice on disk: "<subject>_<slice index, 4 digits>".
[[nodiscard]] std::string slice_name(const SlicePair& pair);

/// Sorted (stem, path) pairs of the .fgsb and .png slices in `dir`.
[[nodiscard]] std::vector<std::pair<std::string, fs::path>> list_slices(const fs::path& dir);

struct TrainOutputs {
    fs::path run_dir;
    fs::path checkpoint;
};

/// Trains `config.train` on the manifest's train split under config.out_dir and writes
/// resolved_config.json and loss-curve plots there. Progress lines go to `log` when set.
TrainOutputs run_train(const RunConfig& config, const std::optional<fs::path>& resume = std::nullopt,
                       std::ostream* log = nullptr);

/// Per-epoch mean losses from a metrics stream, plotted under plots_dir.
void write_loss_curves(const fs::path& metrics_jsonl, const fs::path& plots_dir);

/// Inference settings for a checkpoint: trained defaults, then the overrides.
[[nodiscard]] InferenceConfig resolve_inference(const CheckpointInfo& info, const InferenceOverrides& overrides);

/// Synthesizes every slice of `input_dir` into out_dir/<stem>.fgsb. Returns the stems.
std::vector<std::string> synthesize_directory(const fs::path& checkpoint, const fs::path& input_dir,
                                              const InferenceOverrides& overrides, const fs::path& out_dir);

/// Writes sources, targets and (when present) prior masks of `split` as
/// out_dir/{source,target,mask}/<stem>.fgsb.
void export_split(const DatasetManifest& manifest, Split split, const fs::path& out_dir);

struct EvaluateOptions {
    metrics::EvaluationOptions metric;
    std::optional<fs::path> mask_dir;
    std::optional<fs::path> source_dir;  ///< adds a source column to comparison grids
    std::optional<fs::path> run_dir;     ///< plots its metrics stream alongside
    std::size_t grid_rows = 4;
};

/// Pairs predictions with references by stem, writes out_dir/report.json, comparison
/// grids under out_dir/grids and a metric chart under out_dir/plots.
metrics::MetricReport evaluate_directories(const fs::path& pred_dir, const fs::path& ref_dir,
                                           const EvaluateOptions& options, const fs::path& out_dir);

/// Default ablation set: full, no_sb, no_ssl_d, no_noise, nfe1, nfe3.
[[nodiscard]] std::vector<std::string> default_ablation_variants();

/// Applies a variant to a base config. Names may join flags with '+', e.g. "no_sb+no_ssl_d".
[[nodiscard]] TrainConfig apply_variant(const TrainConfig& base, const std::string& variant);

struct AblationRun {
    std::string name;
    fs::path run_dir;
    fs::path checkpoint;
    metrics::MetricReport report;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    metrics::MetricReport identity;  ///< source taken as the synthesis
};

/// One training run, test-split synthesis and evaluation per variant under base.out_dir,
/// plus summary.json and comparison charts.
AblationResult run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                            const metrics::EvaluationOptions& evaluation, std::ostream* log = nullptr);

}  // namespace fgsb::pipeline

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgsb/inference.hpp"
#include "fgsb/trainer.hpp"

namespace fgsb {

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct InferenceOverrides {
    std::optional<std::int64_t> nfe;
    std::optional<double> tau;
    std::uint64_t seed = 0;
};

struct RunConfig {
    TrainConfig train;
    InferenceOverrides inference;
    std::optional<std::filesystem::path> manifest;
    std::filesystem::path out_dir = "runs/default";
    std::string device = "cpu";

    void validate() const;
};

[[nodiscard]] nlohmann::ordered_json to_json(const TrainConfig& config);
[[nodiscard]] nlohmann::ordered_json to_json(const RunConfig& config);

/// Strict parsers: unknown keys and wrongly typed values raise ConfigError; absent
/// keys keep their defaults.
[[nodiscard]] TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "train");
[[nodiscard]] RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies FGSB_<SECTION>__<KEY>=value variables: the name after the prefix is
/// lower-cased and split on "__" into a key path; values parse as JSON, else as strings.
void apply_env_overrides(nlohmann::json& j, const std::vector<std::string>& environment);

/// Current process environment as NAME=value strings.
[[nodiscard]] std::vector<std::string> process_environment();

[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& environment);

}  // namespace fgsb

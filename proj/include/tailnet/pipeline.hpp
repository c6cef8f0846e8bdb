#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailnet/date.hpp"
#include "tailnet/market_data.hpp"

namespace tailnet {

enum class Stage { Ingest, Coes, Network, Score, GraphML, Drivers };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

/// Every knob of the pipeline. Defaults reproduce the reference configuration
/// (5% tail, 250-day window, 10% trimming of the breakpoint search).
struct PipelineConfig {
    // ingest
    std::filesystem::path input;
    std::string input_format = "prices-long";
    std::filesystem::path caps_input;
    std::vector<std::string> symbols;
    DateRange date_range;
    GapPolicy gap_policy;
    ReturnKind return_kind = ReturnKind::Log;
    // coes
    double alpha = 0.05;
    std::size_t window = 250;
    // network
    double theta_bar = 0.1;
    std::optional<double> fixed_threshold;
    bool export_adjacency = false;  // dense per-date matrices next to the long-format file
    // score
    bool euler_raw = false;
    bool normalize_caps = false;
    bool export_scores = true;
    bool export_contributions = true;
    bool export_annual = true;
    // graphml
    bool export_graphml = false;
    std::optional<Date> graphml_date;  // unset: last network date
    // drivers
    std::filesystem::path covariates;
    std::map<std::string, int> lags;
    std::string target = "score";
    std::optional<std::size_t> bandwidth;
    bool raw_cases = false;
    // general
    std::filesystem::path out_dir = "tailnet-out";
    unsigned threads = 0;  // 0: hardware concurrency
    bool force = false;
};

/// Keys accepted by set_config_value, the config file and TAILNET_<KEY> environment variables.
std::span<const std::string_view> config_keys();

/// Parses and assigns one setting. Throws ConfigError for unknown keys and invalid values.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);

/// Applies a plain-text key=value file ('#' starts a comment).
void load_config_file(PipelineConfig& config, const std::filesystem::path& path);

/// Applies TAILNET_<UPPERCASE_KEY> variables found through `lookup`.
void apply_environment(PipelineConfig& config,
                       const std::function<const char*(const char*)>& lookup = [](const char* k) { return std::getenv(k); });

struct StageReport {
    Stage stage;
    std::vector<std::filesystem::path> outputs;  // relative to out_dir
    std::vector<std::string> messages;
};

/// Runs one stage reading the upstream artifacts from `config.out_dir`.
///
/// Upstream manifests must exist, their recorded digests must match the files on disk and
/// their configuration chains must agree; otherwise ConfigError unless `config.force`.
/// Outputs are written to temporaries and renamed only when the whole stage succeeds.
/// Errors are rethrown with the stage name prefixed and the original exit code.
StageReport run_stage(Stage stage, const PipelineConfig& config);

/// ingest, coes, network, score, then graphml (if export_graphml) and drivers (if covariates set).
std::vector<StageReport> run_pipeline(const PipelineConfig& config);

/// Runs the given stages in order.
std::vector<StageReport> run_pipeline(const PipelineConfig& config, std::span<const Stage> stages);

/// Synthetic input: writes `<out_dir>/input/prices.csv` from a synthlab preset and runs ingest on it.
struct SimulateOptions {
    std::string preset = "tether-like";
    std::size_t assets = 25;
    std::size_t horizon = 1460;
    std::uint64_t seed = 1;
    std::size_t negative_assets = 1;
    std::optional<double> student_t_dof;
    std::optional<std::size_t> switch_day;     // regime switch; post regime scales factor vol
    double post_factor_vol_scale = 2.0;
};

StageReport simulate(const SimulateOptions& options, PipelineConfig& config);

/// Lowercase hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace tailnet

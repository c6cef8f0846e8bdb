// Command-line driver for the tailnet pipeline.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tailnet/errors.hpp"
#include "tailnet/pipeline.hpp"

namespace {

using tailnet::Stage;

struct Flag {
    const char* name;
    const char* key;
    const char* help;
    bool boolean = false;
};

// Flags per key, grouped by the stage that consumes them.
const std::vector<Flag> kGeneral{
    {"--out", "out", "output directory (default tailnet-out)"},
    {"--threads", "threads", "worker threads for coes and network (0: all cores)"},
    {"--force", "force", "run even if upstream artifacts are stale or mixed", true},
};
const std::vector<Flag> kIngest{
    {"--input", "input", "price file"},
    {"--input-format", "input_format", "prices-long or prices-wide"},
    {"--caps-input", "caps_input", "market-cap file for prices-wide (default <input>_caps.csv)"},
    {"--symbols", "symbols", "comma-separated symbol filter and order"},
    {"--start", "start", "first date kept (YYYY-MM-DD)"},
    {"--end", "end", "last date kept (YYYY-MM-DD)"},
    {"--gap-policy", "gap_policy", "forward-fill or drop-asset"},
    {"--max-gap", "max_gap", "longest gap bridged by forward filling"},
    {"--strict-gaps", "strict_gaps", "fail instead of dropping assets with long gaps", true},
    {"--simple-returns", "simple_returns", "simple instead of log returns", true},
};
const std::vector<Flag> kCoes{
    {"--alpha", "alpha", "tail probability (default 0.05)"},
    {"--window", "window", "rolling window in return days (default 250)"},
};
const std::vector<Flag> kNetwork{
    {"--theta-bar", "theta_bar", "trimming of the breakpoint search, in (0, 0.5) (default 0.1)"},
    {"--fixed-threshold", "fixed_threshold", "classify by |rho| > threshold instead of breakpoints"},
    {"--export-adjacency", "export_adjacency", "also write dense per-date adjacency matrices", true},
};
const std::vector<Flag> kScore{
    {"--euler-raw", "euler_raw", "contributions C_i dS/dC_i (sum to twice the score)", true},
    {"--normalize-caps", "normalize_caps", "use cap shares instead of raw caps", true},
};
const std::vector<Flag> kGraphml{
    {"--date", "graphml_date", "network date to export (default: last)"},
};
const std::vector<Flag> kDrivers{
    {"--covariates", "covariates", "covariate file date,<name>,..."},
    {"--lags", "lags", "comma-separated name:lag row shifts"},
    {"--target", "target", "score, negative_ratio or a symbol"},
    {"--bandwidth", "bandwidth", "Newey-West lag truncation (default floor(4 (T/100)^(2/9)))"},
    {"--raw-cases", "raw_cases", "keep case-count columns untransformed", true},
};

struct Command {
    CLI::App* app = nullptr;
    std::optional<Stage> stage;
};

class Overrides {
public:
    void add(CLI::App* app, const std::vector<Flag>& flags) {
        for (const auto& f : flags) {
            if (f.boolean) {
                app->add_flag_callback(f.name, [this, key = std::string(f.key)] { values_[key] = "true"; }, f.help);
            } else {
                app->add_option_function<std::string>(
                    f.name, [this, key = std::string(f.key)](const std::string& v) { values_[key] = v; }, f.help);
            }
        }
    }

    void apply(tailnet::PipelineConfig& config) const {
        for (const auto& [key, value] : values_) tailnet::set_config_value(config, key, value);
    }

private:
    std::map<std::string, std::string> values_;
};

void print_report(const tailnet::StageReport& report) {
    const auto name = tailnet::stage_name(report.stage);
    for (const auto& m : report.messages) std::cout << name << ": " << m << '\n';
    for (const auto& path : report.outputs) std::cout << name << ": wrote " << path.generic_string() << '\n';
}

int run(int argc, char** argv) {
    CLI::App app{"Tail-dependence networks and systemic-risk scores for multi-asset return panels", "tailnet"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    app.add_option("--config", config_file, "key=value configuration file");

    Overrides overrides;
    std::vector<Command> commands;
    auto stage_command = [&](Stage stage, const char* help, std::initializer_list<const std::vector<Flag>*> groups) {
        auto* sub = app.add_subcommand(std::string(tailnet::stage_name(stage)), help);
        overrides.add(sub, kGeneral);
        for (const auto* g : groups) overrides.add(sub, *g);
        commands.push_back({sub, stage});
    };
    stage_command(Stage::Ingest, "load prices and build the return panel", {&kIngest});
    stage_command(Stage::Coes, "rolling CoES matrices", {&kCoes});
    stage_command(Stage::Network, "similarity sets, breakpoints and signed adjacency", {&kNetwork});
    stage_command(Stage::Score, "systemic-risk score, contributions and annual table", {&kScore});
    stage_command(Stage::GraphML, "GraphML export of one dated network", {&kGraphml});
    stage_command(Stage::Drivers, "HAC regression of the risk series on covariates", {&kDrivers});

    auto* run_cmd = app.add_subcommand("run", "run several stages (default: the whole pipeline)");
    std::vector<std::string> stage_names;
    run_cmd->add_option("--stage", stage_names, "stage to run; repeat to run several in order");
    overrides.add(run_cmd, kGeneral);
    for (const auto* g : {&kIngest, &kCoes, &kNetwork, &kScore, &kGraphml, &kDrivers}) overrides.add(run_cmd, *g);
    bool export_graphml = false;
    run_cmd->add_flag("--export-graphml", export_graphml, "include the GraphML export");

    tailnet::SimulateOptions sim;
    std::optional<double> dof;
    std::optional<std::size_t> switch_day;
    auto* sim_cmd = app.add_subcommand("simulate", "write a synthetic market and ingest it");
    overrides.add(sim_cmd, kGeneral);
    sim_cmd->add_option("--preset", sim.preset, "tether-like, independent or homogeneous")->capture_default_str();
    sim_cmd->add_option("--assets", sim.assets, "number of assets")->capture_default_str();
    sim_cmd->add_option("--horizon", sim.horizon, "return days")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    sim_cmd->add_option("--negative-assets", sim.negative_assets, "negative-beta assets (tether-like)")
        ->capture_default_str();
    sim_cmd->add_option("--student-t", dof, "Student-t innovations with this many degrees of freedom");
    sim_cmd->add_option("--switch-day", switch_day, "regime switch day; factor volatility is scaled afterwards");
    sim_cmd->add_option("--post-vol-scale", sim.post_factor_vol_scale, "factor volatility multiplier after the switch")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    tailnet::PipelineConfig config;
    if (!config_file.empty()) tailnet::load_config_file(config, config_file);
    tailnet::apply_environment(config);
    overrides.apply(config);

    if (sim_cmd->parsed()) {
        sim.student_t_dof = dof;
        sim.switch_day = switch_day;
        print_report(tailnet::simulate(sim, config));
        return 0;
    }
    if (run_cmd->parsed()) {
        if (export_graphml) config.export_graphml = true;
        std::vector<tailnet::StageReport> reports;
        if (stage_names.empty()) {
            reports = tailnet::run_pipeline(config);
        } else {
            std::vector<Stage> stages;
            for (const auto& n : stage_names) stages.push_back(tailnet::parse_stage(n));
            reports = tailnet::run_pipeline(config, stages);
        }
        for (const auto& r : reports) print_report(r);
        return 0;
    }
    for (const auto& c : commands) {
        if (c.app->parsed()) {
            print_report(tailnet::run_stage(*c.stage, config));
            return 0;
        }
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const tailnet::Error& e) {
        std::cerr << "tailnet: error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "tailnet: error: " << e.what() << '\n';
        return 1;
    }
}

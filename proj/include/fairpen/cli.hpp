#pragma once

#include "fairpen/oracles.hpp"
#include "fairpen/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fairpen {

// Everything a train/evaluate command needs, read from an INI file with
// sections [data], [model], [train], [output] and then overridden by flags.
struct RunSettings {
    std::filesystem::path config_path;
    std::filesystem::path data_path;
    std::filesystem::path schema_path;
    double train_fraction = 0.8;

    std::optional<Task> task; // inferred from the outcome kind when unset
    Architecture architecture;
    bool architecture_width_set = false;

    Criterion criterion = Criterion::gsp;
    TrainConfig train;
    std::vector<double> lambdas {0.5};

    std::filesystem::path out_dir = "runs";
    std::string run_id = "run";
    bool snapshot_checkpoints = false;
    bool force = false;
};

RunSettings load_settings(const std::filesystem::path& config_path);

// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double value);

// Directory name of one lambda run: "lambda=<value>".
std::string lambda_directory(double lambda);

// Header and rows of snapshots.csv. Attribute columns follow the order of the
// report's attributes.
std::vector<std::string> report_columns(const FairnessReport& report);
std::vector<std::string> report_values(const FairnessReport& report);
std::vector<std::string> snapshot_header(const FairnessReport& report);
std::vector<std::string> snapshot_row(const Snapshot& snapshot);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path);

// Loads the dataset and reproduces the seeded train/validation split.
std::pair<TabularDataset, TabularDataset> prepare_split(const RunSettings& settings);

Task resolve_task(const RunSettings& settings, const TabularDataset& data);

// Trains one model per lambda under out_dir/run_id/lambda=<v>/. Returns the
// run directories. Throws when a target exists and force is off.
std::vector<std::filesystem::path> cmd_train(const RunSettings& settings, std::ostream& log);

enum class EvalSplit { train, validation, all };

FairnessReport cmd_evaluate(const RunSettings& settings, const std::filesystem::path& checkpoint, EvalSplit split);

struct ParetoOptions {
    std::string fairness_column; // empty: first *_ks_gsp column
    std::string split = "validation";
    std::optional<double> utility_threshold;
    std::size_t k = 5;
};

struct ParetoRow {
    std::string run_id;
    std::size_t iteration = 0;
    double utility = 0.0;
    std::string fairness_metric_name;
    double fairness_value = 0.0;
    bool on_frontier = false;
};

struct ParetoOutcome {
    std::vector<ParetoRow> rows;
    std::optional<TopkSummary> summary;
};

ParetoOutcome cmd_pareto(const std::vector<std::filesystem::path>& inputs, const ParetoOptions& options);

void write_ratio_toy_csv(std::ostream& out, const std::vector<RatioToyRow>& rows);

// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace fairpen

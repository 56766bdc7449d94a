#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xbn/dataset.hpp"
#include "xbn/train.hpp"

namespace xbn {

/// Everything needed to reproduce one run: trainer settings, the data source
/// and the method. Settable from flat key=value files; see apply_setting.
struct RunSettings {
    TrainConfig train;
    SyntheticConfig synthetic;
    std::optional<std::filesystem::path> data;
    std::string variant = "xbn";
    double ema_momentum = 0.1;            // used when variant is plain "ema"
    std::set<std::string> explicit_keys;  // keys set by a file or flag

    FeatureDataset load_or_generate() const;
    MethodVariant method() const;
};

/// Known keys, in the order render_settings emits them.
const std::vector<std::string>& setting_keys();

/// Sets one key; throws InvalidConfig for unknown keys or unparsable values.
void apply_setting(RunSettings& settings, const std::string& key, const std::string& value);

/// Parses "key = value" lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);
void apply_config_file(RunSettings& settings, const std::filesystem::path& path);

/// Fully resolved configuration as key=value lines.
std::string render_settings(const RunSettings& settings);

/// Rejects hyperparameters that do not apply to the chosen method
/// (filter noise outside axbn, momentum outside ema).
void check_variant_specific_keys(const RunSettings& settings);

/// One JSON object per line.
std::string record_to_json(const IterationRecord& rec);
IterationRecord record_from_json(const std::string& line);
std::vector<IterationRecord> read_metrics(const std::filesystem::path& path);

struct RunSummary {
    std::string axis_value;  // empty outside sweeps
    std::string variant;
    std::uint64_t seed = 0;
    double r1 = 0.0;
    double r10 = 0.0;
    std::size_t best_epoch = 0;
    bool ok = true;
    std::string error;
};

struct AggregateRow {
    std::string axis_value;
    std::string variant;
    std::size_t runs = 0;
    double r1_mean = 0.0;
    double r1_std = 0.0;
    double r10_mean = 0.0;
    double r10_std = 0.0;
};

struct DriftRow {
    std::size_t epoch = 0;
    std::string variant;
    double mean_drift = 0.0;
    double max_drift = 0.0;
    double val_r1 = 0.0;
};

/// Trains one run and writes <out>/config.txt, metrics.jsonl, summary.csv and
/// checkpoint.xbnc. Errors are captured in the returned summary.
RunSummary run_and_record(const RunSettings& settings, const FeatureDataset& dataset,
                          const std::filesystem::path& out_dir, TrainResult* result = nullptr);

/// Population mean and std over seeds for each (axis value, variant), in
/// first-appearance order. Failed runs are skipped.
std::vector<AggregateRow> aggregate(const std::vector<RunSummary>& runs);

void write_runs_csv(const std::vector<RunSummary>& runs, const std::filesystem::path& path);
std::vector<RunSummary> read_runs_csv(const std::filesystem::path& path);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path);
void write_drift_csv(const std::vector<DriftRow>& rows, const std::filesystem::path& path);
std::vector<DriftRow> read_drift_csv(const std::filesystem::path& path);

enum class SweepAxis { BatchSize, MemoryFraction };
SweepAxis parse_sweep_axis(const std::string& text);

struct SweepSpec {
    SweepAxis axis = SweepAxis::BatchSize;
    std::vector<std::string> values;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::size_t workers = 1;
};

/// Cartesian product of values x variants x seeds. Each cell writes to
/// <out>/<axis>-<value>/<variant>/<seed>/; runs.csv and aggregate.csv go to <out>.
std::vector<RunSummary> run_sweep(const RunSettings& base, const SweepSpec& spec, const FeatureDataset& dataset,
                                  const std::filesystem::path& out_root);

/// Runs each variant and collects per-epoch drift and validation R@1.
std::vector<DriftRow> run_drift(const RunSettings& base, const std::vector<std::string>& variants,
                                const FeatureDataset& dataset, const std::filesystem::path& out_root,
                                std::vector<RunSummary>* summaries = nullptr);

}  // namespace xbn

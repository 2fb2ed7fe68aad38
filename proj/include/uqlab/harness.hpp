#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uqlab/datagen.hpp"
#include "uqlab/metrics.hpp"
#include "uqlab/model.hpp"
#include "uqlab/selective.hpp"
#include "uqlab/uq.hpp"

namespace uqlab {

inline constexpr int kConfigSchemaVersion = 1;

struct MethodConfig {
    std::string name;  ///< msp | mc_dropout | ensemble | sngp
    double dropout_rate = kDefaultDropoutRate;
    std::size_t mc_samples = kDefaultMcSamples;
    std::size_t members = kDefaultEnsembleMembers;
    std::size_t replicates = 3;
    SngpConfig sngp;

    friend bool operator==(const MethodConfig&, const MethodConfig&) = default;
};

std::vector<MethodConfig> default_methods();

struct ExperimentConfig {
    LadderSpec data;
    /// When non-empty, predictions are read from these files and no model is
    /// trained.
    std::vector<std::filesystem::path> prediction_files;
    std::vector<std::size_t> hidden{64, 64};
    std::vector<MethodConfig> methods = default_methods();
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    JitterConfig jitter;
    std::size_t bins = kDefaultBins;
    std::string id_val_tag = "id-val";
    /// (threshold source, evaluation target) pairs for the fraction-retained
    /// table and the before/after accuracy bars.
    std::vector<std::pair<std::string, std::string>> transfer_pairs{
        {"ood-far", "ood-near"}, {"ood-near", "ood-far"}, {"ood-near", "ood-novel"}};
    std::filesystem::path output_dir;

    /// Throws ConfigError.
    void validate() const;
};

/// Parses the JSON config document (requires "schema_version": 1; every other
/// key is optional and defaults as above). Unknown keys are rejected.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

struct MetricRow {
    std::string method;
    std::string dataset;
    std::size_t seeds = 0;
    MeanStd accuracy;
    MeanStd average_precision;  ///< over seeds where it is defined
    MeanStd ece;
    MeanStd mce;
    MeanStd mce_unweighted;
    std::optional<MeanStd> auroc_ood;  ///< absent for the ID validation rows
};

/// Reliability-diagram bins of one (method, dataset, seed).
struct ReliabilityRecord {
    std::string method;
    std::string dataset;
    std::uint64_t seed = 0;
    BinStats bins;
};

struct MetricsReport {
    std::vector<MetricRow> rows;  ///< grouped by method, ID validation first
    std::vector<ReliabilityRecord> reliability;
    std::size_t bins = kDefaultBins;
    std::string id_val_tag = "id-val";

    const MetricRow* find(std::string_view method, std::string_view dataset) const;
};

struct ExperimentResult {
    MetricsReport report;
    std::vector<TransferMatrix> transfer;  ///< one per method
    std::vector<std::pair<std::string, std::string>> transfer_pairs;
    std::vector<PredictionSet> predictions;
};

/// Aggregates per-seed prediction sets into metrics and transfer matrices.
/// Sets are grouped by method, then by seed; every (method, seed) group must
/// contain the ID validation set. AUROC-ood uses the group's ID validation
/// uncertainties against each other dataset.
ExperimentResult build_report(std::vector<PredictionSet> predictions, const std::string& id_val_tag,
                              std::size_t bins,
                              std::vector<std::pair<std::string, std::string>> transfer_pairs = {});

/// Datasets for one seed (id-train, id-val, ladder steps).
std::vector<Dataset> experiment_datasets(const ExperimentConfig& cfg, std::uint64_t seed);

/// Trains every configured method for every seed (ensembles: `replicates`
/// independent ensembles, replicate r on the data of seeds[r % seeds]),
/// predicts on id-val and every ladder dataset, and aggregates. With
/// prediction_files set, loads them instead. When output_dir is set the
/// predictions are written to <output_dir>/predictions.csv and the resolved
/// config to <output_dir>/config.json.
///
/// A failing stage raises an error of the same category whose message names
/// the seed, method and stage; predictions finished before the failure are
/// written to <output_dir>/predictions.partial.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Text rendering of `mean ± std` at 3 decimals.
std::string format_mean_std(const MeanStd& v);

/// Index of the row marked best in `column` among `rows` (same dataset), or
/// none: the best mean must beat the runner-up by more than the best's std.
enum class MetricColumn { accuracy, average_precision, ece, mce, auroc_ood };
std::optional<std::size_t> best_row(const std::vector<const MetricRow*>& rows, MetricColumn column);

/// Metrics table (CSV and aligned text).
std::string metrics_csv(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);

/// Transfer matrix in source-row x target-column layout.
std::string transfer_csv(const TransferMatrix& m);
std::string transfer_table(const TransferMatrix& m);

/// Fraction retained per method and transfer pair.
std::string fraction_retained_csv(const ExperimentResult& result);
std::string fraction_retained_table(const ExperimentResult& result);

/// Accuracy before and after thresholding per method and transfer pair.
std::string threshold_accuracy_csv(const ExperimentResult& result);

/// Writes metrics.{csv,txt}, transfer_<method>.{csv,txt},
/// fraction_retained.{csv,txt}, threshold_accuracy.csv and
/// reliability/<method>__<dataset>__seed<k>.csv. Throws IoError.
std::vector<std::filesystem::path> emit_report(const ExperimentResult& result,
                                               const std::filesystem::path& outdir);

}  // namespace uqlab

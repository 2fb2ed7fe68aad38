#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqlab/metrics.hpp"
#include "uqlab/uq.hpp"

namespace uqlab {

/// Counts for "uncertainty >= threshold flags OOD"; OOD is the positive class.
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    double sensitivity() const;
    double specificity() const;
    /// sensitivity + specificity - 1
    double youden_j() const;

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion_at(std::span<const double> scores_id,
                             std::span<const double> scores_ood, double threshold);

struct ThresholdDecision {
    double threshold = 0.0;
    double j = 0.0;
    std::string source_tag;
    std::string score_kind;
};

/// Maximises Youden's J over the midpoints between consecutive distinct pooled
/// scores plus one candidate below the minimum and one above the maximum.
/// Ties go to the smallest threshold.
ThresholdDecision youden_threshold(std::span<const double> scores_id,
                                   std::span<const double> scores_ood);

/// Threshold for the in-distribution validation set itself: incorrectly
/// predicted samples play the positive role, correctly predicted ones the
/// negative role. When either group is empty nothing can be separated and the
/// threshold is placed above every score (J = 0).
ThresholdDecision validation_threshold(const PredictionSet& id_val);

/// Result of keeping only samples with uncertainty < threshold.
struct SelectiveResult {
    std::size_t retained = 0;
    std::size_t total = 0;
    double fraction_retained = 0.0;
    bool all_rejected = false;
    std::optional<double> accuracy;           ///< absent when all rejected
    std::optional<double> average_precision;  ///< absent when no positive is retained
};

SelectiveResult selective_evaluate(const PredictionSet& pred, const ThresholdDecision& decision);

/// Source x target threshold-transfer grid for one seed. Row s uses the
/// threshold set on dataset s; column t evaluates it on dataset t.
struct TransferGrid {
    std::string method;
    std::vector<std::string> datasets;  ///< id-val first, then the others in input order
    std::vector<ThresholdDecision> thresholds;
    std::vector<std::vector<SelectiveResult>> cells;  ///< [source][target]
    std::vector<double> unfiltered_accuracy;          ///< per target
};

/// Thresholds: id-val via validation_threshold, every other dataset s via
/// youden_threshold(id-val uncertainties, s uncertainties). Throws ConfigError
/// when fewer than two datasets are present.
TransferGrid transfer_matrix(std::span<const PredictionSet> others, const PredictionSet& id_val);

/// Looks up the set tagged `id_val_tag` among `predsets`; ConfigError when
/// missing.
TransferGrid transfer_matrix(std::span<const PredictionSet> predsets,
                             const std::string& id_val_tag);

/// Seed-aggregated transfer cell. Metric statistics cover the seeds whose
/// retained set was non-empty; `all_rejected_seeds` counts the others.
struct TransferCell {
    MeanStd accuracy;
    MeanStd average_precision;
    MeanStd fraction_retained;
    MeanStd accuracy_before;
    std::size_t all_rejected_seeds = 0;
    std::size_t seeds = 0;

    bool has_metrics() const noexcept { return accuracy.n > 0; }
};

struct TransferMatrix {
    std::string method;
    std::vector<std::string> datasets;
    std::vector<std::vector<TransferCell>> cells;  ///< [source][target]
};

/// All grids must share method and dataset order. Throws ConfigError otherwise
/// or when `grids` is empty.
TransferMatrix aggregate_transfer(std::span<const TransferGrid> grids);

}  // namespace uqlab

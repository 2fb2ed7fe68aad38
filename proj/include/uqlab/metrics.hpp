#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uqlab/uq.hpp"

namespace uqlab {

inline constexpr std::size_t kDefaultBins = 15;

/// Equal-width confidence bins on [0, 1]. A confidence equal to an interior
/// edge belongs to the upper bin; 1.0 belongs to the last bin.
struct BinStats {
    struct Bin {
        double lo = 0.0;
        double hi = 0.0;
        std::size_t count = 0;
        double accuracy = 0.0;    ///< mean correctness, 0 for empty bins
        double confidence = 0.0;  ///< mean confidence, 0 for empty bins
    };
    std::vector<Bin> bins;
    std::size_t total = 0;

    std::size_t bin_count() const noexcept { return bins.size(); }
};

/// Bin index of `confidence` among `bins` equal-width bins.
std::size_t confidence_bin(double confidence, std::size_t bins);

/// Bins by confidence = max(p0, p1); a sample is correct when the argmax
/// (ties to class 0) equals its label.
BinStats bin_statistics(const PredictionSet& pred, std::size_t bins = kDefaultBins);
BinStats bin_statistics(std::span<const double> confidences, std::span<const int> correct,
                        std::size_t bins);

/// Argmax prediction with ties broken toward class 0.
int predicted_class(const Probs& p) noexcept;

/// Fraction of samples whose argmax matches the label. Throws DataError when
/// empty.
double accuracy(const PredictionSet& pred);

/// Σ_k P(k) Δr(k) over the distinct scores in descending order, label 1
/// positive. Throws UndefinedMetricError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);
double average_precision(const PredictionSet& pred);

/// Σ_b (n_b / N) |acc(b) - con(b)|.
double ece(const PredictionSet& pred, std::size_t bins = kDefaultBins);
double ece(const BinStats& stats);

/// max_b (n_b / N) |acc(b) - con(b)|, the bin-weighted form.
double mce(const PredictionSet& pred, std::size_t bins = kDefaultBins);
double mce(const BinStats& stats);

/// Conventional max_b |acc(b) - con(b)| over non-empty bins, reported
/// alongside the weighted form.
double mce_unweighted(const BinStats& stats);

/// Probability that a random OOD score exceeds a random ID score (ties count
/// one half), from the rank-sum statistic. Throws DataError if either list is
/// empty.
double auroc_ood(std::span<const double> scores_id, std::span<const double> scores_ood);

/// Mean and population standard deviation (divisor n) of per-seed values.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;

    friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

/// n = 0 yields {0, 0, 0}.
MeanStd mean_std(std::span<const double> values);

}  // namespace uqlab

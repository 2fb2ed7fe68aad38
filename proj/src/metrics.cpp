#include "uqlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uqlab/errors.hpp"

namespace uqlab {

namespace {

double edge(std::size_t k, std::size_t bins) {
    return static_cast<double>(k) / static_cast<double>(bins);
}

void check_labels(std::span<const int> labels) {
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    }
}

}  // namespace

std::size_t confidence_bin(double confidence, std::size_t bins) {
    if (bins == 0) throw ParameterError("bin count must be >= 1");
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw DataError("confidence outside [0, 1]");
    }
    auto b = static_cast<std::size_t>(confidence * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    // Snap against the exact edge values so boundary cases go to the upper bin.
    while (b > 0 && confidence < edge(b, bins)) --b;
    while (b + 1 < bins && confidence >= edge(b + 1, bins)) ++b;
    return b;
}

BinStats bin_statistics(std::span<const double> confidences, std::span<const int> correct,
                        std::size_t bins) {
    if (bins == 0) throw ParameterError("bin count must be >= 1");
    if (confidences.size() != correct.size()) {
        throw DimensionError("bin_statistics: confidence and correctness lengths differ");
    }
    BinStats stats;
    stats.total = confidences.size();
    stats.bins.resize(bins);
    std::vector<double> acc_sum(bins, 0.0);
    std::vector<double> con_sum(bins, 0.0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const std::size_t b = confidence_bin(confidences[i], bins);
        ++stats.bins[b].count;
        acc_sum[b] += correct[i] ? 1.0 : 0.0;
        con_sum[b] += confidences[i];
    }
    for (std::size_t b = 0; b < bins; ++b) {
        auto& bin = stats.bins[b];
        bin.lo = edge(b, bins);
        bin.hi = edge(b + 1, bins);
        if (bin.count > 0) {
            bin.accuracy = acc_sum[b] / static_cast<double>(bin.count);
            bin.confidence = con_sum[b] / static_cast<double>(bin.count);
        }
    }
    return stats;
}

int predicted_class(const Probs& p) noexcept { return p[1] > p[0] ? 1 : 0; }

BinStats bin_statistics(const PredictionSet& pred, std::size_t bins) {
    std::vector<double> conf;
    std::vector<int> correct;
    conf.reserve(pred.size());
    correct.reserve(pred.size());
    for (const auto& r : pred.rows) {
        conf.push_back(std::max(r.probs[0], r.probs[1]));
        correct.push_back(predicted_class(r.probs) == r.label ? 1 : 0);
    }
    return bin_statistics(conf, correct, bins);
}

double accuracy(const PredictionSet& pred) {
    if (pred.empty()) throw DataError("accuracy: prediction set '" + pred.tag + "' is empty");
    std::size_t hits = 0;
    for (const auto& r : pred.rows) hits += predicted_class(r.probs) == r.label;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("average_precision: score and label lengths differ");
    }
    check_labels(labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) {
        throw UndefinedMetricError("average precision is undefined without positive labels");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        // Consume the whole group of samples sharing this score: one threshold.
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            tp += labels[order[i]] == 1;
            ++seen;
            ++i;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    return ap;
}

double average_precision(const PredictionSet& pred) {
    return average_precision(pred.positive_probs(), pred.labels());
}

double ece(const BinStats& stats) {
    if (stats.total == 0) throw DataError("ece: no samples");
    double sum = 0.0;
    for (const auto& b : stats.bins) {
        if (b.count == 0) continue;
        sum += static_cast<double>(b.count) / static_cast<double>(stats.total) *
               std::abs(b.accuracy - b.confidence);
    }
    return sum;
}

double ece(const PredictionSet& pred, std::size_t bins) {
    if (pred.empty()) throw DataError("ece: prediction set '" + pred.tag + "' is empty");
    return ece(bin_statistics(pred, bins));
}

double mce(const BinStats& stats) {
    if (stats.total == 0) throw DataError("mce: no samples");
    double worst = 0.0;
    for (const auto& b : stats.bins) {
        if (b.count == 0) continue;
        worst = std::max(worst, static_cast<double>(b.count) / static_cast<double>(stats.total) *
                                    std::abs(b.accuracy - b.confidence));
    }
    return worst;
}

double mce(const PredictionSet& pred, std::size_t bins) {
    if (pred.empty()) throw DataError("mce: prediction set '" + pred.tag + "' is empty");
    return mce(bin_statistics(pred, bins));
}

double mce_unweighted(const BinStats& stats) {
    if (stats.total == 0) throw DataError("mce: no samples");
    double worst = 0.0;
    for (const auto& b : stats.bins) {
        if (b.count > 0) worst = std::max(worst, std::abs(b.accuracy - b.confidence));
    }
    return worst;
}

double auroc_ood(std::span<const double> scores_id, std::span<const double> scores_ood) {
    if (scores_id.empty() || scores_ood.empty()) {
        throw DataError("auroc_ood: both score lists must be non-empty");
    }
    struct Item {
        double score;
        bool ood;
    };
    std::vector<Item> pooled;
    pooled.reserve(scores_id.size() + scores_ood.size());
    for (double s : scores_id) pooled.push_back({s, false});
    for (double s : scores_ood) pooled.push_back({s, true});
    std::sort(pooled.begin(), pooled.end(),
              [](const Item& a, const Item& b) { return a.score < b.score; });

    // Sum of mid-ranks (1-based) of the OOD scores.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        std::size_t ood_in_group = 0;
        while (j < pooled.size() && pooled[j].score == pooled[i].score) {
            ood_in_group += pooled[j].ood;
            ++j;
        }
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += mid_rank * static_cast<double>(ood_in_group);
        i = j;
    }
    const double n_ood = static_cast<double>(scores_ood.size());
    const double n_id = static_cast<double>(scores_id.size());
    const double u = rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    return u / (n_ood * n_id);
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    out.n = values.size();
    if (values.empty()) return out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / n);
    return out;
}

}  // namespace uqlab

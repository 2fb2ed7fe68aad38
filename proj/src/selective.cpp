#include "uqlab/selective.hpp"

#include <algorithm>
#include <cmath>

#include "uqlab/errors.hpp"

namespace uqlab {

namespace {

double below(double lo) { return lo - std::max(1.0, std::abs(lo)); }
double above(double hi) { return hi + std::max(1.0, std::abs(hi)); }

std::size_t count_at_least(const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() -
                                    std::lower_bound(sorted.begin(), sorted.end(), t));
}

}  // namespace

double ConfusionCounts::sensitivity() const {
    const std::size_t pos = tp + fn;
    return pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
}

double ConfusionCounts::specificity() const {
    const std::size_t neg = tn + fp;
    return neg ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;
}

double ConfusionCounts::youden_j() const { return sensitivity() + specificity() - 1.0; }

ConfusionCounts confusion_at(std::span<const double> scores_id,
                             std::span<const double> scores_ood, double threshold) {
    if (scores_id.empty() || scores_ood.empty()) {
        throw DataError("confusion_at: both score lists must be non-empty");
    }
    ConfusionCounts c;
    for (double s : scores_ood) (s >= threshold ? c.tp : c.fn) += 1;
    for (double s : scores_id) (s >= threshold ? c.fp : c.tn) += 1;
    return c;
}

ThresholdDecision youden_threshold(std::span<const double> scores_id,
                                   std::span<const double> scores_ood) {
    if (scores_id.empty() || scores_ood.empty()) {
        throw DataError("youden_threshold: both score lists must be non-empty");
    }
    std::vector<double> id(scores_id.begin(), scores_id.end());
    std::vector<double> ood(scores_ood.begin(), scores_ood.end());
    std::sort(id.begin(), id.end());
    std::sort(ood.begin(), ood.end());

    std::vector<double> pooled(id);
    pooled.insert(pooled.end(), ood.begin(), ood.end());
    std::sort(pooled.begin(), pooled.end());
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    std::vector<double> candidates;
    candidates.reserve(pooled.size() + 1);
    candidates.push_back(below(pooled.front()));
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i) {
        const double a = pooled[i];
        const double b = pooled[i + 1];
        const double mid = a + 0.5 * (b - a);
        // "flag >= t" with t = b gives the same partition when a and b are adjacent doubles.
        candidates.push_back(a < mid ? mid : b);
    }
    candidates.push_back(above(pooled.back()));

    const double n_id = static_cast<double>(id.size());
    const double n_ood = static_cast<double>(ood.size());
    ThresholdDecision best{candidates.front(), -2.0, {}, {}};
    for (double t : candidates) {
        const double tp = static_cast<double>(count_at_least(ood, t));
        const double fp = static_cast<double>(count_at_least(id, t));
        const double j = tp / n_ood + (n_id - fp) / n_id - 1.0;
        if (j > best.j) {
            best.threshold = t;
            best.j = j;
        }
    }
    return best;
}

ThresholdDecision validation_threshold(const PredictionSet& id_val) {
    if (id_val.empty()) throw DataError("validation_threshold: prediction set is empty");
    std::vector<double> correct;
    std::vector<double> wrong;
    double hi = id_val.rows.front().uncertainty;
    for (const auto& r : id_val.rows) {
        (predicted_class(r.probs) == r.label ? correct : wrong).push_back(r.uncertainty);
        hi = std::max(hi, r.uncertainty);
    }
    ThresholdDecision d;
    if (correct.empty() || wrong.empty()) {
        d.threshold = above(hi);
        d.j = 0.0;
    } else {
        d = youden_threshold(correct, wrong);
    }
    d.source_tag = id_val.tag;
    d.score_kind = std::string(score_kind_name(id_val.score_kind()));
    return d;
}

SelectiveResult selective_evaluate(const PredictionSet& pred, const ThresholdDecision& decision) {
    SelectiveResult res;
    res.total = pred.size();
    PredictionSet kept{pred.method, pred.tag, pred.seed, pred.single_pass, {}};
    for (const auto& r : pred.rows) {
        if (r.uncertainty < decision.threshold) kept.rows.push_back(r);
    }
    res.retained = kept.size();
    res.fraction_retained =
        res.total ? static_cast<double>(res.retained) / static_cast<double>(res.total) : 0.0;
    res.all_rejected = kept.empty();
    if (kept.empty()) return res;

    res.accuracy = accuracy(kept);
    const auto labels = kept.labels();
    if (std::find(labels.begin(), labels.end(), 1) != labels.end()) {
        res.average_precision = average_precision(kept.positive_probs(), labels);
    }
    return res;
}

TransferGrid transfer_matrix(std::span<const PredictionSet> others, const PredictionSet& id_val) {
    std::vector<const PredictionSet*> sets{&id_val};
    for (const auto& p : others) {
        if (p.tag == id_val.tag) continue;
        if (p.method != id_val.method) {
            throw ConfigError("transfer_matrix: mixed methods '" + id_val.method + "' and '" +
                              p.method + "'");
        }
        sets.push_back(&p);
    }
    if (sets.size() < 2) throw ConfigError("transfer_matrix: need at least two datasets");
    if (id_val.empty()) throw DataError("transfer_matrix: ID validation set is empty");

    TransferGrid grid;
    grid.method = id_val.method;
    const auto id_scores = id_val.uncertainties();
    const std::string kind(score_kind_name(id_val.score_kind()));
    for (const auto* s : sets) {
        grid.datasets.push_back(s->tag);
        if (s == &id_val) {
            grid.thresholds.push_back(validation_threshold(id_val));
        } else {
            if (s->empty()) throw DataError("transfer_matrix: dataset '" + s->tag + "' is empty");
            ThresholdDecision d = youden_threshold(id_scores, s->uncertainties());
            d.source_tag = s->tag;
            d.score_kind = kind;
            grid.thresholds.push_back(std::move(d));
        }
        grid.unfiltered_accuracy.push_back(accuracy(*s));
    }
    for (const auto& decision : grid.thresholds) {
        std::vector<SelectiveResult> row;
        for (const auto* t : sets) row.push_back(selective_evaluate(*t, decision));
        grid.cells.push_back(std::move(row));
    }
    return grid;
}

TransferGrid transfer_matrix(std::span<const PredictionSet> predsets,
                             const std::string& id_val_tag) {
    const auto it = std::find_if(predsets.begin(), predsets.end(),
                                 [&](const PredictionSet& p) { return p.tag == id_val_tag; });
    if (it == predsets.end()) {
        throw ConfigError("transfer_matrix: no ID validation set tagged '" + id_val_tag + "'");
    }
    return transfer_matrix(predsets, *it);
}

TransferMatrix aggregate_transfer(std::span<const TransferGrid> grids) {
    if (grids.empty()) throw ConfigError("aggregate_transfer: no grids");
    const auto& first = grids.front();
    for (const auto& g : grids) {
        if (g.method != first.method || g.datasets != first.datasets) {
            throw ConfigError("aggregate_transfer: grids disagree on method or dataset order");
        }
    }
    const std::size_t n = first.datasets.size();
    TransferMatrix out;
    out.method = first.method;
    out.datasets = first.datasets;
    out.cells.assign(n, std::vector<TransferCell>(n));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
            std::vector<double> acc, ap, frac, before;
            TransferCell cell;
            for (const auto& g : grids) {
                const auto& r = g.cells[s][t];
                frac.push_back(r.fraction_retained);
                before.push_back(g.unfiltered_accuracy[t]);
                if (r.all_rejected) {
                    ++cell.all_rejected_seeds;
                    continue;
                }
                acc.push_back(*r.accuracy);
                if (r.average_precision) ap.push_back(*r.average_precision);
            }
            cell.seeds = grids.size();
            cell.accuracy = mean_std(acc);
            cell.average_precision = mean_std(ap);
            cell.fraction_retained = mean_std(frac);
            cell.accuracy_before = mean_std(before);
            out.cells[s][t] = cell;
        }
    }
    return out;
}

}  // namespace uqlab

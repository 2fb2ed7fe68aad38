#include "uqlab/uq.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "uqlab/errors.hpp"

namespace uqlab {

namespace {

constexpr double kNormTol = 1e-9;
constexpr double kNegativeVarianceTol = 1e-9;

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_dataset(const Dataset& data, std::size_t input_dim) {
    data.validate();
    if (!data.empty() && data.dim() != input_dim) {
        throw DataError("dataset '" + data.tag + "' has " + std::to_string(data.dim()) +
                        " features, model expects " + std::to_string(input_dim));
    }
}

}  // namespace

ScoreKind score_kind_for(std::string_view method) {
    return method == kMethodMsp ? ScoreKind::one_minus_max_prob : ScoreKind::entropy;
}

std::string_view score_kind_name(ScoreKind kind) {
    return kind == ScoreKind::one_minus_max_prob ? "one_minus_max_prob" : "entropy";
}

double entropy(const Probs& p) {
    double h = 0.0;
    for (double q : p) {
        if (q > 0.0) h -= q * std::log(q);
    }
    return std::max(h, 0.0);
}

std::vector<double> PredictionSet::uncertainties() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.uncertainty);
    return out;
}

std::vector<double> PredictionSet::positive_probs() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.probs[1]);
    return out;
}

std::vector<int> PredictionSet::labels() const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.label);
    return out;
}

void PredictionSet::validate() const {
    if (method.empty()) throw DataError("prediction set has no method name");
    if (tag.empty()) throw DataError("prediction set has no dataset tag");
    for (const auto& r : rows) {
        const std::string where = "prediction set " + method + "/" + tag + " sample " +
                                  std::to_string(r.sample_id);
        if (r.label != 0 && r.label != 1) throw DataError(where + ": label must be 0 or 1");
        if (std::abs(r.probs[0] + r.probs[1] - 1.0) > kNormTol || r.probs[0] < 0.0 ||
            r.probs[1] < 0.0) {
            throw DataError(where + ": probabilities are not normalised");
        }
        if (!(r.uncertainty >= 0.0)) throw DataError(where + ": negative uncertainty");
        if (r.components.empty()) throw DataError(where + ": no component logits");
    }
}

PredictionRow make_prediction_row(std::uint64_t sample_id, int label,
                                  std::vector<Logits> components, ScoreKind kind) {
    if (components.empty()) throw DataError("prediction row needs at least one component");
    Probs mean{0.0, 0.0};
    for (const auto& z : components) {
        const Probs p = softmax(z);
        mean[0] += p[0];
        mean[1] += p[1];
    }
    const double n = static_cast<double>(components.size());
    mean[0] /= n;
    mean[1] /= n;

    PredictionRow row;
    row.sample_id = sample_id;
    row.label = label;
    row.probs = mean;
    row.uncertainty = kind == ScoreKind::one_minus_max_prob
                          ? 1.0 - std::max(mean[0], mean[1])
                          : entropy(mean);
    row.components = std::move(components);
    return row;
}

PredictionSet msp_predict(const MlpClassifier& model, const Dataset& data) {
    check_dataset(data, model.input_dim());
    PredictionSet out{std::string(kMethodMsp), data.tag, model.seed, true, {}};
    if (data.empty()) return out;
    Rng unused(0);
    const auto logits =
        forward_logits_batch(model, data.features, ForwardMode::deterministic, unused);
    out.rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.rows.push_back(
            make_prediction_row(i, data.labels[i], {logits[i]}, ScoreKind::one_minus_max_prob));
    }
    return out;
}

std::uint64_t mc_pass_seed(std::uint64_t base, std::size_t pass) {
    return derive_seed(base, "mc-pass", pass);
}

PredictionSet mc_dropout_predict(const MlpClassifier& model, const Dataset& data,
                                 std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw ParameterError("mc_dropout_predict: n_samples must be >= 1");
    check_dataset(data, model.input_dim());
    PredictionSet out{std::string(kMethodMcDropout), data.tag, model.seed, false, {}};
    const std::uint64_t base = rng.next_u64();
    if (data.empty()) return out;

    std::vector<std::vector<Logits>> per_sample(data.size());
    for (auto& v : per_sample) v.reserve(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
        Rng pass_rng(mc_pass_seed(base, k));
        const auto logits =
            forward_logits_batch(model, data.features, ForwardMode::dropout_active, pass_rng);
        for (std::size_t i = 0; i < data.size(); ++i) per_sample[i].push_back(logits[i]);
    }
    out.rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.rows.push_back(make_prediction_row(i, data.labels[i], std::move(per_sample[i]),
                                               ScoreKind::entropy));
    }
    return out;
}

void EnsembleSpec::validate() const {
    if (members.size() < 2) throw ConfigError("an ensemble needs at least 2 members");
    if (!member_seeds.empty() && member_seeds.size() != members.size()) {
        throw ConfigError("ensemble member seeds do not match the member count");
    }
    const auto sizes = members.front().layer_sizes();
    for (std::size_t m = 0; m < members.size(); ++m) {
        if (members[m].layer_sizes() != sizes) {
            throw ConfigError("ensemble member " + std::to_string(m) +
                              " has a different architecture");
        }
        if (!members[m].trained) {
            throw StateError("ensemble member " + std::to_string(m) + " is untrained");
        }
    }
}

PredictionSet ensemble_predict(const EnsembleSpec& spec, const Dataset& data) {
    spec.validate();
    check_dataset(data, spec.members.front().input_dim());
    PredictionSet out{std::string(kMethodEnsemble), data.tag, spec.seed, false, {}};
    if (data.empty()) return out;

    Rng unused(0);
    std::vector<std::vector<Logits>> per_sample(data.size());
    for (const auto& member : spec.members) {
        const auto logits =
            forward_logits_batch(member, data.features, ForwardMode::deterministic, unused);
        for (std::size_t i = 0; i < data.size(); ++i) per_sample[i].push_back(logits[i]);
    }
    out.rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.rows.push_back(make_prediction_row(i, data.labels[i], std::move(per_sample[i]),
                                               ScoreKind::entropy));
    }
    return out;
}

SngpHead make_sngp_head(const MlpClassifier& model, double ridge, double mean_field_lambda) {
    if (!model.random_features) {
        throw ConfigError("make_sngp_head: model has no random-feature layer");
    }
    if (!(ridge > 0.0)) throw ParameterError("make_sngp_head: ridge must be positive");
    const auto& rf = *model.random_features;
    const auto& out = model.output_layer();

    SngpHead head;
    head.rff_weights = rf.weight;
    head.rff_phases = rf.phase;
    head.length_scale = rf.length_scale;
    head.beta.resize(rf.out_dim());
    for (std::size_t k = 0; k < rf.out_dim(); ++k) head.beta[k] = out.weight(1, k) - out.weight(0, k);
    head.bias = out.bias[1] - out.bias[0];
    head.ridge = ridge;
    head.mean_field_lambda = mean_field_lambda;
    head.precision = Matrix::identity(rf.out_dim());
    head.precision *= ridge;
    head.covariance = Matrix::identity(rf.out_dim());
    head.covariance *= 1.0 / ridge;
    return head;
}

std::vector<double> rff_features(std::span<const double> x, const SngpHead& head) {
    if (x.size() != head.rff_weights.cols()) {
        throw DataError("rff_features: input has " + std::to_string(x.size()) +
                        " entries, random features expect " +
                        std::to_string(head.rff_weights.cols()));
    }
    const std::size_t d = head.rff_dim();
    const double amp = std::sqrt(2.0 / static_cast<double>(d));
    std::vector<double> phi(d);
    for (std::size_t k = 0; k < d; ++k) {
        phi[k] = amp * std::cos(dot(head.rff_weights.row(k), x) + head.rff_phases[k]);
    }
    return phi;
}

SngpHead sngp_fit(SngpHead head, const Matrix& train_features,
                  std::span<const double> train_probs, double ridge) {
    if (!(ridge > 0.0)) throw ParameterError("sngp_fit: ridge must be positive");
    const std::size_t d = head.rff_dim();
    if (d == 0) throw ConfigError("sngp_fit: head has no random features");
    if (train_features.rows() != train_probs.size()) {
        throw DimensionError("sngp_fit: " + std::to_string(train_features.rows()) +
                             " feature rows for " + std::to_string(train_probs.size()) +
                             " probabilities");
    }
    if (train_features.rows() > 0 && train_features.cols() != d) {
        throw DimensionError("sngp_fit: feature rows must have length " + std::to_string(d));
    }

    Matrix precision(d, d);
    for (std::size_t i = 0; i < d; ++i) precision(i, i) = ridge;
    for (std::size_t n = 0; n < train_features.rows(); ++n) {
        const double p = train_probs[n];
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("sngp_fit: probabilities must lie in [0, 1]");
        const double w = p * (1.0 - p);
        if (w == 0.0) continue;
        const auto phi = train_features.row(n);
        for (std::size_t i = 0; i < d; ++i) {
            const double wi = w * phi[i];
            auto row = precision.row(i);
            for (std::size_t j = i; j < d; ++j) row[j] += wi * phi[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) precision(j, i) = precision(i, j);
    }
    head.covariance = spd_inverse(precision);
    head.precision = std::move(precision);
    head.ridge = ridge;
    return head;
}

SngpHead sngp_fit_on(const MlpClassifier& model, SngpHead head, const Dataset& train,
                     double ridge) {
    check_dataset(train, model.input_dim());
    Matrix features(train.size(), head.rff_dim());
    std::vector<double> probs(train.size());
    for (std::size_t n = 0; n < train.size(); ++n) {
        const auto phi = rff_features(hidden_features(model, train.features.row(n)), head);
        std::copy(phi.begin(), phi.end(), features.row(n).begin());
        probs[n] = logistic(dot(head.beta, phi) + head.bias);
    }
    return sngp_fit(std::move(head), features, probs, ridge);
}

SngpMoments sngp_moments(const MlpClassifier& model, const SngpHead& head,
                         std::span<const double> x) {
    const auto phi = rff_features(hidden_features(model, x), head);
    SngpMoments mom;
    mom.mean = dot(head.beta, phi) + head.bias;
    const auto sigma_phi = matvec(head.covariance, phi);
    mom.variance = dot(phi, sigma_phi);
    if (mom.variance < -kNegativeVarianceTol) {
        throw NumericalError("sngp: negative predictive variance " +
                             std::to_string(mom.variance));
    }
    return mom;
}

double mean_field_probability(double mean, double variance, double lambda) {
    return logistic(mean / std::sqrt(1.0 + lambda * std::max(variance, 0.0)));
}

PredictionSet sngp_predict(const MlpClassifier& model, const SngpHead& head, const Dataset& data) {
    check_dataset(data, model.input_dim());
    PredictionSet out{std::string(kMethodSngp), data.tag, model.seed, true, {}};
    std::size_t clamped = 0;
    out.rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto mom = sngp_moments(model, head, data.features.row(i));
        if (mom.variance < 0.0) {
            mom.variance = 0.0;
            ++clamped;
        }
        const double adjusted =
            mom.mean / std::sqrt(1.0 + head.mean_field_lambda * mom.variance);
        out.rows.push_back(
            make_prediction_row(i, data.labels[i], {Logits{0.0, adjusted}}, ScoreKind::entropy));
    }
    if (clamped > 0) {
        std::clog << "warning: sngp_predict clamped " << clamped
                  << " tiny negative variances to 0 on '" << data.tag << "'\n";
    }
    return out;
}

std::vector<double> sngp_variances(const MlpClassifier& model, const SngpHead& head,
                                   const Dataset& data) {
    check_dataset(data, model.input_dim());
    std::vector<double> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.push_back(std::max(sngp_moments(model, head, data.features.row(i)).variance, 0.0));
    }
    return out;
}

SngpModel train_sngp(std::span<const std::size_t> feature_sizes, const SngpConfig& cfg,
                     const TrainConfig& train_cfg, const Dataset& data, Rng& init_rng) {
    MlpClassifier net = init_sngp_network(feature_sizes, cfg.rff_dim, cfg.length_scale,
                                          cfg.spectral_bound, init_rng);
    net = train(std::move(net), data, train_cfg);
    SngpHead head = make_sngp_head(net, cfg.ridge, cfg.mean_field_lambda);
    head = sngp_fit_on(net, std::move(head), data, cfg.ridge);
    return {std::move(net), std::move(head)};
}

}  // namespace uqlab

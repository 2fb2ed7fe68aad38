#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqlab/datagen.hpp"
#include "uqlab/model.hpp"
#include "uqlab/numerics.hpp"

namespace uqlab {

/// How a method turns its predictive distribution into a scalar uncertainty.
enum class ScoreKind {
    one_minus_max_prob,  ///< 1 - max(p0, p1)
    entropy,             ///< -Σ p log p of the (mean) predictive distribution
};

/// "msp" scores by 1 - max probability; every other method by entropy.
ScoreKind score_kind_for(std::string_view method);
std::string_view score_kind_name(ScoreKind kind);

inline constexpr std::string_view kMethodMsp = "msp";
inline constexpr std::string_view kMethodMcDropout = "mc_dropout";
inline constexpr std::string_view kMethodEnsemble = "ensemble";
inline constexpr std::string_view kMethodSngp = "sngp";

/// Natural-log entropy of a two-class distribution, 0 log 0 = 0.
double entropy(const Probs& p);

/// One sample of a PredictionSet. `components` holds the raw logits of every
/// MC pass or ensemble member (a single entry for single-pass methods); the
/// predictive distribution is the mean of their softmax outputs.
struct PredictionRow {
    std::uint64_t sample_id = 0;
    int label = 0;
    Probs probs{0.5, 0.5};
    double uncertainty = 0.0;
    std::vector<Logits> components;

    friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

/// Predictions of one method for one dataset under one seed.
struct PredictionSet {
    std::string method;
    std::string tag;
    std::uint64_t seed = 0;
    /// Single-pass sets are written with component_index -1.
    bool single_pass = true;
    std::vector<PredictionRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }
    ScoreKind score_kind() const { return score_kind_for(method); }

    std::vector<double> uncertainties() const;
    std::vector<double> positive_probs() const;
    std::vector<int> labels() const;

    /// Throws DataError when a row breaks normalisation, non-negativity or
    /// binary labels.
    void validate() const;

    friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// Builds a row from its component logits: probs = mean softmax,
/// uncertainty by `kind`.
PredictionRow make_prediction_row(std::uint64_t sample_id, int label,
                                  std::vector<Logits> components, ScoreKind kind);

/// Single deterministic pass; uncertainty = 1 - max softmax probability.
PredictionSet msp_predict(const MlpClassifier& model, const Dataset& data);

inline constexpr std::size_t kDefaultMcSamples = 32;
inline constexpr double kDefaultDropoutRate = 0.5;

/// Seed of MC pass `pass` given the base drawn from the caller's stream.
std::uint64_t mc_pass_seed(std::uint64_t base, std::size_t pass);

/// Mean softmax over `n_samples` dropout-active passes, uncertainty =
/// entropy of the mean. Pass k draws its masks from
/// Rng(mc_pass_seed(base, k)), base = rng.next_u64(), visiting samples in
/// order, so results do not depend on evaluation order.
PredictionSet mc_dropout_predict(const MlpClassifier& model, const Dataset& data,
                                 std::size_t n_samples, Rng& rng);

/// Independently initialised members sharing one architecture.
struct EnsembleSpec {
    std::vector<MlpClassifier> members;
    std::vector<std::uint64_t> member_seeds;
    std::uint64_t seed = 0;  ///< identifies the ensemble in prediction files

    /// Throws ConfigError for < 2 members or mismatched architectures and
    /// StateError when a member is untrained.
    void validate() const;
};

inline constexpr std::size_t kDefaultEnsembleMembers = 4;

/// Mean of member softmax outputs; uncertainty = entropy of the mean.
PredictionSet ensemble_predict(const EnsembleSpec& spec, const Dataset& data);

/// Random-feature Gaussian-process output layer with a Laplace posterior
/// over its weights.
struct SngpHead {
    Matrix rff_weights;          ///< D x feature-dim, entries N(0, 1/ℓ²)
    std::vector<double> rff_phases;
    double length_scale = 0.1;
    std::vector<double> beta;    ///< posterior mean weights on φ
    double bias = 0.0;
    Matrix precision;            ///< D x D
    Matrix covariance;           ///< precision⁻¹
    double ridge = 1.0;
    double mean_field_lambda = std::numbers::pi / 8.0;

    std::size_t rff_dim() const noexcept { return rff_weights.rows(); }
};

struct SngpConfig {
    std::size_t rff_dim = 1024;
    double ridge = 1.0;
    double length_scale = 0.1;
    double spectral_bound = 0.95;
    double mean_field_lambda = std::numbers::pi / 8.0;

    friend bool operator==(const SngpConfig&, const SngpConfig&) = default;
};

/// Head of a trained SNGP network: copies its random features and reads
/// β = w1 - w0 and bias b1 - b0 off the two-logit output layer. The posterior
/// starts at the prior (precision = ridge·I).
SngpHead make_sngp_head(const MlpClassifier& model, double ridge,
                        double mean_field_lambda = std::numbers::pi / 8.0);

/// φ(x) = √(2/D) cos(W x + b) with the head's weights.
std::vector<double> rff_features(std::span<const double> x, const SngpHead& head);

/// Laplace posterior for a logistic output layer:
/// precision = ridge·I + Σ p(1-p) φ φᵀ, covariance = precision⁻¹.
SngpHead sngp_fit(SngpHead head, const Matrix& train_features,
                  std::span<const double> train_probs, double ridge);

/// Computes φ(h(x)) and p = logistic(m) for every training sample and calls
/// sngp_fit.
SngpHead sngp_fit_on(const MlpClassifier& model, SngpHead head, const Dataset& train,
                     double ridge);

/// Posterior mean logit m and variance v = φᵀΣφ for one input.
struct SngpMoments {
    double mean = 0.0;
    double variance = 0.0;
};

SngpMoments sngp_moments(const MlpClassifier& model, const SngpHead& head,
                         std::span<const double> x);

/// logistic(m / √(1 + λ v)).
double mean_field_probability(double mean, double variance, double lambda);

/// Per-sample adjusted probability (1 - q, q) with q = logistic(m / √(1 + λv));
/// uncertainty = its entropy. Logits are written as (0, m / √(1 + λv)).
PredictionSet sngp_predict(const MlpClassifier& model, const SngpHead& head, const Dataset& data);

/// Posterior variances for every sample in `data`.
std::vector<double> sngp_variances(const MlpClassifier& model, const SngpHead& head,
                                   const Dataset& data);

/// Trained SNGP network with its fitted head.
struct SngpModel {
    MlpClassifier network;
    SngpHead head;
};

/// Initialises, trains and fits an SNGP model. `feature_sizes` =
/// [input, hidden...].
SngpModel train_sngp(std::span<const std::size_t> feature_sizes, const SngpConfig& cfg,
                     const TrainConfig& train_cfg, const Dataset& data, Rng& init_rng);

}  // namespace uqlab

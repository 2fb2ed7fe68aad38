#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "uqlab/datagen.hpp"
#include "uqlab/numerics.hpp"

namespace uqlab {

using Logits = std::array<double, 2>;
using Probs = std::array<double, 2>;

enum class Activation { relu, identity };

/// y = act(W x + b), W stored as out x in.
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;
    Activation activation = Activation::relu;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fixed random Fourier feature map φ(h) = √(2/D) cos(W h + b) with
/// W ~ N(0, 1/ℓ²) and b ~ U[0, 2π). Not trained.
struct RandomFeatureLayer {
    Matrix weight;               ///< D x in
    std::vector<double> phase;   ///< D
    double length_scale = 1.0;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    /// Throws DataError when `h` does not match the input width.
    std::vector<double> apply(std::span<const double> h) const;

    friend bool operator==(const RandomFeatureLayer&, const RandomFeatureLayer&) = default;
};

/// Feed-forward binary classifier.
///
/// `layers` holds the ReLU hidden layers followed by the linear output layer
/// producing two logits. An optional random-feature layer sits between the
/// last hidden layer and the output layer (the SNGP configuration). A single
/// dropout site acts on the input of the output layer. When `spectral_bound`
/// is set, hidden layers are kept at spectral norm <= bound during training.
struct MlpClassifier {
    std::vector<DenseLayer> layers;
    std::optional<RandomFeatureLayer> random_features;
    double dropout_rate = 0.0;
    std::optional<double> spectral_bound;
    std::vector<PowerIterationState> sn_state;  ///< one per hidden layer
    std::uint64_t seed = 0;
    bool trained = false;

    std::size_t input_dim() const noexcept { return layers.front().in_dim(); }
    std::size_t hidden_count() const noexcept { return layers.size() - 1; }
    const DenseLayer& output_layer() const noexcept { return layers.back(); }
    /// Layer widths from input to logits, excluding the random-feature layer.
    std::vector<std::size_t> layer_sizes() const;
    std::size_t parameter_count() const;

    /// Throws ConfigError when the layer chain is inconsistent.
    void validate() const;

    friend bool operator==(const MlpClassifier&, const MlpClassifier&) = default;
};

/// Hidden and output weights ~ N(0, 2 / fan_in) (He initialisation),
/// biases zero. `layer_sizes` = [input, hidden..., 2].
MlpClassifier init_mlp(std::span<const std::size_t> layer_sizes, double dropout_rate,
                       std::optional<double> spectral_bound, Rng& rng);

/// Network for SNGP: spectrally bounded ReLU layers of widths
/// `feature_sizes` = [input, hidden...], a random-feature layer of width
/// `rff_dim`, and a linear output layer on the random features.
MlpClassifier init_sngp_network(std::span<const std::size_t> feature_sizes, std::size_t rff_dim,
                                double length_scale, double spectral_bound, Rng& rng);

enum class ForwardMode { deterministic, dropout_active };

Logits forward_logits(const MlpClassifier& model, std::span<const double> x, ForwardMode mode,
                      Rng& rng);

/// One forward pass per row of `x`. Dropout masks are drawn row by row from
/// `rng`, so the result equals calling forward_logits on each row in order.
std::vector<Logits> forward_logits_batch(const MlpClassifier& model, const Matrix& x,
                                         ForwardMode mode, Rng& rng);

/// Output of the last hidden layer (the representation fed to the
/// random-feature map or to the output layer).
std::vector<double> hidden_features(const MlpClassifier& model, std::span<const double> x);

/// Numerically stable two-class softmax. Throws NumericalError for
/// non-finite logits.
Probs softmax(const Logits& logits);

/// Mean cross-entropy with dropout disabled.
double cross_entropy(const MlpClassifier& model, const Dataset& data);

/// Classification accuracy with dropout disabled; argmax ties go to class 0.
double training_accuracy(const MlpClassifier& model, const Dataset& data);

/// Gradient of the mean cross-entropy, in the layout of `MlpClassifier::layers`.
struct Gradient {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
    double loss = 0.0;
};

/// Exact gradient of the mean cross-entropy over `data` with dropout disabled.
Gradient loss_gradient(const MlpClassifier& model, const Dataset& data);

/// Trainable parameters flattened layer by layer (weights row-major, then bias).
std::vector<double> flatten_parameters(const MlpClassifier& model);
void assign_parameters(MlpClassifier& model, std::span<const double> flat);
std::vector<double> flatten_gradient(const Gradient& grad);

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;

    /// learning_rate == 0 is accepted and performs zero-size steps.
    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Called after every epoch with the 1-based epoch index and mean training loss.
using EpochCallback = std::function<void(std::size_t epoch, const MlpClassifier&, double loss)>;

/// Mini-batch Adam (β1 = 0.9, β2 = 0.999, ε = 1e-8, bias-corrected moments,
/// L2 weight decay added to the gradient) on the mean cross-entropy.
/// Dropout is active during training. With a spectral bound, every hidden
/// layer is projected after each step (one warm-started power iteration) and
/// re-projected with a converged estimate at the end of every epoch.
///
/// Throws DataError on empty data and TrainingDivergedError on a NaN loss.
MlpClassifier train(MlpClassifier model, const Dataset& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

}  // namespace uqlab

#include "uqlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "uqlab/errors.hpp"

namespace uqlab {

namespace {

constexpr std::size_t kEpochProjectionMaxIters = 500;
constexpr double kEpochProjectionTol = 1e-13;

DenseLayer he_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), act};
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weight.data()) w = stddev * rng.normal();
    return layer;
}

void init_sn_state(MlpClassifier& model, Rng& rng) {
    model.sn_state.clear();
    if (!model.spectral_bound) return;
    for (std::size_t l = 0; l < model.hidden_count(); ++l) {
        PowerIterationState st;
        st.u.resize(model.layers[l].out_dim());
        for (double& x : st.u) x = rng.normal();
        const double n = norm2(st.u);
        for (double& x : st.u) x /= n;
        model.sn_state.push_back(std::move(st));
    }
}

void check_bound(std::optional<double> bound) {
    if (bound && !(*bound > 0.0)) throw ConfigError("spectral bound must be positive");
}

// out = A Wᵀ + b (one row per sample).
Matrix affine(const Matrix& a, const Matrix& w, std::span<const double> b) {
    Matrix out(a.rows(), w.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        auto oi = out.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) oi[o] = dot(ai, w.row(o)) + b[o];
    }
    return out;
}

// Intermediate values of a batched forward pass, kept for backprop.
struct ForwardCache {
    std::vector<Matrix> layer_input;  // input to each dense layer
    std::vector<Matrix> pre;          // pre-activations of hidden layers
    Matrix rff_pre;                   // W h + b of the random-feature layer
    Matrix dropout_scale;             // per-unit 0 or 1/keep; empty when inactive
    Matrix logits;
};

ForwardCache forward_batch(const MlpClassifier& model, const Matrix& x, Rng* dropout_rng) {
    if (x.cols() != model.input_dim()) {
        throw DataError("input has " + std::to_string(x.cols()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    }
    ForwardCache cache;
    Matrix cur = x;
    for (std::size_t l = 0; l < model.hidden_count(); ++l) {
        const auto& layer = model.layers[l];
        Matrix pre = affine(cur, layer.weight, layer.bias);
        cache.layer_input.push_back(std::move(cur));
        cur = pre;
        if (layer.activation == Activation::relu) {
            for (double& v : cur.data()) v = std::max(v, 0.0);
        }
        cache.pre.push_back(std::move(pre));
    }
    if (model.random_features) {
        const auto& rf = *model.random_features;
        cache.rff_pre = affine(cur, rf.weight, rf.phase);
        const double amp = std::sqrt(2.0 / static_cast<double>(rf.out_dim()));
        cur = cache.rff_pre;
        for (double& v : cur.data()) v = amp * std::cos(v);
    }
    if (dropout_rng != nullptr && model.dropout_rate > 0.0) {
        const double keep = 1.0 - model.dropout_rate;
        cache.dropout_scale = Matrix(cur.rows(), cur.cols());
        auto scale = cache.dropout_scale.data();
        auto vals = cur.data();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            scale[i] = (keep > 0.0 && dropout_rng->bernoulli(keep)) ? 1.0 / keep : 0.0;
            vals[i] *= scale[i];
        }
    }
    const auto& out = model.output_layer();
    cache.logits = affine(cur, out.weight, out.bias);
    cache.layer_input.push_back(std::move(cur));
    return cache;
}

// Mean cross-entropy of `logits` and its gradient w.r.t. the logits.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* delta) {
    const std::size_t n = logits.rows();
    if (delta) *delta = Matrix(n, 2);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z0 = logits(i, 0);
        const double z1 = logits(i, 1);
        const double m = std::max(z0, z1);
        const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
        const int y = labels[i];
        loss += lse - (y == 0 ? z0 : z1);
        if (delta) {
            const double p1 = std::exp(z1 - lse);
            const double p0 = std::exp(z0 - lse);
            (*delta)(i, 0) = (p0 - (y == 0 ? 1.0 : 0.0)) / static_cast<double>(n);
            (*delta)(i, 1) = (p1 - (y == 1 ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    return loss / static_cast<double>(n);
}

// Accumulates dW = δᵀ A and db = Σ δ; returns dA = δ W.
Matrix backprop_dense(const Matrix& delta, const Matrix& input, const Matrix& w, Matrix& dw,
                      std::vector<double>& db, bool need_input_grad) {
    dw = Matrix(w.rows(), w.cols());
    db.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        const auto di = delta.row(i);
        const auto ai = input.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double d = di[o];
            if (d == 0.0) continue;
            db[o] += d;
            auto row = dw.row(o);
            for (std::size_t k = 0; k < ai.size(); ++k) row[k] += d * ai[k];
        }
    }
    if (!need_input_grad) return {};
    return delta * w;
}

Gradient backward(const MlpClassifier& model, const ForwardCache& cache, Matrix delta) {
    const std::size_t nl = model.layers.size();
    Gradient g;
    g.weight.resize(nl);
    g.bias.resize(nl);

    Matrix d = backprop_dense(delta, cache.layer_input.back(), model.output_layer().weight,
                              g.weight[nl - 1], g.bias[nl - 1], nl > 1);
    if (nl == 1) return g;

    if (!cache.dropout_scale.empty()) {
        auto dv = d.data();
        const auto sv = cache.dropout_scale.data();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= sv[i];
    }
    if (model.random_features) {
        const auto& rf = *model.random_features;
        const double amp = std::sqrt(2.0 / static_cast<double>(rf.out_dim()));
        auto dv = d.data();
        const auto pv = cache.rff_pre.data();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= -amp * std::sin(pv[i]);
        d = d * rf.weight;
    }
    for (std::size_t l = nl - 1; l-- > 0;) {
        const auto& layer = model.layers[l];
        if (layer.activation == Activation::relu) {
            auto dv = d.data();
            const auto pv = cache.pre[l].data();
            for (std::size_t i = 0; i < dv.size(); ++i) {
                if (pv[i] <= 0.0) dv[i] = 0.0;
            }
        }
        d = backprop_dense(d, cache.layer_input[l], layer.weight, g.weight[l], g.bias[l], l > 0);
    }
    return g;
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::span<double>> parameter_blocks(MlpClassifier& model) {
    std::vector<std::span<double>> blocks;
    for (auto& layer : model.layers) {
        blocks.push_back(layer.weight.data());
        blocks.push_back(layer.bias);
    }
    return blocks;
}

std::vector<std::span<const double>> gradient_blocks(const Gradient& g) {
    std::vector<std::span<const double>> blocks;
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        blocks.push_back(g.weight[l].data());
        blocks.push_back(g.bias[l]);
    }
    return blocks;
}

void check_training_data(const MlpClassifier& model, const Dataset& data) {
    if (data.empty()) throw DataError("training data '" + data.tag + "' is empty");
    data.validate();
    if (data.dim() != model.input_dim()) {
        throw DataError("training data has " + std::to_string(data.dim()) +
                        " features, model expects " + std::to_string(model.input_dim()));
    }
}

void project_hidden_layers(MlpClassifier& model, std::size_t iters, bool converge) {
    const double bound = *model.spectral_bound;
    for (std::size_t l = 0; l < model.hidden_count(); ++l) {
        auto& w = model.layers[l].weight;
        auto& st = model.sn_state[l];
        if (!converge) {
            project_spectral(w, bound, st, iters);
            continue;
        }
        double prev = st.step(w, 1);
        double sigma = prev;
        for (std::size_t it = 1; it < kEpochProjectionMaxIters; ++it) {
            sigma = st.step(w, 1);
            if (std::abs(sigma - prev) <= kEpochProjectionTol * sigma) break;
            prev = sigma;
        }
        if (sigma > bound) w *= bound / sigma;
    }
}

}  // namespace

std::vector<double> RandomFeatureLayer::apply(std::span<const double> h) const {
    if (h.size() != in_dim()) {
        throw DataError("random features expect " + std::to_string(in_dim()) +
                        " inputs, got " + std::to_string(h.size()));
    }
    const double amp = std::sqrt(2.0 / static_cast<double>(out_dim()));
    std::vector<double> phi(out_dim());
    for (std::size_t k = 0; k < phi.size(); ++k) {
        phi[k] = amp * std::cos(dot(weight.row(k), h) + phase[k]);
    }
    return phi;
}

std::vector<std::size_t> MlpClassifier::layer_sizes() const {
    std::vector<std::size_t> sizes{input_dim()};
    for (const auto& l : layers) sizes.push_back(l.out_dim());
    return sizes;
}

std::size_t MlpClassifier::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void MlpClassifier::validate() const {
    if (layers.empty()) throw ConfigError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bias.size() != layers[l].out_dim()) {
            throw ConfigError("layer " + std::to_string(l) + ": bias length mismatch");
        }
        if (l + 1 < layers.size()) {
            std::size_t next_in = layers[l + 1].in_dim();
            if (random_features && l + 2 == layers.size()) {
                if (random_features->in_dim() != layers[l].out_dim()) {
                    throw ConfigError("random-feature layer input does not match hidden width");
                }
                continue;
            }
            if (next_in != layers[l].out_dim()) {
                throw ConfigError("layer " + std::to_string(l) + " output width " +
                                  std::to_string(layers[l].out_dim()) +
                                  " does not chain into layer input width " +
                                  std::to_string(next_in));
            }
        }
    }
    if (random_features) {
        if (random_features->phase.size() != random_features->out_dim() ||
            output_layer().in_dim() != random_features->out_dim()) {
            throw ConfigError("random-feature layer does not chain into the output layer");
        }
        if (hidden_count() == 0 && random_features->in_dim() != input_dim()) {
            throw ConfigError("random-feature layer input does not match the model input");
        }
    }
    if (output_layer().out_dim() != 2) throw ConfigError("final layer must produce 2 logits");
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1]");
    }
    check_bound(spectral_bound);
    if (spectral_bound && sn_state.size() != hidden_count()) {
        throw ConfigError("spectral-norm state must hold one vector per hidden layer");
    }
}

MlpClassifier init_mlp(std::span<const std::size_t> layer_sizes, double dropout_rate,
                       std::optional<double> spectral_bound, Rng& rng) {
    if (layer_sizes.size() < 2) throw ConfigError("init_mlp: need at least 2 layer sizes");
    if (layer_sizes.back() != 2) throw ConfigError("init_mlp: final layer size must be 2");
    if (std::find(layer_sizes.begin(), layer_sizes.end(), 0u) != layer_sizes.end()) {
        throw ConfigError("init_mlp: layer sizes must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
        throw ConfigError("init_mlp: dropout rate must lie in [0, 1]");
    }
    check_bound(spectral_bound);

    MlpClassifier model;
    model.seed = rng.seed();
    model.dropout_rate = dropout_rate;
    model.spectral_bound = spectral_bound;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const bool last = l + 2 == layer_sizes.size();
        model.layers.push_back(he_layer(layer_sizes[l], layer_sizes[l + 1],
                                        last ? Activation::identity : Activation::relu, rng));
    }
    init_sn_state(model, rng);
    return model;
}

MlpClassifier init_sngp_network(std::span<const std::size_t> feature_sizes, std::size_t rff_dim,
                                double length_scale, double spectral_bound, Rng& rng) {
    if (feature_sizes.empty() || feature_sizes.front() == 0) {
        throw ConfigError("init_sngp_network: need a positive input width");
    }
    if (rff_dim == 0) throw ConfigError("init_sngp_network: random-feature width must be >= 1");
    if (!(length_scale > 0.0)) throw ConfigError("init_sngp_network: length scale must be > 0");
    check_bound(spectral_bound);

    MlpClassifier model;
    model.seed = rng.seed();
    model.spectral_bound = spectral_bound;
    for (std::size_t l = 0; l + 1 < feature_sizes.size(); ++l) {
        model.layers.push_back(
            he_layer(feature_sizes[l], feature_sizes[l + 1], Activation::relu, rng));
    }
    RandomFeatureLayer rf{Matrix(rff_dim, feature_sizes.back()), std::vector<double>(rff_dim),
                          length_scale};
    for (double& w : rf.weight.data()) w = rng.normal() / length_scale;
    for (double& b : rf.phase) b = rng.uniform(0.0, 2.0 * std::numbers::pi);
    model.random_features = std::move(rf);
    model.layers.push_back(he_layer(rff_dim, 2, Activation::identity, rng));
    init_sn_state(model, rng);
    return model;
}

Logits forward_logits(const MlpClassifier& model, std::span<const double> x, ForwardMode mode,
                      Rng& rng) {
    if (x.size() != model.input_dim()) {
        throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    }
    const Matrix row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    const auto cache =
        forward_batch(model, row, mode == ForwardMode::dropout_active ? &rng : nullptr);
    return {cache.logits(0, 0), cache.logits(0, 1)};
}

std::vector<Logits> forward_logits_batch(const MlpClassifier& model, const Matrix& x,
                                         ForwardMode mode, Rng& rng) {
    const auto cache =
        forward_batch(model, x, mode == ForwardMode::dropout_active ? &rng : nullptr);
    std::vector<Logits> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = {cache.logits(i, 0), cache.logits(i, 1)};
    return out;
}

std::vector<double> hidden_features(const MlpClassifier& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) {
        throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    }
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < model.hidden_count(); ++l) {
        const auto& layer = model.layers[l];
        auto next = matvec(layer.weight, cur);
        for (std::size_t o = 0; o < next.size(); ++o) {
            next[o] += layer.bias[o];
            if (layer.activation == Activation::relu) next[o] = std::max(next[o], 0.0);
        }
        cur = std::move(next);
    }
    return cur;
}

Probs softmax(const Logits& z) {
    if (!std::isfinite(z[0]) || !std::isfinite(z[1])) {
        throw NumericalError("softmax: non-finite logits");
    }
    const double m = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - m);
    const double e1 = std::exp(z[1] - m);
    const double s = e0 + e1;
    return {e0 / s, e1 / s};
}

double cross_entropy(const MlpClassifier& model, const Dataset& data) {
    check_training_data(model, data);
    const auto cache = forward_batch(model, data.features, nullptr);
    return softmax_cross_entropy(cache.logits, data.labels, nullptr);
}

double training_accuracy(const MlpClassifier& model, const Dataset& data) {
    check_training_data(model, data);
    const auto cache = forward_batch(model, data.features, nullptr);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int pred = cache.logits(i, 1) > cache.logits(i, 0) ? 1 : 0;
        correct += pred == data.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

Gradient loss_gradient(const MlpClassifier& model, const Dataset& data) {
    check_training_data(model, data);
    const auto cache = forward_batch(model, data.features, nullptr);
    Matrix delta;
    const double loss = softmax_cross_entropy(cache.logits, data.labels, &delta);
    Gradient g = backward(model, cache, std::move(delta));
    g.loss = loss;
    return g;
}

std::vector<double> flatten_parameters(const MlpClassifier& model) {
    std::vector<double> flat;
    flat.reserve(model.parameter_count());
    for (const auto& l : model.layers) {
        flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void assign_parameters(MlpClassifier& model, std::span<const double> flat) {
    if (flat.size() != model.parameter_count()) {
        throw DimensionError("assign_parameters: expected " +
                             std::to_string(model.parameter_count()) + " values, got " +
                             std::to_string(flat.size()));
    }
    std::size_t pos = 0;
    for (auto block : parameter_blocks(model)) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), block.size(), block.begin());
        pos += block.size();
    }
}

std::vector<double> flatten_gradient(const Gradient& grad) {
    std::vector<double> flat;
    for (auto block : gradient_blocks(grad)) flat.insert(flat.end(), block.begin(), block.end());
    return flat;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be a finite non-negative number");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
}

MlpClassifier train(MlpClassifier model, const Dataset& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
    cfg.validate();
    model.validate();
    check_training_data(model, data);

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    const std::size_t n_params = model.parameter_count();
    std::vector<double> m1(n_params, 0.0);
    std::vector<double> m2(n_params, 0.0);
    std::uint64_t step = 0;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Matrix xb = gather_rows(data.features, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = data.labels[idx[i]];

            const auto cache = forward_batch(model, xb, &rng);
            Matrix delta;
            const double loss = softmax_cross_entropy(cache.logits, yb, &delta);
            if (std::isnan(loss)) {
                throw TrainingDivergedError(epoch, "training loss became NaN in epoch " +
                                                       std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(idx.size());
            const Gradient g = backward(model, cache, std::move(delta));

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            std::size_t k = 0;
            const auto grads = gradient_blocks(g);
            auto params = parameter_blocks(model);
            for (std::size_t b = 0; b < params.size(); ++b) {
                for (std::size_t i = 0; i < params[b].size(); ++i, ++k) {
                    double& p = params[b][i];
                    const double gi = grads[b][i] + cfg.weight_decay * p;
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * gi;
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * gi * gi;
                    p -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                }
            }
            if (model.spectral_bound) project_hidden_layers(model, 1, false);
        }
        const double mean_loss = loss_sum / static_cast<double>(data.size());
        if (std::isnan(mean_loss)) {
            throw TrainingDivergedError(epoch, "training loss became NaN in epoch " +
                                                   std::to_string(epoch));
        }
        if (model.spectral_bound) project_hidden_layers(model, 0, true);
        model.trained = true;
        if (on_epoch) on_epoch(epoch, model, mean_loss);
    }
    model.trained = true;
    return model;
}

}  // namespace uqlab

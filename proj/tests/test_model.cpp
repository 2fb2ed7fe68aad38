#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "uqlab/errors.hpp"
#include "uqlab/model.hpp"

using namespace uqlab;

namespace {

Dataset two_blobs(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d{Matrix(n, 2), std::vector<int>(n), "blobs"};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        d.features(i, 0) = (y ? 2.0 : -2.0) + 0.3 * rng.normal();
        d.features(i, 1) = (y ? 1.0 : -1.0) + 0.3 * rng.normal();
        d.labels[i] = y;
    }
    return d;
}

// Plain logistic regression by Newton's method, used as the separability oracle.
double logistic_regression_accuracy(const Dataset& d) {
    double w[3] = {0, 0, 0};
    for (int it = 0; it < 50; ++it) {
        double g[3] = {0, 0, 0}, h[3][3] = {};
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double x[3] = {d.features(i, 0), d.features(i, 1), 1.0};
            const double p = 1.0 / (1.0 + std::exp(-(w[0] * x[0] + w[1] * x[1] + w[2])));
            for (int a = 0; a < 3; ++a) {
                g[a] += (p - d.labels[i]) * x[a] + 1e-3 * w[a];
                for (int b = 0; b < 3; ++b) h[a][b] += p * (1 - p) * x[a] * x[b];
                h[a][a] += 1e-3;
            }
        }
        // 3x3 solve by Cramer's rule.
        auto det = [](double m[3][3]) {
            return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                   m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                   m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        };
        const double dh = det(h);
        for (int c = 0; c < 3; ++c) {
            double m[3][3];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) m[a][b] = b == c ? g[a] : h[a][b];
            w[c] -= det(m) / dh;
        }
    }
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double z = w[0] * d.features(i, 0) + w[1] * d.features(i, 1) + w[2];
        ok += (z > 0 ? 1 : 0) == d.labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(d.size());
}

MlpClassifier make_model(std::vector<std::size_t> sizes, double p, std::uint64_t seed,
                         std::optional<double> bound = std::nullopt) {
    Rng rng(seed);
    return init_mlp(sizes, p, bound, rng);
}

}  // namespace

TEST_CASE("init_mlp shapes and determinism") {
    const auto m = make_model({2, 2}, 0.0, 1);
    CHECK(m.layers.size() == 1);
    CHECK(m.parameter_count() == 6);
    CHECK(make_model({2, 64, 64, 2}, 0.5, 7) == make_model({2, 64, 64, 2}, 0.5, 7));
    CHECK(make_model({2, 64, 64, 2}, 0.5, 7) != make_model({2, 64, 64, 2}, 0.5, 8));
    CHECK(make_model({3, 5, 2}, 0.0, 1).layer_sizes() == std::vector<std::size_t>{3, 5, 2});
    Rng rng(1);
    CHECK_THROWS_AS(init_mlp(std::vector<std::size_t>{2, 3}, 0.0, std::nullopt, rng), ConfigError);
    CHECK_THROWS_AS(init_mlp(std::vector<std::size_t>{2}, 0.0, std::nullopt, rng), ConfigError);
    CHECK_THROWS_AS(init_mlp(std::vector<std::size_t>{2, 2}, 1.5, std::nullopt, rng), ConfigError);
}

TEST_CASE("init variance follows the He scheme") {
    const auto m = make_model({2, 64, 64, 2}, 0.0, 3);
    for (const auto& layer : m.layers) {
        double s2 = 0;
        for (double w : layer.weight.data()) s2 += w * w;
        const double var = s2 / static_cast<double>(layer.weight.size());
        const double target = 2.0 / static_cast<double>(layer.in_dim());
        // Sample variance of n Gaussian draws has relative sd sqrt(2 / n).
        const double n = static_cast<double>(layer.weight.size());
        CHECK(std::abs(var - target) < 4.0 * target * std::sqrt(2.0 / n));
        for (double b : layer.bias) CHECK(b == 0.0);
    }
}

TEST_CASE("forward pass basics") {
    auto m = make_model({2, 4, 2}, 0.0, 5);
    Rng a(1), b(1);
    const std::vector<double> x{0.3, -0.7};
    CHECK(forward_logits(m, x, ForwardMode::dropout_active, a) ==
          forward_logits(m, x, ForwardMode::deterministic, b));
    CHECK_THROWS_AS(forward_logits(m, std::vector<double>{1.0}, ForwardMode::deterministic, a),
                    DataError);

    for (auto& l : m.layers) {
        for (double& w : l.weight.data()) w = 0.0;
    }
    const Logits z = forward_logits(m, x, ForwardMode::deterministic, a);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
}

TEST_CASE("batched forward equals row-by-row passes") {
    const auto m = make_model({2, 6, 2}, 0.5, 5);
    Rng data_rng(2);
    Matrix x(20, 2);
    for (double& v : x.data()) v = data_rng.normal();
    Rng a(3), b(3);
    const auto batch = forward_logits_batch(m, x, ForwardMode::dropout_active, a);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(batch[i] == forward_logits(m, x.row(i), ForwardMode::dropout_active, b));
    }
}

TEST_CASE("dropout passes follow the exact mask distribution") {
    // One hidden unit: dropout keeps it (scaled by 1/(1-p)) or zeroes it.
    MlpClassifier m = make_model({1, 1, 2}, 0.5, 1);
    m.layers[0].weight(0, 0) = 1.0;
    m.layers[0].bias[0] = 0.5;
    m.layers[1].weight(0, 0) = 0.0;
    m.layers[1].weight(1, 0) = 2.0;
    m.layers[1].bias = {0.0, 0.1};
    const std::vector<double> x{1.0};
    const double kept = 0.1 + 2.0 * 1.5 / 0.5;
    const double dropped = 0.1;

    Rng rng(11);
    const int n = 10000;
    int n_kept = 0;
    for (int i = 0; i < n; ++i) {
        const double z1 = forward_logits(m, x, ForwardMode::dropout_active, rng)[1];
        if (std::abs(z1 - kept) < 1e-12) {
            ++n_kept;
        } else {
            CHECK(std::abs(z1 - dropped) < 1e-12);
        }
    }
    const double sigma = std::sqrt(n * 0.25);
    CHECK(std::abs(n_kept - n * 0.5) < 3 * sigma);
}

TEST_CASE("softmax") {
    const Probs p = softmax({0.0, 0.0});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    const Probs a = softmax({0.3, -1.2});
    const Probs b = softmax({100.3, 98.8});
    CHECK(std::abs(a[0] - b[0]) < 1e-12);
    CHECK(std::abs(a[1] - b[1]) < 1e-12);
    const Probs s = softmax({1000.0, 0.0});
    CHECK(s[0] == 1.0);
    CHECK(std::isfinite(s[1]));
    CHECK(s[1] >= 0.0);
    CHECK_THROWS_AS(softmax({std::numeric_limits<double>::quiet_NaN(), 0.0}), NumericalError);
    CHECK_THROWS_AS(softmax({std::numeric_limits<double>::infinity(), 0.0}), NumericalError);
}

TEST_CASE("analytic gradient matches central differences") {
    auto m = make_model({2, 5, 4, 2}, 0.0, 21);
    for (auto& l : m.layers) {
        for (double& b : l.bias) b = 0.1;
    }
    const Dataset d = two_blobs(12, 4);
    const auto g = flatten_gradient(loss_gradient(m, d));
    auto theta = flatten_parameters(m);
    REQUIRE(g.size() == theta.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        assign_parameters(m, theta);
        const double up = cross_entropy(m, d);
        theta[i] = keep - h;
        assign_parameters(m, theta);
        const double down = cross_entropy(m, d);
        theta[i] = keep;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max({1e-3, std::abs(fd), std::abs(g[i])}));
    }
}

TEST_CASE("training fits separable blobs") {
    const Dataset d = two_blobs(400, 8);
    REQUIRE(logistic_regression_accuracy(d) == 1.0);
    auto m = make_model({2, 16, 2}, 0.0, 9);
    const double before = cross_entropy(m, d);
    TrainConfig cfg;
    cfg.seed = 3;
    const auto trained = train(m, d, cfg);
    CHECK(trained.trained);
    CHECK(cross_entropy(trained, d) < before);
    CHECK(training_accuracy(trained, d) >= 0.99);
    CHECK(train(m, d, cfg) == trained);
}

TEST_CASE("zero learning rate leaves the model unchanged") {
    const Dataset d = two_blobs(100, 1);
    const auto m = make_model({2, 8, 2}, 0.5, 2);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    const auto t = train(m, d, cfg);
    CHECK(flatten_parameters(t) == flatten_parameters(m));
    CHECK(std::abs(cross_entropy(t, d) - cross_entropy(m, d)) < 1e-12);
}

TEST_CASE("train config defaults and validation") {
    const TrainConfig cfg;
    CHECK(cfg.learning_rate == 1e-3);
    CHECK(cfg.weight_decay == 1e-5);
    CHECK(cfg.epochs == 100);
    CHECK(cfg.batch_size == 128);
    TrainConfig bad;
    bad.learning_rate = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training errors") {
    const auto m = make_model({2, 4, 2}, 0.0, 2);
    CHECK_THROWS_AS(train(m, Dataset{Matrix(0, 2), {}, "empty"}, TrainConfig{}), DataError);

    auto broken = m;
    broken.layers.back().bias[1] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 2;
    try {
        train(broken, two_blobs(50, 1), cfg);
        FAIL("expected divergence");
    } catch (const TrainingDivergedError& e) {
        CHECK(e.epoch() == 1);
    }
}

TEST_CASE("spectral bound holds after every epoch") {
    const Dataset d = two_blobs(200, 3);
    auto m = make_model({2, 16, 16, 2}, 0.0, 4, 0.95);
    for (auto& l : m.layers) l.weight *= 3.0;
    TrainConfig cfg;
    cfg.epochs = 5;
    std::size_t seen = 0;
    train(m, d, cfg, [&](std::size_t, const MlpClassifier& model, double) {
        ++seen;
        for (std::size_t l = 0; l < model.hidden_count(); ++l) {
            CHECK(oracle::largest_singular_value(model.layers[l].weight) <= 0.95 * (1 + 1e-3));
        }
    });
    CHECK(seen == 5);
}

TEST_CASE("sngp network layout") {
    Rng rng(5);
    const std::vector<std::size_t> fs{2, 8};
    const auto net = init_sngp_network(fs, 32, 0.5, 0.95, rng);
    REQUIRE(net.random_features);
    CHECK(net.random_features->out_dim() == 32);
    CHECK(net.output_layer().in_dim() == 32);
    CHECK(net.spectral_bound == 0.95);
    CHECK(hidden_features(net, std::vector<double>{0.1, 0.2}).size() == 8);
}

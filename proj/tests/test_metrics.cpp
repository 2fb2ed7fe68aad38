#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "uqlab/errors.hpp"
#include "uqlab/metrics.hpp"

using namespace uqlab;

namespace {

PredictionSet from_probs(const std::vector<double>& p1, const std::vector<int>& labels) {
    PredictionSet p{"ensemble", "t", 0, true, {}};
    for (std::size_t i = 0; i < p1.size(); ++i) {
        PredictionRow r;
        r.sample_id = i;
        r.label = labels[i];
        r.probs = {1.0 - p1[i], p1[i]};
        r.uncertainty = oracle::entropy(p1[i]);
        r.components = {Logits{0.0, std::log(p1[i] / (1.0 - p1[i]))}};
        p.rows.push_back(r);
    }
    return p;
}

PredictionSet random_set(std::size_t n, Rng& rng) {
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = rng.uniform();
        y[i] = rng.bernoulli(0.3 + 0.4 * p[i]) ? 1 : 0;
    }
    return from_probs(p, y);
}

std::vector<oracle::Sample> samples(const PredictionSet& p) {
    std::vector<oracle::Sample> s;
    for (const auto& r : p.rows) {
        const int pred = r.probs[1] > r.probs[0] ? 1 : 0;
        s.push_back({std::max(r.probs[0], r.probs[1]), pred == r.label});
    }
    return s;
}

}  // namespace

TEST_CASE("accuracy") {
    CHECK(accuracy(from_probs({0.9, 0.1, 0.8}, {1, 0, 1})) == 1.0);
    std::vector<double> p;
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) {
        p.push_back(0.9);
        y.push_back(i % 2);
    }
    CHECK(accuracy(from_probs(p, y)) == 0.5);
    CHECK(predicted_class({0.5, 0.5}) == 0);
    CHECK_THROWS_AS(accuracy(PredictionSet{}), DataError);

    Rng rng(1);
    const auto s = random_set(1000, rng);
    std::size_t ok = 0;
    for (const auto& r : s.rows) ok += (r.probs[1] > 0.5 ? 1 : 0) == r.label;
    CHECK(accuracy(s) == static_cast<double>(ok) / 1000.0);
}

TEST_CASE("average precision") {
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) ==
          1.0);
    CHECK(average_precision(std::vector<double>{0.3, 0.6, 0.1}, std::vector<int>{1, 1, 1}) == 1.0);
    CHECK_THROWS_AS(
        average_precision(std::vector<double>{0.3, 0.6}, std::vector<int>{0, 0}),
        UndefinedMetricError);
    CHECK_THROWS_AS(average_precision(std::vector<double>{0.3}, std::vector<int>{0, 1}),
                    DimensionError);

    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> s(20);
        std::vector<int> y(20);
        for (int i = 0; i < 20; ++i) {
            s[i] = std::round(rng.uniform() * 8) / 8;  // forces ties
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        CHECK(std::abs(average_precision(s, y) - oracle::average_precision(s, y)) < 1e-12);
    }
}

TEST_CASE("ece and mce") {
    const auto perfect = from_probs({1.0, 1.0, 0.0}, {1, 1, 0});
    CHECK(ece(perfect) == 0.0);
    const auto half = from_probs({1.0, 1.0, 1.0, 1.0}, {1, 0, 1, 0});
    CHECK(ece(half) == 0.5);
    CHECK(mce(half) == 0.5);

    // One non-empty bin: mce == ece.
    const auto one_bin = from_probs({0.95, 0.97, 0.96}, {1, 0, 1});
    CHECK(mce(one_bin) == ece(one_bin));

    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto s = random_set(500, rng);
        CHECK(std::abs(ece(s, 15) - oracle::ece(samples(s), 15)) < 1e-12);
        CHECK(std::abs(mce(s, 15) - oracle::mce(samples(s), 15)) < 1e-12);
        CHECK(mce(s) <= ece(s));
        // B = 1: |accuracy - mean confidence|.
        double conf = 0;
        for (const auto& x : samples(s)) conf += x.confidence / 500;
        CHECK(std::abs(ece(s, 1) - std::abs(accuracy(s) - conf)) < 1e-12);
    }
    CHECK_THROWS_AS(ece(PredictionSet{}), DataError);
    CHECK_THROWS_AS(ece(half, 0), ParameterError);
}

TEST_CASE("confidence bins and edges") {
    CHECK(confidence_bin(0.0, 15) == 0);
    CHECK(confidence_bin(1.0, 15) == 14);
    for (std::size_t k = 1; k < 15; ++k) {
        CHECK(confidence_bin(static_cast<double>(k) / 15.0, 15) == k);
    }
    CHECK(confidence_bin(0.5, 2) == 1);
    const auto stats = bin_statistics(from_probs({0.2, 0.7, 0.9}, {0, 1, 1}), 15);
    CHECK(stats.bin_count() == 15);
    CHECK(stats.total == 3);
    std::size_t n = 0;
    for (const auto& b : stats.bins) {
        n += b.count;
        if (b.lo < 0.5 - 1e-12) CHECK(b.count == 0);
    }
    CHECK(n == 3);
    CHECK(mce_unweighted(stats) >= mce(stats));
}

TEST_CASE("auroc") {
    CHECK(auroc_ood(std::vector<double>{0.1, 0.2}, std::vector<double>{0.5, 0.9}) == 1.0);
    CHECK(auroc_ood(std::vector<double>{0.3, 0.3}, std::vector<double>{0.3, 0.3, 0.3}) == 0.5);
    CHECK_THROWS_AS(auroc_ood(std::vector<double>{}, std::vector<double>{0.3}), DataError);

    Rng rng(4);
    std::vector<double> id(200), ood(300);
    for (double& v : id) v = std::round(rng.normal() * 10) / 10;
    for (double& v : ood) v = std::round((rng.normal() + 0.5) * 10) / 10;
    CHECK(std::abs(auroc_ood(id, ood) - oracle::auroc(id, ood)) < 1e-12);

    std::vector<double> a(50), b(60);
    for (double& v : a) v = rng.uniform();
    for (double& v : b) v = rng.uniform();
    CHECK(std::abs(auroc_ood(a, b) + auroc_ood(b, a) - 1.0) < 1e-12);
}

TEST_CASE("mean and population std") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto ms = mean_std(v);
    CHECK(ms.mean == 2.5);
    CHECK(std::abs(ms.std - std::sqrt(1.25)) < 1e-15);
    CHECK(ms.n == 4);
    CHECK(mean_std(std::vector<double>{}).n == 0);
    CHECK(mean_std(std::vector<double>{0.7}).std == 0.0);
}

TEST_CASE("metrics ignore sample order") {
    Rng rng(5);
    auto s = random_set(300, rng);
    const double e = ece(s), m = mce(s), a = average_precision(s);
    const auto u = s.uncertainties();
    std::vector<double> half(u.begin(), u.begin() + 150), rest(u.begin() + 150, u.end());
    const double au = auroc_ood(half, rest);
    rng.shuffle(s.rows);
    CHECK(std::abs(ece(s) - e) < 1e-12);
    CHECK(std::abs(mce(s) - m) < 1e-12);
    CHECK(std::abs(average_precision(s) - a) < 1e-12);
    // Shuffling within each group keeps AUROC fixed.
    rng.shuffle(half);
    rng.shuffle(rest);
    CHECK(auroc_ood(half, rest) == au);
}

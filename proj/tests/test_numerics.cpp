#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "uqlab/errors.hpp"
#include "uqlab/numerics.hpp"

using namespace uqlab;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("matrix basics") {
    Matrix a(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(a(1, 2) == 6);
    const Matrix t = a.transposed();
    CHECK(t.rows() == 3);
    CHECK(t(2, 1) == 6);
    const Matrix p = a * t;
    CHECK(p(0, 0) == 14);
    CHECK(p(0, 1) == 32);
    CHECK(p(1, 1) == 77);
    CHECK(matvec(a, std::vector<double>{1, 0, -1}) == std::vector<double>{-2, -2});
    CHECK(matvec_transposed(a, std::vector<double>{1, 1}) == std::vector<double>{5, 7, 9});
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(a * a, DimensionError);
}

TEST_CASE("rng is reproducible and roughly standard") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(7);
    double s = 0, s2 = 0, u = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        const double x = r.uniform();
        CHECK_UNARY(x >= 0.0);
        CHECK_UNARY(x < 1.0);
        u += x;
    }
    CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(u / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));

    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[r.below(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("derive_seed separates labels and indices") {
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("spectral norm of simple matrices") {
    Rng rng(1);
    CHECK(spectral_norm_estimate(Matrix::identity(3), 50, rng) == doctest::Approx(1.0).epsilon(1e-9));
    Matrix d(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 1;
    CHECK(std::abs(spectral_norm_estimate(d, 50, rng) - 3.0) < 1e-9);
    CHECK(spectral_norm_estimate(Matrix(3, 2), 50, rng) == 0.0);
    CHECK_THROWS_AS(spectral_norm_estimate(Matrix(), 50, rng), DimensionError);
    CHECK_THROWS_AS(spectral_norm_estimate(d, 0, rng), ParameterError);
}

TEST_CASE("spectral norm matches the SVD oracle") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(s, "svd-case"));
        const Matrix w = random_matrix(5, 4, rng);
        Rng it(s);
        CHECK(std::abs(spectral_norm_estimate(w, 200, it) - oracle::largest_singular_value(w)) <
              1e-6);
    }
}

TEST_CASE("spectral norm is scale equivariant") {
    Rng rng(3);
    const Matrix w = random_matrix(6, 4, rng);
    for (double c : {-2.5, 0.1, 7.0}) {
        Rng a(9), b(9);
        const double base = spectral_norm_estimate(w, 50, a);
        const double scaled = spectral_norm_estimate(c * w, 50, b);
        CHECK(std::abs(scaled - std::abs(c) * base) < 1e-9 * std::max(1.0, std::abs(c) * base));
    }
}

TEST_CASE("normalize_spectral") {
    Rng rng(5);
    Matrix d(2, 2);
    d(0, 0) = 3;
    d(1, 1) = -1;
    const Matrix n = normalize_spectral(d, 1.0, 50, rng);
    CHECK(std::abs(n(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(n(1, 1) + 1.0 / 3.0) < 1e-12);

    Matrix small(2, 2);
    small(0, 0) = 0.5;
    small(1, 1) = 0.25;
    CHECK(normalize_spectral(small, 1.0, 50, rng) == small);
    CHECK(normalize_spectral(Matrix(2, 3), 1.0, 50, rng) == Matrix(2, 3));
    CHECK_THROWS_AS(normalize_spectral(d, 0.0, 50, rng), ParameterError);
    CHECK_THROWS_AS(normalize_spectral(d, -1.0, 50, rng), ParameterError);

    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng g(derive_seed(s, "normalize"));
        const Matrix w = random_matrix(8, 5, g);
        const Matrix once = normalize_spectral(w, 0.95, 50, g);
        CHECK(oracle::largest_singular_value(once) <= 0.951);
        const Matrix twice = normalize_spectral(once, 0.95, 50, g);
        CHECK(max_abs_diff(once, twice) < 1e-6);
    }
}

TEST_CASE("persistent power iteration converges and projects") {
    Rng rng(11);
    Matrix w = random_matrix(7, 3, rng);
    PowerIterationState st;
    double est = 0;
    for (int i = 0; i < 100; ++i) est = st.step(w, 1);
    CHECK(std::abs(est - oracle::largest_singular_value(w)) < 1e-8);
    project_spectral(w, 0.5, st, 50);
    CHECK(oracle::largest_singular_value(w) <= 0.5 * (1 + 1e-3));
}

TEST_CASE("cholesky and spd inverse") {
    Rng rng(13);
    const Matrix a = random_matrix(12, 12, rng);
    Matrix spd = a * a.transposed();
    for (std::size_t i = 0; i < 12; ++i) spd(i, i) += 0.5;
    const Matrix l = cholesky(spd);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = i + 1; j < 12; ++j) CHECK(l(i, j) == 0.0);
    }
    CHECK(max_abs_diff(l * l.transposed(), spd) < 1e-10);
    const Matrix inv = spd_inverse(spd);
    CHECK(inv == inv.transposed());
    CHECK(max_abs_diff(inv * spd, Matrix::identity(12)) < 1e-8);

    Matrix bad(2, 2);
    bad(0, 0) = 1;
    bad(1, 1) = -1;
    CHECK_THROWS_AS(cholesky(bad), NumericalError);
    CHECK_THROWS_AS(cholesky(Matrix(2, 3)), DimensionError);
}

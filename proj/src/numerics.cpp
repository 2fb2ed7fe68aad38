#include "uqlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "uqlab/errors.hpp"

namespace uqlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matrix product " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto src = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
        }
    }
    return out;
}

Matrix operator*(double s, Matrix m) {
    m *= s;
    return m;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError("matvec: matrix has " + std::to_string(a.cols()) +
                             " columns, vector has " + std::to_string(x.size()) + " entries");
    }
    std::vector<double> y(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
    return y;
}

std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError("matvec_transposed: matrix has " + std::to_string(a.rows()) +
                             " rows, vector has " + std::to_string(x.size()) + " entries");
    }
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * x[r];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double radius = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index) {
    return splitmix64(splitmix64(base ^ fnv1a(label)) + index);
}

double spectral_norm_estimate(const Matrix& w, std::size_t iters, Rng& rng) {
    if (w.empty()) throw DimensionError("spectral_norm_estimate: empty matrix");
    if (iters == 0) throw ParameterError("spectral_norm_estimate: iters must be >= 1");

    std::vector<double> v(w.cols());
    for (double& x : v) x = rng.normal();
    double n = norm2(v);
    for (double& x : v) x /= n;

    for (std::size_t it = 0; it < iters; ++it) {
        auto next = matvec_transposed(w, matvec(w, v));
        n = norm2(next);
        if (n == 0.0) return 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = next[i] / n;
    }
    return norm2(matvec(w, v));
}

Matrix normalize_spectral(const Matrix& w, double bound, std::size_t iters, Rng& rng) {
    if (!(bound > 0.0)) throw ParameterError("normalize_spectral: bound must be positive");
    const double sigma = spectral_norm_estimate(w, iters, rng);
    if (sigma <= bound) return w;
    return (bound / sigma) * w;
}

double PowerIterationState::step(const Matrix& w, std::size_t iters) {
    if (u.size() != w.rows()) {
        u.assign(w.rows(), 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(w.rows(), 1))));
    }
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        auto v = matvec_transposed(w, u);
        const double vn = norm2(v);
        if (vn == 0.0) return 0.0;
        for (double& x : v) x /= vn;
        auto wu = matvec(w, v);
        sigma = norm2(wu);
        if (sigma == 0.0) return 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = wu[i] / sigma;
    }
    return sigma;
}

double project_spectral(Matrix& w, double bound, PowerIterationState& state, std::size_t iters) {
    if (!(bound > 0.0)) throw ParameterError("project_spectral: bound must be positive");
    const double sigma = state.step(w, iters);
    if (sigma > bound) w *= bound / sigma;
    return sigma;
}

Matrix cholesky(const Matrix& spd) {
    if (spd.rows() != spd.cols()) throw DimensionError("cholesky: matrix is not square");
    const std::size_t n = spd.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto lj = l.row(j);
        double diag = spd(j, j) - dot(lj.first(j), lj.first(j));
        if (!(diag > 0.0)) {
            throw NumericalError("cholesky: matrix is not positive definite (pivot " +
                                 std::to_string(j) + ")");
        }
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const auto li = l.row(i);
            l(i, j) = (spd(i, j) - dot(li.first(j), lj.first(j))) / ljj;
        }
    }
    return l;
}

Matrix spd_inverse(const Matrix& spd) {
    const Matrix l = cholesky(spd);
    const std::size_t n = l.rows();

    // Row j of t is column j of L⁻¹, from forward substitution L y = e_j.
    Matrix t(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        auto y = t.row(j);
        y[j] = 1.0 / l(j, j);
        for (std::size_t i = j + 1; i < n; ++i) {
            const auto li = l.row(i);
            y[i] = -dot(li.subspan(j, i - j), y.subspan(j, i - j)) / l(i, i);
        }
    }

    // A⁻¹ = L⁻ᵀ L⁻¹; entry (i, j) = Σ_k t(i, k) t(j, k).
    Matrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ti = t.row(i);
        for (std::size_t j = i; j < n; ++j) {
            const auto tj = t.row(j);
            double s = 0.0;
            for (std::size_t k = j; k < n; ++k) s += ti[k] * tj[k];
            inv(i, j) = s;
            inv(j, i) = s;
        }
    }
    return inv;
}

}  // namespace uqlab

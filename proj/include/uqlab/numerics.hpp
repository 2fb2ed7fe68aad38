#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace uqlab {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;
    Matrix& operator*=(double s) noexcept;

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, Matrix m);

/// y = A x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// y = Aᵀ x
std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Largest absolute entry of A - B. Shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Seeded random stream.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniform reals take the top 53 bits; normals use the Box-Muller
/// transform implemented here, so every derived distribution is
/// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

/// Mixes a base seed with a label and an index (splitmix64 over FNV-1a of the
/// label). Used to give every method, replicate and pass its own stream.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0);

/// Largest singular value of `w` by power iteration on WᵀW, starting from a
/// Gaussian vector drawn from `rng`. An all-zero matrix yields 0.
double spectral_norm_estimate(const Matrix& w, std::size_t iters, Rng& rng);

/// Returns W · min(1, bound / σ̂(W)).
Matrix normalize_spectral(const Matrix& w, double bound, std::size_t iters, Rng& rng);

/// Persistent left singular vector for one weight matrix, re-used across
/// optimizer steps so a single iteration per step keeps the estimate tight.
struct PowerIterationState {
    std::vector<double> u;

    /// Advances `iters` steps of u <- W(Wᵀu)/‖·‖ and returns σ̂ = ‖Wᵀu‖.
    double step(const Matrix& w, std::size_t iters);

    friend bool operator==(const PowerIterationState&, const PowerIterationState&) = default;
};

/// In-place rescale of W so that σ̂(W) <= bound, using and updating `state`.
/// Returns the estimate before rescaling.
double project_spectral(Matrix& w, double bound, PowerIterationState& state, std::size_t iters);

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Throws NumericalError when a pivot is not positive.
Matrix cholesky(const Matrix& spd);

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
/// The result is exactly symmetric.
Matrix spd_inverse(const Matrix& spd);

}  // namespace uqlab

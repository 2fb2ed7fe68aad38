#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "uqlab/numerics.hpp"

namespace uqlab {

/// Feature matrix with binary labels and a distribution tag
/// ("id-train", "id-val", "ood-near", ...).
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::string tag;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
    bool empty() const noexcept { return labels.empty(); }

    /// Throws DataError on length mismatch, empty tag, non-binary labels or
    /// non-finite features.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Covariate shift applied as scale -> rotate -> translate, followed by extra
/// Gaussian noise so that the per-coordinate noise width grows from
/// `noise_width` to `noise_inflation * noise_width`.
struct ShiftConfig {
    std::vector<double> translation;  ///< padded with zeros up to the data dimension
    double rotation = 0.0;            ///< radians, in the (x0, x1) plane
    double scale = 1.0;
    double noise_inflation = 1.0;
    double noise_width = 0.1;         ///< noise width of the source data

    void validate() const;
    bool is_identity() const;
};

/// Colour-jitter ranges for an external image pipeline. Carried as metadata
/// only; nothing in this library transforms images.
struct JitterConfig {
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.1;
    double hue = 0.1;

    void validate() const;
};

/// Two interleaved half circles. Class 0 (ceil(n/2) points) lies on
/// (cos t, sin t), class 1 (floor(n/2) points) on (1 - cos t, 0.5 - sin t),
/// t ~ U[0, π]. Extra dimensions beyond 2 carry pure noise.
Dataset make_two_moons(std::size_t n, double noise, Rng& rng, std::size_t dim = 2,
                       std::string tag = "id-train");

Dataset apply_shift(const Dataset& data, const ShiftConfig& cfg, std::string new_tag, Rng& rng);

/// Centre and width of the novel-class cluster.
inline constexpr double kNovelCenterX = 0.5;
inline constexpr double kNovelCenterY = 2.5;
inline constexpr double kNovelWidth = 0.25;

/// Isotropic Gaussian cluster well away from both moons, labelled 7:1
/// normal (0) : tumour (1). Tag "ood-novel".
Dataset make_novel_class(std::size_t n, Rng& rng, std::size_t dim = 2);

/// Named shift in the default ladder.
struct LadderStep {
    std::string tag;
    enum class Kind { shift, novel } kind = Kind::shift;
    ShiftConfig shift;
};

/// ood-near (mild translation + noise), ood-far (large translation + rotation)
/// and ood-novel.
std::vector<LadderStep> default_ladder();

/// Generation parameters for one seed's worth of data.
struct LadderSpec {
    std::size_t n_train = 1000;
    std::size_t n_val = 500;
    std::size_t n_ood = 500;
    double noise = 0.1;
    std::size_t dim = 2;
    std::vector<LadderStep> steps = default_ladder();
};

/// id-train, id-val, then one dataset per ladder step, all drawn from streams
/// derived from `seed`.
std::vector<Dataset> make_ladder(const LadderSpec& spec, std::uint64_t seed);

}  // namespace uqlab

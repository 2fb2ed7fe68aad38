#include "uqlab/datagen.hpp"

#include <cmath>
#include <numbers>

#include "uqlab/errors.hpp"

namespace uqlab {

void Dataset::validate() const {
    if (features.rows() != labels.size()) {
        throw DataError("dataset '" + tag + "': " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(features.rows()) + " feature rows");
    }
    if (tag.empty()) throw DataError("dataset tag must not be empty");
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("dataset '" + tag + "': labels must be 0 or 1");
    }
    if (!features.all_finite()) throw DataError("dataset '" + tag + "': non-finite feature");
}

void ShiftConfig::validate() const {
    if (!(scale > 0.0)) throw ParameterError("shift scale must be positive");
    if (!(noise_inflation > 0.0)) throw ParameterError("noise inflation must be positive");
    if (!(noise_width >= 0.0)) throw ParameterError("noise width must be non-negative");
}

bool ShiftConfig::is_identity() const {
    for (double t : translation) {
        if (t != 0.0) return false;
    }
    return rotation == 0.0 && scale == 1.0 && noise_inflation <= 1.0;
}

void JitterConfig::validate() const {
    if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0 || hue < 0.0) {
        throw ParameterError("jitter parameters must be non-negative");
    }
}

Dataset make_two_moons(std::size_t n, double noise, Rng& rng, std::size_t dim, std::string tag) {
    if (!(noise >= 0.0)) throw ParameterError("make_two_moons: noise must be non-negative");
    if (dim < 2) throw ParameterError("make_two_moons: dimension must be at least 2");

    Dataset out{Matrix(n, dim), std::vector<int>(n), std::move(tag)};
    const std::size_t n0 = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, std::numbers::pi);
        const bool upper = i < n0;
        auto row = out.features.row(i);
        row[0] = upper ? std::cos(t) : 1.0 - std::cos(t);
        row[1] = upper ? std::sin(t) : 0.5 - std::sin(t);
        out.labels[i] = upper ? 0 : 1;
        if (noise > 0.0) {
            for (double& x : row) x += noise * rng.normal();
        }
    }
    return out;
}

Dataset apply_shift(const Dataset& data, const ShiftConfig& cfg, std::string new_tag, Rng& rng) {
    if (data.empty()) throw DataError("apply_shift: dataset is empty");
    cfg.validate();
    if (cfg.translation.size() > data.dim()) {
        throw DimensionError("apply_shift: translation has more entries than the data dimension");
    }

    Dataset out = data;
    out.tag = std::move(new_tag);
    if (cfg.is_identity()) return out;

    const double c = std::cos(cfg.rotation);
    const double s = std::sin(cfg.rotation);
    const double extra =
        cfg.noise_inflation > 1.0
            ? cfg.noise_width * std::sqrt(cfg.noise_inflation * cfg.noise_inflation - 1.0)
            : 0.0;

    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.features.row(i);
        for (double& x : row) x *= cfg.scale;
        const double x0 = row[0];
        const double x1 = row[1];
        row[0] = c * x0 - s * x1;
        row[1] = s * x0 + c * x1;
        for (std::size_t k = 0; k < cfg.translation.size(); ++k) row[k] += cfg.translation[k];
        if (extra > 0.0) {
            for (double& x : row) x += extra * rng.normal();
        }
    }
    return out;
}

Dataset make_novel_class(std::size_t n, Rng& rng, std::size_t dim) {
    if (dim < 2) throw ParameterError("make_novel_class: dimension must be at least 2");
    Dataset out{Matrix(n, dim), std::vector<int>(n, 0), "ood-novel"};
    const std::size_t tumour = n / 8;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = out.features.row(i);
        row[0] = kNovelCenterX;
        row[1] = kNovelCenterY;
        for (double& x : row) x += kNovelWidth * rng.normal();
        out.labels[i] = i >= n - tumour ? 1 : 0;
    }
    return out;
}

std::vector<LadderStep> default_ladder() {
    std::vector<LadderStep> steps;
    steps.push_back({"ood-near", LadderStep::Kind::shift,
                     ShiftConfig{{0.4, 0.3}, 0.0, 1.0, 1.5, 0.1}});
    steps.push_back({"ood-far", LadderStep::Kind::shift,
                     ShiftConfig{{2.0, -1.0}, std::numbers::pi / 4.0, 1.0, 2.0, 0.1}});
    steps.push_back({"ood-novel", LadderStep::Kind::novel, {}});
    return steps;
}

std::vector<Dataset> make_ladder(const LadderSpec& spec, std::uint64_t seed) {
    std::vector<Dataset> out;
    Rng train_rng(derive_seed(seed, "id-train"));
    out.push_back(make_two_moons(spec.n_train, spec.noise, train_rng, spec.dim, "id-train"));
    Rng val_rng(derive_seed(seed, "id-val"));
    out.push_back(make_two_moons(spec.n_val, spec.noise, val_rng, spec.dim, "id-val"));

    for (const auto& step : spec.steps) {
        Rng rng(derive_seed(seed, step.tag));
        if (step.kind == LadderStep::Kind::novel) {
            Dataset d = make_novel_class(spec.n_ood, rng, spec.dim);
            d.tag = step.tag;
            out.push_back(std::move(d));
        } else {
            Dataset base = make_two_moons(spec.n_ood, spec.noise, rng, spec.dim, step.tag);
            out.push_back(apply_shift(base, step.shift, step.tag, rng));
        }
    }
    return out;
}

}  // namespace uqlab

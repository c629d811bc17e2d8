#pragma once

// Dense square grids and the problem data shared by every stage of the
// blind deconvolution pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "blindsgp/error.hpp"

namespace blindsgp {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Square N x N real image (or PSF), row-major, N a power of two.
///
/// `pixel_scale` is in milliarcseconds per pixel. Element (row, col) maps to
/// the sky position x = col, y = row; PSFs are kept "centered" (peak of the
/// diffraction pattern at (N/2, N/2)) everywhere outside the solver.
class PixelGrid {
public:
    PixelGrid() = default;

    PixelGrid(std::size_t n, double pixel_scale, double fill = 0.0)
        : n_(n), pixel_scale_(pixel_scale), values_(n * n, fill)
    {
        check_shape();
        check_finite();
    }

    PixelGrid(std::size_t n, double pixel_scale, std::vector<double> values)
        : n_(n), pixel_scale_(pixel_scale), values_(std::move(values))
    {
        check_shape();
        if (values_.size() != n_ * n_)
            throw Error("PixelGrid: expected " + std::to_string(n_ * n_) + " values, got " +
                        std::to_string(values_.size()));
        check_finite();
    }

    std::size_t size() const { return n_; }
    std::size_t width() const { return n_; }
    std::size_t height() const { return n_; }
    std::size_t count() const { return values_.size(); }
    double pixel_scale() const { return pixel_scale_; }

    double& operator()(std::size_t row, std::size_t col) { return values_[row * n_ + col]; }
    double operator()(std::size_t row, std::size_t col) const { return values_[row * n_ + col]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& storage() { return values_; }
    const std::vector<double>& storage() const { return values_; }

    double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }

    bool same_shape(const PixelGrid& other) const { return n_ == other.n_; }

    /// Throws if any value is NaN or infinite.
    void check_finite() const
    {
        for (double v : values_)
            if (!std::isfinite(v)) throw Error("PixelGrid: non-finite value");
    }

private:
    void check_shape() const
    {
        if (!is_power_of_two(n_)) throw Error("PixelGrid: size must be a power of two, got " + std::to_string(n_));
        if (!(pixel_scale_ > 0.0) || !std::isfinite(pixel_scale_))
            throw Error("PixelGrid: pixel scale must be positive");
    }

    std::size_t n_ = 0;
    double pixel_scale_ = 1.0;
    std::vector<double> values_;
};

inline void require_same_shape(const PixelGrid& a, const PixelGrid& b, const char* what)
{
    if (!a.same_shape(b))
        throw Error(std::string(what) + ": grid size mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
}

/// Feasible set {lower <= y <= upper, sum(y) = sum_target}. Bounds are either
/// a scalar broadcast to every element or a full per-element array; an upper
/// bound of +inf deactivates the upper clamp.
class ConstraintSpec {
public:
    using Bound = std::variant<double, std::vector<double>>;

    ConstraintSpec(std::size_t dimension, Bound lower, Bound upper, double sum_target)
        : dim_(dimension), lower_(std::move(lower)), upper_(std::move(upper)), sum_target_(sum_target)
    {
        validate();
    }

    /// Nonnegative with a fixed sum and no upper bound (object set).
    static ConstraintSpec nonnegative_with_sum(std::size_t dimension, double sum)
    {
        return {dimension, 0.0, std::numeric_limits<double>::infinity(), sum};
    }

    /// 0 <= y <= cap, sum(y) = 1 (PSF set).
    static ConstraintSpec capped_unit_sum(std::size_t dimension, double cap) { return {dimension, 0.0, cap, 1.0}; }

    std::size_t dimension() const { return dim_; }
    double sum_target() const { return sum_target_; }

    double lower(std::size_t i) const
    {
        return std::holds_alternative<double>(lower_) ? std::get<double>(lower_) : std::get<1>(lower_)[i];
    }
    double upper(std::size_t i) const
    {
        return std::holds_alternative<double>(upper_) ? std::get<double>(upper_) : std::get<1>(upper_)[i];
    }

    bool has_infinite_upper() const
    {
        for (std::size_t i = 0; i < dim_; ++i)
            if (std::isinf(upper(i))) return true;
        return false;
    }

    double sum_lower() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += lower(i);
        return s;
    }
    double sum_upper() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += upper(i);
        return s;
    }

    /// Max violation of the box and of the sum equality (absolute).
    bool contains(std::span<const double> y, double sum_tol) const
    {
        if (y.size() != dim_) return false;
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (y[i] < lower(i) || y[i] > upper(i)) return false;
            s += y[i];
        }
        return std::abs(s - sum_target_) <= sum_tol;
    }

private:
    void validate() const
    {
        if (dim_ == 0) throw Error("ConstraintSpec: empty dimension");
        auto check_len = [&](const Bound& b, const char* name) {
            if (auto* v = std::get_if<std::vector<double>>(&b); v && v->size() != dim_)
                throw Error(std::string("ConstraintSpec: ") + name + " bound has wrong length");
        };
        check_len(lower_, "lower");
        check_len(upper_, "upper");
        if (!std::isfinite(sum_target_)) throw Error("ConstraintSpec: sum target must be finite");
        for (std::size_t i = 0; i < dim_; ++i) {
            if (!std::isfinite(lower(i))) throw Error("ConstraintSpec: lower bounds must be finite");
            if (std::isnan(upper(i)) || upper(i) == -std::numeric_limits<double>::infinity())
                throw Error("ConstraintSpec: invalid upper bound");
            if (lower(i) > upper(i)) throw Error("ConstraintSpec: lower > upper at element " + std::to_string(i));
        }
        const double lo = sum_lower();
        const double hi = sum_upper();
        const double slack = 1e-12 * std::max(1.0, std::abs(sum_target_));
        if (sum_target_ < lo - slack || sum_target_ > hi + slack)
            throw Error("ConstraintSpec: infeasible, sum target " + std::to_string(sum_target_) +
                        " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }

    std::size_t dim_;
    Bound lower_;
    Bound upper_;
    double sum_target_;
};

/// Problem data: p images with their backgrounds and PSF caps.
class ObservationSet {
public:
    ObservationSet(std::vector<PixelGrid> images, std::vector<PixelGrid> backgrounds, std::vector<double> strehl_bounds,
                   std::vector<double> psf_caps, int n_frames = 1, double ron_sigma = 0.0,
                   std::vector<double> baseline_angles = {})
        : images_(std::move(images)),
          backgrounds_(std::move(backgrounds)),
          strehl_(std::move(strehl_bounds)),
          caps_(std::move(psf_caps)),
          n_frames_(n_frames),
          ron_sigma_(ron_sigma),
          angles_(std::move(baseline_angles))
    {
        if (angles_.empty()) angles_.assign(images_.size(), 0.0);
        validate();
    }

    std::size_t count() const { return images_.size(); }
    std::size_t grid_size() const { return images_.front().size(); }
    double pixel_scale() const { return images_.front().pixel_scale(); }

    const PixelGrid& image(std::size_t j) const { return images_.at(j); }
    const PixelGrid& background(std::size_t j) const { return backgrounds_.at(j); }
    const std::vector<PixelGrid>& images() const { return images_; }
    const std::vector<PixelGrid>& backgrounds() const { return backgrounds_; }
    double strehl(std::size_t j) const { return strehl_.at(j); }
    double psf_cap(std::size_t j) const { return caps_.at(j); }
    const std::vector<double>& psf_caps() const { return caps_; }
    int n_frames() const { return n_frames_; }
    double ron_sigma() const { return ron_sigma_; }
    double baseline_angle(std::size_t j) const { return angles_.at(j); }

private:
    void validate() const
    {
        const std::size_t p = images_.size();
        if (p == 0) throw Error("ObservationSet: need at least one image");
        if (backgrounds_.size() != p || strehl_.size() != p || caps_.size() != p || angles_.size() != p)
            throw Error("ObservationSet: per-image lists must all have length p");
        const std::size_t n = images_.front().size();
        const double scale = images_.front().pixel_scale();
        for (std::size_t j = 0; j < p; ++j) {
            for (const PixelGrid* g : {&images_[j], &backgrounds_[j]}) {
                if (g->size() != n || g->pixel_scale() != scale)
                    throw Error("ObservationSet: all grids must share size and pixel scale");
                g->check_finite();
                if (g->min() < 0.0) throw Error("ObservationSet: images and backgrounds must be nonnegative");
            }
            if (!(strehl_[j] > 0.0 && strehl_[j] <= 1.0)) throw Error("ObservationSet: Strehl ratio must lie in (0, 1]");
            if (!(caps_[j] > 1.0 / static_cast<double>(n * n)))
                throw Error("ObservationSet: PSF cap must exceed 1/N^2 (unit-sum PSF infeasible otherwise)");
        }
        if (n_frames_ < 1) throw Error("ObservationSet: n_frames must be positive");
        if (ron_sigma_ < 0.0) throw Error("ObservationSet: negative read-out noise");
    }

    std::vector<PixelGrid> images_;
    std::vector<PixelGrid> backgrounds_;
    std::vector<double> strehl_;
    std::vector<double> caps_;
    int n_frames_;
    double ron_sigma_;
    std::vector<double> angles_;
};

struct Star {
    double x_mas = 0.0;
    double y_mas = 0.0;
    double magnitude = 0.0;
};

/// Point sources, positions relative to the optical center (pixel (N/2, N/2)).
struct StarField {
    std::vector<Star> stars;
    double reference_frame = 0.0;  // baseline orientation, degrees

    /// Throws unless every star maps inside [0, N-1] pixels on both axes.
    void check_in_field(std::size_t n, double pixel_scale) const
    {
        const double half = static_cast<double>(n) / 2.0;
        for (const Star& s : stars) {
            const double col = half + s.x_mas / pixel_scale;
            const double row = half + s.y_mas / pixel_scale;
            if (!(col >= 0.0 && col <= static_cast<double>(n - 1) && row >= 0.0 && row <= static_cast<double>(n - 1)))
                throw Error("StarField: star at (" + std::to_string(s.x_mas) + ", " + std::to_string(s.y_mas) +
                            ") mas lies outside the field of view");
        }
    }

    double brightest_magnitude() const
    {
        if (stars.empty()) throw Error("StarField: empty field");
        double m = stars.front().magnitude;
        for (const Star& s : stars) m = std::min(m, s.magnitude);
        return m;
    }
};

/// Object flux c: mean over images of sum(g_j - b_j).
inline double flux_constant(const ObservationSet& obs)
{
    double total = 0.0;
    for (std::size_t j = 0; j < obs.count(); ++j) {
        const auto g = obs.image(j).values();
        const auto b = obs.background(j).values();
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] - b[i];
        total += s;
    }
    const double c = total / static_cast<double>(obs.count());
    if (!(c > 0.0)) throw Error("flux_constant: no signal above background (c = " + std::to_string(c) + ")");
    return c;
}

/// Per-pixel PSF cap s = strehl * max(ideal).
inline double psf_cap(double strehl, const PixelGrid& ideal_psf)
{
    if (!(strehl > 0.0 && strehl <= 1.0)) throw Error("psf_cap: Strehl ratio must lie in (0, 1]");
    if (std::abs(ideal_psf.sum() - 1.0) > 1e-10) throw Error("psf_cap: ideal PSF is not normalized to unit sum");
    return strehl * ideal_psf.max();
}

}  // namespace blindsgp

#pragma once

// Synthetic star-field observations: diffraction PSFs of a single aperture or
// of a two-aperture Fizeau interferometer, Strehl degradation, image
// formation, co-added frames with Poisson + read-out noise, and the
// rotate/derotate sequence of the multi-baseline case.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/fourier.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/rng.hpp"

namespace blindsgp {

inline constexpr double mas_per_radian = 180.0 / std::numbers::pi * 3600.0 * 1000.0;

struct TelescopeModel {
    double aperture_diameter = 8.4;  // m
    double baseline = 0.0;           // m, center to center; 0 = single aperture
    double wavelength = 2.2e-6;      // m
    double pixel_scale = 15.0;       // mas / px
    double efficiency = 0.30;
    double collecting_area = 0.0;  // m^2; 0 = geometric area of the aperture(s)
    int oversample = 4;            // pupil edge antialiasing

    static TelescopeModel single() { return {}; }
    static TelescopeModel fizeau()
    {
        TelescopeModel t;
        t.baseline = 14.4;
        t.pixel_scale = 5.0;
        return t;
    }

    bool is_fizeau() const { return baseline > 0.0; }
    double max_baseline() const { return baseline + aperture_diameter; }
    double area() const
    {
        if (collecting_area > 0.0) return collecting_area;
        const double one = std::numbers::pi * aperture_diameter * aperture_diameter / 4.0;
        return is_fizeau() ? 2.0 * one : one;
    }
    /// lambda / D of one aperture, in mas.
    double diffraction_width() const { return wavelength / aperture_diameter * mas_per_radian; }

    void validate() const
    {
        if (!(aperture_diameter > 0.0 && baseline >= 0.0 && wavelength > 0.0 && pixel_scale > 0.0 &&
              efficiency > 0.0 && collecting_area >= 0.0 && oversample >= 1))
            throw Error("TelescopeModel: parameters must be positive");
        if (is_fizeau() && baseline < aperture_diameter) throw Error("TelescopeModel: overlapping apertures");
    }
};

struct NoiseModel {
    double ron_sigma = 10.0;         // e- / px / frame
    double saturation = 5e4;         // counts / px / frame
    double background_mag = 13.5;    // mag / arcsec^2
    double flux_zero_point = 1.6e9;  // photons / s / m^2 at magnitude 0 (K band, approximate)
    int n_frames = 10;

    void validate() const
    {
        if (!(ron_sigma >= 0.0 && saturation > 0.0 && flux_zero_point > 0.0 && n_frames >= 1))
            throw Error("NoiseModel: invalid parameters");
    }
};

/// Angular separations used as "resolution limit" for binaries, in mas.
inline double resolution_limit(const TelescopeModel& tel) { return tel.is_fizeau() ? 20.0 : 60.0; }

/// Photons / s / m^2 from a source of magnitude m.
inline double photon_flux(double magnitude, const NoiseModel& noise)
{
    return noise.flux_zero_point * std::pow(10.0, -0.4 * magnitude);
}

/// Diffraction-limited PSF, unit sum, peak at (N/2, N/2). For a Fizeau
/// telescope the baseline is horizontal rotated by `fringe_angle` degrees;
/// with angle 0 the fringes are vertical.
inline PixelGrid ideal_psf(const TelescopeModel& tel, std::size_t n, double fringe_angle = 0.0)
{
    tel.validate();
    if (!is_power_of_two(n)) throw Error("ideal_psf: N must be a power of two");
    const double pix_rad = tel.pixel_scale / mas_per_radian;
    if (pix_rad > tel.wavelength / (2.0 * tel.max_baseline()))
        throw Error("ideal_psf: pixel scale undersamples the finest fringe period (aliasing)");

    // Pupil plane sample spacing such that the FFT lands on detector pixels.
    const double du = tel.wavelength / (static_cast<double>(n) * pix_rad);
    const double radius = tel.aperture_diameter / 2.0;
    const double a = fringe_angle * std::numbers::pi / 180.0;
    const double half = tel.baseline / 2.0;
    const std::array<std::pair<double, double>, 2> centers{
        {{half * std::cos(a), half * std::sin(a)}, {-half * std::cos(a), -half * std::sin(a)}}};
    const int os = tel.oversample;

    std::vector<std::complex<double>> pupil(n * n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v0 = fft::signed_frequency(r, n) * du;
        for (std::size_t c = 0; c < n; ++c) {
            const double u0 = fft::signed_frequency(c, n) * du;
            int inside = 0;
            for (int sy = 0; sy < os; ++sy)
                for (int sx = 0; sx < os; ++sx) {
                    const double u = u0 + ((sx + 0.5) / os - 0.5) * du;
                    const double v = v0 + ((sy + 0.5) / os - 0.5) * du;
                    bool in = false;
                    for (std::size_t k = 0; k < (tel.is_fizeau() ? 2u : 1u); ++k) {
                        const double cu = tel.is_fizeau() ? centers[k].first : 0.0;
                        const double cv = tel.is_fizeau() ? centers[k].second : 0.0;
                        if ((u - cu) * (u - cu) + (v - cv) * (v - cv) <= radius * radius) in = true;
                    }
                    inside += in ? 1 : 0;
                }
            pupil[r * n + c] = static_cast<double>(inside) / (os * os);
        }
    }
    const auto field = fft::forward_complex(std::move(pupil), n);
    PixelGrid psf(n, tel.pixel_scale);
    double total = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) total += psf[i] = std::norm(field[i]);
    for (double& v : psf.values()) v /= total;
    return to_centered(psf);
}

/// Normalized Gaussian of the given FWHM (pixels), wrap-around layout.
inline PixelGrid gaussian_kernel(std::size_t n, double pixel_scale, double fwhm_px)
{
    const double sigma = fwhm_px / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    PixelGrid k(n, pixel_scale);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double y = fft::signed_frequency(r, n), x = fft::signed_frequency(c, n);
            total += k(r, c) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
        }
    for (double& v : k.values()) v /= total;
    return k;
}

/// a * ideal + (1 - a) * halo, halo = ideal blurred by a Gaussian with FWHM
/// `halo_width` mas; a is chosen so that max(result) / max(ideal) = strehl.
inline PixelGrid degrade_to_strehl(const PixelGrid& ideal, double strehl, double halo_width)
{
    if (!(strehl > 0.0 && strehl <= 1.0)) throw Error("degrade_to_strehl: Strehl ratio must lie in (0, 1]");
    if (!(halo_width > 0.0)) throw Error("degrade_to_strehl: halo width must be positive");
    if (strehl == 1.0) return ideal;
    const PixelGrid halo = convolve(gaussian_kernel(ideal.size(), ideal.pixel_scale(), halo_width / ideal.pixel_scale()), ideal);
    const double peak = ideal.max();
    auto blend = [&](double a) {
        PixelGrid out(ideal.size(), ideal.pixel_scale());
        for (std::size_t i = 0; i < out.count(); ++i) out[i] = a * ideal[i] + (1.0 - a) * halo[i];
        return out;
    };
    auto ratio = [&](double a) { return blend(a).max() / peak; };
    const double floor = ratio(0.0);
    if (strehl < floor)
        throw Error("degrade_to_strehl: requested Strehl ratio is below the halo-only floor " + std::to_string(floor));
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ratio(mid) < strehl ? lo : hi) = mid;
    }
    PixelGrid out = blend(0.5 * (lo + hi));
    for (double& v : out.values()) v = std::max(v, 0.0);
    const double s = out.sum();
    for (double& v : out.values()) v /= s;
    return out;
}

/// Default halo width: four diffraction widths of one aperture.
inline double default_halo_width(const TelescopeModel& tel) { return 4.0 * tel.diffraction_width(); }

/// Sky background in counts / px / s.
inline double background_rate(const TelescopeModel& tel, const NoiseModel& noise)
{
    const double arcsec = tel.pixel_scale / 1000.0;
    return photon_flux(noise.background_mag, noise) * tel.area() * tel.efficiency * arcsec * arcsec;
}

/// Counts from a magnitude-0 star over integration time t.
inline double zero_flux(const TelescopeModel& tel, const NoiseModel& noise, double t)
{
    return noise.flux_zero_point * tel.area() * tel.efficiency * t;
}

/// Noise-free expected counts for integration time t (seconds, all frames):
/// shifted, weighted PSF copies plus a uniform sky background.
inline PixelGrid render_field(const StarField& field, const PixelGrid& psf, double t, const TelescopeModel& tel,
                              const NoiseModel& noise)
{
    const std::size_t n = psf.size();
    field.check_in_field(n, psf.pixel_scale());
    const Spectrum base = fft::forward(psf);
    Spectrum acc{n, std::vector<std::complex<double>>(base.bins.size())};
    for (const Star& s : field.stars) {
        Spectrum shifted = base;
        const double w = photon_flux(s.magnitude, noise) * tel.area() * tel.efficiency * t;
        apply_shift_phase(shifted, s.x_mas / psf.pixel_scale(), s.y_mas / psf.pixel_scale(), w);
        for (std::size_t i = 0; i < acc.bins.size(); ++i) acc.bins[i] += shifted.bins[i];
    }
    PixelGrid img = fft::inverse(std::move(acc), psf.pixel_scale());
    const double bg = background_rate(tel, noise) * t;
    for (double& v : img.values()) v += bg;
    return img;
}

/// Single-frame integration time that keeps the brightest pixel (stars plus
/// sky) at the saturation level.
inline double exposure_time(const StarField& field, const PixelGrid& psf, const TelescopeModel& tel,
                            const NoiseModel& noise)
{
    if (field.stars.empty()) throw Error("exposure_time: empty star field");
    const PixelGrid rate = render_field(field, psf, 1.0, tel, noise);
    return noise.saturation / rate.max();
}

/// Poisson(expected) + N(0, n sigma^2) per pixel, reproducible for a given
/// (seed, stream).
inline PixelGrid apply_noise(const PixelGrid& expected, int n_frames, double ron_sigma, std::uint64_t seed,
                             std::uint64_t stream = 0)
{
    if (n_frames < 1) throw Error("apply_noise: n_frames must be at least 1");
    RandomStream rng(seed, stream);
    const double sd = std::sqrt(static_cast<double>(n_frames)) * ron_sigma;
    PixelGrid out(expected.size(), expected.pixel_scale());
    for (std::size_t i = 0; i < out.count(); ++i) {
        double v = rng.poisson(std::max(expected[i], 0.0));
        if (sd > 0.0) v += sd * rng.normal();
        out[i] = v;
    }
    return out;
}

/// Adds n sigma^2 to image and background; negative image pixels are clipped.
inline std::pair<PixelGrid, PixelGrid> ron_compensate(const PixelGrid& img, const PixelGrid& bg, int n_frames,
                                                      double ron_sigma)
{
    require_same_shape(img, bg, "ron_compensate");
    const double offset = static_cast<double>(n_frames) * ron_sigma * ron_sigma;
    PixelGrid g = img, b = bg;
    for (double& v : g.values()) v = std::max(v + offset, 0.0);
    for (double& v : b.values()) v += offset;
    return {g, b};
}

/// Reflection about the central column: col N/2 + x -> N/2 - x.
inline PixelGrid mirror_columns(const PixelGrid& g)
{
    const std::size_t n = g.size();
    PixelGrid out(n, g.pixel_scale());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = g(r, (n - c) % n);
    return out;
}

/// PSFs for the three baseline orientations: the first one, its mirror image,
/// and the mean of the two.
inline std::array<PixelGrid, 3> fizeau_psf_triplet(const PixelGrid& first)
{
    const PixelGrid second = mirror_columns(first);
    PixelGrid third(first.size(), first.pixel_scale());
    for (std::size_t i = 0; i < third.count(); ++i) third[i] = 0.5 * (first[i] + second[i]);
    return {first, second, third};
}

struct SimulationSpec {
    TelescopeModel telescope;
    NoiseModel noise;
    std::size_t n = 128;
    double strehl = 0.8;
    double halo_width = 0.0;  // mas; 0 = default_halo_width
    StarField field;
    std::vector<double> angles{0.0};  // one per image; Fizeau: {0, 60, 120}
    std::uint64_t seed = 1;
};

struct Simulation {
    explicit Simulation(ObservationSet o) : obs(std::move(o)) {}

    ObservationSet obs;                  // solver input: compensated, derotated
    std::vector<PixelGrid> noisy;        // raw co-added frames at native orientation
    std::vector<PixelGrid> compensated;  // noisy + n sigma^2, native orientation
    std::vector<PixelGrid> expected;     // noise-free expectation of obs.image(j)
    std::vector<PixelGrid> sources;      // expected minus background (star light only)
    std::vector<PixelGrid> true_psfs;    // centered, in the frame of obs.image(j)
    std::vector<PixelGrid> native_psfs;  // centered, native orientation
    std::vector<PixelGrid> ideal_psfs;   // centered, in the frame of obs.image(j)
    double exposure = 0.0;               // s per frame
    double zero_flux = 0.0;              // counts of a magnitude-0 star over all frames
    double background_level = 0.0;       // compensated background per pixel
};

/// Full simulation. With a single angle of 0 this is the single-image case;
/// otherwise the star positions are rotated by each angle, rendered with that
/// orientation's PSF, noised, compensated and derotated back.
inline Simulation simulate(const SimulationSpec& spec)
{
    spec.telescope.validate();
    spec.noise.validate();
    if (spec.angles.empty()) throw Error("simulate: need at least one baseline angle");
    if (spec.field.stars.empty()) throw Error("simulate: empty star field");
    const auto& tel = spec.telescope;
    const auto& noise = spec.noise;
    const std::size_t n = spec.n;
    const std::size_t p = spec.angles.size();

    const PixelGrid ideal = ideal_psf(tel, n);
    const double halo = spec.halo_width > 0.0 ? spec.halo_width : default_halo_width(tel);
    const PixelGrid first = degrade_to_strehl(ideal, spec.strehl, halo);
    std::vector<PixelGrid> native(p, first);
    if (p == 3) {
        const auto trio = fizeau_psf_triplet(first);
        native.assign(trio.begin(), trio.end());
    }

    // Exposure from the unrotated field: rotation about the center moves the
    // stars, not the peak counts.
    Simulation sim(ObservationSet({PixelGrid(n, tel.pixel_scale)}, {PixelGrid(n, tel.pixel_scale)}, {1.0}, {1.0}));
    sim.exposure = exposure_time(spec.field, first, tel, noise);
    const double t_total = sim.exposure * noise.n_frames;
    sim.zero_flux = zero_flux(tel, noise, t_total);
    const double offset = noise.n_frames * noise.ron_sigma * noise.ron_sigma;
    const double bg_level = background_rate(tel, noise) * t_total;
    sim.background_level = bg_level + offset;

    std::vector<PixelGrid> images, backgrounds;
    std::vector<double> strehls, caps;
    for (std::size_t j = 0; j < p; ++j) {
        const double angle = spec.angles[j];
        StarField rotated{{}, angle};
        for (const Star& s : spec.field.stars) {
            const auto [x, y] = rotate_point(s.x_mas, s.y_mas, angle);
            rotated.stars.push_back({x, y, s.magnitude});
        }
        const PixelGrid expected = render_field(rotated, native[j], t_total, tel, noise);
        const PixelGrid noisy = apply_noise(expected, noise.n_frames, noise.ron_sigma, spec.seed, j);
        const PixelGrid bg(n, tel.pixel_scale, bg_level);
        auto [g, b] = ron_compensate(noisy, bg, noise.n_frames, noise.ron_sigma);
        sim.noisy.push_back(noisy);
        sim.compensated.push_back(g);
        sim.native_psfs.push_back(native[j]);

        PixelGrid exp_c = expected;
        for (double& v : exp_c.values()) v += offset;
        PixelGrid ideal_j = ideal;
        PixelGrid psf_j = native[j];
        if (angle != 0.0) {
            g = rotate(g, -angle, Interpolation::bilinear, sim.background_level);
            exp_c = rotate(exp_c, -angle, Interpolation::bilinear, sim.background_level);
            psf_j = rotate(psf_j, -angle, Interpolation::bilinear, 0.0);
            ideal_j = rotate(ideal_j, -angle, Interpolation::bilinear, 0.0);
            for (PixelGrid* k : {&psf_j, &ideal_j}) {
                const double s = k->sum();
                for (double& v : k->values()) v /= s;
            }
        }
        PixelGrid src = exp_c;
        for (double& v : src.values()) v = std::max(v - sim.background_level, 0.0);
        sim.expected.push_back(exp_c);
        sim.sources.push_back(src);
        sim.true_psfs.push_back(psf_j);
        sim.ideal_psfs.push_back(ideal_j);
        images.push_back(g);
        backgrounds.push_back(b);
        strehls.push_back(spec.strehl);
        caps.push_back(psf_cap(spec.strehl, ideal_j));
    }
    sim.obs = ObservationSet(std::move(images), std::move(backgrounds), std::move(strehls), std::move(caps),
                             noise.n_frames, noise.ron_sigma, spec.angles);
    return sim;
}

}  // namespace blindsgp

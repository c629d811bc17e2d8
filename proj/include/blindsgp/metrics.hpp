#pragma once

// Figures of merit for reconstructed star fields and PSFs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"

namespace blindsgp {

/// Pixel (row, col) nearest to a sky position given in mas from the center.
inline std::pair<long, long> nearest_pixel(const PixelGrid& g, double x_mas, double y_mas)
{
    const double half = static_cast<double>(g.size()) / 2.0;
    return {std::lround(half + y_mas / g.pixel_scale()), std::lround(half + x_mas / g.pixel_scale())};
}

/// Sum of the 3x3 block around the pixel nearest (x_mas, y_mas).
inline double box_flux(const PixelGrid& recon, double x_mas, double y_mas)
{
    const auto [row, col] = nearest_pixel(recon, x_mas, y_mas);
    const long n = static_cast<long>(recon.size());
    if (row < 0 || row >= n || col < 0 || col >= n) throw Error("box_photometry: position outside the grid");
    double flux = 0.0;
    for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
            const long r = row + dr, c = col + dc;
            if (r >= 0 && r < n && c >= 0 && c < n) flux += recon(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        }
    return flux;
}

/// Magnitude from 3x3 box photometry at the true position; zero_flux is the
/// total count of a magnitude-0 star in the same data.
inline double box_photometry(const PixelGrid& recon, double x_mas, double y_mas, double zero_flux)
{
    const double flux = box_flux(recon, x_mas, y_mas);
    if (!(flux > 0.0)) throw Error("box_photometry: no flux at the star position");
    return -2.5 * std::log10(flux / zero_flux);
}

/// Mean of |m_est - m_true| / m_true.
inline double mare(const std::vector<double>& true_mags, const std::vector<double>& est_mags)
{
    if (true_mags.empty()) throw Error("mare: empty star list");
    if (true_mags.size() != est_mags.size()) throw Error("mare: list lengths differ");
    double s = 0.0;
    for (std::size_t i = 0; i < true_mags.size(); ++i) {
        if (!(true_mags[i] > 0.0)) throw Error("mare: true magnitudes must be positive");
        s += std::abs(est_mags[i] - true_mags[i]) / true_mags[i];
    }
    return s / static_cast<double>(true_mags.size());
}

/// ||recon - truth|| / ||truth|| (Euclidean).
inline double psf_rmse(const PixelGrid& recon, const PixelGrid& truth)
{
    require_same_shape(recon, truth, "psf_rmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.count(); ++i) {
        const double d = recon[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (!(den > 0.0)) throw Error("psf_rmse: truth has zero norm");
    return std::sqrt(num / den);
}

struct Detection {
    std::size_t row = 0;
    std::size_t col = 0;
    double flux = 0.0;  // pixel value at the maximum
};

inline double median_of(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
}

/// Greedy peak picking: local maxima (8-neighbourhood) above
/// median + 5 * MAD, brightest first, rejecting any peak within min_sep pixels
/// of an accepted one. Returns at most k_max detections.
inline std::vector<Detection> detect_stars(const PixelGrid& recon, std::size_t k_max, double min_sep)
{
    if (k_max < 1) throw Error("detect_stars: k_max must be at least 1");
    const std::vector<double> vals(recon.values().begin(), recon.values().end());
    const double med = median_of(vals);
    std::vector<double> dev(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) dev[i] = std::abs(vals[i] - med);
    const double threshold = med + 5.0 * median_of(std::move(dev));

    const long n = static_cast<long>(recon.size());
    std::vector<Detection> peaks;
    for (long r = 0; r < n; ++r)
        for (long c = 0; c < n; ++c) {
            const double v = recon(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            if (!(v > threshold)) continue;
            bool is_max = true;
            for (long dr = -1; dr <= 1 && is_max; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const long rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                    const double w = recon(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                    // plateaus: the first pixel in scan order wins
                    const bool earlier = dr < 0 || (dr == 0 && dc < 0);
                    if (w > v || (earlier && w == v)) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) peaks.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), v});
        }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Detection& a, const Detection& b) { return a.flux > b.flux; });

    std::vector<Detection> accepted;
    for (const Detection& p : peaks) {
        if (accepted.size() == k_max) break;
        bool far = true;
        for (const Detection& a : accepted) {
            const double dr = static_cast<double>(p.row) - static_cast<double>(a.row);
            const double dc = static_cast<double>(p.col) - static_cast<double>(a.col);
            if (std::hypot(dr, dc) < min_sep) {
                far = false;
                break;
            }
        }
        if (far) accepted.push_back(p);
    }
    return accepted;
}

struct StarPhotometry {
    double true_mag = 0.0;
    double est_mag = 0.0;
    double abs_rel_error = 1.0;  // 100% when the star is missed
    bool detected = false;
};

struct PhotometryReport {
    std::vector<StarPhotometry> stars;
    double mare = 0.0;  // over detected stars
};

/// Box photometry at every true position plus detection matching: a star
/// counts as detected when one of the k = #stars strongest peaks lies within
/// match_radius pixels of its true position.
inline PhotometryReport photometry_report(const PixelGrid& recon, const StarField& truth, double zero_flux,
                                          double min_sep = 2.0, double match_radius = 2.0)
{
    PhotometryReport rep;
    const auto peaks = detect_stars(recon, std::max<std::size_t>(1, truth.stars.size()), min_sep);
    const double half = static_cast<double>(recon.size()) / 2.0;
    std::vector<double> t, e;
    for (const Star& s : truth.stars) {
        StarPhotometry sp;
        sp.true_mag = s.magnitude;
        const double col = half + s.x_mas / recon.pixel_scale();
        const double row = half + s.y_mas / recon.pixel_scale();
        for (const Detection& d : peaks)
            if (std::hypot(static_cast<double>(d.row) - row, static_cast<double>(d.col) - col) <= match_radius)
                sp.detected = true;
        const double flux = box_flux(recon, s.x_mas, s.y_mas);
        if (flux > 0.0) {
            sp.est_mag = -2.5 * std::log10(flux / zero_flux);
            sp.abs_rel_error = std::abs(sp.est_mag - sp.true_mag) / sp.true_mag;
        } else {
            sp.est_mag = std::numeric_limits<double>::infinity();
        }
        if (!sp.detected) sp.abs_rel_error = 1.0;
        if (sp.detected) {
            t.push_back(sp.true_mag);
            e.push_back(sp.est_mag);
        }
        rep.stars.push_back(sp);
    }
    rep.mare = t.empty() ? 1.0 : mare(t, e);
    return rep;
}

}  // namespace blindsgp

#pragma once

// FFT-based circular convolution/correlation, Fourier sub-pixel shifts and
// image rotation. Convolution kernels are in wrap-around layout (origin at
// element (0, 0)); use to_wraparound/to_centered to convert PSFs.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"

namespace blindsgp {

/// Half-plane spectrum of a real N x N grid: N rows of N/2 + 1 bins.
struct Spectrum {
    std::size_t n = 0;
    std::vector<std::complex<double>> bins;

    std::size_t cols() const { return n / 2 + 1; }
    std::complex<double>& operator()(std::size_t row, std::size_t col) { return bins[row * cols() + col]; }
    std::complex<double> operator()(std::size_t row, std::size_t col) const { return bins[row * cols() + col]; }
};

namespace fft {

namespace detail {

struct PlanSet {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
    fftw_plan c2c_forward = nullptr;

    PlanSet() = default;
    PlanSet(const PlanSet&) = delete;
    PlanSet& operator=(const PlanSet&) = delete;
    ~PlanSet()
    {
        if (r2c) fftw_destroy_plan(r2c);
        if (c2r) fftw_destroy_plan(c2r);
        if (c2c_forward) fftw_destroy_plan(c2c_forward);
    }
};

// FFTW planning is not thread-safe; execution through the new-array
// interface is. Plans are created once per size under this mutex.
inline std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

inline const PlanSet& plans(std::size_t n)
{
    static std::map<std::size_t, std::unique_ptr<PlanSet>> cache;
    std::lock_guard lock(planner_mutex());
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<PlanSet>();
        const int ni = static_cast<int>(n);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        std::vector<double> real(n * n);
        std::vector<std::complex<double>> half(n * (n / 2 + 1));
        std::vector<std::complex<double>> full_in(n * n), full_out(n * n);
        auto* h = reinterpret_cast<fftw_complex*>(half.data());
        slot->r2c = fftw_plan_dft_r2c_2d(ni, ni, real.data(), h, flags);
        slot->c2r = fftw_plan_dft_c2r_2d(ni, ni, h, real.data(), flags);
        slot->c2c_forward = fftw_plan_dft_2d(ni, ni, reinterpret_cast<fftw_complex*>(full_in.data()),
                                             reinterpret_cast<fftw_complex*>(full_out.data()), FFTW_FORWARD, flags);
        if (!slot->r2c || !slot->c2r || !slot->c2c_forward) throw Error("FFTW planning failed");
    }
    return *slot;
}

}  // namespace detail

inline Spectrum forward(std::span<const double> values, std::size_t n)
{
    Spectrum s{n, std::vector<std::complex<double>>(n * (n / 2 + 1))};
    const auto& p = detail::plans(n);
    // r2c out-of-place leaves the input untouched.
    fftw_execute_dft_r2c(p.r2c, const_cast<double*>(values.data()), reinterpret_cast<fftw_complex*>(s.bins.data()));
    return s;
}

inline Spectrum forward(const PixelGrid& g) { return forward(g.values(), g.size()); }

/// Normalized inverse (forward followed by inverse is the identity).
/// Writes into `out`, which must hold n*n values.
inline void inverse_into(Spectrum s, std::span<double> out)
{
    const std::size_t n = s.n;
    const auto& p = detail::plans(n);
    // Multi-dimensional c2r destroys its input, hence the by-value spectrum.
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(s.bins.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n * n);
    for (double& v : out) v *= scale;
}

inline PixelGrid inverse(Spectrum s, double pixel_scale)
{
    PixelGrid out(s.n, pixel_scale);
    inverse_into(std::move(s), out.values());
    return out;
}

/// Unnormalized full complex forward transform of an N x N complex array.
inline std::vector<std::complex<double>> forward_complex(std::vector<std::complex<double>> in, std::size_t n)
{
    std::vector<std::complex<double>> out(n * n);
    const auto& p = detail::plans(n);
    fftw_execute_dft(p.c2c_forward, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

/// Signed frequency index of bin k on an axis of length n.
inline double signed_frequency(std::size_t k, std::size_t n)
{
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

}  // namespace fft

/// Circular shift by (drow, dcol): out(r, c) = in(r - drow, c - dcol).
inline PixelGrid circular_shift(const PixelGrid& g, long drow, long dcol)
{
    const long n = static_cast<long>(g.size());
    PixelGrid out(g.size(), g.pixel_scale());
    for (long r = 0; r < n; ++r) {
        const long sr = ((r - drow) % n + n) % n;
        for (long c = 0; c < n; ++c) {
            const long sc = ((c - dcol) % n + n) % n;
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                g(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
        }
    }
    return out;
}

/// Centered PSF (peak at (N/2, N/2)) to wrap-around layout (peak at (0, 0)).
inline PixelGrid to_wraparound(const PixelGrid& centered)
{
    const long h = static_cast<long>(centered.size() / 2);
    return circular_shift(centered, -h, -h);
}

inline PixelGrid to_centered(const PixelGrid& wrapped)
{
    const long h = static_cast<long>(wrapped.size() / 2);
    return circular_shift(wrapped, h, h);
}

inline Spectrum multiply(const Spectrum& a, const Spectrum& b, bool conjugate_a = false)
{
    Spectrum out{a.n, std::vector<std::complex<double>>(a.bins.size())};
    for (std::size_t i = 0; i < a.bins.size(); ++i)
        out.bins[i] = (conjugate_a ? std::conj(a.bins[i]) : a.bins[i]) * b.bins[i];
    return out;
}

/// Circular convolution psf * obj, psf in wrap-around layout.
inline PixelGrid convolve(const PixelGrid& psf, const PixelGrid& obj)
{
    require_same_shape(psf, obj, "convolve");
    return fft::inverse(multiply(fft::forward(psf), fft::forward(obj)), obj.pixel_scale());
}

/// Adjoint of convolve(psf, .): out(m) = sum_n psf(n) img(n + m).
inline PixelGrid correlate(const PixelGrid& psf, const PixelGrid& img)
{
    require_same_shape(psf, img, "correlate");
    return fft::inverse(multiply(fft::forward(psf), fft::forward(img), true), img.pixel_scale());
}

/// Multiplies a spectrum by the linear phase ramp of a shift by (dx, dy)
/// pixels (dx along columns). The Nyquist bins keep only the real part of the
/// ramp, which keeps the shifted grid real; integer shifts are exact.
inline void apply_shift_phase(Spectrum& s, double dx, double dy, double weight = 1.0)
{
    const std::size_t n = s.n;
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<std::complex<double>> col_phase(s.cols());
    for (std::size_t k = 0; k < s.cols(); ++k) {
        const double f = fft::signed_frequency(k, n);
        col_phase[k] = (k == n / 2 && n > 1) ? std::complex<double>(std::cos(std::numbers::pi * dx), 0.0)
                                             : std::polar(1.0, -two_pi * f * dx / static_cast<double>(n));
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double f = fft::signed_frequency(r, n);
        const std::complex<double> row_phase =
            (r == n / 2 && n > 1) ? std::complex<double>(std::cos(std::numbers::pi * dy), 0.0)
                                  : std::polar(1.0, -two_pi * f * dy / static_cast<double>(n));
        for (std::size_t k = 0; k < s.cols(); ++k) s(r, k) *= weight * row_phase * col_phase[k];
    }
}

/// Circular shift by a real number of pixels (+dx moves content to larger columns).
inline PixelGrid subpixel_shift(const PixelGrid& grid, double dx, double dy)
{
    if (!std::isfinite(dx) || !std::isfinite(dy)) throw Error("subpixel_shift: non-finite shift");
    Spectrum s = fft::forward(grid);
    apply_shift_phase(s, dx, dy);
    return fft::inverse(std::move(s), grid.pixel_scale());
}

enum class Interpolation { bilinear, nearest };

/// Rotation center used for images, PSFs and star coordinates alike.
inline double rotation_center(std::size_t n) { return static_cast<double>(n) / 2.0; }

/// Rotates a point (x, y) relative to the rotation center by `degrees`
/// (counter-clockwise in the (col, row) plane).
inline std::pair<double, double> rotate_point(double x, double y, double degrees)
{
    const double a = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    return {c * x - s * y, s * x + c * y};
}

/// Rotates image content by `degrees` about (N/2, N/2). Each output pixel is
/// sampled at the inversely rotated position; samples falling outside the
/// grid take `fill`.
inline PixelGrid rotate(const PixelGrid& grid, double degrees, Interpolation method = Interpolation::bilinear,
                        double fill = 0.0)
{
    const std::size_t n = grid.size();
    const double center = rotation_center(n);
    const double a = degrees * std::numbers::pi / 180.0;
    double c = std::cos(a), s = std::sin(a);
    // Snap lattice-preserving angles so 90-degree multiples are exact.
    if (std::abs(c) < 1e-15) c = 0.0;
    if (std::abs(s) < 1e-15) s = 0.0;
    const double last = static_cast<double>(n - 1);

    PixelGrid out(n, grid.pixel_scale());
    for (std::size_t r = 0; r < n; ++r) {
        const double y = static_cast<double>(r) - center;
        for (std::size_t col = 0; col < n; ++col) {
            const double x = static_cast<double>(col) - center;
            // inverse rotation
            const double sx = c * x + s * y + center;
            const double sy = -s * x + c * y + center;
            double v = fill;
            if (method == Interpolation::nearest) {
                const double rx = std::round(sx), ry = std::round(sy);
                if (rx >= 0.0 && rx <= last && ry >= 0.0 && ry <= last)
                    v = grid(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
            } else if (sx >= 0.0 && sx <= last && sy >= 0.0 && sy <= last) {
                const double fx = std::floor(sx), fy = std::floor(sy);
                const double tx = sx - fx, ty = sy - fy;
                const std::size_t x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
                const std::size_t x1 = std::min(x0 + 1, n - 1), y1 = std::min(y0 + 1, n - 1);
                v = (1 - ty) * ((1 - tx) * grid(y0, x0) + tx * grid(y0, x1)) +
                    ty * ((1 - tx) * grid(y1, x0) + tx * grid(y1, x1));
            }
            out(r, col) = v;
        }
    }
    return out;
}

}  // namespace blindsgp

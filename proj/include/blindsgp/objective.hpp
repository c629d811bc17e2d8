#pragma once

// Multi-image generalized Kullback-Leibler divergence
//
//   J0(f, K_1..K_p) = sum_j sum_m  g ln(g / (K_j * f + b)) + (K_j * f + b) - g
//
// and its partial gradients. PSFs passed here are in wrap-around layout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/fourier.hpp"
#include "blindsgp/grid.hpp"

namespace blindsgp {

namespace kl {

/// Quotient/log floor for image g: 1e-12 * max(g).
inline double model_floor(const PixelGrid& g)
{
    const double m = g.max();
    return m > 0.0 ? 1e-12 * m : std::numeric_limits<double>::min();
}

/// Sums the divergence of one image given the convolved model (background
/// not yet added). When `factor` is non-empty it receives 1 - g / model.
inline double image_term(std::span<const double> conv, std::span<const double> bg, std::span<const double> g,
                         double floor, std::span<double> factor = {})
{
    double peak = 0.0;
    for (std::size_t i = 0; i < conv.size(); ++i) peak = std::max(peak, std::abs(conv[i] + bg[i]));
    // FFT rounding can push an exactly-zero model slightly negative.
    const double allowed = floor + 1e-9 * peak;
    double sum = 0.0;
    for (std::size_t i = 0; i < conv.size(); ++i) {
        double model = conv[i] + bg[i];
        if (model < -allowed)
            throw Error("kl: model pixel " + std::to_string(i) + " is negative (" + std::to_string(model) +
                        "), background corrupted?");
        model = std::max(model, floor);
        const double gi = g[i];
        sum += gi > 0.0 ? gi * std::log(gi / model) + model - gi : model;
        if (!factor.empty()) factor[i] = 1.0 - gi / model;
    }
    return sum;
}

}  // namespace kl

/// Cached transforms shared by the block evaluators.
struct KlWorkspace {
    std::vector<Spectrum> psf_spectra;
    Spectrum obj_spectrum;
    std::vector<PixelGrid> model;  // K_j * f + b_j at the last evaluation
    std::vector<double> floors;
};

/// J0 as a function of the object with every PSF held fixed.
class ObjectObjective {
public:
    ObjectObjective(const ObservationSet& obs, std::span<const PixelGrid> psfs) : obs_(obs)
    {
        if (psfs.size() != obs.count()) throw Error("ObjectObjective: need one PSF per image");
        const std::size_t n = obs.grid_size();
        for (const PixelGrid& k : psfs) {
            if (k.size() != n) throw Error("ObjectObjective: PSF size mismatch");
            ws_.psf_spectra.push_back(fft::forward(k));
        }
        for (std::size_t j = 0; j < obs.count(); ++j) {
            ws_.floors.push_back(kl::model_floor(obs.image(j)));
            ws_.model.emplace_back(n, obs.pixel_scale());
        }
        conv_.resize(n * n);
        factor_.resize(n * n);
    }

    std::size_t dimension() const { return obs_.grid_size() * obs_.grid_size(); }

    double value(std::span<const double> f) { return evaluate(f, {}); }

    double value_and_gradient(std::span<const double> f, std::span<double> grad) { return evaluate(f, grad); }

    const KlWorkspace& workspace() const { return ws_; }

private:
    double evaluate(std::span<const double> f, std::span<double> grad)
    {
        const std::size_t n = obs_.grid_size();
        if (f.size() != n * n) throw Error("ObjectObjective: object size mismatch");
        ws_.obj_spectrum = fft::forward(f, n);
        Spectrum grad_spec;
        if (!grad.empty()) grad_spec = Spectrum{n, std::vector<std::complex<double>>(ws_.obj_spectrum.bins.size())};
        double total = 0.0;
        for (std::size_t j = 0; j < obs_.count(); ++j) {
            fft::inverse_into(multiply(ws_.psf_spectra[j], ws_.obj_spectrum), conv_);
            total += kl::image_term(conv_, obs_.background(j).values(), obs_.image(j).values(), ws_.floors[j],
                                    grad.empty() ? std::span<double>{} : std::span<double>(factor_));
            auto model = ws_.model[j].values();
            const auto bg = obs_.background(j).values();
            for (std::size_t i = 0; i < model.size(); ++i) model[i] = conv_[i] + bg[i];
            if (!grad.empty()) {
                const Spectrum fs = fft::forward(factor_, n);
                for (std::size_t i = 0; i < fs.bins.size(); ++i)
                    grad_spec.bins[i] += std::conj(ws_.psf_spectra[j].bins[i]) * fs.bins[i];
            }
        }
        if (!grad.empty()) fft::inverse_into(std::move(grad_spec), grad);
        return total;
    }

    const ObservationSet& obs_;
    KlWorkspace ws_;
    std::vector<double> conv_;
    std::vector<double> factor_;
};

/// J0 as a function of PSF block j with the object and the other PSFs fixed.
/// The value includes the (constant) contribution of the other images.
class PsfObjective {
public:
    PsfObjective(const ObservationSet& obs, const PixelGrid& obj, std::span<const PixelGrid> psfs, std::size_t block)
        : obs_(obs), block_(block)
    {
        if (psfs.size() != obs.count()) throw Error("PsfObjective: need one PSF per image");
        if (block >= obs.count()) throw Error("PsfObjective: block index out of range");
        const std::size_t n = obs.grid_size();
        if (obj.size() != n) throw Error("PsfObjective: object size mismatch");
        obj_spectrum_ = fft::forward(obj);
        conv_.resize(n * n);
        factor_.resize(n * n);
        floor_ = kl::model_floor(obs.image(block));
        other_terms_ = 0.0;
        for (std::size_t j = 0; j < obs.count(); ++j) {
            if (j == block) continue;
            fft::inverse_into(multiply(fft::forward(psfs[j]), obj_spectrum_), conv_);
            other_terms_ += kl::image_term(conv_, obs.background(j).values(), obs.image(j).values(),
                                           kl::model_floor(obs.image(j)));
        }
    }

    std::size_t dimension() const { return obs_.grid_size() * obs_.grid_size(); }
    double value(std::span<const double> k) { return evaluate(k, {}); }
    double value_and_gradient(std::span<const double> k, std::span<double> grad) { return evaluate(k, grad); }

private:
    double evaluate(std::span<const double> k, std::span<double> grad)
    {
        const std::size_t n = obs_.grid_size();
        if (k.size() != n * n) throw Error("PsfObjective: PSF size mismatch");
        fft::inverse_into(multiply(fft::forward(k, n), obj_spectrum_), conv_);
        const double term = kl::image_term(conv_, obs_.background(block_).values(), obs_.image(block_).values(),
                                           floor_, grad.empty() ? std::span<double>{} : std::span<double>(factor_));
        if (!grad.empty()) fft::inverse_into(multiply(obj_spectrum_, fft::forward(factor_, n), true), grad);
        return term + other_terms_;
    }

    const ObservationSet& obs_;
    std::size_t block_;
    Spectrum obj_spectrum_;
    std::vector<double> conv_;
    std::vector<double> factor_;
    double floor_ = 0.0;
    double other_terms_ = 0.0;
};

inline double kl_value(const PixelGrid& obj, std::span<const PixelGrid> psfs, const ObservationSet& obs)
{
    ObjectObjective f(obs, psfs);
    return f.value(obj.values());
}

/// 2 J0 / (p N^2); close to 1 when the model is the noise-free expectation.
inline double kl_value_normalized(const PixelGrid& obj, std::span<const PixelGrid> psfs, const ObservationSet& obs)
{
    const double n = static_cast<double>(obs.grid_size());
    return 2.0 * kl_value(obj, psfs, obs) / (static_cast<double>(obs.count()) * n * n);
}

inline PixelGrid kl_grad_object(const PixelGrid& obj, std::span<const PixelGrid> psfs, const ObservationSet& obs)
{
    ObjectObjective f(obs, psfs);
    PixelGrid grad(obj.size(), obj.pixel_scale());
    f.value_and_gradient(obj.values(), grad.values());
    return grad;
}

inline PixelGrid kl_grad_psf(const PixelGrid& obj, std::span<const PixelGrid> psfs, const ObservationSet& obs,
                             std::size_t block)
{
    PsfObjective f(obs, obj, psfs, block);
    PixelGrid grad(obj.size(), obj.pixel_scale());
    f.value_and_gradient(psfs[block].values(), grad.values());
    return grad;
}

}  // namespace blindsgp

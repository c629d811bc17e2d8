#pragma once

// Inexact alternating minimization for blind deconvolution: each outer
// iteration runs a fixed number of SGP steps on the object (f >= 0,
// sum f = c) and then on each PSF in turn (0 <= K_j <= s_j, sum K_j = 1).
// Every block is warm-started, including its steplength memory.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/fourier.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/metrics.hpp"
#include "blindsgp/objective.hpp"
#include "blindsgp/projection.hpp"
#include "blindsgp/sgp.hpp"

namespace blindsgp {

enum class PsfInit { autocorrelation, pedestal, supplied };

inline const char* to_string(PsfInit k)
{
    switch (k) {
    case PsfInit::autocorrelation: return "autocorrelation";
    case PsfInit::pedestal: return "pedestal";
    case PsfInit::supplied: return "supplied";
    }
    return "?";
}

using CheckpointFn = std::function<void(int outer, const PixelGrid& object, const std::vector<PixelGrid>& psfs)>;

struct BlindConfig {
    int outer_iters = 1000;
    int inner_obj = 50;
    int inner_psf = 1;
    PsfInit init_kind = PsfInit::pedestal;
    std::uint64_t seed = 0;
    bool freeze_psf = false;  // non-blind deconvolution with the initial PSFs
    double rel_tol = 0.0;     // stop when |dJ|/J falls below this (0 = off)

    // Steplength and line-search settings shared by all blocks; the scaling
    // bounds below override scaling_lower/upper per block.
    SgpOptions solver;
    double obj_scaling_lower_factor = 1e-6;  // L1 = factor * c / N^2
    double obj_scaling_upper_factor = 10.0;  // L2 = factor * c
    double psf_scaling_lower = 1e-12;        // PSF L2 is the cap s_j

    std::vector<PixelGrid> initial_psfs;  // centered; used with PsfInit::supplied
    std::vector<PixelGrid> truth_psfs;    // centered; enables the RMSE trace

    int checkpoint_every = 0;
    CheckpointFn checkpoint;
    std::ostream* run_log = nullptr;  // CSV: outer,objective,obj_iters,psf_iters,seconds

    void validate() const
    {
        if (outer_iters < 1 || inner_obj < 1 || inner_psf < 1)
            throw Error("BlindConfig: iteration counts must be at least 1");
    }
};

struct BlindResult {
    PixelGrid object;
    std::vector<PixelGrid> psfs;                    // centered
    std::vector<double> objective_trace;            // 2 J0 / (p N^2) per outer iteration
    std::vector<std::vector<double>> psf_rmse_trace;  // [outer][j], when truth supplied
    double initial_objective = 0.0;                 // normalized, before the first outer iteration
    int outer_done = 0;
};

/// Constant object c / N^2.
inline PixelGrid init_object(const ObservationSet& obs)
{
    const double c = flux_constant(obs);
    const std::size_t n = obs.grid_size();
    return PixelGrid(n, obs.pixel_scale(), c / static_cast<double>(n * n));
}

/// Euclidean projection of a centered PSF onto {0 <= K <= cap, sum K = 1}.
inline PixelGrid project_psf(const PixelGrid& psf, double cap)
{
    const auto con = ConstraintSpec::capped_unit_sum(psf.count(), cap);
    const std::vector<double> ones(psf.count(), 1.0);
    PixelGrid out(psf.size(), psf.pixel_scale());
    project_into({psf.values(), ones, con}, out.values(), 1e-14);
    return out;
}

/// Autocorrelation of the ideal PSF, recentered and normalized; projected
/// onto the capped set when `cap` is given and exceeded.
inline PixelGrid init_psf_autocorrelation(const PixelGrid& ideal, std::optional<double> cap = std::nullopt)
{
    const Spectrum s = fft::forward(ideal);
    Spectrum power{s.n, std::vector<std::complex<double>>(s.bins.size())};
    for (std::size_t i = 0; i < s.bins.size(); ++i) power.bins[i] = std::norm(s.bins[i]);
    PixelGrid ac = to_centered(fft::inverse(std::move(power), ideal.pixel_scale()));
    for (double& v : ac.values()) v = std::max(v, 0.0);
    const double total = ac.sum();
    for (double& v : ac.values()) v /= total;
    if (cap && ac.max() > *cap) ac = project_psf(ac, *cap);
    return ac;
}

/// Pedestal blend (ideal + w) / (1 + w N^2) with w = (1 - SR) / (SR N^2):
/// unit sum, peak close to SR * max(ideal).
inline double pedestal_weight(double strehl, std::size_t n)
{
    if (!(strehl > 0.0 && strehl <= 1.0)) throw Error("pedestal: Strehl ratio must lie in (0, 1]");
    return (1.0 - strehl) / (strehl * static_cast<double>(n * n));
}

inline PixelGrid init_psf_pedestal(const PixelGrid& ideal, double strehl)
{
    const double w = pedestal_weight(strehl, ideal.size());
    const double norm = 1.0 + w * static_cast<double>(ideal.count());
    PixelGrid out(ideal.size(), ideal.pixel_scale());
    for (std::size_t i = 0; i < ideal.count(); ++i) out[i] = (ideal[i] + w) / norm;
    return out;
}

namespace detail {

inline void check_outer_invariants(const std::vector<double>& f, double c, const std::vector<PixelGrid>& psfs,
                                   const ObservationSet& obs, int outer)
{
    double sf = 0.0;
    for (double v : f) {
        if (v < 0.0) throw Error("run_blind: negative object pixel at outer iteration " + std::to_string(outer));
        sf += v;
    }
    if (std::abs(sf - c) > 1e-8 * c)
        throw Error("run_blind: object flux drifted at outer iteration " + std::to_string(outer));
    for (std::size_t j = 0; j < psfs.size(); ++j) {
        double sk = 0.0;
        for (double v : psfs[j].values()) {
            if (v < 0.0 || v > obs.psf_cap(j))
                throw Error("run_blind: PSF " + std::to_string(j) + " leaves its box at outer iteration " +
                            std::to_string(outer));
            sk += v;
        }
        if (std::abs(sk - 1.0) > 1e-10)
            throw Error("run_blind: PSF " + std::to_string(j) + " lost normalization at outer iteration " +
                        std::to_string(outer));
    }
}

}  // namespace detail

/// Blind (or, with freeze_psf, non-blind) reconstruction. `ideal_psfs` are
/// centered diffraction-limited PSFs, one per image, used for initialization.
inline BlindResult run_blind(const ObservationSet& obs, const std::vector<PixelGrid>& ideal_psfs,
                             const BlindConfig& cfg)
{
    cfg.validate();
    const std::size_t p = obs.count();
    const std::size_t n = obs.grid_size();
    const std::size_t npix = n * n;
    const double scale = obs.pixel_scale();
    const double norm = 2.0 / (static_cast<double>(p) * static_cast<double>(npix));
    const double c = flux_constant(obs);
    if (!cfg.truth_psfs.empty() && cfg.truth_psfs.size() != p) throw Error("run_blind: need one truth PSF per image");

    // Initial PSFs, centered, then made feasible and moved to wrap-around.
    std::vector<PixelGrid> psfs;
    for (std::size_t j = 0; j < p; ++j) {
        PixelGrid k0;
        if (cfg.init_kind == PsfInit::supplied) {
            if (cfg.initial_psfs.size() != p) throw Error("run_blind: supplied init needs one PSF per image");
            k0 = cfg.initial_psfs[j];
        } else {
            if (ideal_psfs.size() != p) throw Error("run_blind: need one ideal PSF per image");
            k0 = cfg.init_kind == PsfInit::pedestal ? init_psf_pedestal(ideal_psfs[j], obs.strehl(j))
                                                    : init_psf_autocorrelation(ideal_psfs[j]);
        }
        if (k0.size() != n) throw Error("run_blind: PSF size mismatch");
        psfs.push_back(to_wraparound(project_psf(k0, obs.psf_cap(j))));
    }

    const auto obj_con = ConstraintSpec::nonnegative_with_sum(npix, c);
    std::vector<ConstraintSpec> psf_con;
    for (std::size_t j = 0; j < p; ++j) psf_con.push_back(ConstraintSpec::capped_unit_sum(npix, obs.psf_cap(j)));

    SgpOptions obj_opt = cfg.solver;
    obj_opt.scaling_lower = cfg.obj_scaling_lower_factor * c / static_cast<double>(npix);
    obj_opt.scaling_upper = cfg.obj_scaling_upper_factor * c;
    std::vector<SgpOptions> psf_opt(p, cfg.solver);
    for (std::size_t j = 0; j < p; ++j) {
        psf_opt[j].scaling_lower = cfg.psf_scaling_lower;
        psf_opt[j].scaling_upper = obs.psf_cap(j);
    }

    const PixelGrid f0 = init_object(obs);
    SgpState obj_state = SgpState::start(f0.storage(), obj_opt);
    std::vector<SgpState> psf_state;
    for (std::size_t j = 0; j < p; ++j) psf_state.push_back(SgpState::start(psfs[j].storage(), psf_opt[j]));

    BlindResult res;
    double prev = kl_value(f0, psfs, obs);
    res.initial_objective = norm * prev;
    PixelGrid obj(n, scale);
    const auto t0 = std::chrono::steady_clock::now();

    for (int outer = 1; outer <= cfg.outer_iters; ++outer) {
        ObjectObjective fobj(obs, psfs);
        const std::size_t obj_iters = run_sgp(obj_state, fobj, obj_con, static_cast<std::size_t>(cfg.inner_obj), obj_opt);
        obj.storage() = obj_state.iterate;
        double current = obj_state.value;

        std::size_t psf_iters = 0;
        if (!cfg.freeze_psf) {
            for (std::size_t j = 0; j < p; ++j) {
                PsfObjective fpsf(obs, obj, psfs, j);
                psf_iters += run_sgp(psf_state[j], fpsf, psf_con[j], static_cast<std::size_t>(cfg.inner_psf), psf_opt[j]);
                psfs[j].storage() = psf_state[j].iterate;
                current = psf_state[j].value;
            }
        }

        detail::check_outer_invariants(obj_state.iterate, c, psfs, obs, outer);
        if (current > prev + 1e-9 * std::abs(prev))
            throw Error("run_blind: objective increased at outer iteration " + std::to_string(outer));

        res.objective_trace.push_back(norm * current);
        if (!cfg.truth_psfs.empty()) {
            std::vector<double> row;
            for (std::size_t j = 0; j < p; ++j) row.push_back(psf_rmse(to_centered(psfs[j]), cfg.truth_psfs[j]));
            res.psf_rmse_trace.push_back(std::move(row));
        }
        if (cfg.run_log) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            *cfg.run_log << outer << ',' << norm * current << ',' << obj_iters << ',' << psf_iters << ',' << secs
                         << '\n';
        }
        if (cfg.checkpoint && cfg.checkpoint_every > 0 && outer % cfg.checkpoint_every == 0) {
            std::vector<PixelGrid> centered;
            for (const auto& k : psfs) centered.push_back(to_centered(k));
            cfg.checkpoint(outer, obj, centered);
        }
        res.outer_done = outer;
        const double change = std::abs(prev - current) / std::max(std::abs(current), 1e-300);
        prev = current;
        if (cfg.rel_tol > 0.0 && change < cfg.rel_tol) break;
    }

    res.object = obj;
    for (const auto& k : psfs) res.psfs.push_back(to_centered(k));
    return res;
}

}  // namespace blindsgp

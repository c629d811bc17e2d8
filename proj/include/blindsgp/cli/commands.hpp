#pragma once

// The simulate / blind / deconv / metrics / selfcheck commands. Directory
// layout written by simulate (j = image index):
//
//   manifest.json   seed, exposure, frames, backgrounds, caps, angles, ...
//   truth.csv       x_mas,y_mas,magnitude
//   noisy_j.fits    co-added frames, native orientation
//   data_j.fits     RON-compensated (and derotated) solver input
//   expected_j.fits noise-free expectation of data_j
//   psf_j.fits      true PSF in the frame of data_j
//   ideal_j.fits    diffraction-limited PSF in the frame of data_j
//   rotated_j.fits, psf_native_j.fits   (Fizeau only) before derotation

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blindsgp/blind.hpp"
#include "blindsgp/io/config.hpp"
#include "blindsgp/io/csv.hpp"
#include "blindsgp/io/fits.hpp"
#include "blindsgp/metrics.hpp"
#include "blindsgp/skysim.hpp"
#include "blindsgp/testing/oracles.hpp"

namespace blindsgp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string indexed(const std::string& stem, std::size_t j) { return stem + "_" + std::to_string(j) + ".fits"; }

inline bool is_fizeau(const io::RunConfig& cfg)
{
    const std::string& mode = cfg.str("run.mode");
    if (mode != "single" && mode != "fizeau") throw Error("config: run.mode must be single or fizeau");
    return mode == "fizeau";
}

inline SimulationSpec simulation_from_config(const io::RunConfig& cfg)
{
    const bool fizeau = is_fizeau(cfg);
    SimulationSpec spec;
    TelescopeModel& tel = spec.telescope;
    tel = fizeau ? TelescopeModel::fizeau() : TelescopeModel::single();
    tel.aperture_diameter = cfg.number("telescope.diameter");
    if (!cfg.is_auto("telescope.baseline")) tel.baseline = cfg.number("telescope.baseline");
    tel.wavelength = cfg.number("telescope.wavelength");
    if (!cfg.is_auto("telescope.pixel_scale")) tel.pixel_scale = cfg.number("telescope.pixel_scale");
    tel.efficiency = cfg.number("telescope.efficiency");
    tel.collecting_area = cfg.number("telescope.collecting_area");
    tel.oversample = static_cast<int>(cfg.integer("telescope.oversample"));

    spec.noise.ron_sigma = cfg.number("noise.ron_sigma");
    spec.noise.saturation = cfg.number("noise.saturation");
    spec.noise.background_mag = cfg.number("noise.background_mag");
    spec.noise.flux_zero_point = cfg.number("noise.flux_zero_point");
    spec.noise.n_frames = static_cast<int>(cfg.integer("noise.frames"));

    spec.n = static_cast<std::size_t>(cfg.integer("field.size"));
    spec.strehl = cfg.number("field.strehl");
    spec.halo_width = cfg.number("field.halo_width");
    spec.field = io::parse_star_list(cfg.str("field.stars"));
    spec.angles = cfg.is_auto("field.angles") ? (fizeau ? std::vector<double>{0.0, 60.0, 120.0}
                                                        : std::vector<double>{0.0})
                                              : cfg.numbers("field.angles");
    spec.seed = cfg.unsigned_integer("run.seed");
    return spec;
}

inline BlindConfig blind_from_config(const io::RunConfig& cfg)
{
    BlindConfig b;
    b.outer_iters = static_cast<int>(cfg.integer("blind.outer"));
    b.inner_obj = static_cast<int>(cfg.integer("blind.inner_obj"));
    b.inner_psf = static_cast<int>(cfg.integer("blind.inner_psf"));
    const std::string& init = cfg.str("blind.init");
    if (init == "pedestal") b.init_kind = PsfInit::pedestal;
    else if (init == "autocorrelation") b.init_kind = PsfInit::autocorrelation;
    else throw Error("config: blind.init must be pedestal or autocorrelation");
    b.freeze_psf = cfg.flag("blind.freeze_psf");
    b.rel_tol = cfg.number("blind.rel_tol");
    b.checkpoint_every = static_cast<int>(cfg.integer("blind.checkpoint_every"));
    b.seed = cfg.unsigned_integer("run.seed");

    SgpOptions& s = b.solver;
    s.alpha_init = cfg.number("solver.alpha_init");
    s.alpha_min = cfg.number("solver.alpha_min");
    s.alpha_max = cfg.number("solver.alpha_max");
    s.tau_init = cfg.number("solver.tau");
    s.bb2_memory = static_cast<std::size_t>(cfg.integer("solver.bb2_memory"));
    s.beta = cfg.number("solver.beta");
    s.gamma = cfg.number("solver.gamma");
    s.max_backtracks = static_cast<int>(cfg.integer("solver.max_backtracks"));
    b.obj_scaling_lower_factor = cfg.number("solver.obj_scaling_lower");
    b.obj_scaling_upper_factor = cfg.number("solver.obj_scaling_upper");
    b.psf_scaling_lower = cfg.number("solver.psf_scaling_lower");
    return b;
}

inline void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- simulate

inline std::vector<fs::path> cmd_simulate(const io::RunConfig& cfg, const fs::path& out)
{
    const SimulationSpec spec = simulation_from_config(cfg);
    const Simulation sim = simulate(spec);
    const std::size_t p = sim.obs.count();
    std::vector<fs::path> files;
    auto put = [&](const std::string& name, const PixelGrid& g) {
        io::write_fits(out / name, g);
        files.push_back(out / name);
    };
    for (std::size_t j = 0; j < p; ++j) {
        put(indexed("noisy", j), sim.noisy[j]);
        put(indexed("data", j), sim.obs.image(j));
        put(indexed("expected", j), sim.expected[j]);
        put(indexed("psf", j), sim.true_psfs[j]);
        put(indexed("ideal", j), sim.ideal_psfs[j]);
        if (spec.angles[j] != 0.0 || p > 1) {
            put(indexed("rotated", j), sim.compensated[j]);
            put(indexed("psf_native", j), sim.native_psfs[j]);
        }
    }
    io::write_truth_csv(out / "truth.csv", spec.field);
    files.push_back(out / "truth.csv");

    json m;
    m["mode"] = cfg.str("run.mode");
    m["seed"] = spec.seed;
    m["size"] = spec.n;
    m["pixel_scale"] = spec.telescope.pixel_scale;
    m["frames"] = spec.noise.n_frames;
    m["ron_sigma"] = spec.noise.ron_sigma;
    m["exposure_time"] = sim.exposure;
    m["zero_flux"] = sim.zero_flux;
    m["strehl"] = spec.strehl;
    m["angles"] = spec.angles;
    m["caps"] = sim.obs.psf_caps();
    m["background"] = std::vector<double>(p, sim.background_level);
    m["images"] = p;
    std::vector<std::string> names;
    for (const auto& f : files) names.push_back(f.filename().string());
    m["files"] = names;
    write_json(out / "manifest.json", m);
    files.push_back(out / "manifest.json");
    return files;
}

// ------------------------------------------------------------------ inputs

struct DataSet {
    ObservationSet obs;
    std::vector<PixelGrid> ideal;
    std::vector<PixelGrid> true_psfs;  // empty when not available
    std::optional<StarField> truth;
    double zero_flux = 0.0;
    double strehl = 0.0;
    json manifest;
};

inline json read_json(const fs::path& path)
{
    try {
        return json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline DataSet load_data(const fs::path& dir)
{
    const json m = read_json(dir / "manifest.json");
    try {
        const std::size_t p = m.at("images").get<std::size_t>();
        const auto bgs = m.at("background").get<std::vector<double>>();
        const auto angles = m.at("angles").get<std::vector<double>>();
        const double strehl = m.at("strehl").get<double>();
        std::vector<PixelGrid> images, backgrounds, ideal, truth;
        std::vector<double> srs, caps;
        for (std::size_t j = 0; j < p; ++j) {
            images.push_back(io::read_fits(dir / indexed("data", j)));
            const PixelGrid& g = images.back();
            backgrounds.emplace_back(g.size(), g.pixel_scale(), bgs.at(j));
            ideal.push_back(io::read_fits(dir / indexed("ideal", j)));
            srs.push_back(strehl);
            caps.push_back(psf_cap(strehl, ideal.back()));
            if (fs::exists(dir / indexed("psf", j))) truth.push_back(io::read_fits(dir / indexed("psf", j)));
        }
        if (truth.size() != p) truth.clear();
        DataSet d{ObservationSet(images, backgrounds, srs, caps, m.at("frames").get<int>(),
                                 m.at("ron_sigma").get<double>(), angles),
                  ideal,
                  truth,
                  std::nullopt,
                  m.at("zero_flux").get<double>(),
                  strehl,
                  m};
        if (fs::exists(dir / "truth.csv")) d.truth = io::read_truth_csv(dir / "truth.csv");
        return d;
    } catch (const json::exception& e) {
        throw Error((dir / "manifest.json").string() + ": " + e.what());
    }
}

// ----------------------------------------------------------------- metrics

struct MetricsInput {
    PixelGrid object;
    std::vector<PixelGrid> psfs;
    std::optional<double> objective;
    std::optional<int> iterations;
};

/// One CSV table row: SR, separation of the first two stars, m2, per-star
/// relative magnitude errors (%), detections, MARE, per-PSF RMSE (%),
/// normalized objective, outer iterations.
inline std::string metrics_csv(const MetricsInput& in, const StarField& truth, const std::vector<PixelGrid>& true_psfs,
                               double zero_flux, double strehl)
{
    const PhotometryReport rep = photometry_report(in.object, truth, zero_flux);
    std::vector<std::string> head{"sr", "separation_mas", "m2"}, row;
    const auto& st = truth.stars;
    const double sep = st.size() > 1 ? std::hypot(st[1].x_mas - st[0].x_mas, st[1].y_mas - st[0].y_mas) : 0.0;
    row = {io::fmt(strehl, 6), io::fmt(sep, 6), st.size() > 1 ? io::fmt(st[1].magnitude, 6) : ""};
    std::size_t detected = 0;
    for (std::size_t i = 0; i < rep.stars.size(); ++i) {
        head.push_back("err_m" + std::to_string(i + 1) + "_pct");
        row.push_back(io::fmt(100.0 * rep.stars[i].abs_rel_error, 6));
        detected += rep.stars[i].detected ? 1 : 0;
    }
    head.insert(head.end(), {"detected", "mare_pct"});
    row.insert(row.end(), {std::to_string(detected), io::fmt(100.0 * rep.mare, 6)});
    for (std::size_t j = 0; j < true_psfs.size() && j < in.psfs.size(); ++j) {
        head.push_back("rmse_psf" + std::to_string(j + 1) + "_pct");
        row.push_back(io::fmt(100.0 * psf_rmse(in.psfs[j], true_psfs[j]), 6));
    }
    head.insert(head.end(), {"objective", "iterations"});
    row.push_back(in.objective ? io::fmt(*in.objective, 8) : "");
    row.push_back(in.iterations ? std::to_string(*in.iterations) : "");
    return io::join(head) + io::join(row);
}

/// Reads object.fits / psf_j.fits (and result.json if present) from a result
/// directory and scores them against the truth in `truth_dir`. Truth PSFs are
/// stored in the solver frame, i.e. already derotated for Fizeau data.
inline std::string cmd_metrics(const fs::path& recon_dir, const fs::path& truth_dir, const fs::path& out_csv = {})
{
    const DataSet data = load_data(truth_dir);
    if (!data.truth) throw Error("metrics: missing " + (truth_dir / "truth.csv").string());
    if (!fs::exists(recon_dir / "object.fits")) throw Error("metrics: missing " + (recon_dir / "object.fits").string());
    MetricsInput in{io::read_fits(recon_dir / "object.fits"), {}, std::nullopt, std::nullopt};
    for (std::size_t j = 0; j < data.obs.count(); ++j) {
        const fs::path f = recon_dir / indexed("psf", j);
        if (!fs::exists(f)) throw Error("metrics: missing " + f.string());
        in.psfs.push_back(io::read_fits(f));
    }
    if (fs::exists(recon_dir / "result.json")) {
        const json r = read_json(recon_dir / "result.json");
        in.objective = r.at("final_objective").get<double>();
        in.iterations = r.at("outer_iterations").get<int>();
    }
    const std::string csv = metrics_csv(in, *data.truth, data.true_psfs, data.zero_flux, data.strehl);
    if (!out_csv.empty()) io::write_file_atomic(out_csv, csv);
    return csv;
}

// ------------------------------------------------------------- blind/deconv

inline BlindResult cmd_blind(const io::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                             bool deconv = false)
{
    const DataSet data = load_data(data_dir);
    BlindConfig bc = blind_from_config(cfg);
    if (deconv) {
        if (data.true_psfs.empty()) throw Error("deconv: no psf_j.fits in " + data_dir.string());
        bc.freeze_psf = true;
        bc.init_kind = PsfInit::supplied;
        bc.initial_psfs = data.true_psfs;
    }
    if (!data.true_psfs.empty()) bc.truth_psfs = data.true_psfs;

    fs::create_directories(out);
    std::ostringstream log;
    log << "outer,objective,obj_iters,psf_iters,seconds\n";
    bc.run_log = &log;
    if (bc.checkpoint_every > 0)
        bc.checkpoint = [&](int k, const PixelGrid& f, const std::vector<PixelGrid>& psfs) {
            const fs::path dir = out / ("checkpoint_" + std::to_string(k));
            io::write_fits(dir / "object.fits", f);
            for (std::size_t j = 0; j < psfs.size(); ++j) io::write_fits(dir / indexed("psf", j), psfs[j]);
        };

    const BlindResult res = run_blind(data.obs, data.ideal, bc);

    io::write_fits(out / "object.fits", res.object);
    for (std::size_t j = 0; j < res.psfs.size(); ++j) io::write_fits(out / indexed("psf", j), res.psfs[j]);
    std::string trace = "outer,objective\n";
    for (std::size_t k = 0; k < res.objective_trace.size(); ++k)
        trace += std::to_string(k + 1) + "," + io::fmt(res.objective_trace[k], 17) + "\n";
    io::write_file_atomic(out / "trace.csv", trace);
    io::write_file_atomic(out / "run_log.csv", log.str());

    json r;
    r["init"] = to_string(bc.init_kind);
    r["freeze_psf"] = bc.freeze_psf;
    r["seed"] = bc.seed;
    r["outer_iterations"] = res.outer_done;
    r["inner_obj"] = bc.inner_obj;
    r["inner_psf"] = bc.inner_psf;
    r["initial_objective"] = res.initial_objective;
    r["final_objective"] = res.objective_trace.empty() ? res.initial_objective : res.objective_trace.back();
    const double c = flux_constant(data.obs);
    const std::size_t npix = data.obs.grid_size() * data.obs.grid_size();
    r["object_scaling"] = {bc.obj_scaling_lower_factor * c / static_cast<double>(npix),
                           bc.obj_scaling_upper_factor * c};
    r["psf_scaling"] = {bc.psf_scaling_lower, data.obs.psf_caps()};
    write_json(out / "result.json", r);

    if (data.truth) cmd_metrics(out, data_dir, out / "metrics.csv");
    return res;
}

// --------------------------------------------------------------- selfcheck

/// Projection and gradient oracle suites at small size. Returns true when all
/// checks pass; one line per suite on `os`.
inline bool cmd_selfcheck(std::ostream& os, std::uint64_t seed = 7)
{
    bool ok = true;
    {
        std::mt19937_64 rng(seed);
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            auto rp = oracle::random_projection(rng, 2 + static_cast<std::size_t>(t % 31));
            const ProjectionProblem prob{rp.point, rp.scaling, rp.constraint};
            const auto y = project(prob);
            const auto z = project_oracle(prob);
            for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - z[i]));
        }
        const bool pass = worst <= 1e-8;
        os << (pass ? "PASS" : "FAIL") << " projection vs bisection oracle, 200 problems, max diff " << worst << "\n";
        ok = ok && pass;
    }
    {
        double worst = 0.0;
        for (std::uint64_t t = 0; t < 4; ++t) {
            const auto inst = oracle::random_instance(8, 1 + 2 * (t % 2), seed + t);
            const PixelGrid g = kl_grad_object(inst.object, inst.psfs, inst.obs);
            const auto fd = oracle::fd_gradient(inst.object, inst.psfs, inst.obs, -1);
            const PixelGrid gk = kl_grad_psf(inst.object, inst.psfs, inst.obs, 0);
            const auto fdk = oracle::fd_gradient(inst.object, inst.psfs, inst.obs, 0);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                if (std::abs(g[i]) > 1e-8) worst = std::max(worst, std::abs(g[i] - fd[i]) / std::abs(g[i]));
                if (std::abs(gk[i]) > 1e-8) worst = std::max(worst, std::abs(gk[i] - fdk[i]) / std::abs(gk[i]));
            }
        }
        const bool pass = worst <= 1e-5;
        os << (pass ? "PASS" : "FAIL") << " KL gradients vs central differences, max rel err " << worst << "\n";
        ok = ok && pass;
    }
    return ok;
}

}  // namespace blindsgp::cli

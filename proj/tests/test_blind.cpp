#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "blindsgp/blind.hpp"
#include "blindsgp/skysim.hpp"
#include "blindsgp/testing/oracles.hpp"

using namespace blindsgp;

namespace {

PixelGrid random_psf(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PixelGrid k(n, 1.0);
    for (double& v : k.values()) v = u(rng);
    const double s = k.sum();
    for (double& v : k.values()) v /= s;
    return k;
}

PixelGrid centered_delta(std::size_t n)
{
    PixelGrid d(n, 1.0, 0.0);
    d(n / 2, n / 2) = 1.0;
    return d;
}

Simulation small_binary(std::size_t n, double sep_mas, double m2, double strehl = 0.8, std::uint64_t seed = 1)
{
    SimulationSpec spec;
    spec.n = n;
    spec.strehl = strehl;
    spec.seed = seed;
    spec.field.stars = {{-sep_mas / 2.0, 0.0, 15.0}, {sep_mas / 2.0, 0.0, m2}};
    return simulate(spec);
}

}  // namespace

TEST(InitObject, ConstantFlux)
{
    ObservationSet obs({PixelGrid(4, 1.0, 2.0)}, {PixelGrid(4, 1.0, 1.0)}, {0.9}, {1.0});
    const PixelGrid f = init_object(obs);
    for (double v : f.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(InitObject, TwoImageMean)
{
    PixelGrid g1(4, 1.0, 1.0), g2(4, 1.0, 1.0);
    g1[0] += 10.0;
    g2[5] += 30.0;
    ObservationSet obs({g1, g2}, {PixelGrid(4, 1.0, 1.0), PixelGrid(4, 1.0, 1.0)}, {0.9, 0.9}, {1.0, 1.0});
    const PixelGrid f = init_object(obs);
    for (double v : f.values()) EXPECT_DOUBLE_EQ(v, 20.0 / 16.0);
}

TEST(InitObject, SumsToFluxConstant)
{
    const auto inst = oracle::random_instance(16, 3, 5);
    const PixelGrid f = init_object(inst.obs);
    const double c = flux_constant(inst.obs);
    EXPECT_NEAR(f.sum(), c, 1e-12 * c);
    for (double v : f.values()) EXPECT_GT(v, 0.0);
}

TEST(InitAutocorrelation, DeltaGivesDelta)
{
    const PixelGrid ac = init_psf_autocorrelation(centered_delta(16));
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(ac(r, c), (r == 8 && c == 8) ? 1.0 : 0.0, 1e-12);
}

TEST(InitAutocorrelation, UnitSumNonnegative)
{
    const PixelGrid ideal = ideal_psf(TelescopeModel::single(), 64);
    const PixelGrid ac = init_psf_autocorrelation(ideal);
    EXPECT_NEAR(ac.sum(), 1.0, 1e-10);
    for (double v : ac.values()) EXPECT_GE(v, 0.0);
    // the autocorrelation of a symmetric PSF peaks at the center
    EXPECT_EQ(ac(32, 32), ac.max());
}

TEST(InitAutocorrelation, MatchesSpatialSum)
{
    for (std::uint64_t s = 0; s < 4; ++s) {
        const std::size_t n = 8;
        const PixelGrid k = random_psf(n, 40 + s);
        const PixelGrid ac = init_psf_autocorrelation(k);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t dr = (r + n - n / 2) % n, dc = (c + n - n / 2) % n;
                long double sum = 0.0L;
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < n; ++x)
                        sum += static_cast<long double>(k(y, x)) * k((y + dr) % n, (x + dc) % n);
                EXPECT_NEAR(ac(r, c), static_cast<double>(sum), 1e-10);
            }
    }
}

TEST(InitAutocorrelation, CapIsEnforced)
{
    const PixelGrid ac = init_psf_autocorrelation(centered_delta(16), 0.2);
    EXPECT_LE(ac.max(), 0.2 + 1e-15);
    EXPECT_NEAR(ac.sum(), 1.0, 1e-12);
}

TEST(InitPedestal, UnitStrehlIsIdentity)
{
    const PixelGrid ideal = random_psf(16, 3);
    const PixelGrid k = init_psf_pedestal(ideal, 1.0);
    for (std::size_t i = 0; i < k.count(); ++i) EXPECT_EQ(k[i], ideal[i]);
}

TEST(InitPedestal, WeightFormula)
{
    EXPECT_NEAR(pedestal_weight(0.81, 256), 3.5792e-6, 1e-10);
    EXPECT_DOUBLE_EQ(pedestal_weight(0.81, 256), 0.19 / (0.81 * 65536.0));
    EXPECT_THROW(pedestal_weight(0.0, 8), Error);
    EXPECT_THROW(pedestal_weight(1.5, 8), Error);
}

TEST(InitPedestal, PeakRatioNearStrehl)
{
    const PixelGrid ideal = ideal_psf(TelescopeModel::single(), 128);
    const PixelGrid k = init_psf_pedestal(ideal, 0.62);
    EXPECT_NEAR(k.max() / ideal.max(), 0.62, 0.01);
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
}

TEST(BlindConfig, RejectsZeroCounts)
{
    BlindConfig cfg;
    cfg.outer_iters = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.outer_iters = 1;
    cfg.inner_obj = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.inner_obj = 1;
    cfg.inner_psf = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.inner_psf = 1;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunBlind, FrozenPsfIsInverseCrime)
{
    const Simulation sim = small_binary(64, 240.0, 16.0);
    BlindConfig cfg;
    cfg.outer_iters = 10;
    cfg.freeze_psf = true;
    cfg.init_kind = PsfInit::supplied;
    cfg.initial_psfs = sim.true_psfs;
    const BlindResult r = run_blind(sim.obs, sim.ideal_psfs, cfg);
    StarField field;
    field.stars = {{-120.0, 0.0, 15.0}, {120.0, 0.0, 16.0}};
    const auto rep = photometry_report(r.object, field, sim.zero_flux);
    for (const auto& s : rep.stars) {
        EXPECT_TRUE(s.detected);
        EXPECT_LT(s.abs_rel_error, 0.01);
    }
    // PSF untouched apart from the feasibility projection
    for (std::size_t i = 0; i < r.psfs[0].count(); ++i) EXPECT_NEAR(r.psfs[0][i], sim.true_psfs[0][i], 1e-12);
}

TEST(RunBlind, TraceNonincreasingAndFeasible)
{
    for (PsfInit init : {PsfInit::pedestal, PsfInit::autocorrelation}) {
        for (std::uint64_t seed : {1u, 2u}) {
            const Simulation sim = small_binary(32, 120.0, 15.5, 0.7, seed);
            BlindConfig cfg;
            cfg.outer_iters = 15;
            cfg.inner_obj = 10;
            cfg.init_kind = init;
            const BlindResult r = run_blind(sim.obs, sim.ideal_psfs, cfg);
            ASSERT_EQ(r.objective_trace.size(), 15u);
            EXPECT_LE(r.objective_trace[0], r.initial_objective);
            for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
                EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1] * (1.0 + 1e-12)) << to_string(init);
            const double c = flux_constant(sim.obs);
            EXPECT_NEAR(r.object.sum(), c, 1e-8 * c);
            EXPECT_NEAR(r.psfs[0].sum(), 1.0, 1e-10);
            for (double v : r.psfs[0].values()) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, sim.obs.psf_cap(0));
            }
        }
    }
}

TEST(RunBlind, DeltaPsfUnreachable)
{
    // With SR < 1 the cap is well below 1, so the trivial (f = g - b, K = delta)
    // solution cannot be approached.
    const Simulation sim = small_binary(32, 120.0, 15.0, 0.5);
    ASSERT_LT(sim.obs.psf_cap(0), 0.5);
    BlindConfig cfg;
    cfg.outer_iters = 20;
    cfg.inner_obj = 5;
    cfg.inner_psf = 5;
    const BlindResult r = run_blind(sim.obs, sim.ideal_psfs, cfg);
    EXPECT_LE(r.psfs[0].max(), sim.obs.psf_cap(0));
}

TEST(RunBlind, Deterministic)
{
    const Simulation sim = small_binary(32, 120.0, 15.5);
    BlindConfig cfg;
    cfg.outer_iters = 8;
    cfg.inner_obj = 10;
    const BlindResult a = run_blind(sim.obs, sim.ideal_psfs, cfg);
    const BlindResult b = run_blind(sim.obs, sim.ideal_psfs, cfg);
    EXPECT_EQ(a.objective_trace, b.objective_trace);
    EXPECT_EQ(a.object.storage(), b.object.storage());
}

TEST(RunBlind, MultiImageBlocks)
{
    SimulationSpec spec;
    spec.telescope = TelescopeModel::fizeau();
    spec.n = 32;
    spec.strehl = 0.77;
    spec.angles = {0.0, 60.0, 120.0};
    spec.field.stars = {{-20.0, 0.0, 15.0}, {20.0, 0.0, 15.0}};
    const Simulation sim = simulate(spec);
    BlindConfig cfg;
    cfg.outer_iters = 6;
    cfg.inner_obj = 10;
    cfg.truth_psfs = sim.true_psfs;
    const BlindResult r = run_blind(sim.obs, sim.ideal_psfs, cfg);
    ASSERT_EQ(r.psfs.size(), 3u);
    ASSERT_EQ(r.psf_rmse_trace.size(), 6u);
    EXPECT_EQ(r.psf_rmse_trace[0].size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(r.psfs[j].sum(), 1.0, 1e-10);
        EXPECT_LE(r.psfs[j].max(), sim.obs.psf_cap(j));
    }
}

TEST(RunBlind, LogCheckpointAndTolerance)
{
    const Simulation sim = small_binary(32, 120.0, 15.5);
    std::ostringstream log;
    int calls = 0;
    BlindConfig cfg;
    cfg.outer_iters = 6;
    cfg.inner_obj = 5;
    cfg.run_log = &log;
    cfg.checkpoint_every = 2;
    cfg.checkpoint = [&](int outer, const PixelGrid& f, const std::vector<PixelGrid>& k) {
        EXPECT_EQ(outer % 2, 0);
        EXPECT_EQ(f.size(), 32u);
        EXPECT_EQ(k.size(), 1u);
        ++calls;
    };
    const BlindResult r = run_blind(sim.obs, sim.ideal_psfs, cfg);
    EXPECT_EQ(calls, 3);
    std::size_t lines = 0;
    for (char ch : log.str()) lines += ch == '\n';
    EXPECT_EQ(lines, 6u);

    cfg.run_log = nullptr;
    cfg.checkpoint = nullptr;
    cfg.outer_iters = 1000;
    cfg.rel_tol = 1e-2;
    const BlindResult early = run_blind(sim.obs, sim.ideal_psfs, cfg);
    EXPECT_LT(early.outer_done, 1000);
    EXPECT_EQ(early.objective_trace.size(), static_cast<std::size_t>(early.outer_done));
}

TEST(RunBlind, InputChecks)
{
    const Simulation sim = small_binary(32, 120.0, 15.5);
    BlindConfig cfg;
    cfg.outer_iters = 1;
    cfg.init_kind = PsfInit::supplied;
    EXPECT_THROW(run_blind(sim.obs, sim.ideal_psfs, cfg), Error);
    cfg.init_kind = PsfInit::pedestal;
    EXPECT_THROW(run_blind(sim.obs, {}, cfg), Error);
    cfg.truth_psfs = {sim.true_psfs[0], sim.true_psfs[0]};
    EXPECT_THROW(run_blind(sim.obs, sim.ideal_psfs, cfg), Error);
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "blindsgp/cli/commands.hpp"

using namespace blindsgp;
namespace fs = std::filesystem;

namespace {

const fs::path root = fs::temp_directory_path() / "blindsgp_test_cli";

fs::path fresh(const std::string& name)
{
    const fs::path p = root / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args)
{
    const std::string cmd = std::string(BLINDSGP_CLI) + " " + args + " > " + (root / "last_stdout.txt").string() +
                            " 2> " + (root / "last_stderr.txt").string();
    return std::system(cmd.c_str());
}

io::RunConfig binary_config(std::size_t n = 128)
{
    io::RunConfig cfg;
    cfg.set("field.size", std::to_string(n));
    cfg.set("field.strehl", "0.81");
    cfg.set("field.stars", "-120,0,15; 120,0,15");
    cfg.set("run.seed", "11");
    return cfg;
}

io::RunConfig fizeau_config(std::size_t n = 64)
{
    io::RunConfig cfg;
    cfg.set("run.mode", "fizeau");
    cfg.set("field.size", std::to_string(n));
    cfg.set("field.strehl", "0.77");
    cfg.set("field.stars", "-40,0,15; 40,0,15");
    return cfg;
}

std::vector<std::string> names_in(const fs::path& dir)
{
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> csv_rows(const std::string& text)
{
    std::vector<std::string> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) rows.push_back(line);
    return rows;
}

// Column value by header name from a two-line CSV.
double column(const std::string& csv, const std::string& name)
{
    const auto rows = csv_rows(csv);
    const auto head = io::split(rows.at(0)), vals = io::split(rows.at(1));
    for (std::size_t i = 0; i < head.size(); ++i)
        if (head[i] == name) return std::stod(vals.at(i));
    throw std::runtime_error("no column " + name);
}

// A reconstruction directory holding the exact object and the true PSFs.
void write_perfect_recon(const fs::path& data, const fs::path& recon)
{
    const cli::DataSet d = cli::load_data(data);
    PixelGrid obj(d.obs.grid_size(), d.obs.pixel_scale(), 0.0);
    for (const Star& s : d.truth->stars) {
        const auto [r, c] = nearest_pixel(obj, s.x_mas, s.y_mas);
        obj(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) += d.zero_flux * std::pow(10.0, -0.4 * s.magnitude);
    }
    io::write_fits(recon / "object.fits", obj);
    for (std::size_t j = 0; j < d.obs.count(); ++j) fs::copy_file(data / cli::indexed("psf", j), recon / cli::indexed("psf", j));
}

}  // namespace

TEST(Simulate, BinaryInventoryAndManifest)
{
    const fs::path out = fresh("sim_binary");
    cli::cmd_simulate(binary_config(), out);
    EXPECT_EQ(names_in(out), (std::vector<std::string>{"data_0.fits", "expected_0.fits", "ideal_0.fits",
                                                        "manifest.json", "noisy_0.fits", "psf_0.fits", "truth.csv"}));
    const auto m = cli::read_json(out / "manifest.json");
    EXPECT_EQ(m.at("frames").get<int>(), 10);
    EXPECT_EQ(m.at("seed").get<int>(), 11);
    EXPECT_EQ(m.at("size").get<int>(), 128);
    EXPECT_GT(m.at("exposure_time").get<double>(), 0.0);
    const PixelGrid data = io::read_fits(out / "data_0.fits");
    EXPECT_EQ(data.size(), 128u);
    EXPECT_EQ(data.pixel_scale(), 15.0);
    const StarField truth = io::read_truth_csv(out / "truth.csv");
    EXPECT_EQ(truth.stars.size(), 2u);
}

TEST(Simulate, SameSeedSameBytes)
{
    const fs::path a = fresh("sim_a"), b = fresh("sim_b");
    cli::cmd_simulate(binary_config(64), a);
    cli::cmd_simulate(binary_config(64), b);
    for (const auto& name : names_in(a)) EXPECT_EQ(io::read_file(a / name), io::read_file(b / name)) << name;
    auto other = binary_config(64);
    other.set("run.seed", "12");
    const fs::path c = fresh("sim_c");
    cli::cmd_simulate(other, c);
    EXPECT_NE(io::read_file(a / "data_0.fits"), io::read_file(c / "data_0.fits"));
}

TEST(Simulate, FizeauInventory)
{
    const fs::path out = fresh("sim_fizeau");
    cli::cmd_simulate(fizeau_config(), out);
    const auto names = names_in(out);
    for (std::size_t j = 0; j < 3; ++j)
        for (const char* stem : {"noisy", "data", "expected", "psf", "ideal", "rotated", "psf_native"})
            EXPECT_TRUE(std::count(names.begin(), names.end(), cli::indexed(stem, j))) << stem << j;
    const auto m = cli::read_json(out / "manifest.json");
    EXPECT_EQ(m.at("angles").get<std::vector<double>>(), (std::vector<double>{0.0, 60.0, 120.0}));
    EXPECT_EQ(m.at("pixel_scale").get<double>(), 5.0);
    EXPECT_EQ(m.at("images").get<int>(), 3);
}

TEST(Metrics, TruthCopiesScoreZero)
{
    // stars on exact pixel centres so the delta object is the exact answer
    auto cfg = binary_config(64);
    cfg.set("field.stars", "-120,0,15; 120,0,15.5");
    const fs::path data = fresh("metrics_data"), recon = fresh("metrics_recon");
    cli::cmd_simulate(cfg, data);
    write_perfect_recon(data, recon);
    const std::string csv = cli::cmd_metrics(recon, data, recon / "metrics.csv");
    EXPECT_EQ(io::read_file(recon / "metrics.csv"), csv);
    EXPECT_NEAR(column(csv, "mare_pct"), 0.0, 1e-9);
    EXPECT_NEAR(column(csv, "err_m2_pct"), 0.0, 1e-9);
    EXPECT_EQ(column(csv, "rmse_psf1_pct"), 0.0);
    EXPECT_EQ(column(csv, "detected"), 2.0);
    EXPECT_EQ(column(csv, "separation_mas"), 240.0);
    EXPECT_EQ(column(csv, "m2"), 15.5);
}

TEST(Metrics, ShiftedPsfThroughFiles)
{
    const fs::path data = fresh("metrics_shift_data"), recon = fresh("metrics_shift_recon");
    cli::cmd_simulate(binary_config(64), data);
    write_perfect_recon(data, recon);
    const PixelGrid truth = io::read_fits(data / "psf_0.fits");
    const PixelGrid shifted = circular_shift(truth, 0, 1);
    io::write_fits(recon / "psf_0.fits", shifted);
    const std::string csv = cli::cmd_metrics(recon, data);
    EXPECT_NEAR(column(csv, "rmse_psf1_pct"), 100.0 * psf_rmse(shifted, truth), 1e-4);
}

TEST(Metrics, FizeauHasThreePsfColumns)
{
    const fs::path data = fresh("metrics_fz_data"), recon = fresh("metrics_fz_recon");
    cli::cmd_simulate(fizeau_config(), data);
    write_perfect_recon(data, recon);
    const std::string head = csv_rows(cli::cmd_metrics(recon, data)).at(0);
    for (const char* col : {"rmse_psf1_pct", "rmse_psf2_pct", "rmse_psf3_pct"})
        EXPECT_NE(head.find(col), std::string::npos) << col;
    EXPECT_EQ(head.find("rmse_psf4_pct"), std::string::npos);
}

TEST(Metrics, MissingFilesAreErrors)
{
    const fs::path data = fresh("metrics_missing_data"), recon = fresh("metrics_missing_recon");
    cli::cmd_simulate(binary_config(32), data);
    EXPECT_THROW(cli::cmd_metrics(recon, data), Error);
    EXPECT_THROW(cli::load_data(recon), Error);
}

TEST(Blind, DeconvIsInverseCrime)
{
    const fs::path data = fresh("deconv_data"), out = fresh("deconv_out");
    auto cfg = binary_config(64);
    cfg.set("field.stars", "-120,0,15; 120,0,16");
    cli::cmd_simulate(cfg, data);
    cfg.set("blind.outer", "10");
    cli::cmd_blind(cfg, data, out, true);
    const std::string csv = io::read_file(out / "metrics.csv");
    EXPECT_LT(column(csv, "err_m1_pct"), 1.0);
    EXPECT_LT(column(csv, "err_m2_pct"), 1.0);
    EXPECT_LT(column(csv, "rmse_psf1_pct"), 1e-9);
    const auto r = cli::read_json(out / "result.json");
    EXPECT_TRUE(r.at("freeze_psf").get<bool>());
    EXPECT_EQ(r.at("init").get<std::string>(), "supplied");
}

TEST(Blind, TwoInitializationsTwoDirectories)
{
    const fs::path data = fresh("inits_data");
    auto cfg = binary_config(64);
    cli::cmd_simulate(cfg, data);
    cfg.set("blind.outer", "5");
    cfg.set("blind.inner_obj", "10");
    for (const char* init : {"pedestal", "autocorrelation"}) {
        const fs::path out = fresh(std::string("inits_") + init);
        cfg.set("blind.init", init);
        cli::cmd_blind(cfg, data, out);
        EXPECT_EQ(cli::read_json(out / "result.json").at("init").get<std::string>(), init);
        EXPECT_TRUE(fs::exists(out / "object.fits"));
        EXPECT_TRUE(fs::exists(out / "psf_0.fits"));
        EXPECT_EQ(csv_rows(io::read_file(out / "trace.csv")).size(), 6u);
        EXPECT_EQ(csv_rows(io::read_file(out / "run_log.csv")).size(), 6u);
    }
    EXPECT_NE(io::read_file(root / "inits_pedestal" / "object.fits"),
              io::read_file(root / "inits_autocorrelation" / "object.fits"));
}

TEST(Blind, CheckpointsWritten)
{
    const fs::path data = fresh("ckpt_data"), out = fresh("ckpt_out");
    auto cfg = binary_config(32);
    cli::cmd_simulate(cfg, data);
    cfg.set("blind.outer", "4");
    cfg.set("blind.inner_obj", "3");
    cfg.set("blind.checkpoint_every", "2");
    cli::cmd_blind(cfg, data, out);
    EXPECT_TRUE(fs::exists(out / "checkpoint_2" / "object.fits"));
    EXPECT_TRUE(fs::exists(out / "checkpoint_4" / "psf_0.fits"));
    EXPECT_FALSE(fs::exists(out / "checkpoint_3"));
}

TEST(Binary, SimulateBlindMetricsSmoke)
{
    // 128 x 128 blind binary, 300 outer iterations: completes, trace monotone
    const fs::path data = fresh("bin_data"), out = fresh("bin_out");
    const fs::path cfg_file = root / "smoke.cfg";
    io::write_file_atomic(cfg_file,
                          "[field]\nsize = 128\nstrehl = 0.81\nstars = -120,0,15; 120,0,15\n"
                          "[blind]\nouter = 300\n");
    ASSERT_EQ(run("simulate --config " + cfg_file.string() + " --seed 5 --out " + data.string()), 0);
    ASSERT_EQ(run("blind --config " + cfg_file.string() + " --data " + data.string() + " --out " + out.string() +
                  " --init pedestal"),
              0);
    const auto rows = csv_rows(io::read_file(out / "trace.csv"));
    ASSERT_EQ(rows.size(), 301u);
    double prev = std::stod(io::split(rows[1])[1]);
    for (std::size_t k = 2; k < rows.size(); ++k) {
        const double v = std::stod(io::split(rows[k])[1]);
        EXPECT_LE(v, prev * (1.0 + 1e-12)) << k;
        prev = v;
    }
    ASSERT_EQ(run("metrics --recon " + out.string() + " --truth " + data.string() + " --out " +
                  (out / "again.csv").string()),
              0);
    EXPECT_EQ(io::read_file(out / "again.csv"), io::read_file(out / "metrics.csv"));
    EXPECT_EQ(column(io::read_file(out / "metrics.csv"), "detected"), 2.0);
}

TEST(Binary, SelfcheckPasses)
{
    EXPECT_EQ(run("selfcheck"), 0);
    const std::string text = io::read_file(root / "last_stdout.txt");
    EXPECT_EQ(csv_rows(text).size(), 2u);
    EXPECT_EQ(text.find("FAIL"), std::string::npos);
}

TEST(Binary, ErrorsExitNonzero)
{
    const fs::path cfg_file = root / "bad.cfg";
    io::write_file_atomic(cfg_file, "field.strehll = 0.8\n");
    EXPECT_NE(run("simulate --config " + cfg_file.string() + " --out " + (root / "bad_out").string()), 0);
    EXPECT_NE(io::read_file(root / "last_stderr.txt").find("unknown key"), std::string::npos);
    EXPECT_NE(run("blind --data " + (root / "no_such_dir").string()), 0);
    EXPECT_NE(run("frobnicate"), 0);
}

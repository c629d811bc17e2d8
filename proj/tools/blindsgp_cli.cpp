// blindsgp command-line front end.
//
//   blindsgp simulate --config run.cfg --out data/
//   blindsgp blind    --config run.cfg --data data/ --out result/ [--init pedestal] [--freeze-psf]
//   blindsgp deconv   --config run.cfg --data data/ --out result/
//   blindsgp metrics  --recon result/ --truth data/ [--out metrics.csv]
//   blindsgp selfcheck

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "blindsgp/cli/commands.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string init;
    bool freeze = false;
    std::vector<std::string> overrides;
};

blindsgp::io::RunConfig load(const Common& c)
{
    auto cfg = c.config.empty() ? blindsgp::io::RunConfig{} : blindsgp::io::RunConfig::load(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw blindsgp::Error("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
    }
    if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
    if (!c.init.empty()) cfg.set("blind.init", c.init);
    if (c.freeze) cfg.set("blind.freeze_psf", "true");
    if (!c.out.empty()) cfg.set("output.dir", c.out);
    return cfg;
}

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "overrides run.seed");
    cmd->add_option("--out", c.out, "output directory (overrides output.dir)");
    cmd->add_option("--set", c.overrides, "key=value override, repeatable");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Blind deconvolution of astronomical images (multi-image KL + scaled gradient projection)"};
    app.require_subcommand(1);

    Common sim_opts, blind_opts, deconv_opts;
    std::string blind_data, deconv_data;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic observation set");
    add_common(sim, sim_opts);

    auto* blind = app.add_subcommand("blind", "blind reconstruction of object and PSFs");
    add_common(blind, blind_opts);
    blind->add_option("--data", blind_data, "directory written by simulate")->required()->check(CLI::ExistingDirectory);
    blind->add_option("--init", blind_opts.init, "PSF initialization")
        ->check(CLI::IsMember({"autocorrelation", "pedestal"}));
    blind->add_flag("--freeze-psf", blind_opts.freeze, "keep the initial PSFs fixed");

    auto* deconv = app.add_subcommand("deconv", "object-only deconvolution with the true PSFs in --data");
    add_common(deconv, deconv_opts);
    deconv->add_option("--data", deconv_data, "directory written by simulate")->required()->check(CLI::ExistingDirectory);

    std::string recon_dir, truth_dir, metrics_out;
    auto* metrics = app.add_subcommand("metrics", "score a reconstruction against simulated truth");
    metrics->add_option("--recon", recon_dir, "result directory")->required()->check(CLI::ExistingDirectory);
    metrics->add_option("--truth", truth_dir, "simulation directory")->required()->check(CLI::ExistingDirectory);
    metrics->add_option("--out", metrics_out, "CSV file (default: stdout only)");

    std::uint64_t check_seed = 7;
    auto* selfcheck = app.add_subcommand("selfcheck", "run the projection and gradient oracle checks");
    selfcheck->add_option("--seed", check_seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    using namespace blindsgp;
    try {
        if (*sim) {
            const auto cfg = load(sim_opts);
            const auto files = cli::cmd_simulate(cfg, cfg.str("output.dir"));
            for (const auto& f : files) std::cout << f.string() << "\n";
        } else if (*blind) {
            const auto cfg = load(blind_opts);
            const auto res = cli::cmd_blind(cfg, blind_data, cfg.str("output.dir"));
            std::cout << "outer iterations " << res.outer_done << ", normalized objective "
                      << (res.objective_trace.empty() ? res.initial_objective : res.objective_trace.back()) << "\n";
        } else if (*deconv) {
            const auto cfg = load(deconv_opts);
            const auto res = cli::cmd_blind(cfg, deconv_data, cfg.str("output.dir"), true);
            std::cout << "outer iterations " << res.outer_done << ", normalized objective "
                      << (res.objective_trace.empty() ? res.initial_objective : res.objective_trace.back()) << "\n";
        } else if (*metrics) {
            std::cout << cli::cmd_metrics(recon_dir, truth_dir, metrics_out);
        } else if (*selfcheck) {
            return cli::cmd_selfcheck(std::cout, check_seed) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

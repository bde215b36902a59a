// Command-line driver: one subcommand per experiment kind. Values are
// resolved defaults -> --config file -> explicit flags (flags win), and the
// chosen experiment writes <out>/table_*.csv plus <out>/manifest.json.
// Exit codes: 0 all checks pass, 1 invariant failure, 2 refusal.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msalab/harness.hpp"

namespace {

struct FlagSet {
    std::string config_path;
    msalab::ExperimentConfig values;
    CLI::App* cmd = nullptr;

    bool given(const std::string& flag) const { return cmd->count(flag) > 0; }
};

void register_flags(CLI::App* cmd, FlagSet& fs) {
    fs.cmd = cmd;
    cmd->add_option("--config", fs.config_path, "flat key-value config file");
    cmd->add_option("--seed", fs.values.master_seed, "master seed");
    cmd->add_option("--trials", fs.values.trials, "Monte Carlo trials");
    cmd->add_option("--out", fs.values.out, "output directory");
    cmd->add_flag("--strict", fs.values.strict_mode, "soft warnings become failures");
    cmd->add_option("--workers", fs.values.workers, "worker pool size");
    cmd->add_option("--N", fs.values.N, "particle number of the ensemble");
    cmd->add_option("--n", fs.values.n, "particles in the probed cube");
    cmd->add_option("--d", fs.values.d, "lattice dimension per particle");
    cmd->add_option("--L0", fs.values.L0, "base half-side");
    cmd->add_option("--alpha", fs.values.alpha, "scale-growth exponent");
    cmd->add_option("--r0", fs.values.r0, "interaction radius");
    cmd->add_option("--u0", fs.values.u0, "interaction strength");
    cmd->add_option("--dist", fs.values.dist, "site distribution: uniform | bernoulli");
    cmd->add_option("--dist-scale", fs.values.dist_scale, "distribution scale");
    cmd->add_option("--dist-shift", fs.values.dist_shift, "distribution shift");
    cmd->add_option("--dist-p0", fs.values.dist_p0, "bernoulli weight of value b");
    cmd->add_option("--dist-a", fs.values.dist_a, "bernoulli low value");
    cmd->add_option("--dist-b", fs.values.dist_b, "bernoulli high value");
    cmd->add_option("--mesh-step", fs.values.h, "mesh step (1/h cells per unit)");
    cmd->add_option("--p", fs.values.p, "probability exponent");
    cmd->add_option("--gamma-base", fs.values.gamma_base, "mass prefactor in (0,1)");
    cmd->add_option("--k-max", fs.values.k_max, "induction depth");
    cmd->add_option("--stride", fs.values.stride, "sub-cube scan stride (0 = auto)");
    cmd->add_option("--E-min", fs.values.E_min, "energy window lower edge");
    cmd->add_option("--E-max", fs.values.E_max, "energy window upper edge");
    cmd->add_option("--E-step", fs.values.E_step, "energy sweep step");
    cmd->add_option("--E-star", fs.values.E_star, "energy cutoff for pair statistics");
    cmd->add_option("--dim-cap", fs.values.dim_cap, "largest admissible matrix dimension");
    cmd->add_option("--count", fs.values.count, "states profiled");
    cmd->add_option("--s", fs.values.s, "moment exponent");
    cmd->add_option("--t-points", fs.values.t_points, "time grid points");
    cmd->add_option("--t-min", fs.values.t_min, "first time");
    cmd->add_option("--t-max", fs.values.t_max, "last time");
}

// Copies every flag the user actually passed onto `cfg`.
void apply_flags(const FlagSet& fs, msalab::ExperimentConfig& cfg) {
    const msalab::ExperimentConfig& v = fs.values;
    if (fs.given("--seed")) cfg.master_seed = v.master_seed;
    if (fs.given("--trials")) cfg.trials = v.trials;
    if (fs.given("--out")) cfg.out = v.out;
    if (fs.given("--strict")) cfg.strict_mode = v.strict_mode;
    if (fs.given("--workers")) cfg.workers = v.workers;
    if (fs.given("--N")) cfg.N = v.N;
    if (fs.given("--n")) cfg.n = v.n;
    if (fs.given("--d")) cfg.d = v.d;
    if (fs.given("--L0")) cfg.L0 = v.L0;
    if (fs.given("--alpha")) cfg.alpha = v.alpha;
    if (fs.given("--r0")) cfg.r0 = v.r0;
    if (fs.given("--u0")) cfg.u0 = v.u0;
    if (fs.given("--dist")) cfg.dist = v.dist;
    if (fs.given("--dist-scale")) cfg.dist_scale = v.dist_scale;
    if (fs.given("--dist-shift")) cfg.dist_shift = v.dist_shift;
    if (fs.given("--dist-p0")) cfg.dist_p0 = v.dist_p0;
    if (fs.given("--dist-a")) cfg.dist_a = v.dist_a;
    if (fs.given("--dist-b")) cfg.dist_b = v.dist_b;
    if (fs.given("--mesh-step")) cfg.h = v.h;
    if (fs.given("--p")) cfg.p = v.p;
    if (fs.given("--gamma-base")) cfg.gamma_base = v.gamma_base;
    if (fs.given("--k-max")) cfg.k_max = v.k_max;
    if (fs.given("--stride")) cfg.stride = v.stride;
    if (fs.given("--E-min")) cfg.E_min = v.E_min;
    if (fs.given("--E-max")) cfg.E_max = v.E_max;
    if (fs.given("--E-step")) cfg.E_step = v.E_step;
    if (fs.given("--E-star")) cfg.E_star = v.E_star;
    if (fs.given("--dim-cap")) cfg.dim_cap = v.dim_cap;
    if (fs.given("--count")) cfg.count = v.count;
    if (fs.given("--s")) cfg.s = v.s;
    if (fs.given("--t-points")) cfg.t_points = v.t_points;
    if (fs.given("--t-min")) cfg.t_min = v.t_min;
    if (fs.given("--t-max")) cfg.t_max = v.t_max;
}

int run_kind(const std::string& kind, const FlagSet& fs) {
    msalab::ExperimentConfig cfg;
    cfg.kind = kind;

    // Precedence: defaults < MSA_LAB_WORKERS < config file < flags.
    if (const char* env = std::getenv("MSA_LAB_WORKERS")) {
        int w = 0;
        if (msalab::parse_integer(std::string_view(env), w) && w >= 1) cfg.workers = w;
    }

    if (!fs.config_path.empty()) {
        std::ifstream f(fs.config_path, std::ios::binary);
        if (!f) {
            std::cerr << "cannot open config file: " << fs.config_path << '\n';
            return 2;
        }
        std::ostringstream buf;
        buf << f.rdbuf();
        try {
            cfg = msalab::parse_config(buf.str(), cfg);
        } catch (const std::invalid_argument& e) {
            std::cerr << e.what() << '\n';
            return 2;
        }
        cfg.kind = kind;  // the subcommand names the experiment
    }
    apply_flags(fs, cfg);
    return msalab::run_and_persist(cfg, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiscale disorder laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(msalab::tool_version));

    int rc = 0;
    std::vector<std::unique_ptr<FlagSet>> flag_sets;
    for (const std::string& kind : msalab::experiment_kinds()) {
        CLI::App* cmd = app.add_subcommand(kind, "run the " + kind + " experiment");
        auto fs = std::make_unique<FlagSet>();
        register_flags(cmd, *fs);
        FlagSet* raw = fs.get();
        cmd->callback([kind, raw, &rc] { rc = run_kind(kind, *raw); });
        flag_sets.push_back(std::move(fs));
    }

    CLI11_PARSE(app, argc, argv);
    return rc;
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "msalab/harness.hpp"

using namespace msalab;

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        lines.push_back(text.substr(pos, eol - pos));
        pos = eol + 1;
    }
    return lines;
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    for (;;) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(pos));
            return cells;
        }
        cells.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

bool mentions(const std::vector<std::string>& messages, const std::string& needle) {
    for (const auto& m : messages)
        if (m.find(needle) != std::string::npos) return true;
    return false;
}

ExperimentConfig strong_disorder_base() {
    ExperimentConfig c;
    c.dist = "uniform";
    c.dist_scale = 20.0;
    return c;
}

}  // namespace

TEST_CASE("numbers round-trip through their text form") {
    const double values[] = {0.1,       1e-7, 1.0 / 3.0, 3.141592653589793,
                             1.5e300,   -2.25, 0.0,      123456789.0};
    for (double v : values) {
        double back = 0.0;
        REQUIRE(parse_number(format_number(v), back));
        REQUIRE(back == v);
    }
    long long n = 0;
    REQUIRE(parse_integer(format_integer(-9007199254740993LL), n));
    REQUIRE(n == -9007199254740993LL);

    double dummy = 0.0;
    REQUIRE_FALSE(parse_number("", dummy));
    REQUIRE_FALSE(parse_number("1.5x", dummy));
    REQUIRE_FALSE(parse_integer("3.0", n));
    REQUIRE_FALSE(parse_integer("12 ", n));
}

TEST_CASE("config serialization round-trips every field") {
    ExperimentConfig c;
    c.kind = "msa-run";
    c.N = 3;
    c.n = 2;
    c.d = 2;
    c.L0 = 17;
    c.r0 = 4;
    c.u0 = 0.1;
    c.dist = "bernoulli";
    c.dist_scale = 1e-7;
    c.dist_shift = 2.5;
    c.dist_p0 = 1.0 / 3.0;
    c.dist_a = 0.25;
    c.dist_b = 7.75;
    c.h = 0.5;
    c.p = 6.5;
    c.gamma_base = 0.123456789012345;
    c.k_max = 4;
    c.stride = 9;
    c.E_min = 0.015625;
    c.E_max = 12.3;
    c.E_step = 0.1;
    c.E_star = 3.75;
    c.dim_cap = 999;
    c.trials = 12345;
    c.master_seed = 0xdeadbeefcafef00dULL;
    c.count = 11;
    c.s = 1.5;
    c.t_points = 7;
    c.t_min = 0.001;
    c.t_max = 123456.0;
    c.out = "runs/demo";
    c.strict_mode = true;
    c.workers = 3;

    const ExperimentConfig back = parse_config(serialize_config(c));
    REQUIRE(back == c);

    // Comments and blank lines are skipped, later occurrences win, and the
    // base config supplies everything not mentioned.
    const ExperimentConfig patched = parse_config(
        "# override two keys\n"
        "\n"
        "trials 10\n"
        "trials 20\n"
        "  gamma_base 0.5  \n",
        c);
    REQUIRE(patched.trials == 20);
    REQUIRE(patched.gamma_base == 0.5);
    REQUIRE(patched.kind == c.kind);
    REQUIRE(patched.master_seed == c.master_seed);
}

TEST_CASE("config parse failures are reported together") {
    const std::string text =
        "mystery 3\n"
        "trials lots\n"
        "u0 strong\n"
        "strict maybe\n"
        "orphan\n";
    bool threw = false;
    try {
        parse_config(text);
    } catch (const std::invalid_argument& e) {
        threw = true;
        const std::string what = e.what();
        REQUIRE(what.find("config parse errors:") != std::string::npos);
        REQUIRE(what.find("mystery: unknown key") != std::string::npos);
        REQUIRE(what.find("trials: not an integer") != std::string::npos);
        REQUIRE(what.find("u0: not a number") != std::string::npos);
        REQUIRE(what.find("strict: expected 0/1/true/false") != std::string::npos);
        REQUIRE(what.find("orphan: missing value") != std::string::npos);
    }
    REQUIRE(threw);
}

TEST_CASE("validation lists every offending key") {
    REQUIRE(validate_config(ExperimentConfig{}).empty());

    ExperimentConfig c;
    c.n = 0;
    c.alpha = 1.4;
    c.dist = "gauss";
    c.h = 0.3;
    c.trials = 0;
    c.workers = 0;
    c.t_min = 0.0;
    const std::vector<std::string> bad = validate_config(c);
    const char* keys[] = {"n:", "alpha:", "dist:", "h:", "trials:", "workers:", "t_min:"};
    for (const char* key : keys) {
        bool found = false;
        for (const auto& b : bad)
            if (b.rfind(key, 0) == 0) found = true;
        REQUIRE(found);
    }
    REQUIRE(bad.size() == 7);

    ExperimentConfig shallow;
    shallow.kind = "msa-run";
    shallow.L0 = 2;
    REQUIRE(validate_config(shallow).size() == 1);
    shallow.kind = "wegner";
    REQUIRE(validate_config(shallow).empty());
}

TEST_CASE("csv tables serialize with a mandatory header and LF endings") {
    CsvTable t;
    t.header = {"a", "b"};
    t.add_row({"1", "2"});
    t.add_row({"x", format_number(0.1)});
    const std::string bytes = t.serialize();
    REQUIRE(bytes == "a,b\n1,2\nx,0.1\n");
    REQUIRE(bytes.find('\r') == std::string::npos);
    REQUIRE(bytes == t.serialize());

    REQUIRE_THROWS_AS(t.add_row({"lonely"}), std::logic_error);
}

TEST_CASE("parallel map is independent of the worker count") {
    auto fn = [](long long i) { return format_integer(i * i + 1); };
    const auto lone = parallel_map_ordered(40, 1, fn);
    const auto pooled = parallel_map_ordered(40, 4, fn);
    REQUIRE(lone == pooled);
    REQUIRE(lone.size() == 40);
    REQUIRE(lone[7] == "50");

    REQUIRE(parallel_map_ordered(0, 3, fn).empty());
    REQUIRE_THROWS_AS(parallel_map_ordered(-1, 1, fn), std::invalid_argument);
    REQUIRE_THROWS_AS(parallel_map_ordered(1, 0, fn), std::invalid_argument);
}

TEST_CASE("geometry selftest covers its grid without counterexamples") {
    ExperimentConfig c;
    c.kind = "geometry-selftest";
    c.N = 2;
    c.n = 2;
    c.d = 1;
    c.L0 = 3;
    c.r0 = 1;
    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 0);
    REQUIRE(art.tables.count("table_geometry.csv") == 1);

    const auto lines = split_lines(art.tables.at("table_geometry.csv"));
    REQUIRE(lines.size() == 5);
    REQUIRE(lines[0] == "check,cases,counterexamples");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_cells(lines[i]);
        REQUIRE(cells.size() == 3);
        long long cases = 0;
        REQUIRE(parse_integer(cells[1], cases));
        REQUIRE(cases > 0);
        REQUIRE(cells[2] == "0");
    }
}

TEST_CASE("invalid configs are refused with the full key list") {
    ExperimentConfig c;
    c.kind = "msa-run";
    c.L0 = 2;
    c.trials = 0;
    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 2);
    REQUIRE(art.tables.empty());
    REQUIRE(art.reports.empty());
    REQUIRE(mentions(art.messages, "configuration rejected:"));
    REQUIRE(mentions(art.messages, "L0:"));
    REQUIRE(mentions(art.messages, "trials:"));
    REQUIRE(art.manifest.exit_code == 2);
}

TEST_CASE("msa-run emits its schema and reruns byte-identically") {
    ExperimentConfig c = strong_disorder_base();
    c.kind = "msa-run";
    c.L0 = 6;
    c.k_max = 1;
    c.trials = 3;
    c.master_seed = 0x5;
    c.E_star = 2.5;

    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 0);
    REQUIRE(art.tables.count("table_ds.csv") == 1);
    REQUIRE(art.tables.count("table_diagnostics.csv") == 1);

    const auto ds = split_lines(art.tables.at("table_ds.csv"));
    REQUIRE(ds[0] == "k,n,pair_type,L_k,trials,failures,estimate,ci_lo,ci_hi,paper_bound");
    REQUIRE(ds.size() == 3);  // header + one fi-fi stratum per scale
    for (std::size_t i = 1; i < ds.size(); ++i) REQUIRE(split_cells(ds[i]).size() == 10);
    REQUIRE(split_cells(ds[1])[0] == "0");
    REQUIRE(split_cells(ds[2])[0] == "1");
    REQUIRE(split_cells(ds[2])[3] == "15");

    const auto diag = split_lines(art.tables.at("table_diagnostics.csv"));
    REQUIRE(diag[0] ==
            "k,n,pair_type,L_k,diagnosed,resonant,tunnelling,high_count,out_of_regime,"
            "skipped,identity_holds");
    REQUIRE(diag.size() == ds.size());

    // Ledgered bookkeeping: per-trial seeds and the config hash are pinned by
    // the manifest, and a rerun reproduces every byte.
    REQUIRE(art.manifest.trial_seeds.size() == 3);
    for (long long t = 0; t < 3; ++t)
        REQUIRE(art.manifest.trial_seeds[static_cast<std::size_t>(t)] ==
                trial_seed(c.master_seed, c.kind, t));
    REQUIRE(art.manifest.config_hash == bytes_hash(serialize_config(c)));

    const RunArtifacts again = run_experiment(c);
    REQUIRE(again.tables == art.tables);
    REQUIRE(again.manifest.table_hashes == art.manifest.table_hashes);
    REQUIRE(again.manifest.attestation == art.manifest.attestation);

    // The attestation fingerprints the emitted tables; the seed identity of a
    // run lives in the ledgered trial seeds.
    ExperimentConfig other = c;
    other.master_seed = 0x6;
    const RunArtifacts third = run_experiment(other);
    REQUIRE(third.manifest.trial_seeds != art.manifest.trial_seeds);
    REQUIRE(third.manifest.config_hash != art.manifest.config_hash);
}

TEST_CASE("msa-run refuses oversized strata with a sizing report") {
    ExperimentConfig c = strong_disorder_base();
    c.kind = "msa-run";
    c.N = 2;
    c.n = 2;
    c.L0 = 6;
    c.k_max = 1;
    c.trials = 3;
    c.dim_cap = 100;
    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 2);
    REQUIRE(art.tables.empty());
    REQUIRE(mentions(art.messages, "exceeds the cap"));
    REQUIRE(mentions(art.messages, "k=0 n=1 L=6 dim=13 (fits)"));
    REQUIRE(mentions(art.messages, "k=0 n=2 L=6 dim=169 (exceeds cap 100)"));
    REQUIRE(mentions(art.messages, "k=1 n=2 L=15 dim=961 (exceeds cap 100)"));
}

TEST_CASE("single-cube experiments emit the documented rows") {
    ExperimentConfig w = strong_disorder_base();
    w.kind = "wegner";
    w.L0 = 6;
    w.trials = 10;
    w.master_seed = 7;
    const RunArtifacts wart = run_experiment(w);
    REQUIRE(wart.exit_code == 0);
    const auto wl = split_lines(wart.tables.at("table_wegner.csv"));
    REQUIRE(wl[0] ==
            "L,n,E,trials,single,single_lo,single_hi,pair_fixed,pair_lo,pair_hi,"
            "pair_exists,paper_bound");
    REQUIRE(wl.size() == 2);
    const auto wc = split_cells(wl[1]);
    REQUIRE(wc.size() == 12);
    REQUIRE(wc[0] == "6");
    double bound = 0.0;
    REQUIRE(parse_number(wc[11], bound));
    REQUIRE(bound == wegner_paper_bound(6, w.p, 1, 1));
    double est = -1.0;
    REQUIRE(parse_number(wc[4], est));
    REQUIRE(est >= 0.0);
    REQUIRE(est <= 1.0);

    ExperimentConfig is = strong_disorder_base();
    is.kind = "initial-scale";
    is.L0 = 5;
    is.k_max = 1;
    is.trials = 6;
    is.master_seed = 11;
    const RunArtifacts iart = run_experiment(is);
    REQUIRE(iart.exit_code == 0);
    const auto il = split_lines(iart.tables.at("table_initial_scale.csv"));
    REQUIRE(il[0] ==
            "L,n,m,E_star,singular,sing_lo,sing_hi,bottom,bottom_lo,bottom_hi,exceptions");
    REQUIRE(il.size() == 3);  // header + L0 and the next scale
    REQUIRE(split_cells(il[1])[0] == "5");
    REQUIRE(split_cells(il[2])[0] == "12");
    for (std::size_t i = 1; i < il.size(); ++i) {
        const auto cells = split_cells(il[i]);
        REQUIRE(cells.size() == 11);
        long long exceptions = -1;
        REQUIRE(parse_integer(cells[10], exceptions));
        REQUIRE(exceptions >= 0);
    }
}

TEST_CASE("dynamical runs stay below the stationary bound") {
    ExperimentConfig c = strong_disorder_base();
    c.kind = "dynamical";
    c.L0 = 8;
    c.master_seed = 3;
    c.E_min = 0.0;
    c.E_max = 3.0;
    c.t_points = 6;
    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 0);

    const auto lines = split_lines(art.tables.at("table_moment.csv"));
    REQUIRE(lines[0] == "t,moment,norm");
    REQUIRE(lines.size() == 7);

    const auto& rj = art.reports.at("report_dynamical.json");
    REQUIRE(rj.at("s").get<double>() == 2.0);
    REQUIRE(rj.at("states_in_window").get<int>() >= 1);
    REQUIRE_FALSE(rj.at("s_above_configured").get<bool>());
    const double max_m = rj.at("max_over_grid").get<double>();
    const double stat = rj.at("stationary_upper_bound").get<double>();
    REQUIRE(max_m <= stat * (1.0 + 1e-12));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        double m = -1.0;
        REQUIRE(parse_number(split_cells(lines[i])[1], m));
        REQUIRE(m <= max_m * (1.0 + 1e-12));
    }
}

TEST_CASE("decay profiles tabulate samples and fitted rates") {
    ExperimentConfig c = strong_disorder_base();
    c.kind = "decay-profile";
    c.L0 = 10;
    c.count = 2;
    c.E_min = 0.0;
    c.E_max = 30.0;
    c.master_seed = 21;
    const RunArtifacts art = run_experiment(c);
    REQUIRE(art.exit_code == 0);

    const auto rates = split_lines(art.tables.at("table_rates.csv"));
    REQUIRE(rates[0] == "eigen_index,energy,center,rate,stderr,residual,flagged");
    REQUIRE(rates.size() == 3);
    for (std::size_t i = 1; i < rates.size(); ++i) {
        const auto cells = split_cells(rates[i]);
        REQUIRE(cells.size() == 7);
        double rate = 0.0;
        REQUIRE(parse_number(cells[3], rate));
        REQUIRE(rate > 0.0);
        REQUIRE(cells[6] == "0");
    }

    const auto samples = split_lines(art.tables.at("table_profile.csv"));
    REQUIRE(samples[0] == "eigen_index,energy,distance,log_norm");
    REQUIRE(samples.size() > 3);
}

TEST_CASE("strict mode escalates identity failures to exit 1") {
    ExperimentConfig c;
    c.kind = "msa-run";
    c.dist = "bernoulli";
    c.dist_a = 0.0;
    c.dist_b = 0.0;  // flat potential: every pair fails with no diagnosed event
    c.L0 = 6;
    c.k_max = 0;
    c.trials = 3;
    c.master_seed = 0x91;
    c.E_star = 5.0;

    const RunArtifacts soft = run_experiment(c);
    REQUIRE(soft.exit_code == 0);
    const auto ds = split_lines(soft.tables.at("table_ds.csv"));
    REQUIRE(ds.size() == 2);
    REQUIRE(split_cells(ds[1])[5] == "3");  // failures == trials
    const auto diag = split_cells(split_lines(soft.tables.at("table_diagnostics.csv"))[1]);
    REQUIRE(diag[10] == "0");  // identity does not hold

    ExperimentConfig strict = c;
    strict.strict_mode = true;
    const RunArtifacts hard = run_experiment(strict);
    REQUIRE(hard.exit_code == 1);
    REQUIRE(mentions(hard.messages, "failures outside the diagnosed event set"));
    REQUIRE(hard.tables.at("table_ds.csv") == soft.tables.at("table_ds.csv"));
}

TEST_CASE("persistence writes tables, reports and the manifest") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "msalab_harness_persist";
    fs::remove_all(dir);

    ExperimentConfig c;
    c.kind = "geometry-selftest";
    c.N = 1;
    c.L0 = 2;
    c.out = (dir / "run").string();
    std::ostringstream log;
    REQUIRE(run_and_persist(c, log) == 0);
    REQUIRE(fs::exists(dir / "run" / "table_geometry.csv"));
    REQUIRE(fs::exists(dir / "run" / "manifest.json"));

    const RunArtifacts art = run_experiment(c);
    std::ifstream in(dir / "run" / "table_geometry.csv", std::ios::binary);
    std::stringstream bytes;
    bytes << in.rdbuf();
    REQUIRE(bytes.str() == art.tables.at("table_geometry.csv"));

    // Refusals leave only a manifest behind.
    ExperimentConfig bad = c;
    bad.trials = 0;
    bad.out = (dir / "refused").string();
    std::ostringstream rlog;
    REQUIRE(run_and_persist(bad, rlog) == 2);
    REQUIRE(rlog.str().find("trials:") != std::string::npos);
    REQUIRE(fs::exists(dir / "refused" / "manifest.json"));
    REQUIRE_FALSE(fs::exists(dir / "refused" / "table_geometry.csv"));

    fs::remove_all(dir);
}

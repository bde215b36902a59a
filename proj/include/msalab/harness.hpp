#pragma once

// Experiment harness: flat key-value configuration with lossless round trip,
// locale-free CSV emission, a JSON run manifest with a determinism
// attestation, a worker pool folding results in trial-index order, and the
// dispatcher tying the estimators together. Exit contract: 0 all checks
// pass, 1 invariant failure, 2 validation or sizing refusal.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "msalab/localization.hpp"
#include "msalab/orchestrator.hpp"

namespace msalab {

inline constexpr const char* tool_version = "msa-lab 0.1.0";

// ---------------------------------------------------------------------------
// Locale-free numeric formatting. std::to_chars emits the shortest
// representation that round-trips exactly, with '.' as the only decimal
// separator, so serialized configs and CSV tables are bit-exact everywhere.

inline std::string format_number(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_number: conversion failed");
    return std::string(buf, p);
}

template <class Int>
inline std::string format_integer(Int v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_integer: conversion failed");
    return std::string(buf, p);
}

inline bool parse_number(std::string_view s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && p == e;
}

template <class Int>
inline bool parse_integer(std::string_view s, Int& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && p == e;
}

// FNV-1a over raw bytes; reused for config hashes and table attestations.
inline u64 bytes_hash(std::string_view bytes) { return label_key(bytes); }

// ---------------------------------------------------------------------------
// CSV table with a mandatory header row, '.' decimal, LF line endings.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header.size())
            throw std::logic_error("CsvTable: row width does not match the header");
        rows.push_back(std::move(cells));
    }

    std::string serialize() const {
        std::string out;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out += ',';
            out += header[i];
        }
        out += '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += row[i];
            }
            out += '\n';
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Experiment configuration. Flat key-value text; every field has a key of
// the same name, parse(serialize(c)) == c holds exactly.

struct ExperimentConfig {
    std::string kind = "geometry-selftest";

    // Model parameters.
    int N = 1;
    int n = 1;
    int d = 1;
    i64 L0 = 8;
    double alpha = 1.5;  // scale-growth exponent; the recursion supports 3/2 only
    i64 r0 = 1;
    double u0 = 1.0;
    std::string dist = "uniform";  // uniform | bernoulli
    double dist_scale = 1.0;
    double dist_shift = 0.0;
    double dist_p0 = 0.5;
    double dist_a = 0.0;
    double dist_b = 1.0;
    double h = 1.0;  // mesh step; the cell count per unit length is 1/h

    // Induction parameters.
    double p = 13.0;
    double gamma_base = 0.9;
    int k_max = 1;
    i64 stride = 0;
    double E_min = 0.5;
    double E_max = 1.5;
    double E_step = 0.25;
    double E_star = 2.0;
    i64 dim_cap = 5000;

    // Run parameters.
    long long trials = 8;
    u64 master_seed = 0;
    int count = 5;   // states profiled by decay-profile
    double s = 2.0;  // moment exponent for dynamical
    int t_points = 64;
    double t_min = 0.1;
    double t_max = 1000.0;
    std::string out = "out";
    bool strict_mode = false;
    int workers = 1;

    bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {
        "geometry-selftest", "wegner",        "ct-check", "initial-scale",
        "msa-run",           "decay-profile", "dynamical"};
    return kinds;
}

inline std::string serialize_config(const ExperimentConfig& c) {
    std::string out;
    auto put = [&](std::string_view key, std::string value) {
        out += key;
        out += ' ';
        out += value;
        out += '\n';
    };
    put("kind", c.kind);
    put("N", format_integer(c.N));
    put("n", format_integer(c.n));
    put("d", format_integer(c.d));
    put("L0", format_integer(c.L0));
    put("alpha", format_number(c.alpha));
    put("r0", format_integer(c.r0));
    put("u0", format_number(c.u0));
    put("dist", c.dist);
    put("dist_scale", format_number(c.dist_scale));
    put("dist_shift", format_number(c.dist_shift));
    put("dist_p0", format_number(c.dist_p0));
    put("dist_a", format_number(c.dist_a));
    put("dist_b", format_number(c.dist_b));
    put("h", format_number(c.h));
    put("p", format_number(c.p));
    put("gamma_base", format_number(c.gamma_base));
    put("k_max", format_integer(c.k_max));
    put("stride", format_integer(c.stride));
    put("E_min", format_number(c.E_min));
    put("E_max", format_number(c.E_max));
    put("E_step", format_number(c.E_step));
    put("E_star", format_number(c.E_star));
    put("dim_cap", format_integer(c.dim_cap));
    put("trials", format_integer(c.trials));
    put("master_seed", format_integer(c.master_seed));
    put("count", format_integer(c.count));
    put("s", format_number(c.s));
    put("t_points", format_integer(c.t_points));
    put("t_min", format_number(c.t_min));
    put("t_max", format_number(c.t_max));
    put("out", c.out);
    put("strict", c.strict_mode ? "1" : "0");
    put("workers", format_integer(c.workers));
    return out;
}

// Applies "key value" lines on top of `base`. Blank lines and lines starting
// with '#' are skipped; later occurrences win. Unknown keys and malformed
// values are collected and reported together.
inline ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base = {}) {
    ExperimentConfig c = base;
    std::vector<std::string> errors;

    auto apply = [&](std::string_view key, std::string_view value) {
        auto num = [&](double& field) {
            if (!parse_number(value, field)) errors.push_back(std::string(key) + ": not a number");
        };
        auto integer = [&](auto& field) {
            if (!parse_integer(value, field)) errors.push_back(std::string(key) + ": not an integer");
        };
        if (key == "kind") c.kind = value;
        else if (key == "N") integer(c.N);
        else if (key == "n") integer(c.n);
        else if (key == "d") integer(c.d);
        else if (key == "L0") integer(c.L0);
        else if (key == "alpha") num(c.alpha);
        else if (key == "r0") integer(c.r0);
        else if (key == "u0") num(c.u0);
        else if (key == "dist") c.dist = value;
        else if (key == "dist_scale") num(c.dist_scale);
        else if (key == "dist_shift") num(c.dist_shift);
        else if (key == "dist_p0") num(c.dist_p0);
        else if (key == "dist_a") num(c.dist_a);
        else if (key == "dist_b") num(c.dist_b);
        else if (key == "h") num(c.h);
        else if (key == "p") num(c.p);
        else if (key == "gamma_base") num(c.gamma_base);
        else if (key == "k_max") integer(c.k_max);
        else if (key == "stride") integer(c.stride);
        else if (key == "E_min") num(c.E_min);
        else if (key == "E_max") num(c.E_max);
        else if (key == "E_step") num(c.E_step);
        else if (key == "E_star") num(c.E_star);
        else if (key == "dim_cap") integer(c.dim_cap);
        else if (key == "trials") integer(c.trials);
        else if (key == "master_seed") integer(c.master_seed);
        else if (key == "count") integer(c.count);
        else if (key == "s") num(c.s);
        else if (key == "t_points") integer(c.t_points);
        else if (key == "t_min") num(c.t_min);
        else if (key == "t_max") num(c.t_max);
        else if (key == "out") c.out = value;
        else if (key == "strict") {
            if (value == "0" || value == "false") c.strict_mode = false;
            else if (value == "1" || value == "true") c.strict_mode = true;
            else errors.push_back(std::string(key) + ": expected 0/1/true/false");
        } else if (key == "workers") integer(c.workers);
        else errors.push_back(std::string(key) + ": unknown key");
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
        while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string_view::npos) {
            errors.push_back(std::string(line) + ": missing value");
            continue;
        }
        std::string_view value = line.substr(sp + 1);
        while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        apply(line.substr(0, sp), value);
    }

    if (!errors.empty()) {
        std::string msg = "config parse errors:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::invalid_argument(msg);
    }
    return c;
}

// Returns one entry per offending key; empty means the config is runnable.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> bad;
    auto flag = [&](std::string_view key, std::string_view why) {
        bad.push_back(std::string(key) + ": " + std::string(why));
    };

    if (std::find(experiment_kinds().begin(), experiment_kinds().end(), c.kind) ==
        experiment_kinds().end())
        flag("kind", "not a known experiment");
    if (c.N < 1) flag("N", "must be >= 1");
    if (c.n < 1 || c.n > c.N) flag("n", "must satisfy 1 <= n <= N");
    if (c.d < 1) flag("d", "must be >= 1");
    if (c.L0 < 2) flag("L0", "must be >= 2");
    if (c.alpha != 1.5) flag("alpha", "scale recursion supports exponent 1.5 only");
    if (c.r0 < 0) flag("r0", "must be >= 0");
    if (!(c.u0 >= 0.0)) flag("u0", "must be >= 0");
    if (c.dist != "uniform" && c.dist != "bernoulli") flag("dist", "uniform or bernoulli");
    if (!(c.dist_scale > 0.0)) flag("dist_scale", "must be > 0");
    if (!(c.dist_shift >= 0.0)) flag("dist_shift", "must be >= 0");
    if (!(c.dist_p0 >= 0.0 && c.dist_p0 <= 1.0)) flag("dist_p0", "must lie in [0,1]");
    if (!(c.dist_a >= 0.0)) flag("dist_a", "must be >= 0");
    if (!(c.dist_b >= 0.0)) flag("dist_b", "must be >= 0");
    if (!(c.h > 0.0) || std::abs(1.0 / c.h - std::round(1.0 / c.h)) > 1e-9 ||
        std::round(1.0 / c.h) < 1.0)
        flag("h", "1/h must be a positive integer");
    if (!(c.p > 0.0)) flag("p", "must be > 0");
    if (!(c.gamma_base > 0.0 && c.gamma_base < 1.0)) flag("gamma_base", "must lie in (0,1)");
    if (c.k_max < 0) flag("k_max", "must be >= 0");
    if (c.stride < 0) flag("stride", "must be >= 0");
    if (!(c.E_min <= c.E_max)) flag("E_min", "window must satisfy E_min <= E_max");
    if (!(c.E_step > 0.0)) flag("E_step", "must be > 0");
    if (!(c.E_star == c.E_star)) flag("E_star", "must be finite");
    if (c.dim_cap < 1) flag("dim_cap", "must be >= 1");
    if (c.trials < 1) flag("trials", "must be >= 1");
    if (c.count < 1) flag("count", "must be >= 1");
    if (!(c.s >= 0.0)) flag("s", "must be >= 0");
    if (c.t_points < 1) flag("t_points", "must be >= 1");
    if (!(c.t_min > 0.0 && c.t_min <= c.t_max)) flag("t_min", "need 0 < t_min <= t_max");
    if (c.out.empty()) flag("out", "must not be empty");
    if (c.workers < 1) flag("workers", "must be >= 1");
    if ((c.kind == "msa-run" || c.kind == "initial-scale") && c.L0 < 3)
        flag("L0", "scale schedule needs L0 >= 3");
    return bad;
}

inline Distribution config_distribution(const ExperimentConfig& c) {
    Distribution d;
    d.scale = c.dist_scale;
    d.shift = c.dist_shift;
    if (c.dist == "uniform") {
        d.kind = Distribution::Kind::uniform01;
    } else {
        d.kind = Distribution::Kind::bernoulli;
        d.p0 = c.dist_p0;
        d.a = c.dist_a;
        d.b = c.dist_b;
    }
    return d;
}

inline DiscretizationSpec config_discretization(const ExperimentConfig& c) {
    return DiscretizationSpec{static_cast<int>(std::llround(1.0 / c.h))};
}

// ---------------------------------------------------------------------------
// Worker pool: items are claimed by an atomic counter, results land in their
// own slot, and the caller folds the vector front to back, so the output is
// identical for any worker count.

template <class F>
auto parallel_map_ordered(long long count, int workers, F&& fn)
    -> std::vector<decltype(fn(0LL))> {
    using R = decltype(fn(0LL));
    if (count < 0 || workers < 1)
        throw std::invalid_argument("parallel_map_ordered: bad arguments");
    std::vector<R> results(static_cast<std::size_t>(count));
    if (workers == 1 || count <= 1) {
        for (long long i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = fn(i);
        return results;
    }
    std::atomic<long long> next{0};
    auto worker = [&] {
        for (;;) {
            const long long i = next.fetch_add(1);
            if (i >= count) return;
            results[static_cast<std::size_t>(i)] = fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int spawn = static_cast<int>(std::min<long long>(workers, count));
    pool.reserve(static_cast<std::size_t>(spawn));
    for (int w = 0; w < spawn; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

// ---------------------------------------------------------------------------
// Run manifest: everything needed to audit a run without rerunning it.

struct RunManifest {
    std::string kind;
    u64 config_hash = 0;
    std::string version = tool_version;
    u64 master_seed = 0;
    std::vector<u64> trial_seeds;
    double wall_clock_seconds = 0.0;
    std::map<std::string, u64> table_hashes;
    u64 attestation = 0;  // hash of all emitted tables, order-independent key list
    int exit_code = 0;
    std::vector<std::string> messages;

    nlohmann::json to_json() const {
        auto hex = [](u64 v) {
            char buf[19];
            std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
            return std::string(buf);
        };
        nlohmann::json j;
        j["kind"] = kind;
        j["config_hash"] = hex(config_hash);
        j["tool_version"] = version;
        j["master_seed"] = hex(master_seed);
        nlohmann::json seeds = nlohmann::json::array();
        for (u64 s : trial_seeds) seeds.push_back(hex(s));
        j["trial_seeds"] = std::move(seeds);
        j["wall_clock_seconds"] = wall_clock_seconds;
        nlohmann::json tables = nlohmann::json::object();
        for (const auto& [name, h] : table_hashes) tables[name] = hex(h);
        j["tables"] = std::move(tables);
        j["attestation"] = hex(attestation);
        j["exit_code"] = exit_code;
        j["messages"] = messages;
        return j;
    }
};

// ---------------------------------------------------------------------------
// Experiment results before persistence: named CSV tables plus optional JSON
// reports, so unit tests can inspect a run without touching the filesystem.

struct RunArtifacts {
    int exit_code = 0;
    RunManifest manifest;
    std::map<std::string, std::string> tables;        // file name -> CSV bytes
    std::map<std::string, nlohmann::json> reports;    // file name -> JSON body
    std::vector<std::string> messages;
};

namespace detail {

inline void seal_artifacts(RunArtifacts& art, const ExperimentConfig& cfg, double wall_seconds) {
    art.manifest.kind = cfg.kind;
    art.manifest.config_hash = bytes_hash(serialize_config(cfg));
    art.manifest.master_seed = cfg.master_seed;
    art.manifest.wall_clock_seconds = wall_seconds;
    art.manifest.exit_code = art.exit_code;
    art.manifest.messages = art.messages;
    std::string roll;
    for (const auto& [name, bytes] : art.tables) {
        const u64 h = bytes_hash(bytes);
        art.manifest.table_hashes[name] = h;
        roll += name;
        roll += ':';
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        roll += buf;
        roll += ';';
    }
    art.manifest.attestation = bytes_hash(roll);
}

inline std::vector<u64> ledger_seeds(const ExperimentConfig& cfg) {
    std::vector<u64> seeds;
    seeds.reserve(static_cast<std::size_t>(cfg.trials));
    for (long long t = 0; t < cfg.trials; ++t)
        seeds.push_back(trial_seed(cfg.master_seed, cfg.kind, t));
    return seeds;
}

inline void mc_cells(std::vector<std::string>& row, const MonteCarloReport& r) {
    row.push_back(format_number(r.estimate));
    row.push_back(format_number(r.ci_lo));
    row.push_back(format_number(r.ci_hi));
}

// --- geometry-selftest ------------------------------------------------------

struct GeometryCheck {
    std::string name;
    long long cases = 0;
    long long counterexamples = 0;
};

inline void enumerate_configs(int n, int d, i64 radius,
                              const std::function<void(const ParticleConfig&)>& visit) {
    const int nd = n * d;
    std::vector<i64> c(static_cast<std::size_t>(nd), -radius);
    for (;;) {
        visit(ParticleConfig{n, d, c});
        int axis = 0;
        while (axis < nd && ++c[static_cast<std::size_t>(axis)] > radius) {
            c[static_cast<std::size_t>(axis)] = -radius;
            ++axis;
        }
        if (axis == nd) return;
    }
}

inline std::vector<GeometryCheck> geometry_selftest(int n_max, int d, i64 L_max, i64 r0_max) {
    GeometryCheck decomp{"cluster-decomposition", 0, 0};
    GeometryCheck interact{"interactivity-classification", 0, 0};
    GeometryCheck separ{"separating-partition", 0, 0};
    GeometryCheck excl{"exclusion-cube-count", 0, 0};

    for (int n = 1; n <= n_max; ++n)
        for (i64 L = 1; L <= L_max; ++L) {
            const i64 radius = 2 * L + 1;
            std::vector<ParticleConfig> all;
            enumerate_configs(n, d, radius, [&](const ParticleConfig& x) { all.push_back(x); });

            auto particle_dist = [&](const ParticleConfig& x, int i, int j) {
                i64 best = 0;
                for (int a = 0; a < d; ++a)
                    best = std::max(best, std::abs(x.coords[static_cast<std::size_t>(i * d + a)] -
                                                   x.coords[static_cast<std::size_t>(j * d + a)]));
                return best;
            };

            for (const ParticleConfig& x : all) {
                // Cluster decomposition partitions the particles and keeps
                // distinct clusters farther apart than 2L.
                ++decomp.cases;
                auto cd = cluster_decompose(x, L);
                std::vector<int> seen(static_cast<std::size_t>(n), 0);
                bool ok = true;
                for (const auto& cl : cd.clusters)
                    for (int i : cl) {
                        if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)]++) ok = false;
                    }
                for (int v : seen)
                    if (v != 1) ok = false;
                for (std::size_t a = 0; a + 1 < cd.clusters.size() && ok; ++a)
                    for (std::size_t b = a + 1; b < cd.clusters.size(); ++b) {
                        i64 best = std::numeric_limits<i64>::max();
                        for (int i : cd.clusters[a])
                            for (int j : cd.clusters[b])
                                best = std::min(best, particle_dist(x, i, j));
                        if (best <= 2 * L) ok = false;
                    }
                if (!ok) ++decomp.counterexamples;

                for (i64 r0 = 0; r0 <= r0_max; ++r0) {
                    // Full interactivity is exactly a bounded projection
                    // diameter.
                    ++interact.cases;
                    const Interactivity cls = classify_interactivity(x, L, r0);
                    const bool want_fi = projection_diameter(x) <= static_cast<i64>(n) * (2 * L + r0);
                    if (cls.fully_interactive != want_fi) ++interact.counterexamples;
                }

                if (L > 1) {
                    ++excl.cases;
                    if (exclusion_cube_centers(x, L).empty()) ++excl.counterexamples;
                }
            }

            // A found separating partition certifies separability; sampled
            // rather than all pairs to keep the selftest brisk.
            const std::size_t step = std::max<std::size_t>(1, all.size() / 24);
            for (std::size_t a = 0; a < all.size(); a += step)
                for (std::size_t b = 0; b < all.size(); b += step) {
                    ++separ.cases;
                    auto w = find_separating_partition(all[a], all[b], L, n);
                    // Exhaustive witness sweep: the finder returns a witness
                    // exactly when the distance clause holds and some subset
                    // certifies on either side.
                    bool any = false;
                    if (config_dist(all[a], all[b]) > 7 * static_cast<i64>(n) * L)
                        for (std::uint32_t mask = 1; mask < (1u << n) && !any; ++mask) {
                            const IndexPartition J{n, mask};
                            any = is_J_separable(all[a], all[b], L, J) ||
                                  is_J_separable(all[b], all[a], L, J);
                        }
                    if (w.has_value() != any) {
                        ++separ.counterexamples;
                    } else if (w.has_value()) {
                        const bool certified = w->from_x
                                                   ? is_J_separable(all[a], all[b], L, w->J)
                                                   : is_J_separable(all[b], all[a], L, w->J);
                        if (!certified) ++separ.counterexamples;
                    }
                }
        }
    return {decomp, interact, separ, excl};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment dispatch. Pure function of the config: no filesystem access.

inline RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunArtifacts art;

    const std::vector<std::string> bad = validate_config(cfg);
    if (!bad.empty()) {
        art.exit_code = 2;
        art.messages.push_back("configuration rejected:");
        for (const auto& b : bad) art.messages.push_back("  " + b);
        detail::seal_artifacts(art, cfg, 0.0);
        return art;
    }

    const Distribution dist = config_distribution(cfg);
    const DiscretizationSpec disc = config_discretization(cfg);
    const InteractionSpec inter = step_interaction(cfg.u0, cfg.r0);
    const ModelContext ctx{cfg.N, cfg.d, dist, inter, disc};
    art.manifest.trial_seeds = detail::ledger_seeds(cfg);
    bool invariant_failure = false;

    try {
        if (cfg.kind == "geometry-selftest") {
            auto checks = detail::geometry_selftest(std::min(cfg.n, 3), cfg.d,
                                                    std::min<i64>(cfg.L0, 3), cfg.r0);
            CsvTable t;
            t.header = {"check", "cases", "counterexamples"};
            for (const auto& c : checks) {
                t.add_row({c.name, format_integer(c.cases), format_integer(c.counterexamples)});
                if (c.counterexamples > 0) invariant_failure = true;
            }
            art.tables["table_geometry.csv"] = t.serialize();
        } else if (cfg.kind == "wegner") {
            WegnerReport rep = wegner_cnr_statistic(ctx, cfg.n, cfg.L0, cfg.E_min, cfg.trials,
                                                    cfg.master_seed, cfg.stride);
            CsvTable t;
            t.header = {"L",         "n",         "E",        "trials",
                        "single",    "single_lo", "single_hi", "pair_fixed",
                        "pair_lo",   "pair_hi",   "pair_exists", "paper_bound"};
            std::vector<std::string> row = {format_integer(rep.L), format_integer(rep.n),
                                            format_number(rep.E), format_integer(cfg.trials)};
            detail::mc_cells(row, rep.single);
            detail::mc_cells(row, rep.pair_fixed);
            row.push_back(format_number(rep.pair_exists.estimate));
            row.push_back(format_number(wegner_paper_bound(rep.L, cfg.p, rep.n, cfg.N)));
            t.add_row(std::move(row));
            art.tables["table_wegner.csv"] = t.serialize();
            if (cfg.strict_mode && rep.pair_fixed.successes > rep.single.successes) {
                invariant_failure = true;
                art.messages.push_back("wegner: pair-at-fixed-E exceeded the single-cube count");
            }
        } else if (cfg.kind == "ct-check") {
            struct CtRow {
                u64 seed;
                double E, gamma, eta, max_ratio;
                bool pass;
            };
            const double gammas[] = {0.3, 0.5, 0.9};
            auto one = [&](long long i) {
                const u64 seed = art.manifest.trial_seeds[static_cast<std::size_t>(i)];
                MultiCube cube{ParticleConfig(cfg.n, cfg.d,
                                              std::vector<i64>(
                                                  static_cast<std::size_t>(cfg.n * cfg.d), 0)),
                               cfg.L0};
                RandomFieldSample field = sample_field(seed, projection_box(cube, 0), dist);
                HamiltonianMatrix H = assemble_hamiltonian(cube, field, inter, disc);
                const double bottom = spectrum_bottom(H);
                const double offset =
                    0.5 + 1.5 * uniform01_from_key(key_chain(seed, 0xc7u));
                const double E = bottom - offset;
                const double gamma = gammas[i % 3];
                std::vector<CellPair> pairs;
                const i64 R = cfg.L0;
                for (int j = 0; j < 6; ++j) {
                    auto pick = [&](u64 salt) {
                        std::vector<i64> cpt(static_cast<std::size_t>(cfg.n * cfg.d));
                        for (std::size_t a = 0; a < cpt.size(); ++a)
                            cpt[a] = static_cast<i64>(std::floor(
                                         uniform01_from_key(key_chain(
                                             key_chain(seed, salt), static_cast<u64>(a))) *
                                         static_cast<double>(2 * R + 1))) -
                                     R;
                        return ParticleConfig(cfg.n, cfg.d, std::move(cpt));
                    };
                    pairs.emplace_back(pick(2 * static_cast<u64>(j) + 10),
                                       pick(2 * static_cast<u64>(j) + 11));
                }
                CtReport r = verify_combes_thomas(H, E, gamma, pairs);
                return CtRow{seed, E, gamma, r.eta, r.max_ratio, r.pass};
            };
            auto rows = parallel_map_ordered(cfg.trials, cfg.workers, one);
            CsvTable t;
            t.header = {"instance", "E", "gamma", "eta", "max_ratio", "pass"};
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto& r = rows[i];
                t.add_row({format_integer(static_cast<long long>(i)), format_number(r.E),
                           format_number(r.gamma), format_number(r.eta),
                           format_number(r.max_ratio), r.pass ? "1" : "0"});
                if (!r.pass) invariant_failure = true;
            }
            art.tables["table_ct.csv"] = t.serialize();
        } else if (cfg.kind == "initial-scale") {
            ScaleSchedule sched(cfg.L0, cfg.k_max, cfg.p, cfg.N, cfg.d);
            const double m = mass_m(cfg.gamma_base, cfg.N, cfg.L0);
            CsvTable t;
            t.header = {"L",        "n",        "m",          "E_star",     "singular",
                        "sing_lo",  "sing_hi",  "bottom",     "bottom_lo",  "bottom_hi",
                        "exceptions"};
            for (i64 L : sched.levels) {
                InitialScaleReport rep =
                    initial_scale_probability(ctx, cfg.n, L, m, cfg.trials, cfg.master_seed);
                std::vector<std::string> row = {format_integer(rep.L), format_integer(rep.n),
                                                format_number(rep.m), format_number(rep.E_star)};
                detail::mc_cells(row, rep.singular_event);
                detail::mc_cells(row, rep.bottom_event);
                row.push_back(format_integer(rep.exceptions));
                t.add_row(std::move(row));
                if (cfg.strict_mode && rep.exceptions > 0) {
                    invariant_failure = true;
                    art.messages.push_back("initial-scale: singular trial without the bottom event");
                }
            }
            art.tables["table_initial_scale.csv"] = t.serialize();
        } else if (cfg.kind == "msa-run") {
            ScaleSchedule sched(cfg.L0, cfg.k_max, cfg.p, cfg.N, cfg.d);
            OrchestratorConfig ocfg;
            ocfg.site_dist = dist;
            ocfg.inter = inter;
            ocfg.disc = disc;
            ocfg.gamma_base = cfg.gamma_base;
            ocfg.trials = cfg.trials;
            ocfg.seed = cfg.master_seed;
            ocfg.E_star = cfg.E_star;
            ocfg.dim_cap = cfg.dim_cap;
            ocfg.stride = cfg.stride;
            OrchestratorReport rep = induction_orchestrator(sched, ocfg);

            CsvTable t;
            t.header = {"k",      "n",     "pair_type", "L_k",   "trials",
                        "failures", "estimate", "ci_lo", "ci_hi", "paper_bound"};
            CsvTable diag;
            diag.header = {"k",          "n",          "pair_type",  "L_k",
                           "diagnosed",  "resonant",   "tunnelling", "high_count",
                           "out_of_regime", "skipped", "identity_holds"};
            for (const auto& r : rep.table) {
                t.add_row({format_integer(r.k), format_integer(r.n), pair_type_name(r.type),
                           format_integer(r.L), format_integer(r.estimate.trials),
                           format_integer(r.estimate.failures),
                           format_number(r.estimate.point_estimate),
                           format_number(r.estimate.ci_lo), format_number(r.estimate.ci_hi),
                           format_number(r.estimate.paper_bound)});
                diag.add_row({format_integer(r.k), format_integer(r.n), pair_type_name(r.type),
                              format_integer(r.L), format_integer(r.diag.diagnosed),
                              format_integer(r.diag.r_count), format_integer(r.diag.t_count),
                              format_integer(r.diag.s_count),
                              format_integer(r.diag.out_of_regime),
                              format_integer(r.diag.skipped), r.identity_holds ? "1" : "0"});
                if (cfg.strict_mode && !r.identity_holds) {
                    invariant_failure = true;
                    art.messages.push_back("msa-run: failures outside the diagnosed event set");
                }
            }
            art.tables["table_ds.csv"] = t.serialize();
            art.tables["table_diagnostics.csv"] = diag.serialize();
        } else if (cfg.kind == "decay-profile") {
            MultiCube cube{ParticleConfig(cfg.n, cfg.d,
                                          std::vector<i64>(static_cast<std::size_t>(cfg.n * cfg.d),
                                                           0)),
                           cfg.L0};
            RandomFieldSample field =
                sample_field(trial_seed(cfg.master_seed, cfg.kind, 0), projection_box(cube, 0),
                             dist);
            HamiltonianMatrix H = assemble_hamiltonian(cube, field, inter, disc);
            DecayFitOptions opt;
            opt.m = mass_m(cfg.gamma_base, cfg.N, cfg.L0);
            opt.N = cfg.N;
            auto profiles = eigenfunction_decay_profile(
                H, EnergyWindow{cfg.E_min, cfg.E_max, cfg.E_step, {}}, cfg.count, opt);

            CsvTable samples;
            samples.header = {"eigen_index", "energy", "distance", "log_norm"};
            CsvTable rates;
            rates.header = {"eigen_index", "energy", "center", "rate", "stderr", "residual",
                            "flagged"};
            for (const auto& prof : profiles) {
                for (const auto& smp : prof.samples)
                    samples.add_row({format_integer(prof.eigen_index), format_number(prof.energy),
                                     format_integer(smp.distance),
                                     format_number(smp.norm > 0.0 ? std::log(smp.norm)
                                                                  : -std::numeric_limits<double>::infinity())});
                std::string center;
                for (std::size_t a = 0; a < prof.center.coords.size(); ++a) {
                    if (a) center += ';';
                    center += format_integer(prof.center.coords[a]);
                }
                rates.add_row({format_integer(prof.eigen_index), format_number(prof.energy),
                               center, format_number(prof.fitted_rate),
                               format_number(prof.rate_stderr), format_number(prof.residual),
                               prof.flagged ? "1" : "0"});
                if (cfg.strict_mode && prof.flagged) {
                    invariant_failure = true;
                    art.messages.push_back("decay-profile: state decays slower than the flag threshold");
                }
            }
            art.tables["table_profile.csv"] = samples.serialize();
            art.tables["table_rates.csv"] = rates.serialize();
        } else {  // dynamical
            MultiCube cube{ParticleConfig(cfg.n, cfg.d,
                                          std::vector<i64>(static_cast<std::size_t>(cfg.n * cfg.d),
                                                           0)),
                           cfg.L0};
            RandomFieldSample field =
                sample_field(trial_seed(cfg.master_seed, cfg.kind, 0), projection_box(cube, 0),
                             dist);
            HamiltonianMatrix H = assemble_hamiltonian(cube, field, inter, disc);
            const MultiCube K{cube.center, 1};
            auto grid = log_time_grid(cfg.t_points, cfg.t_min, cfg.t_max);
            DynamicalMomentReport rep = dynamical_moment(
                H, EnergyWindow{cfg.E_min, cfg.E_max, cfg.E_step, {}}, K, cfg.s, grid);

            CsvTable t;
            t.header = {"t", "moment", "norm"};
            for (std::size_t i = 0; i < grid.size(); ++i)
                t.add_row({format_number(rep.t_grid[i]), format_number(rep.moment_at_t[i]),
                           format_number(rep.norm_at_t[i])});
            art.tables["table_moment.csv"] = t.serialize();

            nlohmann::json rj;
            rj["s"] = rep.s;
            rj["E_min"] = rep.E_min;
            rj["E_max"] = rep.E_max;
            rj["states_in_window"] = rep.states_in_window;
            rj["max_over_grid"] = rep.max_over_grid;
            rj["stationary_upper_bound"] = rep.stationary_upper_bound;
            rj["s_above_configured"] = rep.s_above_configured;
            art.reports["report_dynamical.json"] = std::move(rj);
            if (rep.max_over_grid > rep.stationary_upper_bound * (1.0 + 1e-12)) {
                invariant_failure = true;
                art.messages.push_back("dynamical: moment exceeded the stationary bound");
            }
        }
    } catch (const InfeasibleSizeError& e) {
        art.exit_code = 2;
        art.messages.push_back(e.what());
        for (const auto& entry : e.report.entries)
            art.messages.push_back("  k=" + format_integer(entry.k) + " n=" +
                                   format_integer(entry.n) + " L=" + format_integer(entry.L) +
                                   " dim=" + format_number(entry.dim) +
                                   (entry.ok ? " (fits)" : " (exceeds cap " +
                                                               format_integer(e.report.dim_cap) +
                                                               ")"));
        detail::seal_artifacts(
            art, cfg,
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        return art;
    } catch (const std::invalid_argument& e) {
        art.exit_code = 2;
        art.messages.push_back(std::string("configuration rejected: ") + e.what());
        detail::seal_artifacts(
            art, cfg,
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        return art;
    }

    if (invariant_failure) art.exit_code = 1;
    detail::seal_artifacts(
        art, cfg, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return art;
}

// Runs the experiment and writes <out>/table_*.csv, <out>/report_*.json and
// <out>/manifest.json. Returns the exit code.
inline int run_and_persist(const ExperimentConfig& cfg, std::ostream& log) {
    RunArtifacts art = run_experiment(cfg);
    for (const auto& m : art.messages) log << m << '\n';
    if (art.exit_code == 2 && art.tables.empty() && art.reports.empty()) {
        // Refusals still leave an auditable manifest behind when possible.
        std::error_code ec;
        std::filesystem::create_directories(cfg.out, ec);
        if (!ec) {
            std::ofstream mf(std::filesystem::path(cfg.out) / "manifest.json",
                             std::ios::binary);
            mf << art.manifest.to_json().dump(2) << '\n';
        }
        return art.exit_code;
    }

    std::filesystem::create_directories(cfg.out);
    for (const auto& [name, bytes] : art.tables) {
        std::ofstream f(std::filesystem::path(cfg.out) / name, std::ios::binary);
        f << bytes;
        if (!f) {
            log << "failed to write " << name << '\n';
            return 2;
        }
    }
    for (const auto& [name, body] : art.reports) {
        std::ofstream f(std::filesystem::path(cfg.out) / name, std::ios::binary);
        f << body.dump(2) << '\n';
    }
    std::ofstream mf(std::filesystem::path(cfg.out) / "manifest.json", std::ios::binary);
    mf << art.manifest.to_json().dump(2) << '\n';
    if (!mf) {
        log << "failed to write manifest.json\n";
        return 2;
    }
    return art.exit_code;
}

}  // namespace msalab

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "msalab/localization.hpp"

using namespace msalab;

namespace {

Distribution constant_dist(double c) {
    Distribution d;
    d.kind = Distribution::Kind::table;
    d.table_values = {c};
    d.table_weights = {1.0};
    return d;
}

Distribution uniform_dist(double scale = 1.0, double shift = 0.0) {
    Distribution d;
    d.scale = scale;
    d.shift = shift;
    return d;
}

HamiltonianMatrix box_hamiltonian(i64 L, u64 seed, const Distribution& dist, int n = 1, int q = 1,
                                  i64 center = 0) {
    std::vector<i64> xs(static_cast<std::size_t>(n), center);
    MultiCube cube{ParticleConfig{n, 1, std::move(xs)}, L};
    RandomFieldSample field = sample_field(seed, projection_box(cube, 0), dist);
    return assemble_hamiltonian(cube, field, step_interaction(0.0, 0), DiscretizationSpec{q});
}

// Ground energy of the free box: the per-axis value of the discrete
// Dirichlet Laplacian on 2Lq+1 cells, summed over the n*d axes.
double free_box_bottom(i64 L, int q, int axes) {
    const double theta = std::acos(-1.0) / static_cast<double>(2 * L * q + 2);
    return axes * 2.0 * q * q * (1.0 - std::cos(theta));
}

}  // namespace

// ---------------------------------------------------------------------------
// Free-box ground energy.

TEST_CASE("free box ground energy matches the closed form and refines toward the continuum") {
    const i64 L = 8;
    const double cont = std::pow(std::acos(-1.0) / (2.0 * L), 2.0);

    double bottom_q1, bottom_q2;
    {
        HamiltonianMatrix H = box_hamiltonian(L, 0x10, constant_dist(0.0), 1, 1);
        bottom_q1 = eigenvalues_dense(H.mat)(0);
        REQUIRE(bottom_q1 == Catch::Approx(free_box_bottom(L, 1, 1)).margin(1e-12));
    }
    {
        HamiltonianMatrix H = box_hamiltonian(L, 0x10, constant_dist(0.0), 1, 2);
        bottom_q2 = eigenvalues_dense(H.mat)(0);
        REQUIRE(bottom_q2 == Catch::Approx(free_box_bottom(L, 2, 1)).margin(1e-12));
    }
    // Mesh refinement moves the bottom toward the continuum value.
    REQUIRE(std::abs(bottom_q2 - cont) < std::abs(bottom_q1 - cont));

    // Two particles, no interaction: the bottom is the sum over axes.
    HamiltonianMatrix H2 = box_hamiltonian(L, 0x10, constant_dist(0.0), 2, 1);
    REQUIRE(eigenvalues_dense(H2.mat)(0) == Catch::Approx(free_box_bottom(L, 1, 2)).margin(1e-12));
}

// ---------------------------------------------------------------------------
// Bottom-of-spectrum convergence table.

TEST_CASE("ground-state bottoms decrease with the box on matched seeds") {
    ModelContext ctx{2, 1, uniform_dist(20.0), step_interaction(1.0, 1), DiscretizationSpec{1}};
    auto rows = bottom_convergence(ctx, 2, {8, 32}, 5, 0x2b);

    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].L == 8);
    REQUIRE(rows[1].L == 32);
    REQUIRE(rows[0].min == Catch::Approx(4.424418320).margin(1e-6));
    REQUIRE(rows[0].median == Catch::Approx(8.350726156).margin(1e-6));
    REQUIRE(rows[1].min == Catch::Approx(2.483574004).margin(1e-6));
    REQUIRE(rows[1].median == Catch::Approx(3.841708817).margin(1e-6));

    // Sub-box compression: per-trial bottoms never increase with L, hence
    // neither do the aggregates; disorder keeps them strictly positive.
    REQUIRE(rows[1].min <= rows[0].min);
    REQUIRE(rows[1].median <= rows[0].median + 1e-12);
    for (const auto& r : rows) {
        REQUIRE(r.min > 0.0);
        REQUIRE(r.median >= r.min);
    }

    REQUIRE_THROWS_AS(bottom_convergence(ctx, 0, {8, 32}, 5, 0x2b), std::invalid_argument);
    REQUIRE_THROWS_AS(bottom_convergence(ctx, 3, {8, 32}, 5, 0x2b), std::invalid_argument);
    REQUIRE_THROWS_AS(bottom_convergence(ctx, 2, {}, 5, 0x2b), std::invalid_argument);
    REQUIRE_THROWS_AS(bottom_convergence(ctx, 2, {8, 8}, 5, 0x2b), std::invalid_argument);
    REQUIRE_THROWS_AS(bottom_convergence(ctx, 2, {1, 8}, 5, 0x2b), std::invalid_argument);
    REQUIRE_THROWS_AS(bottom_convergence(ctx, 2, {8, 32}, 0, 0x2b), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Eigenfunction decay profiles.

TEST_CASE("decay profiles fit positive rates for localized states") {
    HamiltonianMatrix H = box_hamiltonian(20, 0x51, uniform_dist(20.0));
    DecayFitOptions opt;
    opt.m = 0.5;
    opt.N = 1;
    auto profiles = eigenfunction_decay_profile(H, EnergyWindow{0.0, 50.0, 1.0, {}}, 5, opt);

    REQUIRE(profiles.size() == 5);
    const double want_energy[] = {1.7703, 2.4316, 2.5598, 4.1489, 4.2534};
    const double want_rate[] = {1.4063, 1.7212, 1.9057, 1.4927, 1.7227};
    const i64 want_center[] = {13, 7, -12, -18, 13};
    for (int i = 0; i < 5; ++i) {
        const DecayProfile& p = profiles[static_cast<std::size_t>(i)];
        REQUIRE(p.eigen_index == i);
        REQUIRE(p.energy == Catch::Approx(want_energy[i]).margin(1e-3));
        REQUIRE(p.center.coords[0] == want_center[i]);
        REQUIRE(p.fitted_rate == Catch::Approx(want_rate[i]).margin(1e-3));
        REQUIRE(p.fitted_rate > 0.5);
        REQUIRE(p.rate_stderr > 0.0);
        REQUIRE(p.rate_stderr < 0.1);
        REQUIRE_FALSE(p.flagged);
        REQUIRE(p.fit_lo == 1);
        REQUIRE(p.fit_hi - p.fit_lo + 1 >= 3);
        REQUIRE_FALSE(p.samples.empty());
        // Distances run from the localization center; with the outermost
        // two cell layers excluded they stay within |center| + L - 2.
        for (const auto& s : p.samples) {
            REQUIRE(s.distance >= 0);
            REQUIRE(s.distance <= std::abs(want_center[i]) + 18);
            REQUIRE(s.norm >= 0.0);
        }
        if (i > 0) REQUIRE(p.energy >= profiles[static_cast<std::size_t>(i - 1)].energy);
    }
}

TEST_CASE("the free ground state is extended and gets flagged") {
    HamiltonianMatrix H = box_hamiltonian(20, 0x10, constant_dist(0.0));
    DecayFitOptions opt;
    opt.m = 0.5;
    opt.N = 1;
    auto profiles = eigenfunction_decay_profile(H, EnergyWindow{0.0, 0.01, 1.0, {}}, 1, opt);

    REQUIRE(profiles.size() == 1);
    const DecayProfile& p = profiles[0];
    REQUIRE(p.energy == Catch::Approx(free_box_bottom(20, 1, 1)).margin(1e-12));
    REQUIRE(p.center.coords[0] == 0);
    REQUIRE(p.fitted_rate == Catch::Approx(0.07747).margin(1e-3));
    REQUIRE(p.fitted_rate < 0.1);
    // The fitted rate sits far below the flag threshold of half the
    // expected decay exponent at this mass.
    REQUIRE(p.flagged);
}

TEST_CASE("decay profiling rejects bad requests") {
    HamiltonianMatrix H = box_hamiltonian(20, 0x51, uniform_dist(20.0));
    REQUIRE_THROWS_AS(eigenfunction_decay_profile(H, EnergyWindow{0.0, 50.0, 1.0, {}}, 0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(eigenfunction_decay_profile(H, EnergyWindow{1000.0, 1001.0, 1.0, {}}, 1),
                      std::domain_error);
    HamiltonianMatrix tiny = box_hamiltonian(3, 0x51, uniform_dist(20.0));
    REQUIRE_THROWS_AS(eigenfunction_decay_profile(tiny, EnergyWindow{0.0, 50.0, 1.0, {}}, 1),
                      std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Doubling stability of fitted rates.

TEST_CASE("doubling the box changes fitted decay rates by a bounded fraction") {
    const u64 seeds[] = {0x63, 0x64, 0x6c, 0x6d};
    for (u64 seed : seeds) {
        HamiltonianMatrix H16 = box_hamiltonian(16, seed, uniform_dist(20.0));
        HamiltonianMatrix H32 = box_hamiltonian(32, seed, uniform_dist(20.0));
        auto p16 = eigenfunction_decay_profile(H16, EnergyWindow{0.0, 50.0, 1.0, {}}, 1);
        REQUIRE(p16.size() == 1);

        // A localized state persists under doubling: the same energy shows
        // up in the doubled box and the nearest match carries the rate.
        EnergyWindow w32{p16[0].energy - 0.01, p16[0].energy + 0.01, 1.0, {}};
        auto p32s = eigenfunction_decay_profile(H32, w32, 8);
        const DecayProfile* best = &p32s[0];
        for (const auto& p : p32s)
            if (std::abs(p.energy - p16[0].energy) < std::abs(best->energy - p16[0].energy))
                best = &p;

        REQUIRE(std::abs(best->energy - p16[0].energy) < 1e-9);
        REQUIRE(best->center.coords[0] == p16[0].center.coords[0]);
        const double reldiff = std::abs(best->fitted_rate - p16[0].fitted_rate) /
                               std::max(best->fitted_rate, p16[0].fitted_rate);
        REQUIRE(reldiff < 0.15);
        REQUIRE(p16[0].fitted_rate > 0.5);
        REQUIRE(best->fitted_rate > 0.5);
    }
}

// ---------------------------------------------------------------------------
// Dynamical moments.

TEST_CASE("time-evolved moments stay below the stationary bound") {
    const MultiCube K{ParticleConfig(1, 1, {0}), 1};
    const std::vector<double> grid = log_time_grid(16);

    HamiltonianMatrix Hd = box_hamiltonian(12, 0x71, uniform_dist(20.0));
    const double bd = eigenvalues_dense(Hd.mat)(0);
    auto rd = dynamical_moment(Hd, EnergyWindow{bd, bd + 1.0, 0.25, {}}, K, 2.0, grid);

    HamiltonianMatrix Hf = box_hamiltonian(12, 0x71, constant_dist(0.0));
    const double bf = eigenvalues_dense(Hf.mat)(0);
    auto rf = dynamical_moment(Hf, EnergyWindow{bf, bf + 1.0, 0.25, {}}, K, 2.0, grid);

    REQUIRE(rd.t_grid.size() == grid.size());
    REQUIRE(rd.moment_at_t.size() == grid.size());
    REQUIRE(rd.norm_at_t.size() == grid.size());

    // Single localized state in the disordered window: the moment is
    // t-independent and saturates the stationary bound exactly.
    REQUIRE(rd.states_in_window == 1);
    REQUIRE(rd.max_over_grid == Catch::Approx(0.7120930).margin(1e-6));
    REQUIRE(rd.max_over_grid == Catch::Approx(rd.stationary_upper_bound).epsilon(1e-10));
    for (double nrm : rd.norm_at_t) REQUIRE(nrm == Catch::Approx(0.721423).margin(1e-5));
    const auto [nmin, nmax] = std::minmax_element(rd.norm_at_t.begin(), rd.norm_at_t.end());
    REQUIRE(*nmax - *nmin < 1e-10);  // unitarity keeps the windowed mass constant

    // Free box: several states, transport well below the stationary bound
    // but far above the disordered value.
    REQUIRE(rf.states_in_window == 8);
    REQUIRE(rf.max_over_grid == Catch::Approx(7.164903).margin(1e-4));
    REQUIRE(rf.max_over_grid <= rf.stationary_upper_bound * (1.0 + 1e-12));
    REQUIRE(rf.stationary_upper_bound == Catch::Approx(11.49583).margin(1e-3));
    REQUIRE(rd.max_over_grid * 5.0 < rf.max_over_grid);

    for (std::size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(rd.moment_at_t[i] <= rd.stationary_upper_bound * (1.0 + 1e-12));
        REQUIRE(rf.moment_at_t[i] <= rf.stationary_upper_bound * (1.0 + 1e-12));
    }

    REQUIRE_FALSE(rd.s_above_configured);
    auto rflag = dynamical_moment(Hd, EnergyWindow{bd, bd + 1.0, 0.25, {}}, K, 2.0, grid, 1.5);
    REQUIRE(rflag.s_above_configured);
}

TEST_CASE("zeroth moment reduces to the windowed mass and weights grow with s") {
    const std::vector<double> grid = log_time_grid(8);
    HamiltonianMatrix H = box_hamiltonian(12, 0x71, uniform_dist(20.0));
    const double b = eigenvalues_dense(H.mat)(0);
    const MultiCube K{ParticleConfig(1, 1, {0}), 1};

    auto r0 = dynamical_moment(H, EnergyWindow{b, b + 1.0, 0.25, {}}, K, 0.0, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(r0.moment_at_t[i] == Catch::Approx(r0.norm_at_t[i]).epsilon(1e-12));
        REQUIRE(r0.moment_at_t[i] <= 1.0 + 1e-12);
    }

    // On a box whose cells all sit beyond max-norm 1 the weight grows
    // pointwise with s, hence so does the moment.
    HamiltonianMatrix Hs = box_hamiltonian(12, 0x71, uniform_dist(20.0), 1, 1, 40);
    const double bs = eigenvalues_dense(Hs.mat)(0);
    const MultiCube Ks{ParticleConfig(1, 1, {40}), 1};
    auto r1 = dynamical_moment(Hs, EnergyWindow{bs, bs + 1.0, 0.25, {}}, Ks, 1.0, grid);
    auto r2 = dynamical_moment(Hs, EnergyWindow{bs, bs + 1.0, 0.25, {}}, Ks, 2.0, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(r2.moment_at_t[i] >= r1.moment_at_t[i]);
}

TEST_CASE("dynamical probes reject bad requests and empty windows") {
    const std::vector<double> grid = log_time_grid(4);
    HamiltonianMatrix H = box_hamiltonian(12, 0x71, uniform_dist(20.0));
    const MultiCube K{ParticleConfig(1, 1, {0}), 1};

    auto rempty = dynamical_moment(H, EnergyWindow{-5.0, -4.0, 0.25, {}}, K, 2.0, grid);
    REQUIRE(rempty.states_in_window == 0);
    REQUIRE(rempty.max_over_grid == 0.0);
    REQUIRE(rempty.stationary_upper_bound == 0.0);
    for (double v : rempty.moment_at_t) REQUIRE(v == 0.0);
    for (double v : rempty.norm_at_t) REQUIRE(v == 0.0);

    REQUIRE_THROWS_AS(dynamical_moment(H, EnergyWindow{0.0, 1.0, 0.25, {}}, K, -1.0, grid),
                      std::invalid_argument);
    const MultiCube Kout{ParticleConfig(1, 1, {40}), 1};
    REQUIRE_THROWS_AS(dynamical_moment(H, EnergyWindow{0.0, 1.0, 0.25, {}}, Kout, 2.0, grid),
                      std::invalid_argument);

    REQUIRE_THROWS_AS(log_time_grid(0), std::invalid_argument);
    REQUIRE_THROWS_AS(log_time_grid(4, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(log_time_grid(4, 10.0, 1.0), std::invalid_argument);
    auto one = log_time_grid(1, 2.0, 8.0);
    REQUIRE(one.size() == 1);
    REQUIRE(one[0] == Catch::Approx(2.0));
}

// ---------------------------------------------------------------------------
// Eigenfunction decay inequality across interior cells.

TEST_CASE("eigenfunction decay inequality holds across interior cells") {
    MultiCube big{ParticleConfig(1, 1, {0}), 10};
    RandomFieldSample field = sample_field(0x81, projection_box(big, 0), uniform_dist(20.0));
    InteractionSpec inter = step_interaction(0.0, 0);
    HamiltonianMatrix H = assemble_hamiltonian(big, field, inter, DiscretizationSpec{1});

    Eigen::SelfAdjointEigenSolver<Mat> es(H.dense());
    const double E = es.eigenvalues()(0);
    const Vec psi = es.eigenvectors().col(0);

    double maxr = 0.0;
    for (i64 x = -7; x <= 7; ++x) {
        EdiReport r = verify_edi(H, E, psi, ParticleConfig(1, 1, {x}), 3, field, inter);
        REQUIRE(r.ratio <= 1.0 + 1e-12);
        maxr = std::max(maxr, r.ratio);
    }
    // Tight but not vacuous on this instance.
    REQUIRE(maxr == Catch::Approx(0.980074).margin(1e-4));
    REQUIRE(maxr > 0.5);

    REQUIRE_THROWS_AS(verify_edi(H, E, psi, ParticleConfig(1, 1, {8}), 3, field, inter),
                      std::invalid_argument);
}

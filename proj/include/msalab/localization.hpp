#pragma once

// Observable consequences on finite boxes: ensemble statistics of the
// spectrum bottom, per-cell eigenfunction decay profiles with fitted
// exponential rates, and dynamical moments of initially compressed states
// evolved through the full spectral decomposition.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "msalab/msa.hpp"

namespace msalab {

// ---------------------------------------------------------------------------
// Spectrum-bottom statistics. The trial field is keyed independently of L and
// a larger cube compresses onto a smaller one from the same field, so per
// trial the bottom is non-increasing in L by eigenvalue interlacing; medians
// inherit the ordering up to eigensolver tolerance.

struct BottomRow {
    i64 L = 0;
    double min = 0.0;
    double median = 0.0;
};

inline std::vector<BottomRow> bottom_convergence(const ModelContext& ctx, int n,
                                                 const std::vector<i64>& L_list, long long trials,
                                                 u64 seed) {
    if (n < 1 || n > ctx.N || trials < 1 || L_list.empty())
        throw std::invalid_argument("bottom_convergence: bad arguments");
    for (std::size_t i = 0; i < L_list.size(); ++i)
        if (L_list[i] < 2 || (i > 0 && L_list[i] <= L_list[i - 1]))
            throw std::invalid_argument("bottom_convergence: L-list must increase");

    const std::size_t nd = static_cast<std::size_t>(n) * ctx.d;
    std::vector<std::vector<double>> bottoms(L_list.size());
    for (long long t = 0; t < trials; ++t) {
        const u64 fs = trial_seed(seed, "bottom-convergence", static_cast<u64>(t));
        for (std::size_t i = 0; i < L_list.size(); ++i) {
            const MultiCube cube{ParticleConfig(n, ctx.d, std::vector<i64>(nd, 0)), L_list[i]};
            RandomFieldSample field = sample_field(fs, projection_box(cube, 0), ctx.site_dist);
            const double b = spectrum_bottom(assemble_hamiltonian(cube, field, ctx.inter, ctx.disc));
            if (!(b >= 0.0))
                throw std::logic_error("bottom_convergence: negative bottom from a nonnegative operator");
            bottoms[i].push_back(b);
        }
    }

    std::vector<BottomRow> table;
    for (std::size_t i = 0; i < L_list.size(); ++i) {
        std::vector<double>& v = bottoms[i];
        std::sort(v.begin(), v.end());
        BottomRow row;
        row.L = L_list[i];
        row.min = v.front();
        row.median = (v.size() % 2) ? v[v.size() / 2]
                                    : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
        if (!table.empty() && row.median > table.back().median + 1e-8)
            throw std::logic_error("bottom_convergence: median increased against interlacing");
        table.push_back(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Eigenfunction decay profiles. For an eigenpair of the box, the profile
// holds one sample per lattice cell x: the max-norm distance from the
// localization center against the mass ||1_{C_1(x)} psi|| of the radius-one
// cell neighborhood. The outermost two cell layers of the box are excluded
// from the samples, and the exponential rate is a least-squares fit of the
// log masses over distances [1, r] with r the last nonempty annulus.

struct DecaySample {
    i64 distance = 0;
    double norm = 0.0;
};

struct DecayProfile {
    int eigen_index = 0;  // position in the ascending box spectrum
    double energy = 0.0;
    ParticleConfig center;  // argmax of the cell mass, lexicographic ties
    std::vector<DecaySample> samples;
    i64 fit_lo = 1;
    i64 fit_hi = 0;
    double fitted_rate = 0.0;  // positive means decay per unit distance
    double rate_stderr = 0.0;
    double residual = 0.0;  // RMS of the log-mass fit residuals
    bool flagged = false;   // rate below the configured fraction of gamma
};

struct DecayFitOptions {
    double m = 0.0;  // flag threshold gamma(m, L, n, N); zero disables the flag
    int N = 1;
    double flag_fraction = 0.5;
    double norm_floor = 1e-290;  // samples at or below are left out of the fit
};

namespace detail {

// Odometer over cell offsets in [0, C)^{nd}; returns false after the last.
inline bool advance_cell(std::vector<i64>& o, i64 C) {
    int t = static_cast<int>(o.size()) - 1;
    while (t >= 0 && o[t] == C - 1) o[t--] = 0;
    if (t < 0) return false;
    ++o[t];
    return true;
}

}  // namespace detail

inline std::vector<DecayProfile> eigenfunction_decay_profile(const HamiltonianMatrix& H,
                                                             const EnergyWindow& window, int count,
                                                             const DecayFitOptions& opt = {}) {
    const CubeGrid& g = H.grid;
    const i64 L = g.cube.L;
    const int nd = g.nd;
    if (count < 1) throw std::invalid_argument("eigenfunction_decay_profile: count >= 1 required");
    if (L < 4)
        throw std::invalid_argument("eigenfunction_decay_profile: box too small for a three-annulus fit");
    if (H.dim() > 6000)
        throw std::invalid_argument("eigenfunction_decay_profile: dense eigensolve dimension cap exceeded");

    Eigen::SelfAdjointEigenSolver<Mat> es(H.dense());
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigenfunction_decay_profile: eigensolver failed");
    const Vec& evals = es.eigenvalues();

    std::vector<int> picked;
    for (i64 j = 0; j < evals.size() && static_cast<int>(picked.size()) < count; ++j)
        if (evals(j) >= window.E_min && evals(j) <= window.E_max)
            picked.push_back(static_cast<int>(j));
    if (picked.empty())
        throw std::domain_error("eigenfunction_decay_profile: no eigenvalues in the window");

    // Cell lattice of the box: offsets in [0, C)^{nd} around center - L.
    const i64 C = 2 * L + 1;
    i64 cells = 1;
    for (int t = 0; t < nd; ++t) cells *= C;
    std::vector<i64> cell_stride(static_cast<std::size_t>(nd), 1);
    for (int t = nd - 2; t >= 0; --t) cell_stride[t] = cell_stride[t + 1] * C;

    // Grid point -> flat cell index, computed once.
    std::vector<i64> cell_of_flat(static_cast<std::size_t>(H.dim()));
    {
        std::vector<i64> o(static_cast<std::size_t>(nd), 0);
        for (i64 f = 0; f < H.dim(); ++f) {
            i64 cf = 0;
            for (int t = 0; t < nd; ++t)
                cf += cell_stride[t] * (g.cell_of(t, o[t]) - (g.cube.center.coords[t] - L));
            cell_of_flat[static_cast<std::size_t>(f)] = cf;
            for (int t = nd - 1; t >= 0; --t) {
                if (++o[t] < g.M) break;
                o[t] = 0;
            }
        }
    }

    std::vector<DecayProfile> out;
    std::vector<double> mass2(static_cast<std::size_t>(cells));
    std::vector<double> c1(static_cast<std::size_t>(cells));
    for (int j : picked) {
        const Vec psi = es.eigenvectors().col(j);
        std::fill(mass2.begin(), mass2.end(), 0.0);
        for (i64 f = 0; f < H.dim(); ++f)
            mass2[static_cast<std::size_t>(cell_of_flat[static_cast<std::size_t>(f)])] += psi(f) * psi(f);

        // ||1_{C_1(x)}||^2 per cell: sum of mass2 over the 3^{nd} neighborhood.
        std::vector<i64> o(static_cast<std::size_t>(nd), 0);
        i64 cf = 0;
        do {
            double s = 0.0;
            std::vector<i64> nb(static_cast<std::size_t>(nd), -1);
            for (;;) {
                bool ok = true;
                i64 nf = cf;
                for (int t = 0; t < nd; ++t) {
                    const i64 c = o[t] + nb[t];
                    if (c < 0 || c >= C) {
                        ok = false;
                        break;
                    }
                    nf += cell_stride[t] * nb[t];
                }
                if (ok) s += mass2[static_cast<std::size_t>(nf)];
                int t = nd - 1;
                while (t >= 0 && nb[t] == 1) nb[t--] = -1;
                if (t < 0) break;
                ++nb[t];
            }
            c1[static_cast<std::size_t>(cf)] = std::sqrt(s);
            ++cf;
        } while (detail::advance_cell(o, C));

        DecayProfile prof;
        prof.eigen_index = j;
        prof.energy = evals(j);

        // Localization center: first cell in lexicographic order with the
        // maximal neighborhood mass.
        i64 best = 0;
        for (i64 cidx = 1; cidx < cells; ++cidx)
            if (c1[static_cast<std::size_t>(cidx)] > c1[static_cast<std::size_t>(best)]) best = cidx;
        {
            std::vector<i64> coords(static_cast<std::size_t>(nd));
            i64 r = best;
            for (int t = 0; t < nd; ++t) {
                coords[t] = g.cube.center.coords[t] - L + r / cell_stride[t];
                r %= cell_stride[t];
            }
            prof.center = ParticleConfig(g.cube.n(), g.cube.d(), std::move(coords));
        }

        // Samples over the trimmed box, lexicographic cell order within each
        // distance class.
        std::fill(o.begin(), o.end(), 0);
        cf = 0;
        do {
            i64 edge = 0, dist = 0;
            for (int t = 0; t < nd; ++t) {
                edge = std::max(edge, std::abs(o[t] - L));
                const i64 c = g.cube.center.coords[t] - L + o[t];
                dist = std::max(dist, std::abs(c - prof.center.coords[t]));
            }
            if (edge <= L - 2)
                prof.samples.push_back(DecaySample{dist, c1[static_cast<std::size_t>(cf)]});
            ++cf;
        } while (detail::advance_cell(o, C));
        std::stable_sort(prof.samples.begin(), prof.samples.end(),
                         [](const DecaySample& a, const DecaySample& b) {
                             return a.distance < b.distance;
                         });

        // Least squares of log mass against distance over [1, last annulus].
        prof.fit_hi = prof.samples.back().distance;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        long long pts = 0;
        i64 seen_lo = std::numeric_limits<i64>::max(), seen_hi = -1;
        for (const DecaySample& smp : prof.samples) {
            if (smp.distance < prof.fit_lo || smp.distance > prof.fit_hi) continue;
            if (!(smp.norm > opt.norm_floor)) continue;
            const double x = static_cast<double>(smp.distance);
            const double y = std::log(smp.norm);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++pts;
            seen_lo = std::min(seen_lo, smp.distance);
            seen_hi = std::max(seen_hi, smp.distance);
        }
        if (pts < 3 || seen_hi - seen_lo < 2)
            throw std::domain_error("eigenfunction_decay_profile: fit range spans fewer than three annuli");
        const double det = static_cast<double>(pts) * sxx - sx * sx;
        const double slope = (static_cast<double>(pts) * sxy - sx * sy) / det;
        const double icept = (sy - slope * sx) / static_cast<double>(pts);
        prof.fitted_rate = -slope;

        double ss = 0.0;
        for (const DecaySample& smp : prof.samples) {
            if (smp.distance < prof.fit_lo || smp.distance > prof.fit_hi) continue;
            if (!(smp.norm > opt.norm_floor)) continue;
            const double r = std::log(smp.norm) - (icept + slope * static_cast<double>(smp.distance));
            ss += r * r;
        }
        prof.residual = std::sqrt(ss / static_cast<double>(pts));
        if (pts > 2) {
            const double var = ss / static_cast<double>(pts - 2);
            prof.rate_stderr = std::sqrt(var * static_cast<double>(pts) / det);
        }
        if (opt.m > 0.0)
            prof.flagged =
                prof.fitted_rate < opt.flag_fraction * gamma_of(opt.m, L, g.cube.n(), opt.N);
        out.push_back(std::move(prof));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dynamical moments. The initial state is the normalized indicator of a
// sub-cube K; the window projection keeps eigenpairs inside [E_min, E_max].
// The moment weight is |x|^{s/2} with |x| the absolute max-norm of the cell
// coordinate, and the reported pair brackets the true supremum: the grid
// maximum from below, the stationary triangle-inequality sum from above.

struct DynamicalMomentReport {
    double s = 2.0;
    double E_min = 0.0;
    double E_max = 0.0;
    MultiCube K;
    int states_in_window = 0;
    std::vector<double> t_grid;
    std::vector<double> moment_at_t;
    std::vector<double> norm_at_t;  // t-independent by unitarity
    double max_over_grid = 0.0;
    double stationary_upper_bound = 0.0;
    bool s_above_configured = false;
};

inline std::vector<double> log_time_grid(int points = 64, double t_min = 0.1,
                                         double t_max = 1e3) {
    if (points < 1 || !(t_min > 0.0) || !(t_min <= t_max))
        throw std::invalid_argument("log_time_grid: bad arguments");
    std::vector<double> ts;
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        ts.push_back(t_min * std::pow(t_max / t_min, f));
    }
    return ts;
}

inline DynamicalMomentReport dynamical_moment(
    const HamiltonianMatrix& H, const EnergyWindow& window, const MultiCube& K, double s,
    const std::vector<double>& t_grid,
    double s_star = std::numeric_limits<double>::infinity()) {
    const CubeGrid& g = H.grid;
    if (!(s >= 0.0)) throw std::invalid_argument("dynamical_moment: s >= 0 required");
    if (K.n() != g.cube.n() || K.d() != g.cube.d() ||
        config_dist(K.center, g.cube.center) + K.L > g.cube.L)
        throw std::invalid_argument("dynamical_moment: K not inside the box");
    if (H.dim() > 6000)
        throw std::invalid_argument("dynamical_moment: dense eigensolve dimension cap exceeded");

    DynamicalMomentReport rep;
    rep.s = s;
    rep.E_min = window.E_min;
    rep.E_max = window.E_max;
    rep.K = K;
    rep.t_grid = t_grid;
    rep.s_above_configured = !(s < s_star);

    const std::vector<i64> kidx = g.indices_ball(K.center, K.L);
    Vec psi0 = Vec::Zero(H.dim());
    for (i64 i : kidx) psi0(i) = 1.0;
    psi0 /= std::sqrt(static_cast<double>(kidx.size()));

    Eigen::SelfAdjointEigenSolver<Mat> es(H.dense());
    if (es.info() != Eigen::Success)
        throw std::runtime_error("dynamical_moment: eigensolver failed");
    const Vec& evals = es.eigenvalues();

    std::vector<int> J;
    for (i64 j = 0; j < evals.size(); ++j)
        if (evals(j) >= window.E_min && evals(j) <= window.E_max) J.push_back(static_cast<int>(j));
    rep.states_in_window = static_cast<int>(J.size());

    // |x|^{s/2} per grid point, absolute cell coordinate in the max-norm.
    Vec w(H.dim());
    {
        std::vector<i64> o(static_cast<std::size_t>(g.nd), 0);
        for (i64 f = 0; f < H.dim(); ++f) {
            i64 ax = 0;
            for (int t = 0; t < g.nd; ++t) ax = std::max(ax, std::abs(g.cell_of(t, o[t])));
            w(f) = std::pow(static_cast<double>(ax), 0.5 * s);
            for (int t = g.nd - 1; t >= 0; --t) {
                if (++o[t] < g.M) break;
                o[t] = 0;
            }
        }
    }

    if (J.empty()) {
        rep.moment_at_t.assign(t_grid.size(), 0.0);
        rep.norm_at_t.assign(t_grid.size(), 0.0);
        return rep;
    }

    Mat Vsel(H.dim(), static_cast<i64>(J.size()));
    Vec Esel(static_cast<i64>(J.size())), a(static_cast<i64>(J.size()));
    for (std::size_t c = 0; c < J.size(); ++c) {
        Vsel.col(static_cast<i64>(c)) = es.eigenvectors().col(J[c]);
        Esel(static_cast<i64>(c)) = evals(J[c]);
        a(static_cast<i64>(c)) = Vsel.col(static_cast<i64>(c)).dot(psi0);
    }

    for (std::size_t c = 0; c < J.size(); ++c)
        rep.stationary_upper_bound +=
            std::abs(a(static_cast<i64>(c))) * (w.array() * Vsel.col(static_cast<i64>(c)).array()).matrix().norm();

    for (double t : t_grid) {
        Vec cr(static_cast<i64>(J.size())), ci(static_cast<i64>(J.size()));
        for (i64 c = 0; c < cr.size(); ++c) {
            cr(c) = a(c) * std::cos(Esel(c) * t);
            ci(c) = -a(c) * std::sin(Esel(c) * t);
        }
        const Vec pr = Vsel * cr;
        const Vec pi = Vsel * ci;
        double m2 = 0.0, n2 = 0.0;
        for (i64 f = 0; f < H.dim(); ++f) {
            const double p2 = pr(f) * pr(f) + pi(f) * pi(f);
            m2 += w(f) * w(f) * p2;
            n2 += p2;
        }
        rep.moment_at_t.push_back(std::sqrt(m2));
        rep.norm_at_t.push_back(std::sqrt(n2));
        rep.max_over_grid = std::max(rep.max_over_grid, rep.moment_at_t.back());
    }
    return rep;
}

}  // namespace msalab

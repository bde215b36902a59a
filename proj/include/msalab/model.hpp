#pragma once

// Finite-volume multi-particle Hamiltonians H = -Laplacian + U + V on a
// MultiCube with Dirichlet boundary (realized by truncation). Default grid
// spacing is one lattice unit; optional refinements h = 1/q keep the site
// potential piecewise constant per unit cell.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <vector>

#include "msalab/field.hpp"
#include "msalab/geometry.hpp"
#include "msalab/lattice.hpp"

namespace msalab {

using SpMat = Eigen::SparseMatrix<double>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline i64 floor_div(i64 a, i64 b) {
    i64 t = a / b;
    return (t * b > a) ? t - 1 : t;
}

// Pair interaction of finite range r0: phi(r) for integer r in [0, r0],
// zero beyond. Rational distances (refined grids) use the unit-cell floor.
struct InteractionSpec {
    i64 r0 = 1;
    std::vector<double> phi;  // size r0 + 1

    void validate() const {
        if (r0 < 0 || phi.size() != static_cast<size_t>(r0) + 1)
            throw std::invalid_argument("InteractionSpec: phi must have r0+1 entries");
        for (double v : phi)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument("InteractionSpec: phi values must be finite and >= 0");
    }

    // phi evaluated at distance num/den.
    double eval_scaled(i64 num, i64 den) const {
        if (num > r0 * den) return 0.0;
        return phi[static_cast<size_t>(num / den)];
    }
};

inline InteractionSpec step_interaction(double u0, i64 r0) {
    InteractionSpec s;
    s.r0 = r0;
    s.phi.assign(static_cast<size_t>(r0) + 1, u0);
    s.validate();
    return s;
}

struct DiscretizationSpec {
    int q = 1;  // grid spacing h = 1/q

    void validate() const {
        if (q < 1) throw std::invalid_argument("DiscretizationSpec: q >= 1 required");
    }
};

// Row-major grid over the closed cube: per axis t = particle*d + axis there
// are M = 2Lq+1 points with coordinate (base_num[t] + offset)/q.
struct CubeGrid {
    MultiCube cube;
    int q = 1;
    int nd = 0;
    i64 M = 0;
    std::vector<i64> base_num;    // size nd
    std::vector<i64> center_num;  // size nd

    CubeGrid() = default;
    CubeGrid(const MultiCube& c, int q_) : cube(c), q(q_) {
        nd = c.n() * c.d();
        M = 2 * c.L * q + 1;
        base_num.resize(nd);
        center_num.resize(nd);
        for (int t = 0; t < nd; ++t) {
            center_num[t] = c.center.coords[t] * q;
            base_num[t] = (c.center.coords[t] - c.L) * q;
        }
    }

    i64 dim() const {
        i64 v = 1;
        for (int t = 0; t < nd; ++t) v *= M;
        return v;
    }

    void offsets_of(i64 flat, std::vector<i64>& o) const {
        o.resize(nd);
        for (int t = nd - 1; t >= 0; --t) {
            o[t] = flat % M;
            flat /= M;
        }
    }

    i64 flat_of(const std::vector<i64>& o) const {
        i64 f = 0;
        for (int t = 0; t < nd; ++t) f = f * M + o[t];
        return f;
    }

    i64 coord_num(int t, i64 offset) const { return base_num[t] + offset; }
    i64 cell_of(int t, i64 offset) const { return floor_div(coord_num(t, offset), q); }

    // Offset-space distance to the center, scaled by q (true distance times q).
    i64 center_dist_num(const std::vector<i64>& o) const {
        i64 m = 0;
        for (int t = 0; t < nd; ++t) m = std::max(m, std::abs(coord_num(t, o[t]) - center_num[t]));
        return m;
    }

    template <class Pred>
    std::vector<i64> select(Pred&& keep) const {
        std::vector<i64> idx;
        std::vector<i64> o(nd, 0);
        const i64 n = dim();
        for (i64 f = 0; f < n; ++f) {
            if (keep(o)) idx.push_back(f);
            for (int t = nd - 1; t >= 0; --t) {
                if (++o[t] < M) break;
                o[t] = 0;
            }
        }
        return idx;
    }

    // Interior core: all axes within floor(L/3) of the center.
    std::vector<i64> indices_int() const {
        const i64 r = (cube.L / 3) * q;
        return select([&](const std::vector<i64>& o) {
            for (int t = 0; t < nd; ++t)
                if (std::abs(coord_num(t, o[t]) - center_num[t]) > r) return false;
            return true;
        });
    }

    // Boundary shell of width 2: farther than L-2 from the center.
    std::vector<i64> indices_out() const {
        const i64 r = (cube.L - 2) * q;
        return select([&](const std::vector<i64>& o) { return center_dist_num(o) > r; });
    }

    // Closed ball |x - p| <= radius around a configuration p in Z^{nd}.
    std::vector<i64> indices_ball(const ParticleConfig& p, i64 radius) const {
        return select([&](const std::vector<i64>& o) {
            for (int t = 0; t < nd; ++t)
                if (std::abs(coord_num(t, o[t]) - p.coords[t] * q) > radius * q) return false;
            return true;
        });
    }

    // Half-open unit cell [c, c+1)^{nd}; a single grid point when q = 1.
    std::vector<i64> indices_cell(const ParticleConfig& c) const {
        return select([&](const std::vector<i64>& o) {
            for (int t = 0; t < nd; ++t)
                if (cell_of(t, o[t]) != c.coords[t]) return false;
            return true;
        });
    }
};

struct HamiltonianMatrix {
    CubeGrid grid;
    SpMat mat;
    u64 field_seed = 0;

    i64 dim() const { return mat.rows(); }
    Mat dense() const { return Mat(mat); }
};

inline double site_potential_total(const CubeGrid& g, const RandomFieldSample& field,
                                   const std::vector<i64>& o) {
    const int d = g.cube.d();
    double v = 0.0;
    std::vector<i64> site(d);
    for (int p = 0; p < g.cube.n(); ++p) {
        for (int a = 0; a < d; ++a) site[a] = g.cell_of(p * d + a, o[p * d + a]);
        v += field.value(site);
    }
    return v;
}

inline double interaction_energy_grid(const CubeGrid& g, const InteractionSpec& inter,
                                      const std::vector<i64>& o) {
    const int d = g.cube.d();
    double u = 0.0;
    for (int i = 0; i < g.cube.n(); ++i)
        for (int j = i + 1; j < g.cube.n(); ++j) {
            i64 num = 0;
            for (int a = 0; a < d; ++a)
                num = std::max(num, std::abs(g.coord_num(i * d + a, o[i * d + a]) -
                                             g.coord_num(j * d + a, o[j * d + a])));
            u += inter.eval_scaled(num, g.q);
        }
    return u;
}

// Interaction energy of an integer configuration (grid-independent form).
inline double interaction_energy(const ParticleConfig& x, const InteractionSpec& inter) {
    double u = 0.0;
    for (int i = 0; i < x.n; ++i)
        for (int j = i + 1; j < x.n; ++j) u += inter.eval_scaled(point_dist(x, i, x, j), 1);
    return u;
}

inline HamiltonianMatrix assemble_hamiltonian(const MultiCube& cube, const RandomFieldSample& field,
                                              const InteractionSpec& inter,
                                              const DiscretizationSpec& disc) {
    inter.validate();
    disc.validate();
    // Field must cover every one-particle projection of the cube.
    for (int p = 0; p < cube.n(); ++p)
        for (int a = 0; a < cube.d(); ++a) {
            i64 c = cube.center.coord(p, a);
            if (static_cast<size_t>(a) >= field.region.lo.size() ||
                c - cube.L < field.region.lo[a] || c + cube.L > field.region.hi[a])
                throw std::invalid_argument("assemble_hamiltonian: insufficient field coverage");
        }

    CubeGrid g(cube, disc.q);
    const i64 n = g.dim();
    const double q2 = static_cast<double>(disc.q) * disc.q;
    const double diag_lap = 2.0 * g.nd * q2;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * (g.nd + 1));
    std::vector<i64> o(g.nd, 0);
    std::vector<i64> strides(g.nd, 1);
    for (int t = g.nd - 2; t >= 0; --t) strides[t] = strides[t + 1] * g.M;

    for (i64 f = 0; f < n; ++f) {
        double diag = diag_lap + site_potential_total(g, field, o) +
                      interaction_energy_grid(g, inter, o);
        trip.emplace_back(f, f, diag);
        for (int t = 0; t < g.nd; ++t)
            if (o[t] + 1 < g.M) {
                trip.emplace_back(f, f + strides[t], -q2);
                trip.emplace_back(f + strides[t], f, -q2);
            }
        for (int t = g.nd - 1; t >= 0; --t) {
            if (++o[t] < g.M) break;
            o[t] = 0;
        }
    }

    HamiltonianMatrix H;
    H.grid = g;
    H.field_seed = field.seed;
    H.mat.resize(n, n);
    H.mat.setFromTriplets(trip.begin(), trip.end());
    return H;
}

// Sub-configuration selected by a bitmask witness.
inline ParticleConfig sub_config(const ParticleConfig& u, const IndexPartition& J, bool complement) {
    std::vector<i64> c;
    int cnt = 0;
    for (int p = 0; p < u.n; ++p)
        if (J.contains(p) != complement) {
            ++cnt;
            for (int a = 0; a < u.d; ++a) c.push_back(u.coord(p, a));
        }
    return ParticleConfig(cnt, u.d, std::move(c));
}

struct PiFactors {
    IndexPartition J;         // witness partition on the full index set
    HamiltonianMatrix left;   // particles in J
    HamiltonianMatrix right;  // particles in the complement
};

// Factor Hamiltonians of a partially interactive cube. The projection gap
// exceeds r0, so the cross terms of U vanish identically on the cube and
// the full operator is exactly left x I + I x right.
inline PiFactors assemble_pi_factors(const MultiCube& cube, const RandomFieldSample& field,
                                     const InteractionSpec& inter, const DiscretizationSpec& disc) {
    Interactivity cls = classify_interactivity(cube.center, cube.L, inter.r0);
    if (cls.fully_interactive)
        throw std::invalid_argument("assemble_pi_factors: cube is fully interactive");
    PiFactors out;
    out.J = cls.J;
    MultiCube lc(sub_config(cube.center, cls.J, false), cube.L);
    MultiCube rc(sub_config(cube.center, cls.J, true), cube.L);
    out.left = assemble_hamiltonian(lc, field, inter, disc);
    out.right = assemble_hamiltonian(rc, field, inter, disc);
    return out;
}

inline double gershgorin_lower(const SpMat& A) {
    double lo = std::numeric_limits<double>::infinity();
    for (int k = 0; k < A.outerSize(); ++k) {
        double diag = 0.0, off = 0.0;
        for (SpMat::InnerIterator it(A, k); it; ++it) {
            if (it.row() == it.col())
                diag = it.value();
            else
                off += std::abs(it.value());
        }
        lo = std::min(lo, diag - off);
    }
    return lo;
}

namespace detail {

// Shift-invert Lanczos with full reorthogonalization for the smallest
// eigenvalue; the shift sits strictly below the spectrum so the factored
// operator is positive definite.
inline double bottom_by_shift_invert(const SpMat& A, double tol) {
    const i64 n = A.rows();
    const double sigma = gershgorin_lower(A) - 1.0;
    SpMat B = A;
    for (i64 i = 0; i < n; ++i) B.coeffRef(i, i) -= sigma;
    Eigen::SimplicialLDLT<SpMat> ldlt(B);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("spectrum_bottom: factorization failed");

    Vec v(n);
    for (i64 i = 0; i < n; ++i) v(i) = uniform01_from_key(key_chain(0x9d2c5680u, i)) - 0.5;
    v.normalize();

    double lambda = 0.0;
    for (int round = 0; round < 8; ++round) {
        const int k_max = static_cast<int>(std::min<i64>(n, 60));
        Mat V(n, k_max);
        Vec alpha(k_max), beta(k_max);
        int k = 0;
        Vec w, prev;
        for (; k < k_max; ++k) {
            V.col(k) = v;
            w = ldlt.solve(v);
            if (k > 0) w -= beta(k - 1) * prev;
            alpha(k) = v.dot(w);
            w -= alpha(k) * v;
            // two-pass reorthogonalization keeps the basis numerically clean
            for (int pass = 0; pass < 2; ++pass)
                w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
            beta(k) = w.norm();
            prev = v;
            if (beta(k) < 1e-14) {
                ++k;
                break;
            }
            v = w / beta(k);
        }
        Mat T = Mat::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            T(i, i) = alpha(i);
            if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta(i);
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(T);
        int top = k - 1;  // largest Ritz value of the inverse operator
        Vec y = es.eigenvectors().col(top);
        Vec ritz = V.leftCols(k) * y;
        ritz.normalize();
        lambda = ritz.dot(A * ritz);
        double resid = (A * ritz - lambda * ritz).norm();
        if (resid <= tol) return lambda;
        v = ritz;
    }
    throw std::runtime_error("spectrum_bottom: shift-invert iteration did not converge");
}

}  // namespace detail

inline double spectrum_bottom(const HamiltonianMatrix& H, double tol = 1e-10) {
    const i64 n = H.dim();
    if (n < 1) throw std::invalid_argument("spectrum_bottom: empty matrix");
    if (n == 1) return H.mat.coeff(0, 0);
    if (n <= 1200) {
        Eigen::SelfAdjointEigenSolver<Mat> es(H.dense(), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw std::runtime_error("spectrum_bottom: eigensolver failed");
        return es.eigenvalues()(0);
    }
    return detail::bottom_by_shift_invert(H.mat, tol);
}

}  // namespace msalab

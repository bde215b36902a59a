#pragma once

#include <msalab/model.hpp>
#include <msalab/schedule.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msalab {

// Energy sweep: arithmetic grid from E_min in steps of grid_step, plus
// explicit extra points. Everything outside [E_min, E_max] is dropped.
struct EnergyWindow {
    double E_min = 0.0;
    double E_max = 0.0;
    double grid_step = 1.0;
    std::vector<double> extra_points;

    void validate() const {
        if (!(E_min <= E_max)) throw std::invalid_argument("EnergyWindow: E_min > E_max");
        if (!(grid_step > 0.0)) throw std::invalid_argument("EnergyWindow: grid_step must be positive");
    }

    std::vector<double> points() const {
        validate();
        std::vector<double> xs;
        for (i64 k = 0;; ++k) {
            const double x = E_min + static_cast<double>(k) * grid_step;
            if (x > E_max) break;
            xs.push_back(x);
        }
        for (double e : extra_points)
            if (e >= E_min && e <= E_max) xs.push_back(e);
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        return xs;
    }
};

// One singularity probe of a cube at energy E. The cnr flag is only
// meaningful when filled by a scan; probes set it false.
struct GreenProbe {
    std::string cube_id;
    double E = 0.0;
    double block_norm = 0.0;
    bool resonant = false;
    bool cnr = false;
    bool singular = false;
    double gamma_used = 0.0;
};

inline std::string cube_descriptor(const MultiCube& c) {
    std::ostringstream os;
    os << "n" << c.n() << "d" << c.d() << "L" << c.L << "c(";
    for (std::size_t t = 0; t < c.center.coords.size(); ++t) {
        if (t) os << ";";
        os << c.center.coords[t];
    }
    os << ")";
    return os.str();
}

inline double spectral_norm(const Mat& M) {
    if (M.rows() == 0 || M.cols() == 0) return 0.0;
    Eigen::BDCSVD<Mat> svd(M);
    return svd.singularValues()(0);
}

inline Vec eigenvalues_dense(const SpMat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(A), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalue solve failed");
    return es.eigenvalues();
}

inline double spectral_dist(const Vec& eigs, double E) {
    double best = std::numeric_limits<double>::infinity();
    for (i64 i = 0; i < eigs.size(); ++i) best = std::min(best, std::abs(eigs(i) - E));
    return best;
}

inline double resonance_threshold(i64 L) { return std::exp(-std::sqrt(static_cast<double>(L))); }

inline bool is_resonant(const Vec& eigs, double E, i64 L) {
    return spectral_dist(eigs, E) <= resonance_threshold(L);
}

namespace detail {

// rows x cols block of (H - E)^{-1} via one sparse LU factorization.
inline Mat resolvent_block(const SpMat& H, double E, const std::vector<i64>& cols,
                           const std::vector<i64>& rows) {
    const i64 n = H.rows();
    SpMat id(n, n);
    id.setIdentity();
    SpMat shifted = H - E * id;
    shifted.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw std::runtime_error("resolvent factorization failed");
    Mat rhs = Mat::Zero(n, static_cast<i64>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) rhs(cols[j], static_cast<i64>(j)) = 1.0;
    Mat sol = lu.solve(rhs);
    Mat blk(static_cast<i64>(rows.size()), static_cast<i64>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) blk.row(static_cast<i64>(i)) = sol.row(rows[i]);
    return blk;
}

}  // namespace detail

// ||1_B (H - E)^{-1} 1_A||. H symmetric, so the transposed block has the
// same norm; the smaller side is solved for. Callers check E off-spectrum.
inline double resolvent_block_norm(const SpMat& H, double E, const std::vector<i64>& A,
                                   const std::vector<i64>& B) {
    if (A.empty() || B.empty()) return 0.0;
    const bool swap = A.size() > B.size();
    const std::vector<i64>& cols = swap ? B : A;
    const std::vector<i64>& rows = swap ? A : B;
    return spectral_norm(detail::resolvent_block(H, E, cols, rows));
}

inline double green_block_norm(const SpMat& H, double E, const std::vector<i64>& A,
                               const std::vector<i64>& B) {
    if (spectral_dist(eigenvalues_dense(H), E) <= 1e-12)
        throw std::domain_error("green_block_norm: resolvent undefined, E within 1e-12 of spectrum");
    return resolvent_block_norm(H, E, A, B);
}

inline double green_block_norm(const HamiltonianMatrix& H, double E, const std::vector<i64>& A,
                               const std::vector<i64>& B) {
    return green_block_norm(H.mat, E, A, B);
}

// Caches the spectrum of one assembled cube so repeated probes at many
// energies skip the eigensolve. Read-only after construction.
class ResolventProbe {
public:
    explicit ResolventProbe(HamiltonianMatrix H)
        : H_(std::move(H)), eigs_(eigenvalues_dense(H_.mat)) {}

    const HamiltonianMatrix& hamiltonian() const { return H_; }
    const Vec& eigenvalues() const { return eigs_; }
    double bottom() const { return eigs_(0); }
    double spectral_dist(double E) const { return msalab::spectral_dist(eigs_, E); }
    bool resonant(double E) const {
        return spectral_dist(E) <= resonance_threshold(H_.grid.cube.L);
    }
    double block_norm(double E, const std::vector<i64>& A, const std::vector<i64>& B) const {
        if (spectral_dist(E) <= 1e-12)
            throw std::domain_error("block_norm: resolvent undefined, E within 1e-12 of spectrum");
        return resolvent_block_norm(H_.mat, E, A, B);
    }

private:
    HamiltonianMatrix H_;
    Vec eigs_;
};

// Decay test ||1^{out} G(E) 1^{int}|| > e^{-gamma L}, with resolvent failure
// counted as singular. N is the total particle number of the run.
inline GreenProbe is_singular(const ResolventProbe& probe, double E, double m, int N) {
    const CubeGrid& g = probe.hamiltonian().grid;
    const i64 L = g.cube.L;
    const int n = g.cube.n();
    GreenProbe gp;
    gp.cube_id = cube_descriptor(g.cube);
    gp.E = E;
    gp.gamma_used = gamma_of(m, L, n, N);
    gp.resonant = probe.resonant(E);
    if (probe.spectral_dist(E) <= 1e-12) {
        gp.block_norm = std::numeric_limits<double>::infinity();
        gp.singular = true;
        return gp;
    }
    gp.block_norm = resolvent_block_norm(probe.hamiltonian().mat, E, g.indices_int(), g.indices_out());
    gp.singular = gp.block_norm > singularity_threshold(m, L, n, N);
    return gp;
}

// ---------------------------------------------------------------------------
// Complete non-resonance: no scanned sub-cube C_ell(v) inside C_L(u), with
// ell from the smallest integer satisfying ell^3 >= L^2 up to L, may be
// resonant at E. Centers run over a stride sublattice anchored at -(L-ell)
// per axis, so scan sets nest for divisible strides.

inline i64 default_cnr_stride(i64 L) { return L <= 16 ? 1 : std::max<i64>(1, L / 8); }

inline i64 min_scan_halfside(i64 L) {
    i64 e = 1;
    while (e * e * e < L * L) ++e;
    return e;
}

struct ScannedSubCube {
    i64 ell = 0;
    ParticleConfig center;
};

using Intervals = std::vector<std::pair<double, double>>;

inline Intervals merge_intervals(Intervals xs) {
    std::sort(xs.begin(), xs.end());
    Intervals out;
    for (const auto& iv : xs) {
        if (!out.empty() && iv.first <= out.back().second)
            out.back().second = std::max(out.back().second, iv.second);
        else
            out.push_back(iv);
    }
    return out;
}

// Both inputs sorted and disjoint (as produced by merge_intervals).
inline Intervals intersect_intervals(const Intervals& a, const Intervals& b) {
    Intervals out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].first, b[j].first);
        const double hi = std::min(a[i].second, b[j].second);
        if (lo <= hi) out.emplace_back(lo, hi);
        if (a[i].second < b[j].second) ++i; else ++j;
    }
    return out;
}

inline bool point_in_intervals(const Intervals& xs, double E) {
    for (const auto& iv : xs)
        if (E >= iv.first && E <= iv.second) return true;
    return false;
}

class CnrScanner {
public:
    CnrScanner(const MultiCube& cube, const RandomFieldSample& field, const InteractionSpec& inter,
               DiscretizationSpec disc, i64 stride = 0)
        : cube_(cube), stride_(stride > 0 ? stride : default_cnr_stride(cube.L)) {
        const i64 L = cube_.L;
        const int nd = cube_.n() * cube_.d();
        for (i64 ell = min_scan_halfside(L); ell <= L; ++ell) {
            const i64 R = L - ell;
            std::vector<i64> offs;
            for (i64 o = -R; o <= R; o += stride_) offs.push_back(o);
            std::vector<std::size_t> it(nd, 0);
            while (true) {
                ParticleConfig v = cube_.center;
                for (int t = 0; t < nd; ++t) v.coords[t] += offs[it[t]];
                HamiltonianMatrix h = assemble_hamiltonian(MultiCube{v, ell}, field, inter, disc);
                refs_.push_back(ScannedSubCube{ell, std::move(v)});
                spectra_.push_back(eigenvalues_dense(h.mat));
                int t = nd - 1;
                for (; t >= 0; --t) {
                    if (++it[t] < offs.size()) break;
                    it[t] = 0;
                }
                if (t < 0) break;
            }
        }
    }

    const MultiCube& cube() const { return cube_; }
    i64 stride() const { return stride_; }
    const std::vector<ScannedSubCube>& refs() const { return refs_; }
    const std::vector<Vec>& spectra() const { return spectra_; }

    bool cnr(double E) const {
        for (std::size_t i = 0; i < refs_.size(); ++i)
            if (spectral_dist(spectra_[i], E) <= resonance_threshold(refs_[i].ell)) return false;
        return true;
    }

    // Union of [lambda - t, lambda + t] over all scanned eigenvalues, with t
    // the sub-cube's resonance threshold, clipped to [lo, hi]. E lies in the
    // union iff cnr(E) is false.
    Intervals resonant_intervals(double lo, double hi) const {
        Intervals xs;
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            const double t = resonance_threshold(refs_[i].ell);
            const Vec& ev = spectra_[i];
            for (i64 k = 0; k < ev.size(); ++k) {
                const double a = std::max(lo, ev(k) - t);
                const double b = std::min(hi, ev(k) + t);
                if (a <= b) xs.emplace_back(a, b);
            }
        }
        return merge_intervals(std::move(xs));
    }

private:
    MultiCube cube_;
    i64 stride_ = 1;
    std::vector<ScannedSubCube> refs_;
    std::vector<Vec> spectra_;
};

// One-shot convenience; build a CnrScanner directly when probing many E.
inline bool is_cnr(const MultiCube& cube, const RandomFieldSample& field, const InteractionSpec& inter,
                   DiscretizationSpec disc, double E, i64 stride = 0) {
    return CnrScanner(cube, field, inter, disc, stride).cnr(E);
}

// ---------------------------------------------------------------------------
// Combes-Thomas bound below the spectrum.

inline double combes_thomas_rhs(double eta, double gamma, int D, double r) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::domain_error("combes_thomas_rhs: gamma outside (0,1)");
    if (!(eta > 0.0)) throw std::domain_error("combes_thomas_rhs: eta must be positive");
    return std::exp(gamma * std::sqrt(eta * D)) / ((1.0 - gamma * gamma) * eta) *
           std::exp(-gamma * std::sqrt(eta) * r);
}

struct CtReport {
    double eta = 0.0;
    double max_ratio = 0.0;
    int samples = 0;
    bool pass = false;
};

using CellPair = std::pair<ParticleConfig, ParticleConfig>;

// Checks ||1_x G(E) 1_y|| <= combes_thomas_rhs(eta, gamma, nd, |x - y|) over
// the sampled unit-cell pairs, E strictly below the spectrum, eta the gap.
inline CtReport verify_combes_thomas(const HamiltonianMatrix& H, double E, double gamma,
                                     const std::vector<CellPair>& pairs) {
    const double bottom = spectrum_bottom(H);
    if (!(E < bottom))
        throw std::domain_error("verify_combes_thomas: E not strictly below the spectrum");
    CtReport rep;
    rep.eta = bottom - E;
    const int D = H.grid.nd;

    const i64 n = H.mat.rows();
    SpMat id(n, n);
    id.setIdentity();
    SpMat shifted = H.mat - E * id;
    shifted.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw std::runtime_error("resolvent factorization failed");

    std::map<std::vector<i64>, std::pair<std::vector<i64>, Mat>> cache;  // cell -> (indices, solved columns)
    auto solved = [&](const ParticleConfig& c) -> const std::pair<std::vector<i64>, Mat>& {
        auto it = cache.find(c.coords);
        if (it == cache.end()) {
            std::vector<i64> idx = H.grid.indices_cell(c);
            if (idx.empty())
                throw std::invalid_argument("verify_combes_thomas: cell outside the grid");
            Mat rhs = Mat::Zero(n, static_cast<i64>(idx.size()));
            for (std::size_t j = 0; j < idx.size(); ++j) rhs(idx[j], static_cast<i64>(j)) = 1.0;
            Mat sol = lu.solve(rhs);
            it = cache.emplace(c.coords, std::make_pair(std::move(idx), std::move(sol))).first;
        }
        return it->second;
    };

    for (const auto& [cx, cy] : pairs) {
        const auto& [rows_idx, unused] = solved(cx);
        const auto& [cols_idx, sol] = solved(cy);
        (void)unused;
        (void)cols_idx;
        Mat blk(static_cast<i64>(rows_idx.size()), sol.cols());
        for (std::size_t i = 0; i < rows_idx.size(); ++i)
            blk.row(static_cast<i64>(i)) = sol.row(rows_idx[i]);
        const double lhs = spectral_norm(blk);
        const double r = static_cast<double>(config_dist(cx, cy));
        const double ratio = lhs / combes_thomas_rhs(rep.eta, gamma, D, r);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        ++rep.samples;
    }
    rep.pass = rep.max_ratio <= 1.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Geometric resolvent inequality and eigenfunction decay reports. The hidden
// constants are calibrated empirically from the reported ratios.

namespace detail {

// Map indices of `from` into `to` by matching coordinate numerators.
inline std::vector<i64> embed_indices(const CubeGrid& from, const CubeGrid& to,
                                      const std::vector<i64>& idx) {
    if (from.nd != to.nd || from.q != to.q)
        throw std::invalid_argument("embed_indices: grid shape mismatch");
    std::vector<i64> out;
    out.reserve(idx.size());
    std::vector<i64> o(from.nd), p(to.nd);
    for (i64 f : idx) {
        from.offsets_of(f, o);
        for (int t = 0; t < from.nd; ++t) {
            p[t] = from.coord_num(t, o[t]) - to.base_num[t];
            if (p[t] < 0 || p[t] >= to.M)
                throw std::invalid_argument("embed_indices: site outside the target grid");
        }
        out.push_back(to.flat_of(p));
    }
    return out;
}

inline bool is_subset(const std::vector<i64>& a, std::vector<i64> universe) {
    std::sort(universe.begin(), universe.end());
    for (i64 v : a)
        if (!std::binary_search(universe.begin(), universe.end(), v)) return false;
    return true;
}

}  // namespace detail

struct GriReport {
    double lhs = 0.0;          // ||1_B G_outer 1_A||
    double norm_outer = 0.0;   // ||1_B G_outer 1_{out shell of inner}||
    double norm_inner = 0.0;   // ||1_{out shell} G_inner 1_A||
    double rhs_product = 0.0;
    double ratio = 0.0;
};

// A holds inner-grid indices inside the inner core, B outer-grid indices
// outside the inner cube. Both Hamiltonians must come from the same field.
inline GriReport verify_gri(const HamiltonianMatrix& outer, const HamiltonianMatrix& inner,
                            double E, const std::vector<i64>& A, const std::vector<i64>& B) {
    const CubeGrid& go = outer.grid;
    const CubeGrid& gi = inner.grid;
    if (go.nd != gi.nd || go.q != gi.q)
        throw std::invalid_argument("verify_gri: grid shape mismatch");
    if (outer.field_seed != inner.field_seed)
        throw std::invalid_argument("verify_gri: cubes assembled from different fields");
    if (!(gi.cube.L < go.cube.L) || config_dist(gi.cube.center, go.cube.center) > go.cube.L - gi.cube.L)
        throw std::invalid_argument("verify_gri: inner cube not strictly inside the outer cube");
    if (!detail::is_subset(A, gi.indices_int()))
        throw std::invalid_argument("verify_gri: A not inside the inner core");
    {
        std::vector<i64> o(go.nd);
        for (i64 b : B) {
            go.offsets_of(b, o);
            i64 dist = 0;
            for (int t = 0; t < go.nd; ++t)
                dist = std::max(dist, std::abs(go.coord_num(t, o[t]) - gi.center_num[t]));
            if (dist <= gi.cube.L * gi.q)
                throw std::invalid_argument("verify_gri: B touches the inner cube");
        }
    }
    if (spectral_dist(eigenvalues_dense(outer.mat), E) <= 1e-12 ||
        spectral_dist(eigenvalues_dense(inner.mat), E) <= 1e-12)
        throw std::domain_error("verify_gri: resolvent undefined, E within 1e-12 of a spectrum");

    const std::vector<i64> shell = gi.indices_out();
    const std::vector<i64> shell_outer = detail::embed_indices(gi, go, shell);
    const std::vector<i64> A_outer = detail::embed_indices(gi, go, A);

    GriReport rep;
    rep.lhs = resolvent_block_norm(outer.mat, E, A_outer, B);
    rep.norm_outer = resolvent_block_norm(outer.mat, E, shell_outer, B);
    rep.norm_inner = resolvent_block_norm(inner.mat, E, A, shell);
    rep.rhs_product = rep.norm_outer * rep.norm_inner;
    if (rep.lhs == 0.0)
        rep.ratio = 0.0;
    else
        rep.ratio = rep.rhs_product > 0.0 ? rep.lhs / rep.rhs_product
                                          : std::numeric_limits<double>::infinity();
    return rep;
}

struct EdiReport {
    double lhs = 0.0;         // ||psi on the unit cube at x||
    double block_norm = 0.0;  // ||1^{out} G_sub(E) 1^{int}||
    double outer_mass = 0.0;  // ||psi on the out shell of the sub-cube||
    double ratio = 0.0;
};

// psi lives on the big grid; (E, psi) is typically an eigenpair there. The
// sub-cube C_ell(x) is assembled from the same field and must not have E in
// its spectrum.
inline EdiReport verify_edi(const HamiltonianMatrix& big, double E, const Vec& psi,
                            const ParticleConfig& x, i64 ell, const RandomFieldSample& field,
                            const InteractionSpec& inter) {
    const CubeGrid& g = big.grid;
    if (psi.size() != big.dim()) throw std::invalid_argument("verify_edi: psi dimension mismatch");
    if (big.field_seed != field.seed)
        throw std::invalid_argument("verify_edi: field does not match the assembled cube");
    if (ell < 1 || config_dist(x, g.cube.center) > g.cube.L - ell)
        throw std::invalid_argument("verify_edi: sub-cube not inside the box");

    HamiltonianMatrix sub = assemble_hamiltonian(MultiCube{x, ell}, field, inter,
                                                 DiscretizationSpec{g.q});
    if (spectral_dist(eigenvalues_dense(sub.mat), E) <= 1e-12)
        throw std::domain_error("verify_edi: resolvent undefined on the sub-cube");

    EdiReport rep;
    rep.block_norm = resolvent_block_norm(sub.mat, E, sub.grid.indices_int(), sub.grid.indices_out());

    const std::vector<i64> unit = g.indices_ball(x, 1);
    double s = 0.0;
    for (i64 i : unit) s += psi(i) * psi(i);
    rep.lhs = std::sqrt(s);

    const std::vector<i64> shell = detail::embed_indices(sub.grid, g, sub.grid.indices_out());
    s = 0.0;
    for (i64 i : shell) s += psi(i) * psi(i);
    rep.outer_mass = std::sqrt(s);

    const double denom = rep.block_norm * rep.outer_mass;
    if (rep.lhs == 0.0)
        rep.ratio = 0.0;
    else
        rep.ratio = denom > 0.0 ? rep.lhs / denom : std::numeric_limits<double>::infinity();
    return rep;
}

}  // namespace msalab

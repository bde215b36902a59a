#pragma once

// Integer lattice primitives shared by every module: particle configurations
// in Z^{nd}, max-norm distances, and closed lattice cubes.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace msalab {

using i64 = std::int64_t;

// Ordered tuple of n lattice points in Z^d, flattened particle-major:
// coords[p*d + a] is axis a of particle p.
struct ParticleConfig {
    int n = 0;
    int d = 0;
    std::vector<i64> coords;

    ParticleConfig() = default;
    ParticleConfig(int n_, int d_, std::vector<i64> c) : n(n_), d(d_), coords(std::move(c)) {
        if (n < 1 || d < 1 || coords.size() != static_cast<size_t>(n) * d)
            throw std::invalid_argument("ParticleConfig: bad shape");
    }

    i64 coord(int particle, int axis) const { return coords[static_cast<size_t>(particle) * d + axis]; }

    bool operator==(const ParticleConfig& o) const { return n == o.n && d == o.d && coords == o.coords; }
    bool operator<(const ParticleConfig& o) const { return coords < o.coords; }
};

// Max-norm distance between single points (d consecutive coords).
inline i64 point_dist(const ParticleConfig& x, int i, const ParticleConfig& y, int j) {
    i64 m = 0;
    for (int a = 0; a < x.d; ++a) m = std::max(m, std::abs(x.coord(i, a) - y.coord(j, a)));
    return m;
}

// Max-norm distance in Z^{nd} between whole configurations.
inline i64 config_dist(const ParticleConfig& x, const ParticleConfig& y) {
    if (x.n != y.n || x.d != y.d) throw std::invalid_argument("config_dist: dimension mismatch");
    i64 m = 0;
    for (size_t k = 0; k < x.coords.size(); ++k) m = std::max(m, std::abs(x.coords[k] - y.coords[k]));
    return m;
}

// Diameter of the one-particle projection family: max pairwise point distance.
inline i64 projection_diameter(const ParticleConfig& u) {
    i64 m = 0;
    for (int i = 0; i < u.n; ++i)
        for (int j = i + 1; j < u.n; ++j) m = std::max(m, point_dist(u, i, u, j));
    return m;
}

// Closed one-particle cubes C_L(x_i), C_L(y_j) share a lattice point iff the
// centers are within 2L in the max-norm.
inline bool cubes_overlap(const ParticleConfig& x, int i, const ParticleConfig& y, int j, i64 L) {
    return point_dist(x, i, y, j) <= 2 * L;
}

// Multi-particle cube C_L^{(n)}(u): all z in Z^{nd} with |z - u| <= L.
struct MultiCube {
    ParticleConfig center;
    i64 L = 1;

    MultiCube() = default;
    MultiCube(ParticleConfig c, i64 half_side) : center(std::move(c)), L(half_side) {
        if (L < 1) throw std::invalid_argument("MultiCube: half-side must be >= 1");
    }

    int n() const { return center.n; }
    int d() const { return center.d; }
};

// Axis-aligned box in Z^d, closed on both ends; used for field coverage checks.
struct Box {
    std::vector<i64> lo, hi;  // size d each

    bool contains(const std::vector<i64>& p) const {
        for (size_t a = 0; a < lo.size(); ++a)
            if (p[a] < lo[a] || p[a] > hi[a]) return false;
        return true;
    }
    void absorb(const std::vector<i64>& p) {
        if (lo.empty()) { lo = p; hi = p; return; }
        for (size_t a = 0; a < lo.size(); ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
};

// Bounding box of all one-particle projections of a cube, padded by `pad`.
inline Box projection_box(const MultiCube& cube, i64 pad) {
    Box b;
    for (int i = 0; i < cube.n(); ++i) {
        std::vector<i64> p(cube.d());
        for (int a = 0; a < cube.d(); ++a) p[a] = cube.center.coord(i, a);
        b.absorb(p);
    }
    for (int a = 0; a < cube.d(); ++a) {
        b.lo[a] -= cube.L + pad;
        b.hi[a] += cube.L + pad;
    }
    return b;
}

}  // namespace msalab

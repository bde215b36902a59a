#pragma once

// Pure combinatorics of multi-particle cubes in the max-norm: cluster
// decompositions, separability witnesses, exclusion-cube enumeration,
// interactivity classification, and singular-cube counting.
//
// Conventions fixed here and relied on everywhere else:
//   * cubes are closed lattice cubes; two cubes intersect iff they share a
//     lattice point, i.e. centers within 2L;
//   * witness subsets are reported as the smallest bitmask in ascending
//     integer order (bit p <-> particle index p).

#include <cstdint>
#include <optional>
#include <vector>

#include "msalab/lattice.hpp"

namespace msalab {

// Nonempty subset J of {0,..,n-1} with its complement implied.
struct IndexPartition {
    int n = 0;
    std::uint32_t mask = 0;

    bool contains(int i) const { return (mask >> i) & 1u; }
    int size() const {
        int c = 0;
        for (int i = 0; i < n; ++i) c += contains(i);
        return c;
    }
};

struct ClusterDecomposition {
    std::vector<std::vector<int>> clusters;  // each sorted; ordered by smallest member
};

// Maximal decomposition into L-clusters: i,j belong to one cluster iff
// C_L(y_i) and C_L(y_j) are linked by a chain of pairwise overlapping cubes.
inline ClusterDecomposition cluster_decompose(const ParticleConfig& y, i64 L) {
    if (L < 1) throw std::invalid_argument("cluster_decompose: L >= 1 required");
    std::vector<int> parent(y.n);
    for (int i = 0; i < y.n; ++i) parent[i] = i;
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int i = 0; i < y.n; ++i)
        for (int j = i + 1; j < y.n; ++j)
            if (cubes_overlap(y, i, y, j, L)) parent[find(i)] = find(j);

    std::vector<std::vector<int>> buckets(y.n);
    for (int i = 0; i < y.n; ++i) buckets[find(i)].push_back(i);
    ClusterDecomposition out;
    for (auto& b : buckets)
        if (!b.empty()) out.clusters.push_back(std::move(b));
    std::sort(out.clusters.begin(), out.clusters.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

// True iff (U_{j in J} C_L(x_j)) avoids every C_L(x_i), i not in J, and every
// C_L(y_i). Closed-cube semantics: avoidance means center distance > 2L.
inline bool is_J_separable(const ParticleConfig& x, const ParticleConfig& y, i64 L,
                           const IndexPartition& J) {
    if (x.n != y.n || x.d != y.d) throw std::invalid_argument("is_J_separable: dimension mismatch");
    for (int j = 0; j < x.n; ++j) {
        if (!J.contains(j)) continue;
        for (int i = 0; i < x.n; ++i)
            if (!J.contains(i) && cubes_overlap(x, j, x, i, L)) return false;
        for (int i = 0; i < y.n; ++i)
            if (cubes_overlap(x, j, y, i, L)) return false;
    }
    return true;
}

struct SeparationWitness {
    bool from_x = true;  // witness subset lives on the x side if true
    IndexPartition J;
};

// Pair separability: distance clause |x-y| > 7NL plus a witness subset on
// either side. Scans bitmasks ascending, x side before y side per mask.
inline std::optional<SeparationWitness> find_separating_partition(const ParticleConfig& x,
                                                                  const ParticleConfig& y, i64 L,
                                                                  int N) {
    if (x.n != y.n || x.d != y.d)
        throw std::invalid_argument("find_separating_partition: dimension mismatch");
    if (N < x.n) throw std::invalid_argument("find_separating_partition: N >= n required");
    if (config_dist(x, y) <= 7 * static_cast<i64>(N) * L) return std::nullopt;
    const std::uint32_t full = (x.n >= 32) ? 0xffffffffu : ((1u << x.n) - 1u);
    for (std::uint32_t m = 1; m <= full; ++m) {
        IndexPartition J{x.n, m};
        if (is_J_separable(x, y, L, J)) return SeparationWitness{true, J};
        if (is_J_separable(y, x, L, J)) return SeparationWitness{false, J};
    }
    return std::nullopt;
}

inline bool pair_separable(const ParticleConfig& x, const ParticleConfig& y, i64 L, int N) {
    return find_separating_partition(x, y, L, N).has_value();
}

// Exclusion-cube centers: all n^n tuples (x_{s(1)},..,x_{s(n)}) over index
// maps s, deduplicated. The associated cubes have half-side 2nL; any y with
// |y-x| > 7NL outside their union is separable from x.
inline std::vector<ParticleConfig> exclusion_cube_centers(const ParticleConfig& x, i64 L) {
    if (L <= 1) throw std::invalid_argument("exclusion_cube_centers: L > 1 required");
    std::vector<ParticleConfig> out;
    std::vector<int> sigma(x.n, 0);
    for (;;) {
        std::vector<i64> c(static_cast<size_t>(x.n) * x.d);
        for (int p = 0; p < x.n; ++p)
            for (int a = 0; a < x.d; ++a) c[static_cast<size_t>(p) * x.d + a] = x.coord(sigma[p], a);
        out.emplace_back(x.n, x.d, std::move(c));
        int p = x.n - 1;
        while (p >= 0 && sigma[p] == x.n - 1) sigma[p--] = 0;
        if (p < 0) break;
        ++sigma[p];
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline i64 kappa(int n) {
    i64 k = 1;
    for (int i = 0; i < n; ++i) k *= n;
    return k;
}

struct Interactivity {
    bool fully_interactive = true;
    IndexPartition J;  // valid only when partially interactive
};

// Fully interactive iff the projection diameter is at most n(2L+r0);
// otherwise returns the smallest witness J whose cross-pair projection
// cubes keep a gap above the interaction range r0.
inline Interactivity classify_interactivity(const ParticleConfig& u, i64 L, i64 r0) {
    if (r0 < 0 || L < 1) throw std::invalid_argument("classify_interactivity: bad L or r0");
    if (projection_diameter(u) <= static_cast<i64>(u.n) * (2 * L + r0)) return {true, {}};
    const std::uint32_t full = (1u << u.n) - 1u;
    for (std::uint32_t m = 1; m < full; ++m) {
        bool ok = true;
        for (int i = 0; i < u.n && ok; ++i) {
            if (!((m >> i) & 1u)) continue;
            for (int j = 0; j < u.n && ok; ++j)
                if (!((m >> j) & 1u) && point_dist(u, i, u, j) <= 2 * L + r0) ok = false;
        }
        if (ok) return {false, IndexPartition{u.n, m}};
    }
    throw std::logic_error("classify_interactivity: no witness for a wide configuration");
}

// Disjointness of the one-particle projection unions of two fully
// interactive cubes. Both inputs must classify FI.
inline bool fi_projection_disjoint(const ParticleConfig& x, const ParticleConfig& y, i64 L, i64 r0) {
    if (!classify_interactivity(x, L, r0).fully_interactive ||
        !classify_interactivity(y, L, r0).fully_interactive)
        throw std::invalid_argument("fi_projection_disjoint: both cubes must be fully interactive");
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < y.n; ++j)
            if (cubes_overlap(x, i, y, j, L)) return false;
    return true;
}

struct SingularCounts {
    int M = 0;
    int M_sep = 0;
    int M_pi = 0;
    int M_pi_sep = 0;
    int M_fi = 0;
};

namespace detail {

// Exact maximum clique by branch and bound over an adjacency mask table.
inline void max_clique(const std::vector<std::uint64_t>& adj, std::uint64_t cand, int depth,
                       int& best) {
    if (depth > best) best = depth;
    while (cand) {
        if (depth + __builtin_popcountll(cand) <= best) return;
        int v = __builtin_ctzll(cand);
        cand &= cand - 1;
        max_clique(adj, cand & adj[v], depth + 1, best);
    }
}

inline int largest_compatible_subset(const std::vector<int>& idx,
                                     const std::vector<std::vector<bool>>& compat) {
    if (idx.empty()) return 0;
    if (idx.size() > 64) throw std::invalid_argument("count_singular_maxima: center list too large");
    std::vector<std::uint64_t> adj(idx.size(), 0);
    for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = 0; b < idx.size(); ++b)
            if (a != b && compat[idx[a]][idx[b]]) adj[a] |= 1ull << b;
    std::uint64_t all = (idx.size() == 64) ? ~0ull : ((1ull << idx.size()) - 1);
    int best = 0;
    max_clique(adj, all, 0, best);
    return best;
}

}  // namespace detail

// Counting record over a family of singular cube centers. Distance-based
// counters require pairwise separation above 7NL; the *_sep variants require
// a separability witness for every pair.
inline SingularCounts count_singular_maxima(const std::vector<ParticleConfig>& centers,
                                            const std::vector<bool>& is_pi, i64 L, int N) {
    if (centers.size() != is_pi.size())
        throw std::invalid_argument("count_singular_maxima: flag list size mismatch");
    SingularCounts out;
    if (centers.empty()) return out;
    const int c = static_cast<int>(centers.size());
    std::vector<std::vector<bool>> far(c, std::vector<bool>(c, false));
    std::vector<std::vector<bool>> sep(c, std::vector<bool>(c, false));
    for (int a = 0; a < c; ++a)
        for (int b = a + 1; b < c; ++b) {
            far[a][b] = far[b][a] = config_dist(centers[a], centers[b]) > 7 * static_cast<i64>(N) * L;
            sep[a][b] = sep[b][a] = pair_separable(centers[a], centers[b], L, N);
        }
    std::vector<int> all(c), pi, fi;
    for (int i = 0; i < c; ++i) {
        all[i] = i;
        (is_pi[i] ? pi : fi).push_back(i);
    }
    out.M = detail::largest_compatible_subset(all, far);
    out.M_sep = detail::largest_compatible_subset(all, sep);
    out.M_pi = detail::largest_compatible_subset(pi, far);
    out.M_pi_sep = detail::largest_compatible_subset(pi, sep);
    out.M_fi = detail::largest_compatible_subset(fi, far);
    return out;
}

}  // namespace msalab

#pragma once

// Scale recursion L_k = floor(L_{k-1}^{3/2}) + 1 in exact integer arithmetic,
// and the decay-mass functions gamma(m, L, n) used by every singularity test.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msalab/lattice.hpp"

namespace msalab {

// floor(sqrt(v)) for 128-bit operands; Newton iteration on integers.
inline i64 isqrt_floor(unsigned __int128 v) {
    if (v == 0) return 0;
    unsigned __int128 x = v, y = (x + 1) >> 1;
    while (y < x) {
        x = y;
        y = (x + v / x) >> 1;
    }
    return static_cast<i64>(x);
}

// floor(L^{3/2}) + 1, exact: floor(L^{3/2}) = floor(sqrt(L^3)).
inline i64 next_scale(i64 L) {
    unsigned __int128 cube = static_cast<unsigned __int128>(L) * L * L;
    return isqrt_floor(cube) + 1;
}

inline std::vector<i64> scale_sequence(i64 L0, int k_max) {
    if (L0 < 3) throw std::invalid_argument("scale_sequence: L0 >= 3 required");
    if (k_max < 0) throw std::invalid_argument("scale_sequence: k_max >= 0 required");
    std::vector<i64> out{L0};
    for (int k = 1; k <= k_max; ++k) out.push_back(next_scale(out.back()));
    return out;
}

// m = 2^{-N} * gamma_base * L0^{-1/4} / (3*sqrt(2)).
inline double mass_m(double gamma_base, int N, i64 L0) {
    if (!(gamma_base > 0.0 && gamma_base < 1.0))
        throw std::invalid_argument("mass_m: gamma_base in (0,1) required");
    if (N < 1 || L0 < 1) throw std::invalid_argument("mass_m: N >= 1 and L0 >= 1 required");
    return std::ldexp(gamma_base, -N) * std::pow(static_cast<double>(L0), -0.25) /
           (3.0 * std::sqrt(2.0));
}

// gamma(m, L, n) = m * (1 + L^{-1/8})^{N-n+1}; strictly above m, decreasing
// in both L and n.
inline double gamma_of(double m, i64 L, int n, int N) {
    if (L < 1 || n < 1 || n > N) throw std::invalid_argument("gamma_of: need L >= 1, 1 <= n <= N");
    return m * std::pow(1.0 + std::pow(static_cast<double>(L), -0.125), N - n + 1);
}

// Decay threshold for the singularity test at half-side L with n particles.
inline double singularity_threshold(double m, i64 L, int n, int N) {
    return std::exp(-gamma_of(m, L, n, N) * static_cast<double>(L));
}

// Inverse of next_scale: the unique l with next_scale(l) == L, if any.
inline std::optional<i64> previous_scale(i64 L) {
    for (i64 l = 3; l < L; ++l)
        if (next_scale(l) == L) return l;
    return std::nullopt;
}

struct ScaleSchedule {
    i64 L0 = 8;
    double p = 2.0;    // probability exponent; strict mode demands p > 6Nd
    int N = 2;         // maximum particle number
    int d = 1;         // one-particle dimension
    std::vector<i64> levels;

    ScaleSchedule() = default;
    ScaleSchedule(i64 L0_, int k_max, double p_, int N_, int d_)
        : L0(L0_), p(p_), N(N_), d(d_), levels(scale_sequence(L0_, k_max)) {}

    int k_max() const { return static_cast<int>(levels.size()) - 1; }
    bool strict_p_ok() const { return p > 6.0 * N * d; }
};

struct MassParameters {
    double gamma_base = 0.9;
    double m = 0.0;

    MassParameters() = default;
    MassParameters(double gb, int N, i64 L0) : gamma_base(gb), m(mass_m(gb, N, L0)) {}
};

// Display-only tail bound of the two-cube singularity property at level k.
inline double ds_paper_bound(i64 L_k, double p, int n, int N) {
    double expo = -2.0 * p * std::pow(4.0, N - n);
    return std::pow(static_cast<double>(L_k), expo);
}

// Display-only tail bound of the Wegner-type full-scan statistic.
inline double wegner_paper_bound(i64 L, double p, int n, int N) {
    return std::pow(static_cast<double>(L), -p * std::pow(4.0, N - n));
}

}  // namespace msalab

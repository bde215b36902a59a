#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

namespace msalab {

// Wilson score interval for a binomial proportion, z = 1.96 by default.
inline std::pair<double, double> wilson_interval(long long successes, long long trials,
                                                 double z = 1.96) {
    if (trials <= 0) throw std::invalid_argument("wilson_interval: trials must be positive");
    if (successes < 0 || successes > trials)
        throw std::invalid_argument("wilson_interval: successes out of range");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    double lo = center - half, hi = center + half;
    if (lo < 0.0) lo = 0.0;
    if (hi > 1.0) hi = 1.0;
    return {lo, hi};
}

struct MonteCarloReport {
    long long trials = 0;
    long long successes = 0;
    double estimate = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline MonteCarloReport make_report(long long successes, long long trials) {
    MonteCarloReport r;
    r.trials = trials;
    r.successes = successes;
    r.estimate = trials > 0 ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
    auto [lo, hi] = wilson_interval(successes, trials);
    r.ci_lo = lo;
    r.ci_hi = hi;
    return r;
}

}  // namespace msalab

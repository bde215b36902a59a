#pragma once

// Seed-addressed realization of the i.i.d. site potential over Z^d. Values
// are recomputed on demand from (seed, site); overlapping cubes drawn from
// the same sample therefore share potential values automatically.

#include <map>
#include <vector>

#include "msalab/lattice.hpp"
#include "msalab/rng.hpp"

namespace msalab {

struct RandomFieldSample {
    Box region;  // declared coverage, used for assembly validation
    u64 seed = 0;
    Distribution dist;

    double value(const std::vector<i64>& site) const {
        u64 h = key_chain(seed, 0x5174e5u);
        for (i64 c : site) h = key_chain(h, static_cast<u64>(c));
        return dist.inverse_cdf(uniform01_from_key(h));
    }

    // Materialized view of the sample over its region; test and report use.
    std::map<std::vector<i64>, double> materialize() const {
        std::map<std::vector<i64>, double> out;
        std::vector<i64> site = region.lo;
        if (region.lo.empty()) return out;
        for (;;) {
            out[site] = value(site);
            size_t a = site.size();
            while (a > 0) {
                --a;
                if (site[a] < region.hi[a]) {
                    ++site[a];
                    break;
                }
                site[a] = region.lo[a];
                if (a == 0) return out;
            }
        }
    }
};

inline RandomFieldSample sample_field(u64 seed, Box region, Distribution dist) {
    if (region.lo.empty() || region.lo.size() != region.hi.size())
        throw std::invalid_argument("sample_field: empty region");
    for (size_t a = 0; a < region.lo.size(); ++a)
        if (region.lo[a] > region.hi[a]) throw std::invalid_argument("sample_field: empty region");
    dist.validate();
    return RandomFieldSample{std::move(region), seed, std::move(dist)};
}

}  // namespace msalab

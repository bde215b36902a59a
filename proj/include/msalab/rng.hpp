#pragma once

// Counter-based deterministic randomness. Every random value is a pure
// function of a 64-bit key chain, so the same (seed, site) pair always
// reproduces the same draw regardless of evaluation order or worker count.

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace msalab {

using u64 = std::uint64_t;

// SplitMix64 finalizer; bijective on 64-bit words.
inline u64 mix64(u64 z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline u64 key_chain(u64 a, u64 b) { return mix64(a ^ mix64(b)); }

// FNV-1a over a label; used to key experiments by name.
inline u64 label_key(std::string_view s) {
    u64 h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline u64 trial_seed(u64 master_seed, std::string_view experiment, u64 trial) {
    return key_chain(key_chain(master_seed, label_key(experiment)), trial);
}

// Uniform double in [0,1) from the top 53 bits of a mixed word.
inline double uniform01_from_key(u64 key) {
    return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

// Site potential distribution. The base draw is transformed affinely:
// value = shift + scale * base. All reachable values must stay >= 0.
struct Distribution {
    enum class Kind { uniform01, bernoulli, table };
    Kind kind = Kind::uniform01;
    double p0 = 0.5, a = 0.0, b = 1.0;  // bernoulli: value b with probability p0, else a
    std::vector<double> table_values;
    std::vector<double> table_weights;
    double scale = 1.0;
    double shift = 0.0;

    void validate() const {
        if (scale <= 0.0) throw std::invalid_argument("Distribution: scale must be positive");
        if (shift < 0.0) throw std::invalid_argument("Distribution: shift must be non-negative");
        switch (kind) {
            case Kind::uniform01: break;
            case Kind::bernoulli:
                if (p0 < 0.0 || p0 > 1.0 || a < 0.0 || b < 0.0)
                    throw std::invalid_argument("Distribution: bernoulli needs p0 in [0,1], a,b >= 0");
                break;
            case Kind::table: {
                if (table_values.empty() || table_values.size() != table_weights.size())
                    throw std::invalid_argument("Distribution: table shape mismatch");
                double tot = 0.0;
                for (size_t i = 0; i < table_values.size(); ++i) {
                    if (table_values[i] < 0.0 || table_weights[i] < 0.0)
                        throw std::invalid_argument("Distribution: table entries must be >= 0");
                    tot += table_weights[i];
                }
                if (tot <= 0.0) throw std::invalid_argument("Distribution: zero total weight");
                break;
            }
        }
    }

    double inverse_cdf(double u) const {
        double base = 0.0;
        switch (kind) {
            case Kind::uniform01: base = u; break;
            case Kind::bernoulli: base = (u < 1.0 - p0) ? a : b; break;
            case Kind::table: {
                double tot = 0.0;
                for (double w : table_weights) tot += w;
                double acc = 0.0;
                base = table_values.back();
                for (size_t i = 0; i < table_values.size(); ++i) {
                    acc += table_weights[i];
                    if (u * tot < acc) {
                        base = table_values[i];
                        break;
                    }
                }
                break;
            }
        }
        return shift + scale * base;
    }
};

}  // namespace msalab

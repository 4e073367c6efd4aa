#pragma once

// Counter-derived random streams. Every Monte Carlo sample owns a stream
// keyed by (seed, tags...), so results do not depend on how samples are
// distributed over worker threads.

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace oupert {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256++; satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256pp(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in the open interval (0,1).
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> s_{};
};

/// Stream keyed by a seed and a sequence of tags (probe index, sample index,
/// channel, ...). Distinct tag tuples give statistically independent streams.
inline Xoshiro256pp make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = seed ^ 0x6a09e667f3bcc909ULL;
    std::uint64_t mix = splitmix64(h);
    for (auto t : tags) {
        std::uint64_t st = mix ^ (t + 0x9e3779b97f4a7c15ULL + (mix << 6) + (mix >> 2));
        mix = splitmix64(st);
    }
    return Xoshiro256pp(mix);
}

using Rng = Xoshiro256pp;

inline double standard_normal(Rng& rng) {
    // Marsaglia polar method, one value per call so stream consumption stays
    // independent of caller bookkeeping.
    for (;;) {
        const double u = 2.0 * rng.uniform() - 1.0;
        const double v = 2.0 * rng.uniform() - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

/// Poisson quantile: smallest k with P(N <= k) >= u for N ~ Poisson(mu).
/// Used with a shared uniform to couple Poisson counts of different means.
inline std::int64_t poisson_quantile(double u, double mu) {
    if (mu <= 0.0) return 0;
    if (mu < 600.0) {
        double p = std::exp(-mu);
        double cdf = p;
        std::int64_t k = 0;
        while (cdf < u) {
            ++k;
            p *= mu / static_cast<double>(k);
            cdf += p;
            if (p < 1e-300 && static_cast<double>(k) > mu) break;
        }
        return k;
    }
    // Large mean: start at the mode and walk.
    auto log_pmf = [mu](std::int64_t k) {
        return static_cast<double>(k) * std::log(mu) - mu - std::lgamma(static_cast<double>(k) + 1.0);
    };
    std::int64_t k = static_cast<std::int64_t>(std::floor(mu));
    // cdf at k by summing downward until negligible.
    double cdf = 0.0;
    for (std::int64_t j = k; j >= 0; --j) {
        const double p = std::exp(log_pmf(j));
        cdf += p;
        if (p < 1e-18 * cdf) break;
    }
    if (cdf >= u) {
        while (k > 0) {
            const double p = std::exp(log_pmf(k));
            if (cdf - p < u) break;
            cdf -= p;
            --k;
        }
        return k;
    }
    while (cdf < u) {
        ++k;
        const double p = std::exp(log_pmf(k));
        cdf += p;
        if (p < 1e-300) break;
    }
    return k;
}

/// Binomial quantile: smallest k with P(K <= k) >= u for K ~ Bin(n, p).
inline std::int64_t binomial_quantile(double u, std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    const double q = 1.0 - p;
    const double nd = static_cast<double>(n);
    if (nd * std::log(q) > -600.0) {
        double pk = std::exp(nd * std::log(q));
        double cdf = pk;
        std::int64_t k = 0;
        while (cdf < u && k < n) {
            pk *= (nd - static_cast<double>(k)) / static_cast<double>(k + 1) * (p / q);
            ++k;
            cdf += pk;
        }
        return k;
    }
    // Start at the mode: cdf there by summing downward, then walk.
    std::int64_t m = std::min<std::int64_t>(n, static_cast<std::int64_t>(std::floor((nd + 1.0) * p)));
    const double lp = std::log(p), lq = std::log(q);
    auto log_pmf = [&](std::int64_t k) {
        const double kd = static_cast<double>(k);
        return std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) + kd * lp + (nd - kd) * lq;
    };
    const double pm = std::exp(log_pmf(m));
    double cdf = pm;
    {
        double pk = pm;
        for (std::int64_t j = m; j > 0; --j) {
            pk *= static_cast<double>(j) / (nd - static_cast<double>(j) + 1.0) * (q / p);
            cdf += pk;
            if (pk < 1e-18 * cdf) break;
        }
    }
    std::int64_t k = m;
    if (cdf >= u) {
        double pk = pm;
        while (k > 0) {
            if (cdf - pk < u) break;
            cdf -= pk;
            pk *= static_cast<double>(k) / (nd - static_cast<double>(k) + 1.0) * (q / p);
            --k;
        }
        return k;
    }
    double pk = pm;
    while (cdf < u && k < n) {
        pk *= (nd - static_cast<double>(k)) / static_cast<double>(k + 1) * (p / q);
        ++k;
        cdf += pk;
        if (pk < 1e-300) break;
    }
    return k;
}

inline std::int64_t poisson_sample(Rng& rng, double mu) { return poisson_quantile(rng.uniform(), mu); }

} // namespace oupert

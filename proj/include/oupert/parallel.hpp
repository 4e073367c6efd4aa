#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace oupert {

/// Static-partition parallel loop. Each index is processed exactly once and
/// results are expected to be written to index-owned slots, so output does
/// not depend on `threads`.
class Executor {
public:
    explicit Executor(unsigned threads = 1) : threads_(std::max(1u, threads)) {}

    unsigned threads() const { return threads_; }

    template <class Fn>
    void parallel_for(std::size_t n, Fn&& fn) const {
        if (threads_ == 1 || n < 2) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        const unsigned nt = static_cast<unsigned>(std::min<std::size_t>(threads_, n));
        std::vector<std::thread> pool;
        std::exception_ptr err;
        std::mutex err_mu;
        pool.reserve(nt);
        for (unsigned w = 0; w < nt; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += nt) fn(i);
                } catch (...) {
                    std::lock_guard lk(err_mu);
                    if (!err) err = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (err) std::rethrow_exception(err);
    }

private:
    unsigned threads_;
};

/// Pairwise summation in a fixed tree order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

struct MeanSe {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Sample mean and standard error of the mean, both via pairwise sums.
inline MeanSe mean_and_se(std::span<const double> v) {
    MeanSe r;
    if (v.empty()) return r;
    const double n = static_cast<double>(v.size());
    r.mean = pairwise_sum(v) / n;
    if (v.size() < 2) return r;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
    const double var = pairwise_sum(sq) / (n - 1.0);
    r.std_error = std::sqrt(var / n);
    return r;
}

} // namespace oupert

#pragma once

// The unperturbed proxy: OU covariance integrals, the stochastic integral
// I_{s,t} = ∫_s^t e^{rA} σ dZ_r, and the Monte Carlo Duhamel solve.

#include "oupert/core.hpp"
#include "oupert/levy.hpp"
#include "oupert/linalg.hpp"
#include "oupert/parallel.hpp"
#include "oupert/quadrature.hpp"
#include "oupert/random.hpp"
#include "oupert/source.hpp"
#include "oupert/structure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oupert {

struct McParams {
    std::int64_t samples = 10000;
    int nsteps = 128;        // Riemann steps for the stable integral
    int n_time = 64;         // midpoint nodes for the time integral
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // distinguishes probes sharing a seed
    unsigned threads = 1;

    void validate() const {
        require(samples >= 2, "mc: samples must be at least 2");
        require(nsteps >= 1, "mc: nsteps must be at least 1");
        require(n_time >= 1, "mc: n_time must be at least 1");
    }
};

// Stream channels.
inline constexpr std::uint64_t kChannelDiffusion = 0;
inline constexpr std::uint64_t kChannelJumps = 1;

struct TimeNode {
    double s = 0.0;
    double w = 0.0;
};

/// Midpoint nodes on [0, t]. Panels are split at every breakpoint inside
/// (0, t); each panel gets max(1, round(n_time·len/t)) nodes.
inline std::vector<TimeNode> time_nodes(double t, std::vector<double> breaks, int n_time) {
    require(t >= 0.0, "time_nodes: t must be non-negative");
    require(n_time >= 1, "time_nodes: n_time must be at least 1");
    std::vector<TimeNode> out;
    if (t == 0.0) return out;
    std::vector<double> edges{0.0, t};
    for (double b : breaks)
        if (b > 0.0 && b < t) edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double a = edges[p], b = edges[p + 1];
        const int m = std::max(1, static_cast<int>(std::lround(n_time * (b - a) / t)));
        const double h = (b - a) / m;
        for (int i = 0; i < m; ++i) out.push_back({a + (i + 0.5) * h, h});
    }
    return out;
}

/// M(s,t) = ∫_s^t e^{rA} B e^{rA*} dr.
inline Mat ou_covariance(const OperatorSpec& spec, double s, double t) {
    require(spec.alpha == 2.0, "ou_covariance: only defined for alpha = 2");
    require(s >= 0.0 && s <= t, "ou_covariance: need 0 <= s <= t");
    const int n = spec.dim();
    if (s == t) return Mat::Zero(n, n);
    auto integrand = [&](double r) -> Mat {
        const Mat e = expm(r * spec.A);
        return e * spec.B * e.transpose();
    };
    Mat m = quad::integrate(integrand, s, t, 1e-15, 1e-13);
    return 0.5 * (m + m.transpose());
}

struct OUKernelParams {
    double s = 0.0;
    double t = 0.0;
    Mat mean_map;  // e^{(t-s)A}
    Mat cov;       // 2·M(s,t) under the factor-2 convention
};

inline OUKernelParams ou_kernel_params(const OperatorSpec& spec, double s, double t) {
    OUKernelParams p;
    p.s = s;
    p.t = t;
    p.mean_map = expm((t - s) * spec.A);
    p.cov = 2.0 * ou_covariance(spec, s, t);
    return p;
}

/// Sampler for I_{s,t}. Gaussian case: exact, I = √(2M(s,t))·ξ. Stable case:
/// left-endpoint Riemann sum over nsteps uniform subintervals.
class OUIntegralSampler {
public:
    OUIntegralSampler(const OperatorSpec& spec, const KalmanStructure& ks, double s, double t, int nsteps,
                      const Mat* cov2 = nullptr)
        : n_(spec.dim()) {
        require(s >= 0.0 && s <= t, "sample_ou_integral: need 0 <= s <= t");
        require(nsteps >= 1, "sample_ou_integral: nsteps must be at least 1");
        if (s == t) {
            trivial_ = true;
            return;
        }
        if (spec.alpha == 2.0) {
            gaussian_ = true;
            const Mat c = cov2 ? *cov2 : Mat(2.0 * ou_covariance(spec, s, t));
            factor_ = psd_sqrt(0.5 * (c + c.transpose()));
            return;
        }
        require(spec.spectral.has_value(), "sample_ou_integral: spectral measure required for alpha < 2");
        driver_ = LevyDriver::stable(*spec.spectral, spec.alpha);
        dt_ = (t - s) / nsteps;
        steps_.reserve(nsteps);
        for (int m = 0; m < nsteps; ++m) steps_.push_back(expm((s + m * dt_) * spec.A) * ks.sigma_factor);
    }

    Vec sample(Rng& rng) const {
        Vec out = Vec::Zero(n_);
        sample_into(rng, out);
        return out;
    }

    /// Adds a draw of I_{s,t} to `acc`.
    void sample_into(Rng& rng, Vec& acc) const {
        if (trivial_) return;
        if (gaussian_) {
            for (int i = 0; i < n_; ++i) {
                const double g = standard_normal(rng);
                acc.noalias() += g * factor_.col(i);
            }
            return;
        }
        for (const auto& g : steps_) acc.noalias() += g * driver_.sample(dt_, rng);
    }

private:
    int n_;
    bool trivial_ = false;
    bool gaussian_ = false;
    Mat factor_;
    LevyDriver driver_ = LevyDriver::gaussian(1);
    double dt_ = 0.0;
    std::vector<Mat> steps_;
};

inline Vec sample_ou_integral(const OperatorSpec& spec, const KalmanStructure& ks, double s, double t, int nsteps,
                              Rng& rng) {
    require(s >= 0.0 && s <= t, "sample_ou_integral: need 0 <= s <= t");
    return OUIntegralSampler(spec, ks, s, t, nsteps).sample(rng);
}

/// Fills `shift[k]` with X(t) - X(s_k) for every time node (perturbed solves).
using ShiftSampler = std::function<void(Rng&, std::vector<Vec>&)>;

namespace detail {

inline void check_solve_inputs(const OperatorSpec& spec, const SourceFunction& f, double t, const Vec& x,
                               const McParams& mc) {
    require(t >= 0.0 && t <= spec.horizon_T * (1.0 + 1e-12), "solve: t must lie in [0, T]");
    require(x.size() == spec.dim(), "solve: probe dimension mismatch");
    require(f.dim() == 0 || f.dim() == spec.dim(), "solve: source dimension mismatch");
    mc.validate();
}

/// Per-node data of the tilde-frame Duhamel sum.
struct DuhamelPlan {
    std::vector<TimeNode> nodes;
    std::vector<Mat> back;  // e^{-s_k A}
    std::vector<OUIntegralSampler> samplers;
    Vec y;                  // e^{tA} x
};

inline DuhamelPlan make_plan(const OperatorSpec& spec, const KalmanStructure& ks, double t, const Vec& x,
                             const std::vector<TimeNode>& nodes, const McParams& mc) {
    DuhamelPlan plan;
    plan.nodes = nodes;
    plan.y = expm(t * spec.A) * x;
    const std::size_t m = plan.nodes.size();
    plan.back.reserve(m);
    for (const auto& nd : plan.nodes) plan.back.push_back(expm(-nd.s * spec.A));
    if (spec.alpha == 2.0) {
        // 2M(s_k, t) accumulated backwards from t over the node gaps.
        std::vector<Mat> cov(m);
        Mat acc = Mat::Zero(spec.dim(), spec.dim());
        double upper = t;
        for (std::size_t k = m; k-- > 0;) {
            acc += 2.0 * ou_covariance(spec, plan.nodes[k].s, upper);
            upper = plan.nodes[k].s;
            cov[k] = acc;
        }
        for (std::size_t k = 0; k < m; ++k)
            plan.samplers.emplace_back(spec, ks, plan.nodes[k].s, t, mc.nsteps, &cov[k]);
    } else {
        for (const auto& nd : plan.nodes) plan.samplers.emplace_back(spec, ks, nd.s, t, mc.nsteps);
    }
    return plan;
}

/// One Monte Carlo Duhamel estimate over the given time nodes, optionally
/// with a jump shift and a replacement integrand `eval`.
inline Estimate duhamel_mc(const OperatorSpec& spec, const KalmanStructure& ks, const SourceFunction& f, double t,
                           const Vec& x, const McParams& mc, const std::vector<TimeNode>& nodes,
                           const ShiftSampler* shift, const std::function<double(double, const Vec&)>* eval = nullptr,
                           std::vector<double>* per_sample = nullptr) {
    if (t == 0.0 || (f.is_zero() && eval == nullptr)) {
        if (per_sample) per_sample->assign(static_cast<std::size_t>(mc.samples), 0.0);
        return {};
    }
    const DuhamelPlan plan = make_plan(spec, ks, t, x, nodes, mc);
    const std::size_t m = plan.nodes.size();
    std::vector<double> values(static_cast<std::size_t>(mc.samples));
    Executor ex(mc.threads);
    ex.parallel_for(values.size(), [&](std::size_t j) {
        Rng rng = make_stream(mc.seed, {mc.stream, static_cast<std::uint64_t>(j), kChannelDiffusion});
        std::vector<Vec> shifts;
        if (shift) {
            Rng jr = make_stream(mc.seed, {mc.stream, static_cast<std::uint64_t>(j), kChannelJumps});
            shifts.assign(m, Vec::Zero(spec.dim()));
            (*shift)(jr, shifts);
        }
        double acc = 0.0;
        Vec z(spec.dim());
        Vec arg(spec.dim());
        for (std::size_t k = 0; k < m; ++k) {
            z = plan.y;
            if (shift) z += shifts[k];
            plan.samplers[k].sample_into(rng, z);
            arg.noalias() = plan.back[k] * z;
            const double fv = eval ? (*eval)(plan.nodes[k].s, arg) : f(plan.nodes[k].s, arg);
            acc += plan.nodes[k].w * fv;
        }
        values[j] = acc;
    });
    const MeanSe ms = mean_and_se(values);
    if (per_sample) *per_sample = std::move(values);
    return {ms.mean, ms.std_error};
}

} // namespace detail

/// Monte Carlo estimate of u(t,x) = ∫_0^t E f(s, e^{-sA}(e^{tA}x + I_{s,t})) ds.
inline Estimate solve_unperturbed(const OperatorSpec& spec, const KalmanStructure& ks, const SourceFunction& f,
                                  double t, const Vec& x, const McParams& mc) {
    detail::check_solve_inputs(spec, f, t, x, mc);
    return detail::duhamel_mc(spec, ks, f, t, x, mc, time_nodes(t, f.breakpoints(), mc.n_time), nullptr);
}

} // namespace oupert

#pragma once

// Poissonization of the time-dependent diffusion Tr(S(t)D²): the jump system
// J^S, compound-Poisson shifts, the perturbed Monte Carlo solver, ε-sweeps,
// the time transform 𝒯 and the elliptic embedding check.

#include "oupert/core.hpp"
#include "oupert/levy.hpp"
#include "oupert/linalg.hpp"
#include "oupert/parallel.hpp"
#include "oupert/quadrature.hpp"
#include "oupert/random.hpp"
#include "oupert/schedule.hpp"
#include "oupert/semigroup.hpp"
#include "oupert/source.hpp"
#include "oupert/structure.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <type_traits>
#include <vector>

namespace oupert {

struct SqrtQuadParams {
    double y_lo = -60.0;  // θ = e^y
    double y_hi = 60.0;
    double panel = 1.0;
    double tol = 1e-8;
};

/// √S = (1/(2√π)) ∫_0^∞ θ^{-3/2} (I - e^{-θS}) dθ, evaluated with θ = e^y and
/// first-order tails outside [y_lo, y_hi].
inline Mat psd_sqrt_integral(const Mat& s, const SqrtQuadParams& q = {}) {
    require(s.rows() == s.cols(), "psd_sqrt_integral: matrix must be square");
    require(is_symmetric(s), "psd_sqrt_integral: matrix must be symmetric");
    require(min_eigenvalue(s) >= -1e-10 * std::max(1.0, sym_norm(s)),
            "psd_sqrt_integral: eigenvalue below -1e-10 (matrix not PSD)");
    require(q.y_hi > q.y_lo && q.panel > 0.0, "psd_sqrt_integral: invalid quadrature range");
    const int n = static_cast<int>(s.rows());
    const Mat id = Mat::Identity(n, n);
    const double snorm = sym_norm(s);
    // I - e^{-θS}, by its series when θ‖S‖ is small to avoid cancellation.
    auto one_minus_exp = [&](double theta) -> Mat {
        if (theta * snorm >= 0.5) return id - expm(-theta * s);
        const Mat ts = theta * s;
        Mat term = ts;
        Mat acc = ts;
        for (int k = 2; k <= 20; ++k) {
            term = (-1.0 / k) * (term * ts);
            acc += term;
        }
        return acc;
    };
    auto integrand = [&](double y) -> Mat { return std::exp(-0.5 * y) * one_minus_exp(std::exp(y)); };
    auto run = [&](double width) {
        Mat acc = Mat::Zero(n, n);
        for (double a = q.y_lo; a < q.y_hi - 1e-12; a += width)
            acc += quad::integrate(integrand, a, std::min(a + width, q.y_hi), 1e-13, 1e-11, 30);
        return acc;
    };
    const Mat coarse = run(2.0 * q.panel);
    const Mat fine = run(q.panel);
    const double scale = std::max(1.0, fine.cwiseAbs().maxCoeff());
    if ((coarse - fine).cwiseAbs().maxCoeff() > q.tol * scale)
        throw ValidationError("psd_sqrt_integral: quadrature failed to converge");
    // Tails: ∫_{-∞}^{y_lo} e^{y/2} S dy and ∫_{y_hi}^{∞} e^{-y/2} I dy.
    const Mat total = fine + 2.0 * std::exp(0.5 * q.y_lo) * s + 2.0 * std::exp(-0.5 * q.y_hi) * id;
    const Mat r = total / (2.0 * std::sqrt(std::numbers::pi));
    return 0.5 * (r + r.transpose());
}

struct JumpEntry {
    double intensity = 0.0;  // λ_i = ε^{-2}
    Vec jump;                // l_i = ε·L·e_i; the pair ±l_i is implicit
};

struct JumpCell {
    double t0 = 0.0;
    double t1 = 0.0;
    Mat factor;  // L = e^{t_mid A}·√S(t_mid)
    std::vector<JumpEntry> entries;
};

struct JumpSystem {
    double epsilon = 1.0;
    std::vector<JumpCell> cells;

    bool empty() const {
        for (const auto& c : cells)
            if (!c.entries.empty()) return false;
        return true;
    }

    std::size_t cell_index(double t) const {
        if (cells.empty()) throw ValidationError("jump system: no cells");
        if (t <= cells.front().t0) return 0;
        if (t >= cells.back().t1) return cells.size() - 1;
        auto it = std::upper_bound(cells.begin(), cells.end(), t, [](double v, const JumpCell& c) { return v < c.t0; });
        return static_cast<std::size_t>(it - cells.begin()) - 1;
    }

    const JumpCell& cell_at(double t) const { return cells[cell_index(t)]; }
    const Mat& factor_at(double t) const { return cell_at(t).factor; }
};

/// Cell boundaries: schedule breakpoints plus a uniform refinement with
/// ‖e^{hA} - I‖ < 1% per cell.
inline JumpSystem build_jump_system(const OperatorSpec& spec, const PerturbationSchedule& schedule, double epsilon) {
    require(epsilon > 0.0, "build_jump_system: epsilon must be positive");
    require(schedule.dim() == spec.dim(), "build_jump_system: schedule dimension mismatch");
    JumpSystem sys;
    sys.epsilon = epsilon;
    std::vector<double> edges = schedule.breakpoints();
    const double horizon = edges.back();
    const double anorm = spec.A.size() ? spec.A.norm() : 0.0;  // Frobenius >= operator 2-norm
    if (anorm > 0.0 && !schedule.is_zero()) {
        const double hmax = std::log(1.01) / anorm;
        const int m = static_cast<int>(std::ceil(horizon / hmax));
        for (int j = 1; j < m; ++j) edges.push_back(horizon * j / m);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    const double lambda = 1.0 / (epsilon * epsilon);
    for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
        JumpCell cell;
        cell.t0 = edges[j];
        cell.t1 = edges[j + 1];
        const double mid = 0.5 * (cell.t0 + cell.t1);
        const Mat& s = schedule.at(mid);
        cell.factor = expm(mid * spec.A) * psd_sqrt(s);
        const double scale = std::max(1.0, cell.factor.cwiseAbs().maxCoeff());
        for (int i = 0; i < cell.factor.cols(); ++i) {
            if (cell.factor.col(i).cwiseAbs().maxCoeff() <= 1e-14 * scale) continue;
            cell.entries.push_back({lambda, epsilon * cell.factor.col(i)});
        }
        sys.cells.push_back(std::move(cell));
    }
    return sys;
}

using Quad = boost::multiprecision::number<boost::multiprecision::cpp_bin_float_quad::backend_type,
                                           boost::multiprecision::et_off>;
using VecQ = Eigen::Matrix<Quad, Eigen::Dynamic, 1>;

/// J φ(x) = Σ_i λ_i [φ(x + l_i) + φ(x - l_i) - 2φ(x)] at time t.
/// The bracket cancels to O(ε²), so in double precision the result carries an
/// absolute error near u·|φ|/ε². When φ also accepts a VecQ and returns Quad
/// (a generic lambda, say) the differences are formed in 113-bit precision.
template <class Phi>
double apply_J(const JumpSystem& system, Phi&& phi, double t, const Vec& x) {
    const auto& cell = system.cell_at(t);
    if (cell.entries.empty()) return 0.0;
    if constexpr (std::is_invocable_v<Phi&, const VecQ&> &&
                  std::is_same_v<std::decay_t<std::invoke_result_t<Phi&, const VecQ&>>, Quad>) {
        const VecQ xq = x.cast<Quad>();
        const Quad center = 2 * phi(xq);
        Quad s = 0;
        for (const auto& e : cell.entries) {
            const VecQ j = e.jump.cast<Quad>();
            const VecQ xp = xq + j;
            const VecQ xm = xq - j;
            s += Quad(e.intensity) * ((phi(xp) + phi(xm)) - center);
        }
        return static_cast<double>(s);
    } else {
        const double center = 2.0 * phi(x);
        double s = 0.0;
        for (const auto& e : cell.entries) {
            const Vec xp = x + e.jump;
            const Vec xm = x - e.jump;
            s += e.intensity * ((phi(xp) + phi(xm)) - center);
        }
        return s;
    }
}

struct PoissonPath {
    double horizon = 0.0;
    std::vector<double> times;        // strictly increasing in (0, horizon]
    std::vector<Vec> displacements;
    int dim = 0;

    std::size_t jumps() const { return times.size(); }

    /// X(t): sum of displacements with σ_n <= t.
    Vec at(double t) const {
        Vec x = Vec::Zero(dim);
        for (std::size_t n = 0; n < times.size() && times[n] <= t; ++n) x += displacements[n];
        return x;
    }
};

/// Jump times of a Poisson clock of the given intensity on (t0, t1), unsorted.
inline void sample_poisson_times(double intensity, double t0, double t1, Rng& rng, std::vector<double>& out) {
    require(intensity >= 0.0 && t1 >= t0, "sample_poisson_times: need intensity >= 0 and t0 <= t1");
    const auto count = poisson_sample(rng, intensity * (t1 - t0));
    // (0,1) uniforms keep jump times inside (t0, t1)
    for (std::int64_t c = 0; c < count; ++c) out.push_back(t0 + (t1 - t0) * rng.uniform());
}

/// Independent Poisson clocks of intensity λ_i for each entry and sign; a jump
/// at σ adds ±l_i(σ).
inline PoissonPath sample_compound_shift(const JumpSystem& system, double t, Rng& rng) {
    require(t >= 0.0, "sample_compound_shift: t must be non-negative");
    PoissonPath path;
    path.horizon = t;
    path.dim = system.cells.empty() || system.cells.front().factor.size() == 0
                   ? 0
                   : static_cast<int>(system.cells.front().factor.rows());
    if (!system.cells.empty())
        require(t <= system.cells.back().t1 * (1.0 + 1e-12), "sample_compound_shift: t exceeds the horizon");
    struct Jump {
        double time;
        Vec disp;
    };
    std::vector<Jump> all;
    std::vector<double> times;
    for (const auto& cell : system.cells) {
        if (cell.t0 >= t) break;
        const double hi = std::min(cell.t1, t);
        for (const auto& e : cell.entries)
            for (int sign : {1, -1}) {
                times.clear();
                sample_poisson_times(e.intensity, cell.t0, hi, rng, times);
                for (double tau : times) all.push_back({tau, sign * e.jump});
            }
    }
    std::sort(all.begin(), all.end(), [](const Jump& a, const Jump& b) { return a.time < b.time; });
    for (auto& j : all) {
        path.times.push_back(j.time);
        path.displacements.push_back(std::move(j.disp));
    }
    return path;
}

namespace detail {

/// Exact sampler of X(t) - X(s_k) at the time nodes. The interval [s_0, t] is
/// cut at the nodes and the jump-cell boundaries. For each (segment, entry)
/// the net count N₊ - N₋ (Skellam) is drawn from one uniform by inverse CDF,
/// which couples systems that differ only in ε: their net displacements
/// are monotone functions of the same uniforms.
class SegmentShiftSampler {
public:
    SegmentShiftSampler(const JumpSystem& sys, const std::vector<TimeNode>& nodes, double t) : sys_(&sys) {
        if (nodes.empty()) return;
        std::vector<double> edges{t};
        for (const auto& nd : nodes) edges.push_back(nd.s);
        for (const auto& c : sys.cells)
            if (c.t0 > nodes.front().s && c.t0 < t) edges.push_back(c.t0);
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        for (std::size_t g = 0; g + 1 < edges.size(); ++g) {
            Segment seg;
            seg.left = edges[g];
            seg.cell = sys.cell_index(0.5 * (edges[g] + edges[g + 1]));
            const double len = edges[g + 1] - edges[g];
            for (const auto& e : sys.cells[seg.cell].entries) seg.laws.push_back(net_count_law(e.intensity * len));
            segments_.push_back(std::move(seg));
        }
        // node k collects every segment with left >= s_k
        node_segment_.resize(nodes.size());
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            auto it = std::lower_bound(segments_.begin(), segments_.end(), nodes[k].s,
                                       [](const Segment& g, double v) { return g.left < v; });
            node_segment_[k] = static_cast<std::size_t>(it - segments_.begin());
        }
    }

    void operator()(Rng& rng, std::vector<Vec>& shifts) const {
        if (segments_.empty()) return;
        const auto dim = shifts.empty() ? 0 : shifts.front().size();
        Vec acc = Vec::Zero(dim);
        std::size_t k = shifts.size();
        for (std::size_t g = segments_.size(); g-- > 0;) {
            const auto& seg = segments_[g];
            const auto& entries = sys_->cells[seg.cell].entries;
            for (std::size_t i = 0; i < entries.size(); ++i) {
                const double net = static_cast<double>(seg.laws[i].draw(rng));
                if (net != 0.0) acc.noalias() += net * entries[i].jump;
            }
            while (k > 0 && node_segment_[k - 1] == g) shifts[--k] = acc;
        }
    }

    /// Law of N₊ - N₋ with N± independent Poisson(mu).
    struct NetCountLaw {
        double mu = 0.0;
        std::int64_t half = 0;    // support of the table is [-half, half]
        std::vector<double> cdf;  // empty: fall back to two Poisson quantiles

        std::int64_t quantile(double u) const {
            if (mu == 0.0) return 0;
            const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
            if (it == cdf.end()) return half;
            return static_cast<std::int64_t>(it - cdf.begin()) - half;
        }

        std::int64_t draw(Rng& rng) const {
            if (!cdf.empty() || mu == 0.0) return quantile(rng.uniform());
            const std::int64_t np = poisson_quantile(rng.uniform(), mu);
            return np - poisson_quantile(rng.uniform(), mu);
        }
    };

    /// pmf e^{-2mu} I_|k|(2mu); tables up to mu = 300, beyond that the
    /// Bessel weight overflows and two independent quantiles are used.
    static NetCountLaw net_count_law(double mu) {
        NetCountLaw law;
        law.mu = mu;
        if (mu == 0.0 || mu > 300.0) return law;
        std::vector<double> pmf;
        const double scale = std::exp(-2.0 * mu);
        for (std::int64_t k = 0;; ++k) {
            const double p = scale * std::cyl_bessel_i(static_cast<double>(k), 2.0 * mu);
            pmf.push_back(p);
            if (static_cast<double>(k) > mu && p < 1e-18) break;
        }
        law.half = static_cast<std::int64_t>(pmf.size()) - 1;
        law.cdf.reserve(2 * pmf.size() - 1);
        double c = 0.0;
        for (std::int64_t k = -law.half; k <= law.half; ++k) {
            c += pmf[static_cast<std::size_t>(k < 0 ? -k : k)];
            law.cdf.push_back(c);
        }
        for (auto& v : law.cdf) v /= c;
        return law;
    }

private:
    struct Segment {
        double left = 0.0;
        std::size_t cell = 0;
        std::vector<NetCountLaw> laws;
    };

    const JumpSystem* sys_;
    std::vector<Segment> segments_;
    std::vector<std::size_t> node_segment_;
};

/// Exact sampler of X(t) - X(s_k) with a dyadic quantile coupling. For each
/// entry slot and sign, the total count on [s_0, t] is a Poisson quantile and
/// is split down a balanced binary tree over the segments by binomial
/// quantiles. Every tree node consumes one uniform, so runs differing only in
/// ε see the same uniforms and their net displacements stay close.
class DyadicShiftSampler {
public:
    DyadicShiftSampler(const JumpSystem& sys, const std::vector<TimeNode>& nodes, double t) : sys_(&sys) {
        if (nodes.empty()) return;
        std::vector<double> edges{t};
        for (const auto& nd : nodes) edges.push_back(nd.s);
        for (const auto& c : sys.cells)
            if (c.t0 > nodes.front().s && c.t0 < t) edges.push_back(c.t0);
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        const std::size_t g = edges.size() - 1;
        cells_.resize(g);
        std::size_t slots = 0;
        for (std::size_t j = 0; j < g; ++j) {
            cells_[j] = sys.cell_index(0.5 * (edges[j] + edges[j + 1]));
            slots = std::max(slots, sys.cells[cells_[j]].entries.size());
        }
        // prefix mass per slot: mass_[i][j] = Σ_{j' < j} λ·len
        mass_.assign(slots, std::vector<double>(g + 1, 0.0));
        for (std::size_t i = 0; i < slots; ++i)
            for (std::size_t j = 0; j < g; ++j) {
                const auto& en = sys.cells[cells_[j]].entries;
                const double m = i < en.size() ? en[i].intensity * (edges[j + 1] - edges[j]) : 0.0;
                mass_[i][j + 1] = mass_[i][j] + m;
            }
        left_.assign(edges.begin(), edges.end() - 1);
        node_segment_.resize(nodes.size());
        for (std::size_t k = 0; k < nodes.size(); ++k)
            node_segment_[k] = static_cast<std::size_t>(
                std::lower_bound(left_.begin(), left_.end(), nodes[k].s) - left_.begin());
    }

    void operator()(Rng& rng, std::vector<Vec>& shifts) const {
        const std::size_t g = cells_.size();
        if (g == 0) return;
        const auto dim = shifts.empty() ? 0 : shifts.front().size();
        std::vector<double> net(g);
        std::vector<Vec> seg_disp(g, Vec::Zero(dim));
        for (std::size_t i = 0; i < mass_.size(); ++i) {
            std::fill(net.begin(), net.end(), 0.0);
            for (double sign : {1.0, -1.0}) {
                const std::int64_t total = poisson_quantile(rng.uniform(), mass_[i][g]);
                split(rng, i, 0, g, total, sign, net);
            }
            for (std::size_t j = 0; j < g; ++j) {
                if (net[j] == 0.0) continue;
                seg_disp[j].noalias() += net[j] * sys_->cells[cells_[j]].entries[i].jump;
            }
        }
        Vec acc = Vec::Zero(dim);
        std::size_t k = shifts.size();
        for (std::size_t j = g; j-- > 0;) {
            acc += seg_disp[j];
            while (k > 0 && node_segment_[k - 1] == j) shifts[--k] = acc;
        }
    }

private:
    void split(Rng& rng, std::size_t slot, std::size_t lo, std::size_t hi, std::int64_t n, double sign,
               std::vector<double>& net) const {
        if (hi - lo == 1) {
            net[lo] += sign * static_cast<double>(n);
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const auto& m = mass_[slot];
        const double whole = m[hi] - m[lo];
        const double p = whole > 0.0 ? (m[mid] - m[lo]) / whole : 0.0;
        const std::int64_t left = binomial_quantile(rng.uniform(), n, p);
        split(rng, slot, lo, mid, left, sign, net);
        split(rng, slot, mid, hi, n - left, sign, net);
    }

    const JumpSystem* sys_;
    std::vector<std::size_t> cells_;
    std::vector<std::vector<double>> mass_;
    std::vector<double> left_;
    std::vector<std::size_t> node_segment_;
};

enum class Coupling { segment, dyadic };

inline void check_schedule(const OperatorSpec& spec, const PerturbationSchedule& schedule, double t) {
    require(schedule.dim() == spec.dim(), "solve_perturbed: schedule dimension mismatch");
    require(std::abs(schedule.horizon() - spec.horizon_T) <= 1e-12 * std::max(1.0, spec.horizon_T),
            "solve_perturbed: schedule breakpoints must span [0, T]");
    require(t <= schedule.horizon() * (1.0 + 1e-12), "solve_perturbed: t exceeds the schedule horizon");
}

/// Shared core of solve_perturbed / transform_T_solve / epsilon_sweep.
inline Estimate perturbed_core(const OperatorSpec& spec, const KalmanStructure& ks, const PerturbationSchedule& schedule,
                               const SourceFunction& f, double epsilon, double t, const Vec& x, const McParams& mc,
                               const std::vector<double>& extra_breaks,
                               const std::function<double(double, const Vec&)>* eval,
                               std::vector<double>* per_sample = nullptr, Coupling coupling = Coupling::segment) {
    check_solve_inputs(spec, f, t, x, mc);
    check_schedule(spec, schedule, t);
    const JumpSystem sys = build_jump_system(spec, schedule, epsilon);
    std::vector<double> breaks = f.breakpoints();
    breaks.insert(breaks.end(), extra_breaks.begin(), extra_breaks.end());
    const auto& sb = schedule.breakpoints();
    breaks.insert(breaks.end(), sb.begin(), sb.end());
    const auto nodes = time_nodes(t, breaks, mc.n_time);
    if (sys.empty()) return duhamel_mc(spec, ks, f, t, x, mc, nodes, nullptr, eval, per_sample);
    if (coupling == Coupling::dyadic) {
        const DyadicShiftSampler dy(sys, nodes, t);
        const ShiftSampler shift = [&dy](Rng& rng, std::vector<Vec>& out) { dy(rng, out); };
        return duhamel_mc(spec, ks, f, t, x, mc, nodes, &shift, eval, per_sample);
    }
    const SegmentShiftSampler seg(sys, nodes, t);
    const ShiftSampler shift = [&seg](Rng& rng, std::vector<Vec>& out) { seg(rng, out); };
    return duhamel_mc(spec, ks, f, t, x, mc, nodes, &shift, eval, per_sample);
}

} // namespace detail

/// Monte Carlo estimate of the solution u_ε(t,x) of the Poissonized problem.
inline Estimate solve_perturbed(const OperatorSpec& spec, const KalmanStructure& ks,
                                const PerturbationSchedule& schedule, const SourceFunction& f, double epsilon, double t,
                                const Vec& x, const McParams& mc) {
    require(epsilon > 0.0, "solve_perturbed: epsilon must be positive");
    return detail::perturbed_core(spec, ks, schedule, f, epsilon, t, x, mc, {}, nullptr);
}

struct Probe {
    double t = 0.0;
    Vec x;
};

struct SweepResult {
    std::vector<double> epsilons;
    std::vector<std::vector<Estimate>> values;  // [epsilon][probe]
    std::vector<double> gaps;                   // Δ_j = max_p |w_{j+1,p} - w_{j,p}|
    std::vector<double> gap_std_errors;         // paired standard error at the maximizing probe
    std::vector<std::size_t> gap_probe;
    bool decreasing = false;                    // Δ_j - Δ_{j+1} > 2·sqrt(σ_j² + σ_{j+1}²) for all j
};

/// ε-sweep with common random numbers: every ε uses the same streams, so gap
/// standard errors come from paired per-sample differences.
inline SweepResult epsilon_sweep(const OperatorSpec& spec, const KalmanStructure& ks,
                                 const PerturbationSchedule& schedule, const SourceFunction& f,
                                 const std::vector<double>& eps_list, const std::vector<Probe>& probes,
                                 const McParams& mc) {
    require(eps_list.size() >= 2, "epsilon_sweep: at least two epsilons are required");
    for (std::size_t j = 0; j < eps_list.size(); ++j) {
        require(eps_list[j] > 0.0, "epsilon_sweep: epsilons must be positive");
        if (j) require(eps_list[j] < eps_list[j - 1], "epsilon_sweep: epsilons must be strictly decreasing");
    }
    require(!probes.empty(), "epsilon_sweep: probe list is empty");
    const std::size_t ne = eps_list.size(), np = probes.size();
    SweepResult res;
    res.epsilons = eps_list;
    res.values.assign(ne, std::vector<Estimate>(np));
    res.gaps.assign(ne - 1, -1.0);
    res.gap_std_errors.assign(ne - 1, 0.0);
    res.gap_probe.assign(ne - 1, 0);
    for (std::size_t p = 0; p < np; ++p) {
        McParams m = mc;
        m.stream = mc.stream + p;
        std::vector<double> prev, cur;
        for (std::size_t j = 0; j < ne; ++j) {
            res.values[j][p] = detail::perturbed_core(spec, ks, schedule, f, eps_list[j], probes[p].t, probes[p].x, m,
                                                      {}, nullptr, &cur, detail::Coupling::dyadic);
            if (j > 0) {
                std::vector<double> d(cur.size());
                for (std::size_t i = 0; i < cur.size(); ++i) d[i] = cur[i] - prev[i];
                const MeanSe ms = mean_and_se(d);
                if (std::abs(ms.mean) > res.gaps[j - 1]) {
                    res.gaps[j - 1] = std::abs(ms.mean);
                    res.gap_std_errors[j - 1] = ms.std_error;
                    res.gap_probe[j - 1] = p;
                }
            }
            std::swap(prev, cur);
        }
    }
    res.decreasing = true;
    for (std::size_t j = 0; j + 1 < res.gaps.size(); ++j) {
        const double noise = 2.0 * std::hypot(res.gap_std_errors[j], res.gap_std_errors[j + 1]);
        if (!(res.gaps[j] - res.gaps[j + 1] > noise)) res.decreasing = false;
    }
    return res;
}

/// v = 𝒯u: v(t,x) = e^{-c̃(t)} u(t, x + ã(t)) where u solves the perturbed
/// problem with source f̃(s,z) = e^{c̃(s)} f(s, z - ã(s)). Exact when A·ã = 0.
inline Estimate transform_T_solve(const OperatorSpec& spec, const KalmanStructure& ks,
                                  const PerturbationSchedule& schedule, const TimeTransform& transform,
                                  const SourceFunction& f, double t, const Vec& x, const McParams& mc,
                                  double epsilon) {
    require(epsilon > 0.0, "transform_T_solve: epsilon must be positive");
    require(transform.dim() == spec.dim(), "transform_T_solve: transform dimension mismatch");
    if (transform.is_identity()) return solve_perturbed(spec, ks, schedule, f, epsilon, t, x, mc);
    const std::function<double(double, const Vec&)> ftilde = [&](double s, const Vec& z) {
        return std::exp(transform.cum_c(s)) * f(s, z - transform.cum_a(s));
    };
    const Vec xs = x + transform.cum_a(t);
    Estimate e = detail::perturbed_core(spec, ks, schedule, f, epsilon, t, xs, mc, transform.breakpoints(), &ftilde);
    const double damp = std::exp(-transform.cum_c(t));
    return {damp * e.value, damp * e.std_error};
}

/// Radial principal-value quadrature shared by the nonlocal operators:
/// ∫_0^∞ h(r) r^{-1-2β} dr for an even second difference h(r) = O(r²).
struct RadialQuad {
    double r_min = 1e-4;
    double r_max = 1e3;
    int nodes = 16;               // Gauss–Legendre nodes per panel
    double max_panel_width = 0.25;
    int log_panels_per_decade = 2;
    int directions = 64;          // sphere directions for 2-d and 3-d blocks
};

struct RadialValue {
    double value = 0.0;
    double tail_bound = 0.0;  // bound on the neglected ∫_{r_max}^∞ of the shifted terms
};

namespace detail {

/// `h(r)` is the symmetric second difference; `center2` = 2φ(x); `sup_abs`
/// bounds |φ| for the tail error bar.
template <class H>
RadialValue radial_pv(H&& h, double beta, double center2, double sup_abs, const RadialQuad& q,
                      double r_cut = std::numeric_limits<double>::infinity()) {
    require(beta > 0.0 && beta < 1.0, "fractional operator: beta must lie in (0, 1)");
    require(q.r_min > 0.0 && q.r_max > 1.0 && q.r_min < 1.0, "fractional operator: need 0 < r_min < 1 < r_max");
    require(q.nodes >= 1 && q.max_panel_width > 0.0, "fractional operator: invalid panel parameters");
    static thread_local int cached_n = -1;
    static thread_local quad::Rule rule;
    if (cached_n != q.nodes) {
        rule = quad::gauss_legendre(q.nodes);
        cached_n = q.nodes;
    }
    const double p = 1.0 + 2.0 * beta;
    RadialValue out;
    // Inner panel: h(r) ≈ h(r_min)(r/r_min)².
    const double hmin = h(q.r_min);
    out.value = hmin / (q.r_min * q.r_min) * std::pow(q.r_min, 2.0 - 2.0 * beta) / (2.0 - 2.0 * beta);
    // far-field moments of the shifted terms h + 2φ(x) over [r_max/2, r_max]
    double far_num = 0.0, far_den = 0.0;
    auto panel = [&](double a, double b, bool far = false) {
        const double c = 0.5 * (a + b), w = 0.5 * (b - a);
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double r = c + w * rule.nodes[i];
            const double hr = h(r), k = std::pow(r, -p);
            s += rule.weights[i] * hr * k;
            if (far) {
                far_num += rule.weights[i] * (hr + center2) * k;
                far_den += rule.weights[i] * k;
            }
        }
        return w * s;
    };
    const int decades = static_cast<int>(std::ceil(-std::log10(q.r_min) - 1e-12));
    const int nlog = std::max(1, decades * q.log_panels_per_decade);
    double a = q.r_min;
    for (int j = 1; j <= nlog; ++j) {
        const double b = std::pow(q.r_min, 1.0 - static_cast<double>(j) / nlog);
        out.value += panel(a, b);
        a = b;
    }
    // Beyond r_cut the shifted terms vanish and h(r) = -center2 exactly.
    const double r_end = std::max(1.0, std::min(q.r_max, r_cut));
    const bool truncated = r_end >= q.r_max;
    const int nuni = static_cast<int>(std::ceil((r_end - 1.0) / q.max_panel_width));
    const double width = nuni > 0 ? (r_end - 1.0) / nuni : 0.0;
    for (int j = 0; j < nuni; ++j) {
        const double lo = 1.0 + j * width;
        out.value += panel(lo, lo + width, truncated && lo >= 0.5 * r_end);
    }
    // The -2φ(x) part of the tail is exact. Past r_max the shifted terms are
    // replaced by their far-field mean, which is exact for constants; the
    // error bar still bounds them by sup|φ|.
    const double tail = std::pow(r_end, -2.0 * beta) / (2.0 * beta);
    out.value -= center2 * tail;
    if (truncated && far_den > 0.0) out.value += far_num / far_den * tail;
    out.tail_bound = r_end < q.r_max ? 0.0 : 2.0 * sup_abs * tail;
    return out;
}

} // namespace detail

struct EllipticRow {
    double horizon = 0.0;
    double max_residual = 0.0;  // max over probes and t ∈ {T/2, T} of |v - ∫_0^t (f + 𝓛v)|
};

struct EllipticReport {
    std::vector<EllipticRow> rows;
    std::vector<double> generator_residual;  // |𝓛u - g| at each probe
};

/// 𝓛φ(x) = ⟨A x + a, Dφ⟩ + Tr((B + S) D²φ) for α = 2, or the nonlocal
/// ℒ_α φ + ⟨Ax + a, Dφ⟩ + Tr(S D²φ) for α < 2. Derivatives by central
/// differences with step h.
inline double elliptic_operator(const OperatorSpec& spec, const KalmanStructure& ks, const Vec& drift, const Mat& s,
                                const std::function<double(const Vec&)>& u, const Vec& x, double h = 1e-4,
                                const RadialQuad& q = {}, double sup_abs = 0.0) {
    const int n = spec.dim();
    const double u0 = u(x);
    Vec grad(n);
    Mat hess(n, n);
    for (int i = 0; i < n; ++i) {
        Vec e = Vec::Zero(n);
        e(i) = h;
        const double up = u(x + e), um = u(x - e);
        grad(i) = (up - um) / (2.0 * h);
        hess(i, i) = (up - 2.0 * u0 + um) / (h * h);
        for (int j = 0; j < i; ++j) {
            Vec f = Vec::Zero(n);
            f(j) = h;
            hess(i, j) = hess(j, i) = (u(x + e + f) - u(x + e - f) - u(x - e + f) + u(x - e - f)) / (4.0 * h * h);
        }
    }
    double val = (spec.A * x + drift).dot(grad);
    Mat diff = s;
    if (spec.alpha == 2.0) diff += spec.B;
    val += (diff.cwiseProduct(hess)).sum();
    if (spec.alpha < 2.0) {
        const auto& mu = *spec.spectral;
        const double beta = spec.alpha / 2.0;
        for (std::size_t j : mu.half_indices()) {
            const Vec dir = ks.sigma_factor * mu.atoms[j];
            auto hfun = [&](double r) { return u(x + r * dir) + u(x - r * dir) - 2.0 * u0; };
            val += mu.weights[j] * detail::radial_pv(hfun, beta, 2.0 * u0, sup_abs, q).value;
        }
    }
    return val;
}

/// Checks that v(t,x) = u(x)t/T solves v(t,x) = ∫_0^t (f + 𝓛v)(s,x) ds with
/// f(t,x) = u(x)/T - g(x)t/T. The time integral uses 3-point Gauss–Legendre
/// (exact for the linear-in-s integrand) and 𝓛 acts on v(s,·) numerically.
inline EllipticReport elliptic_embed_check(const OperatorSpec& spec, const KalmanStructure& ks, const Vec& drift,
                                           const Mat& s, const std::function<double(const Vec&)>& g,
                                           const std::function<double(const Vec&)>& u,
                                           const std::vector<double>& horizons, const std::vector<Vec>& probes,
                                           double h = 1e-4, const RadialQuad& q = {}, double sup_abs = 0.0) {
    require(is_dilation_invariant(spec.A, ks), "elliptic_embed_check: A must be dilation invariant (A = A_0)");
    for (std::size_t j = 0; j < horizons.size(); ++j) {
        require(horizons[j] > 0.0, "elliptic_embed_check: horizons must be positive");
        if (j) require(horizons[j] > horizons[j - 1], "elliptic_embed_check: horizons must be increasing");
    }
    EllipticReport rep;
    for (const auto& x : probes)
        rep.generator_residual.push_back(std::abs(elliptic_operator(spec, ks, drift, s, u, x, h, q, sup_abs) - g(x)));
    const quad::Rule rule = quad::gauss_legendre(3);
    for (double horizon : horizons) {
        EllipticRow row;
        row.horizon = horizon;
        for (const auto& x : probes) {
            const double ux = u(x), gx = g(x);
            for (double t : {0.5 * horizon, horizon}) {
                double integral = 0.0;
                for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                    const double sn = 0.5 * t * (1.0 + rule.nodes[i]);
                    const std::function<double(const Vec&)> v_s = [&](const Vec& y) { return u(y) * sn / horizon; };
                    const double f_s = ux / horizon - gx * sn / horizon;
                    const double lv = elliptic_operator(spec, ks, drift, s, v_s, x, h, q, sup_abs * sn / horizon);
                    integral += 0.5 * t * rule.weights[i] * (f_s + lv);
                }
                row.max_residual = std::max(row.max_residual, std::abs(ux * t / horizon - integral));
            }
        }
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace oupert

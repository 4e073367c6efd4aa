#pragma once

// Experiment registry. Each experiment turns a validated configuration into
// deterministic report rows plus the list of failed checks.

#include "oupert/harness/config.hpp"
#include "oupert/harness/report.hpp"
#include "oupert/levy.hpp"
#include "oupert/norms.hpp"
#include "oupert/oracle.hpp"
#include "oupert/parallel.hpp"
#include "oupert/perturb.hpp"
#include "oupert/random.hpp"
#include "oupert/semigroup.hpp"
#include "oupert/structure.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace oupert::harness {

/// One Monte Carlo solver estimate and its maximum-principle bound T·sup|f|.
struct SolverRecord {
    std::string label;
    double value = 0.0;
    double std_error = 0.0;
    double bound = 0.0;

    bool within_bound(double sigmas = 3.0) const { return std::abs(value) <= bound + sigmas * std_error; }
};

struct ExperimentResult {
    std::vector<ReportRow> rows;
    std::vector<std::string> failures;
    std::vector<SolverRecord> estimates;

    bool passed() const { return failures.empty(); }
};

namespace detail {

/// Reads experiment parameters, rejecting keys the experiment does not know.
class Params {
public:
    Params(const Json& j, const std::string& experiment, std::initializer_list<const char*> allowed) : j_(j) {
        try {
            check_keys(j, "params", allowed);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(e.what()) + " [experiment " + experiment + "]");
        }
    }

    double number(const char* key, double fallback) const {
        return j_.contains(key) ? as_number(j_.at(key), join("params", key)) : fallback;
    }

    std::int64_t integer(const char* key, std::int64_t fallback) const {
        return j_.contains(key) ? as_integer(j_.at(key), join("params", key)) : fallback;
    }

    std::vector<double> numbers(const char* key, std::vector<double> fallback) const {
        return j_.contains(key) ? as_numbers(j_.at(key), join("params", key)) : fallback;
    }

    bool has(const char* key) const { return j_.contains(key); }
    const Json& raw(const char* key) const { return j_.at(key); }

private:
    const Json& j_;
};

inline Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

class RowSink {
public:
    RowSink(const ExperimentConfig& cfg, ExperimentResult& res) : cfg_(cfg), res_(res) {}

    void add(Json params, double value, double lo, double hi) {
        ReportRow r;
        r.experiment = cfg_.experiment;
        r.params = std::move(params);
        r.value = value;
        r.ci_low = lo;
        r.ci_high = hi;
        r.seed = cfg_.mc.seed;
        res_.rows.push_back(std::move(r));
    }

    /// Row carrying a pass/fail check; failures are collected by name.
    void check(Json params, double value, double lo, double hi, bool pass, const std::string& name) {
        params["check"] = name;
        params["pass"] = pass;
        if (!pass) res_.failures.push_back(name);
        add(std::move(params), value, lo, hi);
    }

private:
    const ExperimentConfig& cfg_;
    ExperimentResult& res_;
};

inline void need_probes(const ExperimentConfig& cfg) {
    if (cfg.probes.empty()) fail("probes", "experiment " + cfg.experiment + " needs at least one probe");
}

inline void need_gaussian(const ExperimentConfig& cfg) {
    if (cfg.op.alpha != 2.0) fail("operator.alpha", "experiment " + cfg.experiment + " requires alpha = 2");
}

/// Solver dispatch shared by the Monte Carlo experiments.
inline Estimate solve_probe(const ExperimentConfig& cfg, const KalmanStructure& ks, const Probe& p, double eps,
                            std::uint64_t stream) {
    McParams mc = cfg.mc;
    mc.stream = stream;
    if (cfg.transform && !cfg.transform->is_identity())
        return transform_T_solve(cfg.op, ks, cfg.schedule, *cfg.transform, cfg.source, p.t, p.x, mc, eps);
    if (cfg.schedule.is_zero()) return solve_unperturbed(cfg.op, ks, cfg.source, p.t, p.x, mc);
    return solve_perturbed(cfg.op, ks, cfg.schedule, cfg.source, eps, p.t, p.x, mc);
}

inline Json probe_json(std::size_t idx, const Probe& p) {
    return Json{{"probe", idx}, {"t", p.t}, {"x", vec_json(p.x)}};
}

/// The single Gaussian bump shared by the ratio experiments.
inline const SourceTerm& single_bump(const ExperimentConfig& cfg) {
    const auto& pieces = cfg.source.pieces();
    if (pieces.size() != 1 || pieces[0].terms.size() != 1 ||
        pieces[0].terms[0].family != SourceTerm::Family::gaussian_bump)
        fail("source", "experiment " + cfg.experiment +
                           " needs one piece with a single gaussian_bump term (its norm is evaluated in closed form)");
    return pieces[0].terms[0];
}

inline const AlternatingFamily& need_family(const ExperimentConfig& cfg) {
    if (!cfg.family) fail("schedule.kind", "experiment " + cfg.experiment + " needs an alternating schedule family");
    return *cfg.family;
}

inline const Lattice& need_grid(const ExperimentConfig& cfg) {
    if (!cfg.grid) fail("norms.grid", "experiment " + cfg.experiment + " needs a lattice");
    return *cfg.grid;
}

inline std::vector<int> switch_counts(const Params& p) {
    std::vector<int> out;
    for (double v : p.numbers("switch_counts", {1, 4, 16, 64, 256})) {
        if (v < 1.0 || v != std::floor(v)) fail("params.switch_counts", "entries must be positive integers");
        out.push_back(static_cast<int>(v));
    }
    if (out.size() < 3) fail("params.switch_counts", "at least three switch counts are needed for the slope test");
    return out;
}

} // namespace detail

/// H(γ) = sup_{s, h>0} |e^{-(s+h)²/2} - e^{-s²/2}| / h^γ, the C^γ seminorm of
/// the unit 1-d Gaussian profile, by grid search with local refinement.
inline double gaussian_profile_holder(double gamma) {
    require(gamma > 0.0 && gamma < 1.0, "gaussian_profile_holder: gamma must lie in (0, 1)");
    auto q = [gamma](double s, double lh) {
        const double h = std::exp(lh);
        return std::abs(std::exp(-0.5 * (s + h) * (s + h)) - std::exp(-0.5 * s * s)) / std::pow(h, gamma);
    };
    double bs = 0.0, bl = 0.0, best = -1.0;
    for (int i = 0; i <= 1600; ++i)
        for (int k = 0; k <= 400; ++k) {
            const double s = -8.0 + 0.01 * i, lh = std::log(1e-4) + k * (std::log(16.0) - std::log(1e-4)) / 400;
            const double v = q(s, lh);
            if (v > best) best = v, bs = s, bl = lh;
        }
    double ds = 0.01, dl = (std::log(16.0) - std::log(1e-4)) / 400;
    for (int round = 0; round < 40; ++round) {
        const double s0 = bs, l0 = bl;
        for (int i = -10; i <= 10; ++i)
            for (int k = -10; k <= 10; ++k) {
                const double v = q(s0 + i * ds / 5, l0 + k * dl / 5);
                if (v > best) best = v, bs = s0 + i * ds / 5, bl = l0 + k * dl / 5;
            }
        ds /= 5;
        dl /= 5;
    }
    return best;
}

/// [f]_{C^β_d} for f = amp·exp(-|x-c|²/(2w²)): Σ_i |amp|·w^{-e_i}·H(e_i) with
/// e_i = β/(1+αi); along any block line the worst pair lies on a line
/// through the center.
inline double gaussian_bump_holder(const SourceTerm& term, double beta, const KalmanStructure& ks) {
    double s = 0.0;
    for (int i = 0; i < ks.blocks(); ++i) {
        const double e = beta / (1.0 + ks.alpha * i);
        s += std::abs(term.amplitude) * std::pow(term.width, -e) * gaussian_profile_holder(e);
    }
    return s;
}

/// ‖f‖_{L^p((0,T)×R^N)} for a bump active on [t0, t1).
inline double gaussian_bump_lp(const SourceTerm& term, double t0, double t1, double p, double horizon) {
    const double len = std::max(0.0, std::min(t1, horizon) - std::max(t0, 0.0));
    const int n = static_cast<int>(term.center.size());
    const double space = std::pow(std::abs(term.amplitude), p) *
                         std::pow(2.0 * std::numbers::pi * term.width * term.width / p, 0.5 * n);
    return std::pow(len * space, 1.0 / p);
}

struct SlopeFit {
    double slope = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Least-squares slope of y on x with a two-sided 95% Student-t interval.
inline SlopeFit slope_ci(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 3, "slope_ci: need at least three points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    require(sxx > 0.0, "slope_ci: x values must not all coincide");
    SlopeFit f;
    f.slope = sxy / sxx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (my + f.slope * (x[i] - mx));
        sse += r * r;
    }
    const double se = std::sqrt(sse / (n - 2.0) / sxx);
    const boost::math::students_t dist(n - 2.0);
    const double tq = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.lo = f.slope - tq * se;
    f.hi = f.slope + tq * se;
    return f;
}

namespace experiments {

inline ExperimentResult max_principle(const ExperimentConfig& cfg) {
    const detail::Params p(cfg.params, cfg.experiment, {"epsilon"});
    const double eps = p.number("epsilon", 0.05);
    detail::need_probes(cfg);
    const auto ks = check_kalman(cfg.op);
    const double bound = cfg.op.horizon_T * cfg.source.sup_abs();
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    for (std::size_t i = 0; i < cfg.probes.size(); ++i) {
        const Estimate e = detail::solve_probe(cfg, ks, cfg.probes[i], eps, i);
        const SolverRecord rec{"max-principle probe " + std::to_string(i), e.value, e.std_error, bound};
        res.estimates.push_back(rec);
        Json pj = detail::probe_json(i, cfg.probes[i]);
        pj["bound"] = bound;
        pj["std_error"] = e.std_error;
        sink.check(pj, std::abs(e.value), std::abs(e.value) - 3.0 * e.std_error, std::abs(e.value) + 3.0 * e.std_error,
                   rec.within_bound(), "max-principle probe " + std::to_string(i));
    }
    return res;
}

inline ExperimentResult oracle_compare(const ExperimentConfig& cfg) {
    const detail::Params p(cfg.params, cfg.experiment, {"epsilon", "rel_tol", "sigmas"});
    const double eps = p.number("epsilon", 0.05);
    const double rel_tol = p.number("rel_tol", 0.03);
    const double sigmas = p.number("sigmas", 3.0);
    detail::need_probes(cfg);
    detail::need_gaussian(cfg);
    const auto ks = check_kalman(cfg.op);
    const double bound = cfg.op.horizon_T * cfg.source.sup_abs();
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    const TimeTransform* tr = cfg.transform ? &*cfg.transform : nullptr;
    double worst_sigma = 0.0, worst_rel = 0.0;
    for (std::size_t i = 0; i < cfg.probes.size(); ++i) {
        const auto& pr = cfg.probes[i];
        const Estimate e = detail::solve_probe(cfg, ks, pr, eps, i);
        res.estimates.push_back({"oracle-compare probe " + std::to_string(i), e.value, e.std_error, bound});
        const double oracle = detail::guarded("source", [&] {
            return gaussian_closed_form(cfg.op, cfg.schedule, cfg.source, pr.t, pr.x, OracleQuad{}, tr);
        });
        const double err = std::abs(e.value - oracle);
        const double rel = oracle != 0.0 ? err / std::abs(oracle) : (err == 0.0 ? 0.0 : 1.0 / 0.0);
        const double zs = e.std_error > 0.0 ? err / e.std_error : (err == 0.0 ? 0.0 : 1.0 / 0.0);
        worst_sigma = std::max(worst_sigma, zs);
        worst_rel = std::max(worst_rel, rel);
        Json pj = detail::probe_json(i, pr);
        pj["oracle"] = oracle;
        pj["abs_error"] = err;
        pj["rel_error"] = rel;
        pj["std_error"] = e.std_error;
        pj["epsilon"] = eps;
        sink.check(pj, e.value, e.value - sigmas * e.std_error, e.value + sigmas * e.std_error,
                   err <= sigmas * e.std_error && rel <= rel_tol, "oracle-compare probe " + std::to_string(i));
    }
    sink.add(Json{{"summary", "max error in standard errors"}}, worst_sigma, 0.0, sigmas);
    sink.add(Json{{"summary", "max relative error"}}, worst_rel, 0.0, rel_tol);
    return res;
}

inline ExperimentResult epsilon_sweep_exp(const ExperimentConfig& cfg) {
    const detail::Params p(cfg.params, cfg.experiment, {"epsilons"});
    if (!p.has("epsilons")) detail::fail("params.epsilons", "required for epsilon-sweep");
    const auto eps = p.numbers("epsilons", {});
    detail::need_probes(cfg);
    const auto ks = check_kalman(cfg.op);
    const SweepResult sw = detail::guarded("params.epsilons", [&] {
        return epsilon_sweep(cfg.op, ks, cfg.schedule, cfg.source, eps, cfg.probes, cfg.mc);
    });
    const double bound = cfg.op.horizon_T * cfg.source.sup_abs();
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    for (std::size_t j = 0; j < eps.size(); ++j)
        for (std::size_t i = 0; i < cfg.probes.size(); ++i) {
            const Estimate& e = sw.values[j][i];
            res.estimates.push_back({"epsilon-sweep eps " + detail::fmt17(eps[j]) + " probe " + std::to_string(i),
                                     e.value, e.std_error, bound});
            Json pj = detail::probe_json(i, cfg.probes[i]);
            pj["epsilon"] = eps[j];
            pj["std_error"] = e.std_error;
            sink.add(pj, e.value, e.value - 3.0 * e.std_error, e.value + 3.0 * e.std_error);
        }
    for (std::size_t j = 0; j < sw.gaps.size(); ++j) {
        Json pj{{"gap", j}, {"eps_from", eps[j]}, {"eps_to", eps[j + 1]}, {"probe", sw.gap_probe[j]},
                {"std_error", sw.gap_std_errors[j]}};
        sink.add(pj, sw.gaps[j], sw.gaps[j] - 2.0 * sw.gap_std_errors[j], sw.gaps[j] + 2.0 * sw.gap_std_errors[j]);
    }
    sink.check(Json{{"summary", "gaps strictly decreasing beyond 2 sigma"}}, sw.decreasing ? 1.0 : 0.0, 1.0, 1.0,
               sw.decreasing, "epsilon-sweep gaps decreasing");
    return res;
}

/// Shared tail of the ratio experiments: per-switch rows, spread and slope.
inline void ratio_summary(detail::RowSink& sink, const std::vector<int>& counts, const std::vector<double>& ratios,
                          double max_variation, bool slope_checked, const std::string& name) {
    const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
    const double spread = (*mx - *mn) / *mn;
    sink.check(Json{{"summary", "relative spread (max-min)/min"}}, spread, 0.0, max_variation, spread <= max_variation,
               name + " spread");
    std::vector<double> lx;
    for (int c : counts) lx.push_back(std::log(static_cast<double>(c)));
    const SlopeFit fit = slope_ci(lx, ratios);
    Json pj{{"summary", "slope of ratio vs log(switch count), 95% t interval"}};
    if (slope_checked)
        sink.check(pj, fit.slope, fit.lo, fit.hi, fit.lo <= 0.0 && 0.0 <= fit.hi, name + " slope");
    else
        sink.add(pj, fit.slope, fit.lo, fit.hi);
}

inline ExperimentResult schauder_ratio(const ExperimentConfig& cfg) {
    const double horizon = cfg.op.horizon_T;
    const detail::Params p(cfg.params, cfg.experiment, {"switch_counts", "times", "max_variation"});
    const auto counts = detail::switch_counts(p);
    const auto times = p.numbers("times", {0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon});
    const double max_var = p.number("max_variation", 0.10);
    detail::need_gaussian(cfg);
    const auto& fam = detail::need_family(cfg);
    const auto& grid = detail::need_grid(cfg);
    const auto& bump = detail::single_bump(cfg);
    for (int n : grid.nodes)
        if (n % 2 == 0) detail::fail("norms.grid.nodes", "must be odd (the error bar uses the every-other-node sublattice)");
    for (double t : times)
        if (!(t > 0.0 && t <= horizon)) detail::fail("params.times", "entries must lie in (0, horizon_T]");
    const auto ks = check_kalman(cfg.op);
    Lattice coarse = grid;
    for (auto& n : coarse.nodes) n = (n + 1) / 2;
    const double denom = gaussian_bump_holder(bump, cfg.norms.beta, ks);
    const Executor ex(cfg.mc.threads);
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    std::vector<double> ratios;
    for (int sw : counts) {
        const auto sched = PerturbationSchedule::alternating(fam.sa, fam.sb, sw, horizon);
        double num = 0.0, num_coarse = 0.0;
        for (double t : times) {
            const ClosedFormKernel ker(cfg.op, sched, cfg.source, t);
            SpatialField sf;
            sf.value = [&ker](const Vec& x) { return ker.value(x); };
            sf.gradient = [&ker](const Vec& x) { return ker.gradient(x); };
            sf.hessian = [&ker](const Vec& x) { return ker.hessian(x); };
            num = std::max(num, holder_seminorm_aniso(sf, cfg.norms.gamma, ks, grid, ex));
            num_coarse = std::max(num_coarse, holder_seminorm_aniso(sf, cfg.norms.gamma, ks, coarse, ex));
        }
        const double ratio = num / denom;
        const double bar = (num - num_coarse) / denom;
        ratios.push_back(ratio);
        sink.add(Json{{"switches", sw}, {"numerator", num}, {"denominator", denom}, {"error_bar", bar},
                      {"sup_norm_S", sched.sup_norm()}},
                 ratio, ratio - bar, ratio + bar);
    }
    ratio_summary(sink, counts, ratios, max_var, true, "schauder-ratio");
    return res;
}

inline ExperimentResult sobolev_ratio(const ExperimentConfig& cfg) {
    const double horizon = cfg.op.horizon_T;
    const detail::Params p(cfg.params, cfg.experiment, {"switch_counts", "time_nodes", "max_variation"});
    const auto counts = detail::switch_counts(p);
    const auto nt = p.integer("time_nodes", 6);
    if (nt < 1) detail::fail("params.time_nodes", "must be positive");
    const double max_var = p.number("max_variation", 0.15);
    detail::need_gaussian(cfg);
    const auto& fam = detail::need_family(cfg);
    const auto& grid = detail::need_grid(cfg);
    const auto& bump = detail::single_bump(cfg);
    const auto ks = check_kalman(cfg.op);
    const auto& piece = cfg.source.pieces()[0];
    const double denom = gaussian_bump_lp(bump, piece.t0, piece.t1, cfg.norms.p, horizon);
    const quad::Rule rule = quad::gauss_legendre(static_cast<int>(nt));
    const Executor ex(cfg.mc.threads);
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    std::vector<double> ratios;
    // time integrand is continuous with kinks at switches: fixed panels suffice
    const OracleQuad kq{1e-12, 1e-10, 32, 4, false};
    for (int sw : counts) {
        const auto sched = PerturbationSchedule::alternating(fam.sa, fam.sb, sw, horizon);
        std::vector<double> terms(ks.blocks(), 0.0);
        double tail = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double t = 0.5 * horizon * (1.0 + rule.nodes[i]);
            const ClosedFormKernel ker(cfg.op, sched, cfg.source, t, kq);
            SpaceTimeField st;
            st.value = [&ker](double, const Vec& x) { return ker.value(x); };
            st.second_partial = [&ker](double, const Vec& x, int c) { return ker.second_partial(x, c); };
            st.line = [&ker](double, const Vec& x, const Vec& e) {
                return std::function<double(double)>(ker.line(x, e));
            };
            st.sup_abs = horizon * cfg.source.sup_abs();
            st.support_center = Vec::Zero(cfg.op.dim());
            st.support_radius = ker.negligible_radius();
            const SobolevGrid g{{t}, {0.5 * horizon * rule.weights[i]}, grid};
            const SobolevResult r = detail::guarded("norms", [&] {
                return sobolev_seminorm_aniso(st, cfg.norms.p, ks, cfg.quad, g, ex);
            });
            for (int b = 0; b < ks.blocks(); ++b) terms[b] += r.block_terms[b];
            tail = std::max(tail, r.tail_bound);
        }
        double total = 0.0;
        for (double v : terms) total += v;
        const double num = std::pow(total, 1.0 / cfg.norms.p);
        const double ratio = num / denom;
        ratios.push_back(ratio);
        sink.add(Json{{"switches", sw}, {"numerator", num}, {"denominator", denom}, {"block_terms", terms},
                      {"tail_bound", tail}, {"sup_norm_S", sched.sup_norm()}},
                 ratio, ratio, ratio);
    }
    ratio_summary(sink, counts, ratios, max_var, false, "sobolev-ratio");
    return res;
}

/// For A = A_0, the homogeneous scaling D_λ(t,x) = (λ^α t, λ^{1+αi} x_i)
/// leaves the proxy invariant: e^{λ^α t A} = Λ e^{tA} Λ⁻¹ and, for α = 2,
/// M(0, λ^α t) = Λ M(0, t) Λ with Λ = diag(λ^{1+αi}). Also checks the group
/// law of dilation_apply.
inline ExperimentResult dilation_check(const ExperimentConfig& cfg) {
    const detail::Params p(cfg.params, cfg.experiment, {"lambdas", "times", "tol"});
    const auto lambdas = p.numbers("lambdas", {0.5, 2.0, 8.0});
    const auto times = p.numbers("times", {0.25, 0.5, 1.0});
    const double tol = p.number("tol", 1e-10);
    const auto ks = check_kalman(cfg.op);
    if (!ks.satisfied) detail::fail("operator", "Kalman condition [K] is not satisfied");
    if (!is_dilation_invariant(cfg.op.A, ks)) detail::fail("operator.A", "dilation-check needs A = A_0");
    const int n = cfg.op.dim();
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    for (double lam : lambdas) {
        if (!(lam > 0.0)) detail::fail("params.lambdas", "entries must be positive");
        Vec diag(n);
        for (int i = 0; i < ks.blocks(); ++i)
            diag.segment(ks.block_offset(i), ks.dims[i]).setConstant(std::pow(lam, 1.0 + ks.alpha * i));
        const Mat big = diag.asDiagonal();
        const Mat inv = diag.cwiseInverse().asDiagonal();
        double worst = 0.0;
        for (double t : times) {
            const double ts = std::pow(lam, ks.alpha) * t;
            const Mat lhs = expm(ts * cfg.op.A);
            const Mat rhs = big * expm(t * cfg.op.A) * inv;
            worst = std::max(worst, (lhs - rhs).norm() / std::max(1.0, lhs.norm()));
            if (cfg.op.alpha == 2.0) {
                const Mat cl = ou_covariance(cfg.op, 0.0, ts);
                const Mat cr = big * ou_covariance(cfg.op, 0.0, t) * big;
                worst = std::max(worst, (cl - cr).norm() / std::max(1e-300, cl.norm()));
            }
        }
        sink.check(Json{{"lambda", lam}, {"identity", "homogeneous scaling of mean map and covariance"}}, worst, 0.0,
                   tol, worst <= tol, "dilation-check scaling lambda " + detail::fmt17(lam));
        // group law δ_λ∘δ_μ = δ_{λμ}
        const double mu = 3.0;
        Vec x = Vec::Ones(n);
        const auto a = dilation_apply(mu, 1.0, x, ks);
        const auto b = dilation_apply(lam, a.first, a.second, ks);
        const auto c = dilation_apply(lam * mu, 1.0, x, ks);
        const double gl = std::max(std::abs(b.first - c.first), (b.second - c.second).cwiseAbs().maxCoeff()) /
                          std::max(1.0, c.second.cwiseAbs().maxCoeff());
        sink.check(Json{{"lambda", lam}, {"mu", mu}, {"identity", "dilation group law"}}, gl, 0.0, 1e-12, gl <= 1e-12,
                   "dilation-check group law lambda " + detail::fmt17(lam));
    }
    return res;
}

/// Empirical characteristic function of sample_stable_increment against
/// exp(dt·ψ(λ)).
inline ExperimentResult cf_check(const ExperimentConfig& cfg) {
    const detail::Params p(cfg.params, cfg.experiment, {"alphas", "lambdas", "dt", "draws", "abs_tol", "sigmas"});
    const auto alphas = p.numbers("alphas", {0.5, 1.0, 1.5});
    const auto lambdas = p.numbers("lambdas", {0.5, 1.0, 2.0, 3.0});
    const double dt = p.number("dt", 1.0);
    const auto draws = p.integer("draws", 100000);
    const double abs_tol = p.number("abs_tol", 0.01);
    const double sigmas = p.number("sigmas", 3.0);
    if (draws < 2) detail::fail("params.draws", "must be at least 2");
    if (!(dt >= 0.0)) detail::fail("params.dt", "must be non-negative");
    const SpectralMeasure mu = cfg.op.spectral ? *cfg.op.spectral : SpectralMeasure::isotropic_1d();
    const Vec dir = mu.atoms.front();
    const Executor ex(cfg.mc.threads);
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        const double alpha = alphas[ai];
        if (!(alpha > 0.0 && alpha < 2.0)) detail::fail("params.alphas", "entries must lie in (0, 2)");
        const LevyDriver drv = LevyDriver::stable(mu, alpha);
        std::vector<Vec> z(static_cast<std::size_t>(draws));
        ex.parallel_for(z.size(), [&](std::size_t j) {
            Rng rng = make_stream(cfg.mc.seed, {0xCFu, ai, j});
            z[j] = drv.sample(dt, rng);
        });
        for (double lam : lambdas) {
            const Vec l = lam * dir;
            std::vector<double> c(z.size());
            for (std::size_t j = 0; j < z.size(); ++j) c[j] = std::cos(l.dot(z[j]));
            const MeanSe ms = mean_and_se(c);
            const double exact = std::exp(dt * levy_exponent(mu, alpha, l));
            const double dev = std::abs(ms.mean - exact);
            Json pj{{"alpha", alpha}, {"lambda", lam}, {"exact", exact}, {"std_error", ms.std_error}, {"draws", draws}};
            sink.check(pj, ms.mean, ms.mean - sigmas * ms.std_error, ms.mean + sigmas * ms.std_error,
                       dev <= abs_tol && dev <= sigmas * ms.std_error,
                       "cf-check alpha " + detail::fmt17(alpha) + " lambda " + detail::fmt17(lam));
        }
    }
    return res;
}

/// E[∫ g dπ] = λ∫ g for a scalar Poisson process π and piecewise-constant g.
inline ExperimentResult poisson_identity(const ExperimentConfig& cfg) {
    const double horizon = cfg.op.horizon_T;
    const detail::Params p(cfg.params, cfg.experiment, {"intensity", "paths", "sigmas", "functions"});
    const double lam = p.number("intensity", 5.0);
    const auto paths = p.integer("paths", 10000);
    const double sigmas = p.number("sigmas", 3.0);
    if (!(lam > 0.0)) detail::fail("params.intensity", "must be positive");
    if (paths < 2) detail::fail("params.paths", "must be at least 2");
    struct Piecewise {
        std::vector<double> b;
        std::vector<double> v;
    };
    std::vector<Piecewise> gs;
    if (p.has("functions")) {
        const Json& fj = p.raw("functions");
        if (!fj.is_array() || fj.empty()) detail::fail("params.functions", "expected a non-empty array");
        for (std::size_t i = 0; i < fj.size(); ++i) {
            const std::string path = detail::join("params.functions", i);
            detail::check_keys(fj[i], path, {"breakpoints", "values"});
            Piecewise g{detail::as_numbers(detail::need(fj[i], path, "breakpoints"), path + ".breakpoints"),
                        detail::as_numbers(detail::need(fj[i], path, "values"), path + ".values")};
            detail::guarded(path, [&] { oupert::detail::check_breakpoints(g.b, g.v.size(), "function"); });
            if (std::abs(g.b.back() - horizon) > 1e-12 * std::max(1.0, horizon))
                detail::fail(path + ".breakpoints", "last breakpoint must equal operator.horizon_T");
            gs.push_back(std::move(g));
        }
    } else {
        const double h = horizon;
        gs = {{{0.0, h}, {1.0}},
              {{0.0, 0.3 * h, 0.7 * h, h}, {2.0, -1.0, 0.5}},
              {{0.0, 0.1 * h, 0.2 * h, 0.5 * h, 0.9 * h, h}, {-3.0, 4.0, 0.0, 1.5, -2.0}}};
    }
    const std::size_t np = static_cast<std::size_t>(paths);
    std::vector<std::vector<double>> vals(gs.size(), std::vector<double>(np));
    const Executor ex(cfg.mc.threads);
    ex.parallel_for(np, [&](std::size_t j) {
        Rng rng = make_stream(cfg.mc.seed, {0x9017u, j});
        std::vector<double> times;
        sample_poisson_times(lam, 0.0, horizon, rng, times);
        std::sort(times.begin(), times.end());
        for (std::size_t k = 0; k < gs.size(); ++k) {
            double s = 0.0;
            for (double tau : times) s += gs[k].v[oupert::detail::cell_index(gs[k].b, tau)];
            vals[k][j] = s;
        }
    });
    ExperimentResult res;
    detail::RowSink sink(cfg, res);
    for (std::size_t k = 0; k < gs.size(); ++k) {
        double integral = 0.0;
        for (std::size_t c = 0; c < gs[k].v.size(); ++c) integral += gs[k].v[c] * (gs[k].b[c + 1] - gs[k].b[c]);
        const double expect = lam * integral;
        const MeanSe ms = mean_and_se(vals[k]);
        const double dev = std::abs(ms.mean - expect);
        sink.check(Json{{"function", k}, {"expected", expect}, {"std_error", ms.std_error}, {"paths", paths}},
                   ms.mean, ms.mean - sigmas * ms.std_error, ms.mean + sigmas * ms.std_error,
                   dev <= sigmas * ms.std_error, "poisson-identity function " + std::to_string(k));
    }
    return res;
}

} // namespace experiments

using ExperimentFn = std::function<ExperimentResult(const ExperimentConfig&)>;

inline const std::map<std::string, ExperimentFn>& registry() {
    static const std::map<std::string, ExperimentFn> r{
        {"max-principle", experiments::max_principle},
        {"oracle-compare", experiments::oracle_compare},
        {"epsilon-sweep", experiments::epsilon_sweep_exp},
        {"schauder-ratio", experiments::schauder_ratio},
        {"sobolev-ratio", experiments::sobolev_ratio},
        {"dilation-check", experiments::dilation_check},
        {"cf-check", experiments::cf_check},
        {"poisson-identity", experiments::poisson_identity},
    };
    return r;
}

inline std::string registered_names() {
    std::string s;
    for (const auto& [name, fn] : registry()) s += (s.empty() ? "" : ", ") + name;
    return s;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto& r = registry();
    const auto it = r.find(cfg.experiment);
    if (it == r.end())
        throw ConfigError("config: experiment: unknown experiment \"" + cfg.experiment +
                          "\" (registered: " + registered_names() + ")");
    ExperimentResult res = it->second(cfg);
    // the maximum principle is checked for every solver estimate, whatever the experiment
    for (const auto& e : res.estimates)
        if (!e.within_bound()) res.failures.push_back("max-principle bound violated: " + e.label);
    return res;
}

} // namespace oupert::harness

#pragma once

// Reference solutions for α = 2: the exact Gaussian Duhamel formula (any
// piecewise-constant S(t), optional drift/potential) and an explicit
// finite-difference solver for the 2-d kinetic model.

#include "oupert/core.hpp"
#include "oupert/linalg.hpp"
#include "oupert/quadrature.hpp"
#include "oupert/schedule.hpp"
#include "oupert/source.hpp"
#include "oupert/structure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace oupert {

/// ∫_0^h e^{vA} Q e^{vA*} dv by Van Loan's block exponential.
inline Mat van_loan_integral(const Mat& a, const Mat& q, double h) {
    const int n = static_cast<int>(a.rows());
    if (h == 0.0) return Mat::Zero(n, n);
    Mat m = Mat::Zero(2 * n, 2 * n);
    m.topLeftCorner(n, n) = -a;
    m.topRightCorner(n, n) = q;
    m.bottomRightCorner(n, n) = a.transpose();
    const Mat e = expm(h * m);
    Mat r = e.bottomRightCorner(n, n).transpose() * e.topRightCorner(n, n);
    return 0.5 * (r + r.transpose());
}

/// ∫_0^h e^{vA} dv · a by the augmented exponential.
inline Vec drift_integral(const Mat& a, const Vec& drift, double h) {
    const int n = static_cast<int>(a.rows());
    if (h == 0.0) return Vec::Zero(n);
    Mat m = Mat::Zero(n + 1, n + 1);
    m.topLeftCorner(n, n) = a;
    m.topRightCorner(n, 1) = drift;
    return expm(h * m).topRightCorner(n, 1);
}

struct OracleQuad {
    double abs_tol = 1e-12;
    double rel_tol = 1e-10;
    int panels = 16;            // kernel: base panels on [0, t]
    int gl_nodes = 8;           // kernel: Gauss–Legendre nodes per panel
    bool align_schedule = true; // kernel: also split at S breakpoints
};

namespace detail {

/// Cumulative K(τ) = 2∫_0^τ e^{uA}(B + S(u))e^{uA*} du and
/// Ka(τ) = ∫_0^τ e^{uA} a(u) du, both exact per constant cell.
class CumulativeCovariance {
public:
    CumulativeCovariance(const OperatorSpec& spec, const PerturbationSchedule& sched, const TimeTransform* tr)
        : a_(spec.A), b_(spec.B), sched_(&sched), tr_(tr) {
        edges_ = sched.breakpoints();
        if (tr) edges_.insert(edges_.end(), tr->breakpoints().begin(), tr->breakpoints().end());
        std::sort(edges_.begin(), edges_.end());
        edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
        const int n = static_cast<int>(a_.rows());
        k_.assign(edges_.size(), Mat::Zero(n, n));
        ka_.assign(edges_.size(), Vec::Zero(n));
        for (std::size_t j = 0; j + 1 < edges_.size(); ++j) {
            k_[j + 1] = k_[j] + piece(j, edges_[j + 1]);
            ka_[j + 1] = ka_[j] + drift_piece(j, edges_[j + 1]);
        }
    }

    Mat k(double tau) const {
        const auto j = index(tau);
        return k_[j] + piece(j, tau);
    }

    Vec ka(double tau) const {
        const auto j = index(tau);
        return ka_[j] + drift_piece(j, tau);
    }

private:
    std::size_t index(double tau) const {
        if (tau <= edges_.front()) return 0;
        auto it = std::upper_bound(edges_.begin(), edges_.end(), tau);
        return std::min<std::size_t>(static_cast<std::size_t>(it - edges_.begin()) - 1, edges_.size() - 2);
    }

    Mat piece(std::size_t j, double tau) const {
        const double lo = edges_[j];
        const double mid = 0.5 * (lo + edges_[j + 1]);
        const Mat q = 2.0 * (b_ + sched_->at(mid));
        const Mat e = expm(lo * a_);
        return e * van_loan_integral(a_, q, tau - lo) * e.transpose();
    }

    Vec drift_piece(std::size_t j, double tau) const {
        const int n = static_cast<int>(a_.rows());
        if (!tr_) return Vec::Zero(n);
        const double lo = edges_[j];
        const Vec& drift = tr_->a(0.5 * (lo + edges_[j + 1]));
        if (drift.isZero(0.0)) return Vec::Zero(n);
        return expm(lo * a_) * drift_integral(a_, drift, tau - lo);
    }

    Mat a_, b_;
    const PerturbationSchedule* sched_;
    const TimeTransform* tr_;
    std::vector<double> edges_;
    std::vector<Mat> k_;
    std::vector<Vec> ka_;
};

inline void check_oracle_inputs(const OperatorSpec& spec, const PerturbationSchedule& schedule,
                                const SourceFunction& f, double t, const TimeTransform* tr) {
    require(spec.alpha == 2.0, "gaussian_closed_form: only alpha = 2 is supported");
    require(schedule.dim() == spec.dim(), "gaussian_closed_form: schedule dimension mismatch");
    require(t >= 0.0 && t <= schedule.horizon() * (1.0 + 1e-12), "gaussian_closed_form: t outside the schedule horizon");
    if (tr) require(tr->dim() == spec.dim(), "gaussian_closed_form: transform dimension mismatch");
    for (const auto& p : f.pieces())
        for (const auto& term : p.terms)
            require(term.is_gaussian_or_constant(),
                    "gaussian_closed_form: unregistered source family (only gaussian_bump and constant are closed-form)");
}

} // namespace detail

/// One Gaussian factor of the closed-form solution:
/// weight · exp(-½ dᵀ P d), d = phi·x + offset.
struct GaussianAtom {
    double weight = 0.0;
    Mat phi;
    Vec offset;
    Mat p;
};

/// Closed-form solution u(t,·) as a finite sum of Gaussian atoms, one per
/// (time node, source term). Fast repeated evaluation of values and exact
/// spatial derivatives at a fixed t.
class ClosedFormKernel {
public:
    ClosedFormKernel(const OperatorSpec& spec, const PerturbationSchedule& schedule, const SourceFunction& f, double t,
                     const OracleQuad& q = {}, const TimeTransform* tr = nullptr)
        : n_(spec.dim()) {
        detail::check_oracle_inputs(spec, schedule, f, t, tr);
        if (t == 0.0) return;
        const detail::CumulativeCovariance cum(spec, schedule, tr);
        std::vector<double> edges{0.0, t};
        auto add = [&](const std::vector<double>& b) {
            for (double v : b)
                if (v > 0.0 && v < t) edges.push_back(v);
        };
        add(f.breakpoints());
        if (q.align_schedule) add(schedule.breakpoints());
        if (tr) add(tr->breakpoints());
        for (int j = 1; j < q.panels; ++j) edges.push_back(t * j / q.panels);
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        const quad::Rule rule = quad::gauss_legendre(q.gl_nodes);
        const Mat kt = cum.k(t);
        const Vec kat = cum.ka(t);
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            const double c = 0.5 * (edges[p] + edges[p + 1]), h = 0.5 * (edges[p + 1] - edges[p]);
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double s = c + h * rule.nodes[i];
                add_node(spec, f, tr, cum, kt, kat, t, s, h * rule.weights[i]);
            }
        }
    }

    const std::vector<GaussianAtom>& atoms() const { return atoms_; }

    double value(const Vec& x) const {
        double v = 0.0;
        Vec d(n_);
        for (const auto& a : atoms_) {
            d.noalias() = a.phi * x;
            d += a.offset;
            v += a.weight * std::exp(-0.5 * d.dot(a.p * d));
        }
        return v;
    }

    Vec gradient(const Vec& x) const {
        Vec g = Vec::Zero(n_);
        for (const auto& a : atoms_) {
            const Vec d = a.phi * x + a.offset;
            const Vec pd = a.p * d;
            g -= a.weight * std::exp(-0.5 * d.dot(pd)) * (a.phi.transpose() * pd);
        }
        return g;
    }

    Mat hessian(const Vec& x) const {
        Mat h = Mat::Zero(n_, n_);
        for (const auto& a : atoms_) {
            const Vec d = a.phi * x + a.offset;
            const Vec pd = a.p * d;
            const Vec u = a.phi.transpose() * pd;
            const double e = a.weight * std::exp(-0.5 * d.dot(pd));
            h += e * (u * u.transpose() - a.phi.transpose() * a.p * a.phi);
        }
        return h;
    }

    /// The restriction r ↦ u(t, x + r·e), precomputed per atom so each
    /// evaluation costs one exponential per atom.
    class Line {
    public:
        double operator()(double r) const {
            double v = 0.0;
            for (std::size_t j = 0; j < c_.size(); ++j) v += c_[j] * std::exp(-r * (b_[j] + 0.5 * a_[j] * r));
            return v;
        }

    private:
        friend class ClosedFormKernel;
        std::vector<double> a_, b_, c_;
    };

    Line line(const Vec& x, const Vec& e) const {
        Line l;
        l.a_.reserve(atoms_.size());
        l.b_.reserve(atoms_.size());
        l.c_.reserve(atoms_.size());
        for (const auto& at : atoms_) {
            const Vec d = at.phi * x + at.offset;
            const Vec v = at.phi * e;
            const Vec pd = at.p * d;
            l.a_.push_back(v.dot(at.p * v));
            l.b_.push_back(v.dot(pd));
            l.c_.push_back(at.weight * std::exp(-0.5 * d.dot(pd)));
        }
        return l;
    }

    /// Radius R such that every atom is below e^{-tail}·weight outside B(0, R).
    /// Infinite when a constant atom is present.
    double negligible_radius(double tail = 32.0) const {
        double r = 0.0;
        for (const auto& a : atoms_) {
            if (a.p.isZero(0.0)) return std::numeric_limits<double>::infinity();
            const Mat phi_inv = a.phi.inverse();
            const Vec centre = -phi_inv * a.offset;
            const Mat cov = phi_inv * a.p.inverse() * phi_inv.transpose();
            const double lmax = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (cov + cov.transpose())).eigenvalues().maxCoeff();
            r = std::max(r, centre.norm() + std::sqrt(2.0 * tail * std::max(lmax, 0.0)));
        }
        return r;
    }

    /// Second derivative along coordinate i only (cheaper than the full Hessian).
    double second_partial(const Vec& x, int i) const {
        double h = 0.0;
        Vec d(n_);
        for (const auto& a : atoms_) {
            d.noalias() = a.phi * x;
            d += a.offset;
            const Vec pd = a.p * d;
            const double ui = a.phi.col(i).dot(pd);
            const double qii = a.phi.col(i).dot(a.p * a.phi.col(i));
            h += a.weight * std::exp(-0.5 * d.dot(pd)) * (ui * ui - qii);
        }
        return h;
    }

private:
    void add_node(const OperatorSpec& spec, const SourceFunction& f, const TimeTransform* tr,
                  const detail::CumulativeCovariance& cum, const Mat& kt, const Vec& kat, double t, double s,
                  double w) {
        const Mat back = expm(-s * spec.A);
        Mat sigma = back * (kt - cum.k(s)) * back.transpose();
        sigma = 0.5 * (sigma + sigma.transpose()).eval();
        const Mat phi = expm((t - s) * spec.A);
        Vec shift = Vec::Zero(n_);
        double damp = 1.0;
        if (tr) {
            shift = back * (kat - cum.ka(s));
            damp = std::exp(tr->cum_c(s) - tr->cum_c(t));
        }
        for (const auto& piece : f.pieces()) {
            if (!(s >= piece.t0 && s < piece.t1)) continue;
            for (const auto& term : piece.terms) {
                GaussianAtom atom;
                atom.phi = phi;
                if (term.family == SourceTerm::Family::constant) {
                    atom.weight = w * damp * term.amplitude;
                    atom.offset = Vec::Zero(n_);
                    atom.p = Mat::Zero(n_, n_);
                } else {
                    const double w2 = term.width * term.width;
                    const Mat m = w2 * Mat::Identity(n_, n_) + sigma;
                    const double det = (Mat::Identity(n_, n_) + sigma / w2).determinant();
                    atom.weight = w * damp * term.amplitude / std::sqrt(det);
                    atom.offset = shift - term.center;
                    atom.p = m.inverse();
                }
                atoms_.push_back(std::move(atom));
            }
        }
    }

    int n_;
    std::vector<GaussianAtom> atoms_;
};

/// Exact Gaussian Duhamel value u(t,x) with adaptive Gauss–Kronrod in s on
/// panels aligned to every breakpoint of S, f and the transform.
inline double gaussian_closed_form(const OperatorSpec& spec, const PerturbationSchedule& schedule,
                                   const SourceFunction& f, double t, const Vec& x, const OracleQuad& q = {},
                                   const TimeTransform* tr = nullptr) {
    detail::check_oracle_inputs(spec, schedule, f, t, tr);
    require(x.size() == spec.dim(), "gaussian_closed_form: point dimension mismatch");
    if (t == 0.0 || f.is_zero()) return 0.0;
    const int n = spec.dim();
    const detail::CumulativeCovariance cum(spec, schedule, tr);
    const Mat kt = cum.k(t);
    const Vec kat = cum.ka(t);
    auto integrand = [&](double s) {
        const Mat back = expm(-s * spec.A);
        Mat sigma = back * (kt - cum.k(s)) * back.transpose();
        sigma = 0.5 * (sigma + sigma.transpose()).eval();
        Vec mean = expm((t - s) * spec.A) * x;
        double damp = 1.0;
        if (tr) {
            mean += back * (kat - cum.ka(s));
            damp = std::exp(tr->cum_c(s) - tr->cum_c(t));
        }
        double v = 0.0;
        for (const auto& piece : f.pieces()) {
            if (!(s >= piece.t0 && s < piece.t1)) continue;
            for (const auto& term : piece.terms) {
                if (term.family == SourceTerm::Family::constant) {
                    v += term.amplitude;
                    continue;
                }
                const double w2 = term.width * term.width;
                const Mat m = w2 * Mat::Identity(n, n) + sigma;
                const Vec d = mean - term.center;
                const double det = (Mat::Identity(n, n) + sigma / w2).determinant();
                v += term.amplitude / std::sqrt(det) * std::exp(-0.5 * d.dot(m.ldlt().solve(d)));
            }
        }
        return damp * v;
    };
    std::vector<double> edges{0.0, t};
    auto add = [&](const std::vector<double>& b) {
        for (double v : b)
            if (v > 0.0 && v < t) edges.push_back(v);
    };
    add(f.breakpoints());
    add(schedule.breakpoints());
    if (tr) add(tr->breakpoints());
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    double total = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p)
        total += quad::integrate(integrand, edges[p], edges[p + 1], q.abs_tol / (edges.size() - 1), q.rel_tol);
    return total;
}

/// 2(∫_s^t e^{uA}(B + S(u))e^{uA*} du), the tilde-frame covariance.
inline Mat effective_covariance(const OperatorSpec& spec, const PerturbationSchedule& schedule, double s, double t) {
    require(0.0 <= s && s <= t, "effective_covariance: need 0 <= s <= t");
    const detail::CumulativeCovariance cum(spec, schedule, nullptr);
    return cum.k(t) - cum.k(s);
}

struct KineticGrid {
    double hv = 0.1;        // spacing in x_0 (velocity)
    double hx = 0.1;        // spacing in x_1 (position)
    double ht = 1e-3;       // requested time step (reduced to land on output times)
    double v_extent = 6.0;  // domain [-v_extent, v_extent] × [-x_extent, x_extent]
    double x_extent = 6.0;
    std::vector<double> output_times;  // defaults to {T}
};

struct GridField {
    std::vector<double> v;  // x_0 nodes
    std::vector<double> x;  // x_1 nodes
    std::vector<double> times;
    std::vector<std::vector<double>> frames;  // frames[k][i * x.size() + j] = u(times[k], v[i], x[j])
    double hv = 0.0, hx = 0.0, ht = 0.0;

    double at(std::size_t frame, std::size_t i, std::size_t j) const { return frames[frame][i * x.size() + j]; }

    /// Bilinear interpolation inside the domain, 0 outside.
    double interpolate(std::size_t frame, double v0, double x1) const {
        const double fi = (v0 - v.front()) / hv, fj = (x1 - x.front()) / hx;
        if (fi < 0.0 || fj < 0.0 || fi > static_cast<double>(v.size() - 1) || fj > static_cast<double>(x.size() - 1))
            return 0.0;
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(fi), v.size() - 2);
        const auto j = std::min<std::size_t>(static_cast<std::size_t>(fj), x.size() - 2);
        const double a = fi - i, b = fj - j;
        return (1 - a) * (1 - b) * at(frame, i, j) + a * (1 - b) * at(frame, i + 1, j) + (1 - a) * b * at(frame, i, j + 1) +
               a * b * at(frame, i + 1, j + 1);
    }

    /// CSV lattice dump: comment header with dims, spacings and times, then
    /// rows `t,x0,x1,u`.
    void write_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("grid export: cannot open " + path);
        os << std::setprecision(17);
        os << "# dims " << v.size() << ' ' << x.size() << ' ' << times.size() << '\n';
        os << "# spacings " << hv << ' ' << hx << ' ' << ht << '\n';
        os << "# times";
        for (double t : times) os << ' ' << t;
        os << "\nt,x0,x1,u\n";
        for (std::size_t k = 0; k < times.size(); ++k)
            for (std::size_t i = 0; i < v.size(); ++i)
                for (std::size_t j = 0; j < x.size(); ++j)
                    os << times[k] << ',' << v[i] << ',' << x[j] << ',' << at(k, i, j) << '\n';
    }

    /// Flat binary: uint64 dims (nv, nx, nt), doubles (hv, hx, ht, v0, x0),
    /// nt times, then the frames in row-major order.
    void write_binary(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("grid export: cannot open " + path);
        const std::uint64_t dims[3] = {v.size(), x.size(), times.size()};
        os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        const double hdr[5] = {hv, hx, ht, v.front(), x.front()};
        os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
        os.write(reinterpret_cast<const char*>(times.data()), static_cast<std::streamsize>(times.size() * sizeof(double)));
        for (const auto& fr : frames)
            os.write(reinterpret_cast<const char*>(fr.data()), static_cast<std::streamsize>(fr.size() * sizeof(double)));
    }
};

/// Explicit Euler for ∂_t u = Tr((B + S(t))D²u) + x_0 ∂_{x_1}u + f on the
/// kinetic model, with centered second differences (mixed term included),
/// first-order upwind transport and homogeneous Dirichlet boundaries.
/// `f_breaks` lists the times where f jumps; steps never straddle them.
inline GridField grid_solve_kinetic(const PerturbationSchedule& schedule,
                                    const std::function<double(double, const Vec&)>& f,
                                    const std::vector<double>& f_breaks, const KineticGrid& grid) {
    require(schedule.dim() == 2, "grid_solve_kinetic: the kinetic model is 2-dimensional");
    require(grid.hv > 0.0 && grid.hx > 0.0 && grid.ht > 0.0, "grid_solve_kinetic: spacings must be positive");
    const double horizon = schedule.horizon();
    const Mat b = (Mat(2, 2) << 1.0, 0.0, 0.0, 0.0).finished();
    double dmax = 0.0, offmax = 0.0;
    for (const auto& s : schedule.values()) {
        const Mat d = b + s;
        dmax = std::max({dmax, d(0, 0), d(1, 1)});
        offmax = std::max(offmax, std::abs(d(0, 1)));
    }
    const double rate = 2.0 * dmax * (1.0 / (grid.hv * grid.hv) + 1.0 / (grid.hx * grid.hx)) +
                        2.0 * offmax / (grid.hv * grid.hx) + grid.v_extent / grid.hx;
    if (grid.ht * rate > 0.9) {
        std::ostringstream os;
        os << "grid_solve_kinetic: CFL violated (ht·rate = " << grid.ht * rate << " > 0.9); use ht <= "
           << 0.9 / rate;
        throw ValidationError(os.str());
    }
    GridField out;
    out.hv = grid.hv;
    out.hx = grid.hx;
    const int nv = 2 * static_cast<int>(std::lround(grid.v_extent / grid.hv)) + 1;
    const int nx = 2 * static_cast<int>(std::lround(grid.x_extent / grid.hx)) + 1;
    for (int i = 0; i < nv; ++i) out.v.push_back(-grid.v_extent + i * grid.hv);
    for (int j = 0; j < nx; ++j) out.x.push_back(-grid.x_extent + j * grid.hx);
    std::vector<double> targets = grid.output_times.empty() ? std::vector<double>{horizon} : grid.output_times;
    std::sort(targets.begin(), targets.end());
    for (double t : targets) require(t >= 0.0 && t <= horizon * (1.0 + 1e-12), "grid_solve_kinetic: output time outside [0, T]");

    std::vector<double> u(static_cast<std::size_t>(nv) * nx, 0.0), next(u.size(), 0.0), src(u.size(), 0.0);
    auto idx = [nx](int i, int j) { return static_cast<std::size_t>(i) * nx + j; };
    double t = 0.0;
    double ht_used = grid.ht;
    std::vector<double> stops = targets;
    // also stop at source and schedule breakpoints so piecewise data is sampled cleanly
    for (double v : f_breaks)
        if (v > 0.0 && v < targets.back()) stops.push_back(v);
    for (double v : schedule.breakpoints())
        if (v > 0.0 && v < targets.back()) stops.push_back(v);
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
    std::size_t next_target = 0;
    Vec pt(2);
    for (double stop : stops) {
        const double len = stop - t;
        const int steps = len > 0.0 ? static_cast<int>(std::ceil(len / grid.ht - 1e-9)) : 0;
        const double dt = steps ? len / steps : 0.0;
        if (steps) ht_used = std::min(ht_used, dt);
        for (int n = 0; n < steps; ++n) {
            const double tn = t + n * dt;
            const double tmid = tn + 0.5 * dt;  // piecewise data is constant on the step
            const Mat d = b + schedule.at(tmid);
            for (int i = 0; i < nv; ++i)
                for (int j = 0; j < nx; ++j) {
                    pt << out.v[i], out.x[j];
                    src[idx(i, j)] = f(tmid, pt);
                }
            for (int i = 1; i + 1 < nv; ++i) {
                const double vel = out.v[i];
                for (int j = 1; j + 1 < nx; ++j) {
                    const double c = u[idx(i, j)];
                    const double uvv = (u[idx(i + 1, j)] - 2.0 * c + u[idx(i - 1, j)]) / (grid.hv * grid.hv);
                    const double uxx = (u[idx(i, j + 1)] - 2.0 * c + u[idx(i, j - 1)]) / (grid.hx * grid.hx);
                    const double uvx = (u[idx(i + 1, j + 1)] - u[idx(i + 1, j - 1)] - u[idx(i - 1, j + 1)] +
                                        u[idx(i - 1, j - 1)]) /
                                       (4.0 * grid.hv * grid.hx);
                    // ∂_t u = x_0 ∂_{x_1} u moves information from +x_1 when x_0 > 0
                    const double ux = vel > 0.0 ? (u[idx(i, j + 1)] - c) / grid.hx : (c - u[idx(i, j - 1)]) / grid.hx;
                    const double rhs = d(0, 0) * uvv + d(1, 1) * uxx + 2.0 * d(0, 1) * uvx + vel * ux + src[idx(i, j)];
                    next[idx(i, j)] = c + dt * rhs;
                }
            }
            std::swap(u, next);
        }
        t = stop;
        while (next_target < targets.size() && std::abs(targets[next_target] - t) <= 1e-12 * std::max(1.0, t)) {
            out.times.push_back(targets[next_target]);
            out.frames.push_back(u);
            ++next_target;
        }
    }
    out.ht = ht_used;
    return out;
}

inline GridField grid_solve_kinetic(const PerturbationSchedule& schedule, const SourceFunction& f,
                                    const KineticGrid& grid) {
    require(f.dim() == 0 || f.dim() == 2, "grid_solve_kinetic: source must be 2-dimensional");
    return grid_solve_kinetic(
        schedule, [&f](double t, const Vec& x) { return f(t, x); }, f.breakpoints(), grid);
}

} // namespace oupert

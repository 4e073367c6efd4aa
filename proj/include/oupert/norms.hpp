#pragma once

// Anisotropic seminorm estimators: directional fractional Laplacians,
// Zygmund–Hölder seminorms along the Kalman blocks, and Sobolev seminorms.

#include "oupert/core.hpp"
#include "oupert/levy.hpp"
#include "oupert/parallel.hpp"
#include "oupert/perturb.hpp"
#include "oupert/structure.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

namespace oupert {

using FracQuad = RadialQuad;

/// A spatial function with optional exact derivatives. Missing derivatives
/// are replaced by centered differences with step `fd_step`.
struct SpatialField {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;
    double fd_step = 1e-4;
    double sup_abs = 0.0;  // bound on sup|φ|, used for tail error bars
    // Optional fast restriction r ↦ φ(x + r·e) used by the fractional operator.
    std::function<std::function<double(double)>(const Vec&, const Vec&)> line;
    // Optional: φ is negligible outside the ball B(support_center, support_radius).
    Vec support_center;
    double support_radius = std::numeric_limits<double>::infinity();

    double line_cutoff(const Vec& x) const {
        if (!std::isfinite(support_radius) || support_center.size() != x.size()) return support_radius;
        return (x - support_center).norm() + support_radius;
    }

    Vec grad_at(const Vec& x) const {
        if (gradient) return gradient(x);
        Vec g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Vec e = Vec::Zero(x.size());
            e(i) = fd_step;
            g(i) = (value(x + e) - value(x - e)) / (2.0 * fd_step);
        }
        return g;
    }

    Mat hess_at(const Vec& x) const {
        if (hessian) return hessian(x);
        const auto n = x.size();
        Mat h(n, n);
        const double h2 = fd_step * fd_step;
        const double c = value(x);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec e = Vec::Zero(n);
            e(i) = fd_step;
            h(i, i) = (value(x + e) - 2.0 * c + value(x - e)) / h2;
            for (Eigen::Index j = 0; j < i; ++j) {
                Vec f = Vec::Zero(n);
                f(j) = fd_step;
                h(i, j) = h(j, i) = (value(x + e + f) - value(x + e - f) - value(x - e + f) + value(x - e - f)) / (4.0 * h2);
            }
        }
        return h;
    }

    static SpatialField from_source(const SourceFunction& f, double t) {
        SpatialField s;
        s.value = [&f, t](const Vec& x) { return f(t, x); };
        s.gradient = [&f, t](const Vec& x) { return f.gradient(t, x); };
        s.hessian = [&f, t](const Vec& x) { return f.hessian(t, x); };
        s.sup_abs = f.sup_abs();
        return s;
    }
};

struct NormConfig {
    double beta = 0.5;
    double gamma = 2.5;
    double p = 2.0;
    double alpha = 2.0;

    void validate() const {
        require(beta > 0.0 && beta < std::min(1.0, alpha), "norms: need 0 < beta < min(1, alpha)");
        require(gamma > 0.0 && gamma < 3.0, "norms: gamma must lie in (0, 3)");
        require(p > 1.0, "norms: p must exceed 1");
    }
};

struct RatioReport {
    double numerator = 0.0;
    double denominator = 0.0;
    double ratio = 0.0;
    double error_bar = 0.0;
    std::string provenance;
};

inline RatioReport make_ratio(double num, double den, std::string provenance, double error_bar = 0.0) {
    RatioReport r;
    r.numerator = num;
    r.denominator = den;
    r.ratio = den > 0.0 ? num / den : 0.0;
    r.error_bar = error_bar;
    r.provenance = std::move(provenance);
    return r;
}

/// 2∫_0^∞ (1 - cos r) r^{-1-2β} dr: the cosine eigenvalue of the 1-d
/// directional operator is -frac_cos_constant(β)·|λ|^{2β}.
inline double frac_cos_constant(double beta) {
    require(beta > 0.0 && beta < 1.0, "frac_cos_constant: beta must lie in (0, 1)");
    return 2.0 * stable_constant(2.0 * beta);
}

/// Unit directions covering half of S^{d-1} (one per ± pair) with weights
/// summing to |S^{d-1}|/2.
inline void half_sphere_rule(int dim, int count, std::vector<Vec>& dirs, std::vector<double>& weights) {
    dirs.clear();
    weights.clear();
    if (dim == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
        weights.push_back(1.0);
        return;
    }
    require(count >= 1, "fractional operator: direction count must be positive");
    if (dim == 2) {
        for (int k = 0; k < count; ++k) {
            const double th = std::numbers::pi * (k + 0.5) / count;
            Vec v(2);
            v << std::cos(th), std::sin(th);
            dirs.push_back(v);
            weights.push_back(std::numbers::pi / count);
        }
        return;
    }
    require(dim == 3, "fractional operator: blocks of dimension > 3 are not supported");
    // Fibonacci points on the upper hemisphere.
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
        const double z = 1.0 - (k + 0.5) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec v(3);
        v << r * std::cos(golden * k), r * std::sin(golden * k), z;
        dirs.push_back(v);
        weights.push_back(2.0 * std::numbers::pi / count);
    }
}

/// p.v. ∫_{R^{𝔡_i}} [φ(x + E_i z) - φ(x)] |z|^{-(𝔡_i + 2β)} dz, with value and
/// tail error bar.
inline RadialValue frac_laplacian_dir_full(const SpatialField& phi, int block, double beta,
                                           const KalmanStructure& ks, const FracQuad& q, const Vec& x) {
    require(beta > 0.0 && beta < 1.0, "frac_laplacian_dir: beta must lie in (0, 1)");
    require(block >= 0 && block < ks.blocks(), "frac_laplacian_dir: block index out of range");
    require(x.size() == ks.n(), "frac_laplacian_dir: point dimension mismatch");
    const int dim = ks.dims[block];
    const int off = ks.block_offset(block);
    std::vector<Vec> dirs;
    std::vector<double> w;
    half_sphere_rule(dim, q.directions, dirs, w);
    const double c2 = 2.0 * phi.value(x);
    RadialValue out;
    Vec e = Vec::Zero(x.size());
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        e.setZero();
        e.segment(off, dim) = dirs[k];
        RadialValue rv;
        if (phi.line) {
            const auto g = phi.line(x, e);
            auto h = [&](double r) { return g(r) + g(-r) - c2; };
            rv = detail::radial_pv(h, beta, c2, phi.sup_abs, q, phi.line_cutoff(x));
        } else {
            auto h = [&](double r) { return phi.value(x + r * e) + phi.value(x - r * e) - c2; };
            rv = detail::radial_pv(h, beta, c2, phi.sup_abs, q, phi.line_cutoff(x));
        }
        out.value += w[k] * rv.value;
        out.tail_bound += w[k] * rv.tail_bound;
    }
    return out;
}

inline double frac_laplacian_dir(const SpatialField& phi, int block, double beta, const KalmanStructure& ks,
                                 const FracQuad& q, const Vec& x) {
    return frac_laplacian_dir_full(phi, block, beta, ks, q, x).value;
}

/// Rectangular lattice: per-coordinate extent [lo, hi] and node count.
struct Lattice {
    Vec lo;
    Vec hi;
    std::vector<int> nodes;

    int dim() const { return static_cast<int>(lo.size()); }

    void validate(int n) const {
        require(lo.size() == n && hi.size() == n && static_cast<int>(nodes.size()) == n,
                "lattice: extent and node counts must match the dimension");
        for (int i = 0; i < n; ++i) {
            require(hi(i) > lo(i), "lattice: need lo < hi on every axis");
            require(nodes[i] >= 2, "lattice: at least two nodes per axis");
        }
    }

    double spacing(int i) const { return (hi(i) - lo(i)) / (nodes[i] - 1); }

    std::size_t size() const {
        std::size_t s = 1;
        for (int v : nodes) s *= static_cast<std::size_t>(v);
        return s;
    }

    Vec point(std::size_t flat) const {
        Vec x(dim());
        for (int i = dim() - 1; i >= 0; --i) {
            const auto m = static_cast<std::size_t>(nodes[i]);
            x(i) = lo(i) + static_cast<double>(flat % m) * spacing(i);
            flat /= m;
        }
        return x;
    }

    /// Refinement n -> 2n - 1 keeps every old node.
    Lattice refined() const {
        Lattice r = *this;
        for (auto& v : r.nodes) v = 2 * v - 1;
        return r;
    }
};

struct BlockSplit {
    int ell = 0;
    double beta = 0.0;  // in (0, 1]; 1 means the Zygmund form
};

/// e = ℓ + β with β ∈ (0,1]. Integer exponents take the Zygmund split
/// (β = 1); exponents within 1e-9 of an integer but not equal are rejected.
inline BlockSplit split_exponent(double e) {
    if (!(e > 0.0 && e < 3.0)) {
        std::ostringstream os;
        os << "holder_seminorm_aniso: block exponent " << e << " outside (0, 3)";
        throw ValidationError(os.str());
    }
    const double r = std::round(e);
    if (e == r) return {static_cast<int>(r) - 1, 1.0};
    if (std::abs(e - r) < 1e-9) {
        std::ostringstream os;
        os << "holder_seminorm_aniso: block exponent " << e
           << " is ambiguously close to the integer " << r
           << "; pass the exact integer to use the Zygmund split (beta = 1)";
        throw ValidationError(os.str());
    }
    const int ell = static_cast<int>(std::floor(e));
    return {ell, e - ell};
}

namespace detail {

/// Order-ℓ derivative components along block coordinates [off, off+dim).
inline std::vector<double> block_derivs(const SpatialField& phi, const Vec& x, int ell, int off, int dim) {
    std::vector<double> out;
    if (ell == 0) {
        out.push_back(phi.value(x));
    } else if (ell == 1) {
        const Vec g = phi.grad_at(x);
        for (int a = 0; a < dim; ++a) out.push_back(g(off + a));
    } else {
        const Mat h = phi.hess_at(x);
        for (int a = 0; a < dim; ++a)
            for (int b = a; b < dim; ++b) out.push_back(h(off + a, off + b));
    }
    return out;
}

} // namespace detail

struct HolderBlock {
    int block = 0;
    double exponent = 0.0;
    BlockSplit split;
    double value = 0.0;
};

struct HolderResult {
    double value = 0.0;
    std::vector<HolderBlock> blocks;
};

/// Grid lower bound of Σ_i [φ]_{C^{γ/(1+αi)}} along block i. For each block
/// the order-ℓ derivatives are tabulated once on the lattice; pairs (or
/// symmetric triples in the Zygmund case) run along axis lines inside the
/// block.
inline HolderResult holder_seminorm_aniso_full(const SpatialField& phi, double gamma, const KalmanStructure& ks,
                                               const Lattice& grid, const Executor& ex = Executor(1)) {
    require(ks.satisfied, "holder_seminorm_aniso: Kalman condition not satisfied");
    require(gamma > 0.0 && gamma < 3.0, "holder_seminorm_aniso: gamma must lie in (0, 3)");
    grid.validate(ks.n());
    const std::size_t total = grid.size();
    HolderResult res;
    for (int i = 0; i < ks.blocks(); ++i) {
        HolderBlock hb;
        hb.block = i;
        hb.exponent = gamma / (1.0 + ks.alpha * i);
        hb.split = split_exponent(hb.exponent);
        const int off = ks.block_offset(i), dim = ks.dims[i];
        std::vector<std::vector<double>> table(total);
        ex.parallel_for(total, [&](std::size_t k) {
            table[k] = detail::block_derivs(phi, grid.point(k), hb.split.ell, off, dim);
        });
        // strides of the flat index
        std::vector<std::size_t> stride(grid.dim(), 1);
        for (int a = grid.dim() - 2; a >= 0; --a) stride[a] = stride[a + 1] * grid.nodes[a + 1];
        std::vector<double> best(total, 0.0);
        ex.parallel_for(total, [&](std::size_t k) {
            double m = 0.0;
            std::size_t rem = k;
            std::vector<int> coord(grid.dim());
            for (int a = grid.dim() - 1; a >= 0; --a) {
                coord[a] = static_cast<int>(rem % grid.nodes[a]);
                rem /= grid.nodes[a];
            }
            for (int a = off; a < off + dim; ++a) {
                const double h = grid.spacing(a);
                const int n = grid.nodes[a];
                if (hb.split.beta < 1.0) {
                    // pairs (k, k + j·e_a), j >= 1
                    for (int j = 1; coord[a] + j < n; ++j) {
                        const auto& u = table[k];
                        const auto& v = table[k + j * stride[a]];
                        double d = 0.0;
                        for (std::size_t c = 0; c < u.size(); ++c) d = std::max(d, std::abs(v[c] - u[c]));
                        m = std::max(m, d / std::pow(j * h, hb.split.beta));
                    }
                } else {
                    // symmetric triples centered at k
                    for (int j = 1; coord[a] - j >= 0 && coord[a] + j < n; ++j) {
                        const auto& u = table[k];
                        const auto& up = table[k + j * stride[a]];
                        const auto& um = table[k - j * stride[a]];
                        double d = 0.0;
                        for (std::size_t c = 0; c < u.size(); ++c) d = std::max(d, std::abs(up[c] + um[c] - 2.0 * u[c]));
                        m = std::max(m, d / (j * h));
                    }
                }
            }
            best[k] = m;
        });
        hb.value = *std::max_element(best.begin(), best.end());
        res.value += hb.value;
        res.blocks.push_back(hb);
    }
    return res;
}

inline double holder_seminorm_aniso(const SpatialField& phi, double gamma, const KalmanStructure& ks,
                                    const Lattice& grid, const Executor& ex = Executor(1)) {
    return holder_seminorm_aniso_full(phi, gamma, ks, grid, ex).value;
}

/// A space-time field sampled by the Sobolev estimator.
struct SpaceTimeField {
    std::function<double(double, const Vec&)> value;
    /// Optional exact ∂²/∂x_c² (used for the local α_i = 1 term).
    std::function<double(double, const Vec&, int)> second_partial;
    std::function<std::function<double(double)>(double, const Vec&, const Vec&)> line;
    double sup_abs = 0.0;
    double fd_step = 1e-4;
    Vec support_center;
    double support_radius = std::numeric_limits<double>::infinity();
};

struct SobolevGrid {
    std::vector<double> times;    // time nodes
    std::vector<double> weights;  // time quadrature weights
    Lattice space;
};

struct SobolevResult {
    double value = 0.0;               // [φ] = (Σ_i ‖Δ^{α_i}_{x_i} φ‖_p^p)^{1/p}
    std::vector<double> block_terms;  // ‖Δ^{α_i}_{x_i} φ‖_p^p
    double tail_bound = 0.0;          // largest pointwise tail error bar
};

/// Directional operator of order α_i on block i: the local block Laplacian
/// when α_i = 1, the fractional integral otherwise.
inline double block_operator(const SpaceTimeField& phi, int block, const KalmanStructure& ks, const FracQuad& q,
                             double t, const Vec& x, double* tail = nullptr) {
    const double ai = ks.exponents[block];
    const int off = ks.block_offset(block), dim = ks.dims[block];
    if (ai == 1.0) {
        double s = 0.0;
        for (int c = off; c < off + dim; ++c) {
            if (phi.second_partial) {
                s += phi.second_partial(t, x, c);
            } else {
                Vec e = Vec::Zero(x.size());
                e(c) = phi.fd_step;
                s += (phi.value(t, x + e) - 2.0 * phi.value(t, x) + phi.value(t, x - e)) / (phi.fd_step * phi.fd_step);
            }
        }
        return s;
    }
    SpatialField sf;
    sf.value = [&phi, t](const Vec& y) { return phi.value(t, y); };
    sf.sup_abs = phi.sup_abs;
    if (phi.line) sf.line = [&phi, t](const Vec& y, const Vec& e) { return phi.line(t, y, e); };
    sf.support_center = phi.support_center;
    sf.support_radius = phi.support_radius;
    const RadialValue rv = frac_laplacian_dir_full(sf, block, ai, ks, q, x);
    if (tail) *tail = std::max(*tail, rv.tail_bound);
    return rv.value;
}

inline SobolevResult sobolev_seminorm_aniso(const SpaceTimeField& phi, double p, const KalmanStructure& ks,
                                            const FracQuad& q, const SobolevGrid& grid,
                                            const Executor& ex = Executor(1)) {
    require(ks.satisfied, "sobolev_seminorm_aniso: Kalman condition not satisfied");
    require(p > 1.0, "sobolev_seminorm_aniso: p must exceed 1");
    require(!grid.times.empty() && grid.times.size() == grid.weights.size(),
            "sobolev_seminorm_aniso: time nodes and weights must be non-empty and of equal length");
    grid.space.validate(ks.n());
    double hmin = std::numeric_limits<double>::infinity();
    double cell = 1.0;
    for (int i = 0; i < ks.n(); ++i) {
        hmin = std::min(hmin, grid.space.spacing(i));
        cell *= grid.space.spacing(i);
    }
    require(q.r_min < hmin, "sobolev_seminorm_aniso: lattice too coarse relative to the inner cutoff r_min");
    const std::size_t npts = grid.space.size();
    SobolevResult res;
    res.block_terms.assign(ks.blocks(), 0.0);
    for (int i = 0; i < ks.blocks(); ++i) {
        std::vector<double> contrib(grid.times.size() * npts, 0.0);
        std::vector<double> tails(contrib.size(), 0.0);
        ex.parallel_for(contrib.size(), [&](std::size_t k) {
            const std::size_t ti = k / npts, xi = k % npts;
            // trapezoid weights on the lattice
            const Vec x = grid.space.point(xi);
            double wx = cell;
            std::size_t rem = xi;
            for (int a = grid.space.dim() - 1; a >= 0; --a) {
                const auto c = rem % grid.space.nodes[a];
                rem /= grid.space.nodes[a];
                if (c == 0 || static_cast<int>(c) == grid.space.nodes[a] - 1) wx *= 0.5;
            }
            double tail = 0.0;
            const double v = block_operator(phi, i, ks, q, grid.times[ti], x, &tail);
            contrib[k] = grid.weights[ti] * wx * std::pow(std::abs(v), p);
            tails[k] = tail;
        });
        res.block_terms[i] = pairwise_sum(contrib);
        res.tail_bound = std::max(res.tail_bound, *std::max_element(tails.begin(), tails.end()));
    }
    double s = 0.0;
    for (double b : res.block_terms) s += b;
    res.value = std::pow(s, 1.0 / p);
    return res;
}

} // namespace oupert

#pragma once

// Symmetric alpha-stable Lévy measures with a finite discrete spectral
// measure, the non-degeneracy check, the Lévy exponent and an exact sampler.

#include "oupert/core.hpp"
#include "oupert/quadrature.hpp"
#include "oupert/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace oupert {

struct SpectralMeasure {
    enum class Kind { isotropic_1d, discrete };

    Kind kind = Kind::discrete;
    std::vector<Vec> atoms;       // unit vectors in R^{d0}
    std::vector<double> weights;  // positive masses m_j
    bool symmetric = true;

    /// The measure m·(δ_{+1} + δ_{-1}) on the unit "sphere" of R.
    static SpectralMeasure isotropic_1d(double weight = 0.5) {
        SpectralMeasure m;
        m.kind = Kind::isotropic_1d;
        m.atoms = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
        m.weights = {weight, weight};
        return m;
    }

    static SpectralMeasure discrete(std::vector<Vec> atoms, std::vector<double> weights) {
        SpectralMeasure m;
        m.kind = Kind::discrete;
        m.atoms = std::move(atoms);
        m.weights = std::move(weights);
        return m;
    }

    int dim() const { return atoms.empty() ? 0 : static_cast<int>(atoms.front().size()); }

    /// Rescale every atom to unit length; returns the largest |1 - |θ||.
    double normalize_atoms() {
        double worst = 0.0;
        for (auto& a : atoms) {
            const double n = a.norm();
            require(n > 0.0, "spectral measure: zero atom cannot be normalized");
            worst = std::max(worst, std::abs(1.0 - n));
            a /= n;
        }
        return worst;
    }

    void validate() const {
        require(!atoms.empty(), "spectral measure: atom list is empty");
        require(atoms.size() == weights.size(), "spectral measure: atoms and weights differ in length");
        require(symmetric, "spectral measure: only symmetric measures are supported");
        const auto d = atoms.front().size();
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            require(atoms[j].size() == d, "spectral measure: atoms have inconsistent dimension");
            require(std::abs(atoms[j].norm() - 1.0) <= 1e-12, "spectral measure: every atom must be a unit vector");
            require(weights[j] > 0.0, "spectral measure: weights must be positive");
        }
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            bool found = false;
            for (std::size_t k = 0; k < atoms.size() && !found; ++k)
                found = (atoms[k] + atoms[j]).cwiseAbs().maxCoeff() <= 1e-12 &&
                        std::abs(weights[k] - weights[j]) <= 1e-12 * std::max(1.0, weights[j]);
            require(found, "spectral measure: not symmetric (missing -θ with equal weight)");
        }
    }

    /// One representative of each ±θ pair (index list).
    std::vector<std::size_t> half_indices() const {
        std::vector<std::size_t> out;
        std::vector<bool> used(atoms.size(), false);
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            if (used[j]) continue;
            used[j] = true;
            for (std::size_t k = j + 1; k < atoms.size(); ++k)
                if (!used[k] && (atoms[k] + atoms[j]).cwiseAbs().maxCoeff() <= 1e-12) {
                    used[k] = true;
                    break;
                }
            out.push_back(j);
        }
        return out;
    }
};

inline void require_alpha(double alpha) {
    require(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0, 2]");
}

/// c_α = ∫_0^∞ (1 - cos r) r^{-1-α} dr for α in (0,2).
/// Series on [0,1], adaptive Gauss–Kronrod per period up to R = 2πK, and an
/// asymptotic tail beyond R.
inline double stable_constant(double alpha) {
    require(alpha > 0.0 && alpha < 2.0, "stable_constant: alpha must lie in (0, 2)");
    // ∫_0^1 (1 - cos r) r^{-1-α} dr = Σ_{n>=1} (-1)^{n+1} / ((2n)! (2n - α))
    double head = 0.0;
    double fact = 1.0;
    for (int n = 1; n <= 12; ++n) {
        fact *= (2.0 * n - 1.0) * (2.0 * n);
        head += ((n % 2 == 1) ? 1.0 : -1.0) / (fact * (2.0 * n - alpha));
    }
    auto integrand = [alpha](double r) { return (1.0 - std::cos(r)) * std::pow(r, -1.0 - alpha); };
    constexpr int kPeriods = 400;
    const double two_pi = 2.0 * std::numbers::pi;
    double body = quad::integrate(integrand, 1.0, two_pi, 1e-15, 1e-13);
    for (int k = 1; k < kPeriods; ++k)
        body += quad::integrate(integrand, two_pi * k, two_pi * (k + 1), 1e-16, 1e-13);
    const double r_end = two_pi * kPeriods;
    const double tail = std::pow(r_end, -alpha) / alpha - (1.0 + alpha) * std::pow(r_end, -2.0 - alpha);
    return head + body + tail;
}

struct NonDegeneracyReport {
    double kappa_alpha = 0.0;
    Vec argmin_direction;
    bool pass = false;
};

/// Direction lattice for the [ND] minimization: uniform angles in 2-D,
/// a Fibonacci sphere in 3-D.
inline std::vector<Vec> direction_lattice(int dim, int count = 4096) {
    std::vector<Vec> dirs;
    if (dim == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
        return dirs;
    }
    dirs.reserve(count);
    if (dim == 2) {
        for (int i = 0; i < count; ++i) {
            const double th = 2.0 * std::numbers::pi * i / count;
            Vec v(2);
            v << std::cos(th), std::sin(th);
            dirs.push_back(v);
        }
        return dirs;
    }
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = golden * i;
        Vec v(3);
        v << r * std::cos(th), r * std::sin(th), z;
        dirs.push_back(v);
    }
    return dirs;
}

inline NonDegeneracyReport check_nondegeneracy(const SpectralMeasure& mu, double alpha) {
    require(!mu.atoms.empty(), "check_nondegeneracy: atom list is empty");
    mu.validate();
    require_alpha(alpha);
    const int d = mu.dim();
    require(d <= 3, "check_nondegeneracy: dimension d0 > 3 is not supported");
    NonDegeneracyReport rep;
    rep.kappa_alpha = std::numeric_limits<double>::infinity();
    for (const Vec& lam : direction_lattice(d)) {
        double s = 0.0;
        for (std::size_t j = 0; j < mu.atoms.size(); ++j)
            s += mu.weights[j] * std::pow(std::abs(lam.dot(mu.atoms[j])), alpha);
        if (s < rep.kappa_alpha) {
            rep.kappa_alpha = s;
            rep.argmin_direction = lam;
        }
    }
    rep.pass = rep.kappa_alpha > 1e-8;
    return rep;
}

/// ψ(λ) = ∫ (cos⟨λ,z⟩ - 1) ν_α(dz) = -c_α Σ_j m_j |⟨λ,θ_j⟩|^α.
inline double levy_exponent(const SpectralMeasure& mu, double alpha, const Vec& lambda, double c_alpha) {
    require(alpha > 0.0 && alpha < 2.0, "levy_exponent: alpha must lie in (0, 2); use the Gaussian path for alpha = 2");
    require(lambda.size() == mu.dim(), "levy_exponent: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < mu.atoms.size(); ++j)
        s += mu.weights[j] * std::pow(std::abs(lambda.dot(mu.atoms[j])), alpha);
    return -c_alpha * s;
}

inline double levy_exponent(const SpectralMeasure& mu, double alpha, const Vec& lambda) {
    require(alpha > 0.0 && alpha < 2.0, "levy_exponent: alpha must lie in (0, 2); use the Gaussian path for alpha = 2");
    return levy_exponent(mu, alpha, lambda, stable_constant(alpha));
}

/// Chambers–Mallows–Stuck draw of a symmetric stable variable with
/// characteristic function exp(-|λ|^α).
inline double symmetric_stable_standard(double alpha, Rng& rng) {
    const double u = std::numbers::pi * (rng.uniform() - 0.5);
    const double w = -std::log(rng.uniform());
    if (alpha == 1.0) return std::tan(u);
    const double cu = std::cos(u);
    return std::sin(alpha * u) / std::pow(cu, 1.0 / alpha) *
           std::pow(std::cos(u - alpha * u) / w, (1.0 - alpha) / alpha);
}

/// Increment sampler for the driving process Z. For α = 2, Z is a Brownian
/// motion with generator Δ (covariance 2·dt·I). For α < 2, Z is the
/// symmetric stable process with Lévy measure ν_α built from the spectral
/// measure; one CMS variate per ±θ pair.
class LevyDriver {
public:
    static LevyDriver gaussian(int dim) {
        require(dim >= 1, "LevyDriver: dimension must be positive");
        LevyDriver d;
        d.alpha_ = 2.0;
        d.dim_ = dim;
        return d;
    }

    static LevyDriver stable(const SpectralMeasure& mu, double alpha) {
        require_alpha(alpha);
        mu.validate();
        if (alpha == 2.0) return gaussian(mu.dim());
        LevyDriver d;
        d.alpha_ = alpha;
        d.dim_ = mu.dim();
        d.c_alpha_ = stable_constant(alpha);
        for (auto j : mu.half_indices()) {
            d.dirs_.push_back(mu.atoms[j]);
            // Pair ±θ with mass m each: CF exp(-dt · 2 m c_α |⟨λ,θ⟩|^α).
            d.scales_.push_back(std::pow(2.0 * mu.weights[j] * d.c_alpha_, 1.0 / alpha));
        }
        return d;
    }

    double alpha() const { return alpha_; }
    int dim() const { return dim_; }
    double c_alpha() const { return c_alpha_; }

    Vec sample(double dt, Rng& rng) const {
        require(dt >= 0.0, "sample_stable_increment: dt must be non-negative");
        Vec z = Vec::Zero(dim_);
        if (dt == 0.0) return z;
        if (alpha_ == 2.0) {
            const double s = std::sqrt(2.0 * dt);
            for (int i = 0; i < dim_; ++i) z(i) = s * standard_normal(rng);
            return z;
        }
        const double tscale = std::pow(dt, 1.0 / alpha_);
        for (std::size_t j = 0; j < dirs_.size(); ++j)
            z += (scales_[j] * tscale * symmetric_stable_standard(alpha_, rng)) * dirs_[j];
        return z;
    }

private:
    double alpha_ = 2.0;
    int dim_ = 0;
    double c_alpha_ = 0.0;
    std::vector<Vec> dirs_;
    std::vector<double> scales_;
};

/// One-off increment. Loops should build a LevyDriver once and call sample().
inline Vec sample_stable_increment(const SpectralMeasure& mu, double alpha, double dt, Rng& rng) {
    require(dt >= 0.0, "sample_stable_increment: dt must be non-negative");
    return LevyDriver::stable(mu, alpha).sample(dt, rng);
}

} // namespace oupert

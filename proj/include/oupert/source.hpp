#pragma once

// Source functions f(t, x): piecewise in time, each piece a sum of analytic
// spatial terms with exact gradients and Hessians.

#include "oupert/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace oupert {

struct Monomial {
    double coeff = 0.0;
    std::vector<int> powers;  // one exponent per coordinate
};

struct SourceTerm {
    enum class Family { gaussian_bump, cos_window, polynomial_window, constant };

    Family family = Family::gaussian_bump;
    double amplitude = 1.0;
    Vec center;              // bump / window center
    double width = 1.0;      // Gaussian width w, or window radius R
    Vec wavevector;          // cos_window
    double phase = 0.0;      // cos_window
    std::vector<Monomial> monomials;  // polynomial_window

    static SourceTerm gaussian(double amp, Vec center, double width) {
        SourceTerm t;
        t.family = Family::gaussian_bump;
        t.amplitude = amp;
        t.center = std::move(center);
        t.width = width;
        return t;
    }
    static SourceTerm cos_window(double amp, Vec center, double radius, Vec k, double phase = 0.0) {
        SourceTerm t;
        t.family = Family::cos_window;
        t.amplitude = amp;
        t.center = std::move(center);
        t.width = radius;
        t.wavevector = std::move(k);
        t.phase = phase;
        return t;
    }
    static SourceTerm polynomial_window(double amp, Vec center, double radius, std::vector<Monomial> mono) {
        SourceTerm t;
        t.family = Family::polynomial_window;
        t.amplitude = amp;
        t.center = std::move(center);
        t.width = radius;
        t.monomials = std::move(mono);
        return t;
    }
    static SourceTerm constant(double amp, int dim) {
        SourceTerm t;
        t.family = Family::constant;
        t.amplitude = amp;
        t.center = Vec::Zero(dim);
        return t;
    }

    int dim() const { return static_cast<int>(center.size()); }

    void validate() const {
        require(center.size() > 0, "source term: center must be non-empty");
        if (family != Family::constant) require(width > 0.0, "source term: width/radius must be positive");
        if (family == Family::cos_window)
            require(wavevector.size() == center.size(), "source term: wavevector dimension mismatch");
        if (family == Family::polynomial_window)
            for (const auto& m : monomials)
                require(static_cast<int>(m.powers.size()) == dim(), "source term: monomial power count mismatch");
    }

    double value(const Vec& x) const {
        switch (family) {
        case Family::constant:
            return amplitude;
        case Family::gaussian_bump:
            return amplitude * std::exp(-0.5 * (x - center).squaredNorm() / (width * width));
        case Family::cos_window: {
            const double w = window(x);
            return w == 0.0 ? 0.0 : amplitude * std::cos(wavevector.dot(x) + phase) * w;
        }
        case Family::polynomial_window: {
            const double w = window(x);
            return w == 0.0 ? 0.0 : amplitude * poly(x) * w;
        }
        }
        return 0.0;
    }

    Vec gradient(const Vec& x) const {
        const int n = dim();
        switch (family) {
        case Family::constant:
            return Vec::Zero(n);
        case Family::gaussian_bump: {
            const double g = value(x);
            return -g * (x - center) / (width * width);
        }
        case Family::cos_window: {
            Vec gw;
            Mat hw;
            const double w = window_derivs(x, gw, hw);
            if (w == 0.0) return Vec::Zero(n);
            const double arg = wavevector.dot(x) + phase;
            return amplitude * (-std::sin(arg) * w * wavevector + std::cos(arg) * gw);
        }
        case Family::polynomial_window: {
            Vec gw;
            Mat hw;
            const double w = window_derivs(x, gw, hw);
            if (w == 0.0) return Vec::Zero(n);
            return amplitude * (poly_gradient(x) * w + poly(x) * gw);
        }
        }
        return Vec::Zero(n);
    }

    Mat hessian(const Vec& x) const {
        const int n = dim();
        switch (family) {
        case Family::constant:
            return Mat::Zero(n, n);
        case Family::gaussian_bump: {
            const double g = value(x);
            const Vec d = x - center;
            const double w2 = width * width;
            return g * (d * d.transpose() / (w2 * w2) - Mat::Identity(n, n) / w2);
        }
        case Family::cos_window: {
            Vec gw;
            Mat hw;
            const double w = window_derivs(x, gw, hw);
            if (w == 0.0) return Mat::Zero(n, n);
            const double arg = wavevector.dot(x) + phase;
            const double c = std::cos(arg), s = std::sin(arg);
            return amplitude * (-c * w * wavevector * wavevector.transpose() -
                                s * (wavevector * gw.transpose() + gw * wavevector.transpose()) + c * hw);
        }
        case Family::polynomial_window: {
            Vec gw;
            Mat hw;
            const double w = window_derivs(x, gw, hw);
            if (w == 0.0) return Mat::Zero(n, n);
            const Vec gp = poly_gradient(x);
            return amplitude * (poly_hessian(x) * w + gp * gw.transpose() + gw * gp.transpose() + poly(x) * hw);
        }
        }
        return Mat::Zero(n, n);
    }

    /// Upper bound on sup_x |term(x)| (exact for bumps and constants).
    double sup_abs() const {
        switch (family) {
        case Family::constant:
        case Family::gaussian_bump:
        case Family::cos_window:
            return std::abs(amplitude);
        case Family::polynomial_window: {
            double s = 0.0;
            for (const auto& m : monomials) {
                double p = std::abs(m.coeff);
                for (int j = 0; j < dim(); ++j) p *= std::pow(std::abs(center(j)) + width, m.powers[j]);
                s += p;
            }
            return std::abs(amplitude) * s;
        }
        }
        return 0.0;
    }

    bool is_gaussian_or_constant() const {
        return family == Family::gaussian_bump || family == Family::constant;
    }

private:
    // Smooth compactly supported window W(x) = exp(1 - 1/(1 - q)), q = |x-c|²/R².
    double window(const Vec& x) const {
        const double q = (x - center).squaredNorm() / (width * width);
        if (q >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - q));
    }

    double window_derivs(const Vec& x, Vec& grad, Mat& hess) const {
        const int n = dim();
        const Vec d = x - center;
        const double r2 = width * width;
        const double q = d.squaredNorm() / r2;
        if (q >= 1.0) {
            grad = Vec::Zero(n);
            hess = Mat::Zero(n, n);
            return 0.0;
        }
        const double w = std::exp(1.0 - 1.0 / (1.0 - q));
        const double g1 = -1.0 / ((1.0 - q) * (1.0 - q));
        const double g2 = -2.0 / ((1.0 - q) * (1.0 - q) * (1.0 - q));
        const Vec dq = 2.0 * d / r2;
        grad = w * g1 * dq;
        hess = w * ((g1 * g1 + g2) * dq * dq.transpose() + g1 * (2.0 / r2) * Mat::Identity(n, n));
        return w;
    }

    static double ipow(double x, int p) {
        double r = 1.0;
        for (int i = 0; i < p; ++i) r *= x;
        return r;
    }

    double poly(const Vec& x) const {
        double s = 0.0;
        for (const auto& m : monomials) {
            double p = m.coeff;
            for (int j = 0; j < dim(); ++j) p *= ipow(x(j), m.powers[j]);
            s += p;
        }
        return s;
    }

    Vec poly_gradient(const Vec& x) const {
        Vec g = Vec::Zero(dim());
        for (const auto& m : monomials)
            for (int a = 0; a < dim(); ++a) {
                if (m.powers[a] == 0) continue;
                double p = m.coeff * m.powers[a];
                for (int j = 0; j < dim(); ++j) p *= ipow(x(j), m.powers[j] - (j == a ? 1 : 0));
                g(a) += p;
            }
        return g;
    }

    Mat poly_hessian(const Vec& x) const {
        const int n = dim();
        Mat h = Mat::Zero(n, n);
        for (const auto& m : monomials)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    std::vector<int> pw = m.powers;
                    double c = m.coeff;
                    c *= pw[a];
                    if (pw[a] == 0) continue;
                    pw[a] -= 1;
                    c *= pw[b];
                    if (pw[b] == 0) continue;
                    pw[b] -= 1;
                    for (int j = 0; j < n; ++j) c *= ipow(x(j), pw[j]);
                    h(a, b) += c;
                }
        return h;
    }
};

struct SourcePiece {
    double t0 = 0.0;
    double t1 = 1.0;
    std::vector<SourceTerm> terms;

    bool contains(double t) const { return t >= t0 && t < t1; }
};

/// f(t, x) = Σ over pieces whose interval [t0, t1) contains t of Σ terms.
/// The last interval is treated as closed so f(T, ·) is defined.
class SourceFunction {
public:
    SourceFunction() = default;
    explicit SourceFunction(std::vector<SourcePiece> pieces) : pieces_(std::move(pieces)) { validate(); }

    static SourceFunction single(SourceTerm term, double t0, double t1) {
        return SourceFunction({SourcePiece{t0, t1, {std::move(term)}}});
    }

    const std::vector<SourcePiece>& pieces() const { return pieces_; }
    bool is_zero() const {
        for (const auto& p : pieces_)
            for (const auto& t : p.terms)
                if (t.amplitude != 0.0) return false;
        return true;
    }

    void validate() const {
        int dim = -1;
        for (const auto& p : pieces_) {
            require(p.t1 > p.t0, "source: piece interval must satisfy t0 < t1");
            for (const auto& t : p.terms) {
                t.validate();
                if (dim < 0) dim = t.dim();
                require(t.dim() == dim, "source: terms have inconsistent dimension");
            }
        }
    }

    int dim() const {
        for (const auto& p : pieces_)
            if (!p.terms.empty()) return p.terms.front().dim();
        return 0;
    }

    double operator()(double t, const Vec& x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < pieces_.size(); ++i)
            if (active(i, t))
                for (const auto& term : pieces_[i].terms) s += term.value(x);
        return s;
    }

    Vec gradient(double t, const Vec& x) const {
        Vec g = Vec::Zero(x.size());
        for (std::size_t i = 0; i < pieces_.size(); ++i)
            if (active(i, t))
                for (const auto& term : pieces_[i].terms) g += term.gradient(x);
        return g;
    }

    Mat hessian(double t, const Vec& x) const {
        Mat h = Mat::Zero(x.size(), x.size());
        for (std::size_t i = 0; i < pieces_.size(); ++i)
            if (active(i, t))
                for (const auto& term : pieces_[i].terms) h += term.hessian(x);
        return h;
    }

    /// Time breakpoints of the piecewise structure (sorted, unique).
    std::vector<double> breakpoints() const {
        std::vector<double> b;
        for (const auto& p : pieces_) {
            b.push_back(p.t0);
            b.push_back(p.t1);
        }
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
        return b;
    }

    /// Upper bound on sup_{t,x} |f(t,x)|.
    double sup_abs() const {
        const auto b = breakpoints();
        double best = 0.0;
        for (std::size_t e = 0; e + 1 < b.size(); ++e) {
            const double mid = 0.5 * (b[e] + b[e + 1]);
            double s = 0.0;
            for (std::size_t i = 0; i < pieces_.size(); ++i)
                if (active(i, mid))
                    for (const auto& term : pieces_[i].terms) s += term.sup_abs();
            best = std::max(best, s);
        }
        return best;
    }

    /// Sum of two sources (pieces concatenated).
    friend SourceFunction operator+(const SourceFunction& a, const SourceFunction& b) {
        std::vector<SourcePiece> p = a.pieces_;
        p.insert(p.end(), b.pieces_.begin(), b.pieces_.end());
        return SourceFunction(std::move(p));
    }

    SourceFunction scaled(double c) const {
        SourceFunction out = *this;
        for (auto& p : out.pieces_)
            for (auto& t : p.terms) t.amplitude *= c;
        return out;
    }

private:
    bool active(std::size_t i, double t) const {
        const auto& p = pieces_[i];
        if (p.contains(t)) return true;
        if (t == p.t1) {
            // closed at the right end only if no other piece starts here
            for (const auto& q : pieces_)
                if (q.t0 == t) return false;
            return true;
        }
        return false;
    }

    std::vector<SourcePiece> pieces_;
};

} // namespace oupert

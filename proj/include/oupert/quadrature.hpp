#pragma once

#include "oupert/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

namespace oupert::quad {

struct Rule {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

/// n-point Gauss–Legendre rule on [-1,1] (Newton iteration on P_n).
inline Rule gauss_legendre(int n) {
    require(n >= 1, "gauss_legendre: n must be >= 1");
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) { p1 = x; p0 = 1.0; }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at converged root
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

inline double value_norm(double v) { return std::abs(v); }
template <class Derived>
double value_norm(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

namespace detail {
// Gauss–Kronrod 7/15 abscissae and weights.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class R, class = void>
struct plain_value {
    using type = double;
};
template <class R>
struct plain_value<R, std::enable_if_t<!std::is_arithmetic_v<R>>> {
    using type = typename R::PlainObject;
};

template <class F, class V>
std::pair<V, double> gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    V fc = f(c);
    V resk = fc * kWgk[7];
    V resg = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        V f1 = f(c - dx);
        V f2 = f(c + dx);
        V s = f1 + f2;
        resk = resk + s * kWgk[j];
        if (j % 2 == 1) resg = resg + s * kWg[j / 2];
    }
    V k = resk * h;
    V g = resg * h;
    V diff = k - g;
    return {k, value_norm(diff)};
}

template <class F, class V>
V adaptive(F& f, double a, double b, V whole, double err, double abs_tol, double rel_tol, int depth) {
    if (err <= std::max({abs_tol, rel_tol * value_norm(whole), 64.0 * 2.220446049250313e-16 * value_norm(whole)}) ||
        depth <= 0 || b - a < 1e-15 * (1.0 + std::abs(a)))
        return whole;
    const double m = 0.5 * (a + b);
    auto [l, el] = gk15<F, V>(f, a, m);
    auto [r, er] = gk15<F, V>(f, m, b);
    V left = adaptive<F, V>(f, a, m, l, el, 0.5 * abs_tol, rel_tol, depth - 1);
    V right = adaptive<F, V>(f, m, b, r, er, 0.5 * abs_tol, rel_tol, depth - 1);
    return left + right;
}
} // namespace detail

/// Adaptive Gauss–Kronrod (G7/K15) with recursive bisection. Works for any
/// value type closed under + and scalar *, with `value_norm` defined
/// (double, Eigen vectors/matrices).
template <class F>
auto integrate(F&& f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-10, int max_depth = 40) {
    using R = std::decay_t<std::invoke_result_t<F&, double>>;
    using V = typename detail::plain_value<R>::type;
    auto g = [&f](double x) -> V { return V(f(x)); };
    if (a == b) {
        V z = g(a);
        return V(z * 0.0);
    }
    auto [whole, err] = detail::gk15<decltype(g), V>(g, a, b);
    return detail::adaptive<decltype(g), V>(g, a, b, whole, err, abs_tol, rel_tol, max_depth);
}

/// Fixed-order composite Gauss–Legendre over the given panel boundaries.
template <class F>
double integrate_panels(F&& f, const std::vector<double>& edges, const Rule& rule) {
    double total = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double a = edges[p], b = edges[p + 1];
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(c + h * rule.nodes[i]);
        total += h * s;
    }
    return total;
}

} // namespace oupert::quad

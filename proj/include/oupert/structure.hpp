#pragma once

// Intrinsic geometry of the pair (A, B): Kalman rank condition, block
// decomposition, anisotropic exponents, dilations and the parabolic distance.

#include "oupert/core.hpp"
#include "oupert/levy.hpp"
#include "oupert/linalg.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

namespace oupert {

/// The problem datum. B must already be in block form: only the top-left
/// d0×d0 block B0 is nonzero and B0 is positive definite.
struct OperatorSpec {
    Mat A;
    Mat B;
    double alpha = 2.0;
    std::optional<SpectralMeasure> spectral;  // required iff alpha != 2
    double horizon_T = 1.0;

    int dim() const { return static_cast<int>(A.rows()); }
};

struct KalmanStructure {
    bool satisfied = false;
    int k = 0;
    std::vector<int> dims;         // 𝔡_0, ..., 𝔡_k
    int d0 = 0;
    int d1 = 0;
    std::vector<double> exponents; // α_i = (α/2) / (1 + α i)
    double kappa2 = 0.0;           // smallest eigenvalue of B0
    Mat sigma_factor;              // N×d0, σσ* = B
    bool normal_form = false;      // A has the block lower-Hessenberg shape
    bool dilation_invariant = false;
    double alpha = 2.0;

    int n() const { return d0 + d1; }
    int blocks() const { return static_cast<int>(dims.size()); }
    int block_offset(int i) const {
        int off = 0;
        for (int j = 0; j < i; ++j) off += dims[j];
        return off;
    }
};

inline std::vector<double> intrinsic_exponents(double alpha, const std::vector<int>& dims) {
    require(alpha > 0.0 && alpha <= 2.0, "intrinsic_exponents: alpha must lie in (0, 2]");
    require(!dims.empty(), "intrinsic_exponents: dims must be non-empty");
    std::vector<double> out(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) out[i] = (alpha / 2.0) / (1.0 + alpha * static_cast<double>(i));
    return out;
}

namespace detail {

inline void validate_spec_shape(const OperatorSpec& spec) {
    require(spec.A.rows() == spec.A.cols() && spec.A.rows() > 0, "operator: A must be a non-empty square matrix");
    require(spec.B.rows() == spec.A.rows() && spec.B.cols() == spec.A.cols(),
            "operator: dimension mismatch between A and B");
    require(is_symmetric(spec.B), "operator: B must be symmetric");
    require(spec.alpha > 0.0 && spec.alpha <= 2.0, "operator: alpha must lie in (0, 2]");
    require(spec.horizon_T > 0.0, "operator: horizon_T must be positive");
    const double scale = std::max(1.0, spec.B.cwiseAbs().maxCoeff());
    require(min_eigenvalue(spec.B) >= -1e-12 * scale, "operator: B must be positive semi-definite");
}

/// Checks the block lower-Hessenberg shape: blocks strictly below the
/// subdiagonal vanish and each subdiagonal block has full row rank 𝔡_i.
inline bool has_normal_form(const Mat& a, const std::vector<int>& dims, bool require_zero_elsewhere) {
    const int nb = static_cast<int>(dims.size());
    std::vector<int> off(nb + 1, 0);
    for (int i = 0; i < nb; ++i) off[i + 1] = off[i] + dims[i];
    if (off[nb] != a.rows()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * scale;
    for (int bi = 0; bi < nb; ++bi) {
        for (int bj = 0; bj < nb; ++bj) {
            auto blk = a.block(off[bi], off[bj], dims[bi], dims[bj]);
            if (bi >= 1 && bj == bi - 1) {
                if (numerical_rank(blk) != dims[bi]) return false;
            } else if (bj < bi - 1 || require_zero_elsewhere) {
                if (blk.size() > 0 && blk.cwiseAbs().maxCoeff() > tol) return false;
            }
        }
    }
    return true;
}

} // namespace detail

/// Kalman rank analysis. Rank decisions use the singular-value threshold
/// 1e-10 · σ_max.
inline KalmanStructure check_kalman(const OperatorSpec& spec) {
    detail::validate_spec_shape(spec);
    const int n = spec.dim();
    KalmanStructure ks;
    ks.alpha = spec.alpha;

    const int d0 = numerical_rank(spec.B);
    require(d0 >= 1, "operator: B must have positive rank");
    const double scale = std::max(1.0, spec.B.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if ((i >= d0 || j >= d0) && std::abs(spec.B(i, j)) > 1e-12 * scale)
                throw ValidationError("operator: B must vanish outside its top-left d0×d0 block (d0 = rank B)");
    const Mat b0 = spec.B.topLeftCorner(d0, d0);
    ks.kappa2 = min_eigenvalue(b0);
    require(ks.kappa2 > 1e-12, "operator: smallest eigenvalue of B0 (kappa2) must exceed 1e-12");
    ks.d0 = d0;
    ks.sigma_factor = Mat::Zero(n, d0);
    ks.sigma_factor.topRows(d0) = psd_sqrt(b0);

    if (spec.alpha != 2.0) {
        require(spec.spectral.has_value(), "operator: a spectral measure is required when alpha != 2");
        spec.spectral->validate();
        require(spec.spectral->dim() == d0, "operator: spectral measure dimension must equal d0 = rank B");
    }

    // Successive ranks of [B, AB, ..., A^i B].
    Mat stacked = spec.B;
    Mat power_b = spec.B;
    int prev = numerical_rank(stacked);
    ks.dims = {prev};
    ks.k = 0;
    ks.satisfied = (prev == n);
    for (int i = 1; i < n && !ks.satisfied; ++i) {
        power_b = spec.A * power_b;
        Mat next(n, stacked.cols() + n);
        next << stacked, power_b;
        stacked = std::move(next);
        const int r = numerical_rank(stacked);
        if (r == prev) break;  // rank is stuck for good once an increment vanishes
        ks.dims.push_back(r - prev);
        prev = r;
        ks.k = i;
        ks.satisfied = (r == n);
    }
    ks.d1 = prev - d0;
    if (!ks.satisfied) return ks;

    ks.d1 = n - d0;
    ks.exponents = intrinsic_exponents(spec.alpha, ks.dims);
    ks.normal_form = detail::has_normal_form(spec.A, ks.dims, false);
    ks.dilation_invariant = detail::has_normal_form(spec.A, ks.dims, true);
    return ks;
}

/// True iff A has the A_0 shape under the block partition: only full-rank
/// subdiagonal blocks are nonzero.
inline bool is_dilation_invariant(const Mat& a, const KalmanStructure& ks) {
    require(ks.satisfied, "is_dilation_invariant: Kalman condition not satisfied");
    require(a.rows() == ks.n() && a.cols() == ks.n(), "is_dilation_invariant: dimension mismatch");
    return detail::has_normal_form(a, ks.dims, true);
}

inline double parabolic_distance(const Vec& x, const Vec& y, const KalmanStructure& ks) {
    require(ks.satisfied, "parabolic_distance: Kalman condition not satisfied");
    require(x.size() == ks.n() && y.size() == ks.n(), "parabolic_distance: dimension mismatch");
    double d = 0.0;
    int off = 0;
    for (int i = 0; i < ks.blocks(); ++i) {
        const double r = (x.segment(off, ks.dims[i]) - y.segment(off, ks.dims[i])).norm();
        d += std::pow(r, 1.0 / (1.0 + ks.alpha * i));
        off += ks.dims[i];
    }
    return d;
}

/// δ_λ(t, x) = (λ^{1/α} t, λ x_0, λ^{1/(1+α)} x_1, ..., λ^{1/(1+αk)} x_k).
inline std::pair<double, Vec> dilation_apply(double lambda, double t, const Vec& x, const KalmanStructure& ks) {
    require(lambda > 0.0, "dilation_apply: lambda must be positive");
    require(ks.satisfied, "dilation_apply: Kalman condition not satisfied");
    require(x.size() == ks.n(), "dilation_apply: dimension mismatch");
    Vec y = x;
    int off = 0;
    for (int i = 0; i < ks.blocks(); ++i) {
        const double f = (i == 0) ? lambda : std::pow(lambda, 1.0 / (1.0 + ks.alpha * i));
        y.segment(off, ks.dims[i]) *= f;
        off += ks.dims[i];
    }
    return {std::pow(lambda, 1.0 / ks.alpha) * t, y};
}

/// Throws unless the structure is usable by the anisotropic machinery
/// (Kalman satisfied and A already in block normal form).
inline void require_normal_form(const KalmanStructure& ks) {
    require(ks.satisfied, "operator: Kalman rank condition [K] is not satisfied");
    require(ks.normal_form,
            "operator: A is not in block normal form for the Kalman partition; "
            "transform (A, B) to the normal-form frame before use");
}

} // namespace oupert

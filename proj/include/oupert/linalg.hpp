#pragma once

#include "oupert/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oupert {

/// Matrix exponential (scaling and squaring with a degree-13 Padé approximant).
inline Mat expm(const Mat& a) {
    if (a.size() == 0) return a;
    if (a.isZero(0.0)) return Mat::Identity(a.rows(), a.cols());
    return a.exp();
}

inline bool is_symmetric(const Mat& m, double tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Numerical rank with threshold `rel_tol * largest singular value`.
inline int numerical_rank(const Mat& m, double rel_tol = 1e-10) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++r;
    return r;
}

inline double min_eigenvalue(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues in
/// [-neg_tol, 0) are clamped to zero; anything below is rejected.
inline Mat psd_sqrt(const Mat& s, double neg_tol = 1e-10) {
    require(s.rows() == s.cols(), "psd_sqrt: matrix must be square");
    require(is_symmetric(s), "psd_sqrt: matrix must be symmetric");
    if (s.size() == 0) return s;
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    Vec ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -neg_tol * scale) {
            std::ostringstream os;
            os << "psd_sqrt: eigenvalue " << ev(i) << " below -" << neg_tol << " (matrix not PSD)";
            throw ValidationError(os.str());
        }
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    const Mat& v = es.eigenvectors();
    Mat r = v * ev.asDiagonal() * v.transpose();
    return 0.5 * (r + r.transpose());
}

/// Spectral (operator 2-) norm of a symmetric matrix.
inline double sym_norm(const Mat& s) {
    if (s.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace oupert

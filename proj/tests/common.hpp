#pragma once

#include "oupert/structure.hpp"

#include <Eigen/Dense>

namespace testutil {

using oupert::Mat;
using oupert::Vec;

inline Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

inline Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// A = [[0,0],[1,0]], B = diag(1,0), α = 2, T = 1
inline oupert::OperatorSpec kinetic(double horizon = 1.0) {
    oupert::OperatorSpec s;
    s.A = mat2(0, 0, 1, 0);
    s.B = mat2(1, 0, 0, 0);
    s.horizon_T = horizon;
    return s;
}

inline oupert::OperatorSpec heat(int n, double horizon = 1.0) {
    oupert::OperatorSpec s;
    s.A = Mat::Zero(n, n);
    s.B = Mat::Identity(n, n);
    s.horizon_T = horizon;
    return s;
}

// alternating family used throughout: ‖S_a‖ = ‖S_b‖ = 3/4
inline Mat s_a() { return mat2(0.5, 0.25, 0.25, 0.5); }
inline Mat s_b() { return mat2(0.5, -0.25, -0.25, 0.5); }

} // namespace testutil

#pragma once

// Piecewise-constant perturbation schedules t ↦ S(t) and time transforms
// (drift a(t), potential c(t)).

#include "oupert/core.hpp"
#include "oupert/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace oupert {

namespace detail {

inline void check_breakpoints(const std::vector<double>& b, std::size_t cells, const std::string& who) {
    require(b.size() >= 2, who + ": at least two breakpoints are required");
    require(b.size() == cells + 1, who + ": need exactly one value per cell (breakpoints.size() - 1)");
    require(b.front() == 0.0, who + ": breakpoints must start at 0");
    for (std::size_t j = 0; j + 1 < b.size(); ++j)
        require(b[j + 1] > b[j], who + ": breakpoints must be strictly increasing");
}

/// Index j with b[j] <= t < b[j+1]; the right end maps to the last cell.
inline std::size_t cell_index(const std::vector<double>& b, double t) {
    if (t <= b.front()) return 0;
    if (t >= b.back()) return b.size() - 2;
    auto it = std::upper_bound(b.begin(), b.end(), t);
    return static_cast<std::size_t>(it - b.begin()) - 1;
}

} // namespace detail

class PerturbationSchedule {
public:
    PerturbationSchedule() = default;

    PerturbationSchedule(std::vector<double> breakpoints, std::vector<Mat> values)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
        detail::check_breakpoints(breakpoints_, values_.size(), "schedule");
        const auto n = values_.front().rows();
        sup_norm_ = 0.0;
        for (auto& s : values_) {
            require(s.rows() == n && s.cols() == n, "schedule: values must be square with a common dimension");
            require(is_symmetric(s), "schedule: every S value must be symmetric");
            Eigen::SelfAdjointEigenSolver<Mat> es(s);
            Vec ev = es.eigenvalues();
            for (Eigen::Index i = 0; i < ev.size(); ++i) {
                require(ev(i) >= -1e-12, "schedule: every S value must be positive semi-definite (eigenvalue < -1e-12)");
                ev(i) = std::max(ev(i), 0.0);
            }
            s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
            s = 0.5 * (s + s.transpose()).eval();
            sup_norm_ = std::max(sup_norm_, ev.size() ? ev.maxCoeff() : 0.0);
        }
    }

    static PerturbationSchedule constant(const Mat& s, double horizon) {
        return PerturbationSchedule({0.0, horizon}, {s});
    }

    static PerturbationSchedule zero(int dim, double horizon) {
        return constant(Mat::Zero(dim, dim), horizon);
    }

    /// `switches` switches give switches+1 equal cells alternating sa, sb, sa, ...
    static PerturbationSchedule alternating(const Mat& sa, const Mat& sb, int switches, double horizon) {
        require(switches >= 0, "schedule: switch count must be non-negative");
        const int cells = switches + 1;
        std::vector<double> b(cells + 1);
        std::vector<Mat> v(cells);
        for (int j = 0; j <= cells; ++j) b[j] = horizon * j / cells;
        b.back() = horizon;
        for (int j = 0; j < cells; ++j) v[j] = (j % 2 == 0) ? sa : sb;
        return PerturbationSchedule(std::move(b), std::move(v));
    }

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<Mat>& values() const { return values_; }
    double sup_norm() const { return sup_norm_; }
    double horizon() const { return breakpoints_.back(); }
    int dim() const { return values_.empty() ? 0 : static_cast<int>(values_.front().rows()); }
    std::size_t cells() const { return values_.size(); }

    const Mat& at(double t) const { return values_[detail::cell_index(breakpoints_, t)]; }

    bool is_zero() const {
        for (const auto& s : values_)
            if (!s.isZero(0.0)) return false;
        return true;
    }

private:
    std::vector<double> breakpoints_;
    std::vector<Mat> values_;
    double sup_norm_ = 0.0;
};

/// Piecewise-constant drift a(t) ∈ R^N and potential c(t) >= 0, with their
/// running integrals ã(t) and c̃(t).
class TimeTransform {
public:
    TimeTransform() = default;

    TimeTransform(std::vector<double> breakpoints, std::vector<Vec> drift, std::vector<double> potential)
        : breakpoints_(std::move(breakpoints)), drift_(std::move(drift)), potential_(std::move(potential)) {
        detail::check_breakpoints(breakpoints_, drift_.size(), "transform");
        require(potential_.size() == drift_.size(), "transform: drift and potential must have one value per cell");
        for (std::size_t j = 0; j < drift_.size(); ++j) {
            require(drift_[j].size() == drift_.front().size(), "transform: drift values have inconsistent dimension");
            require(potential_[j] >= 0.0, "transform: potential c(t) must be non-negative");
        }
        cum_a_.assign(breakpoints_.size(), Vec::Zero(drift_.front().size()));
        cum_c_.assign(breakpoints_.size(), 0.0);
        for (std::size_t j = 0; j + 1 < breakpoints_.size(); ++j) {
            const double h = breakpoints_[j + 1] - breakpoints_[j];
            cum_a_[j + 1] = cum_a_[j] + h * drift_[j];
            cum_c_[j + 1] = cum_c_[j] + h * potential_[j];
        }
    }

    static TimeTransform identity(int dim, double horizon) {
        return TimeTransform({0.0, horizon}, {Vec::Zero(dim)}, {0.0});
    }

    static TimeTransform constant(const Vec& a, double c, double horizon) {
        return TimeTransform({0.0, horizon}, {a}, {c});
    }

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    int dim() const { return drift_.empty() ? 0 : static_cast<int>(drift_.front().size()); }

    bool is_identity() const {
        for (std::size_t j = 0; j < drift_.size(); ++j)
            if (!drift_[j].isZero(0.0) || potential_[j] != 0.0) return false;
        return true;
    }

    const Vec& a(double t) const { return drift_[detail::cell_index(breakpoints_, t)]; }
    double c(double t) const { return potential_[detail::cell_index(breakpoints_, t)]; }

    /// ã(t) = ∫_0^t a; constant extrapolation of a beyond the last breakpoint.
    Vec cum_a(double t) const {
        const auto j = detail::cell_index(breakpoints_, t);
        return cum_a_[j] + (t - breakpoints_[j]) * drift_[j];
    }

    double cum_c(double t) const {
        const auto j = detail::cell_index(breakpoints_, t);
        return cum_c_[j] + (t - breakpoints_[j]) * potential_[j];
    }

private:
    std::vector<double> breakpoints_;
    std::vector<Vec> drift_;
    std::vector<double> potential_;
    std::vector<Vec> cum_a_;
    std::vector<double> cum_c_;
};

} // namespace oupert

#include "common.hpp"

#include "oupert/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

using namespace oupert;
using namespace testutil;

namespace {

template <class F>
double simpson(F&& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

// u(t,x) for A = 0, B = I, S = 0 and f = amp·exp(-|x-c|²/(2w²)) on [0,T]
double heat_bump(double amp, double w, double dist2, int dim, double t) {
    return simpson(
        [&](double s) {
            const double v = w * w + 2.0 * (t - s);
            return amp * std::pow(w * w / v, 0.5 * dim) * std::exp(-0.5 * dist2 / v);
        },
        0.0, t);
}

SourceFunction bump(double amp, const Vec& c, double w) { return SourceFunction::single(SourceTerm::gaussian(amp, c, w), 0, 1); }

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("oupert_oracle_" + name)).string();
}

} // namespace

TEST(GaussianClosedForm, ZeroSource) {
    EXPECT_EQ(gaussian_closed_form(kinetic(), PerturbationSchedule::zero(2, 1.0), bump(0.0, vec2(0, 0), 1.0), 1.0,
                                   vec2(0.3, 0.1)),
              0.0);
    EXPECT_EQ(gaussian_closed_form(kinetic(), PerturbationSchedule::zero(2, 1.0), bump(1.0, vec2(0, 0), 1.0), 0.0,
                                   vec2(0.3, 0.1)),
              0.0);
}

TEST(GaussianClosedForm, Errors) {
    auto spec = kinetic();
    const auto z = PerturbationSchedule::zero(2, 1.0);
    const auto cw = SourceFunction::single(SourceTerm::cos_window(1.0, vec2(0, 0), 1.0, vec2(1, 0)), 0, 1);
    EXPECT_THROW(gaussian_closed_form(spec, z, cw, 1.0, vec2(0, 0)), ValidationError);
    EXPECT_THROW(gaussian_closed_form(spec, z, bump(1, vec2(0, 0), 1), 1.5, vec2(0, 0)), ValidationError);
    spec.alpha = 1.5;
    spec.spectral = SpectralMeasure::discrete({vec2(1, 0), vec2(-1, 0), vec2(0, 1), vec2(0, -1)}, {0.25, 0.25, 0.25, 0.25});
    EXPECT_THROW(gaussian_closed_form(spec, z, bump(1, vec2(0, 0), 1), 1.0, vec2(0, 0)), ValidationError);
}

TEST(GaussianClosedForm, HeatMatchesOneDimensionalQuadrature) {
    for (int dim : {1, 2, 3}) {
        const auto spec = heat(dim);
        const auto z = PerturbationSchedule::zero(dim, 1.0);
        const double w = 0.7, amp = 1.0 / std::pow(2 * std::numbers::pi * w * w, 0.5 * dim);
        const Vec c = Vec::Constant(dim, 0.1);
        for (double t : {0.3, 1.0}) {
            for (double r : {0.0, 0.5, 1.5}) {
                const Vec x = Vec::Constant(dim, r);
                const double expect = heat_bump(amp, w, (x - c).squaredNorm(), dim, t);
                EXPECT_NEAR(gaussian_closed_form(spec, z, bump(amp, c, w), t, x), expect, 1e-9 * amp) << dim;
            }
        }
    }
    // N = 2, x = c: ∫_0^t w²/(w²+2τ) dτ = (w²/2) log(1 + 2t/w²)
    const double w = 0.5;
    EXPECT_NEAR(gaussian_closed_form(heat(2), PerturbationSchedule::zero(2, 1.0), bump(1.0, vec2(0, 0), w), 1.0,
                                     vec2(0, 0)),
                0.5 * w * w * std::log(1 + 2 / (w * w)), 1e-10);
}

TEST(GaussianClosedForm, SwitchingCovarianceIsAdditive) {
    const auto spec = kinetic();
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 1, 1.0);
    const Mat both = effective_covariance(spec, sched, 0.0, 1.0);
    const Mat first = effective_covariance(spec, PerturbationSchedule::constant(s_a(), 1.0), 0.0, 0.5);
    const Mat second = effective_covariance(spec, PerturbationSchedule::constant(s_b(), 1.0), 0.5, 1.0);
    EXPECT_LE((both - first - second).cwiseAbs().maxCoeff(), 1e-14);
    // S = 0: 2∫_s^t [[1,u],[u,u²]] du
    const Mat k0 = effective_covariance(spec, PerturbationSchedule::zero(2, 1.0), 0.2, 0.9);
    const double s = 0.2, t = 0.9;
    EXPECT_NEAR(k0(0, 0), 2 * (t - s), 1e-14);
    EXPECT_NEAR(k0(0, 1), t * t - s * s, 1e-14);
    EXPECT_NEAR(k0(1, 1), 2 * (t * t * t - s * s * s) / 3, 1e-14);
}

TEST(GaussianClosedForm, MaximumPrinciple) {
    const auto spec = kinetic();
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    const auto f = bump(2.0, vec2(0.1, 0), 0.3);
    for (double t : {0.25, 1.0})
        for (const Vec& x : {vec2(0, 0), vec2(0.1, 0), vec2(-1, 2)})
            EXPECT_LE(std::abs(gaussian_closed_form(spec, sched, f, t, x)), t * 2.0);
}

TEST(GridSolveKinetic, ZeroSource) {
    KineticGrid g;
    g.hv = g.hx = 0.25;
    g.v_extent = g.x_extent = 2.0;
    g.ht = 5e-3;
    const auto out = grid_solve_kinetic(PerturbationSchedule::zero(2, 1.0), bump(0.0, vec2(0, 0), 1.0), g);
    for (const auto& fr : out.frames)
        for (double v : fr) EXPECT_EQ(v, 0.0);
}

TEST(GridSolveKinetic, CflViolationSuggestsStep) {
    KineticGrid g;
    g.hv = g.hx = 0.1;
    g.ht = 0.01;
    try {
        grid_solve_kinetic(PerturbationSchedule::zero(2, 1.0), bump(1.0, vec2(0, 0), 1.0), g);
        FAIL() << "expected a CFL error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("use ht <="), std::string::npos);
    }
}

TEST(GridSolveKinetic, ManufacturedSolution) {
    // w(t,x) = t·b(x), f = ∂_t w - 𝓛w with 𝓛 = Tr((B+S)D²) + x_0 ∂_{x_1}
    const double sig2 = 0.36;
    const Mat d = mat2(1, 0, 0, 0) + s_a();
    auto b = [=](const Vec& x) { return std::exp(-0.5 * x.squaredNorm() / sig2); };
    auto lb = [=](const Vec& x) {
        const Mat h = b(x) * (x * x.transpose() / (sig2 * sig2) - Mat::Identity(2, 2) / sig2);
        return d.cwiseProduct(h).sum() + x(0) * (-x(1) / sig2) * b(x);
    };
    std::function<double(double, const Vec&)> f = [=](double t, const Vec& x) { return b(x) - t * lb(x); };
    const auto sched = PerturbationSchedule::constant(s_a(), 1.0);
    std::vector<double> errs;
    for (double h : {0.2, 0.1}) {
        KineticGrid g;
        g.hv = g.hx = h;
        g.v_extent = g.x_extent = 4.0;
        g.ht = 0.8 / (2 * 1.5 * 2 / (h * h) + 2 * 0.25 / (h * h) + 4.0 / h);
        const auto out = grid_solve_kinetic(sched, f, {}, g);
        double err = 0.0;
        for (std::size_t i = 0; i < out.v.size(); ++i)
            for (std::size_t j = 0; j < out.x.size(); ++j)
                err = std::max(err, std::abs(out.at(0, i, j) - b(vec2(out.v[i], out.x[j]))));
        errs.push_back(err);
    }
    EXPECT_LT(errs[1], 0.02);
    // first-order upwind transport dominates: halving h at least ~halves the error
    EXPECT_LT(errs[1], 0.6 * errs[0]) << errs[0] << ' ' << errs[1];
}

TEST(GridSolveKinetic, HeatSubcaseMatchesOneDimensionalKernel) {
    // S = diag(0,1) with f depending on x_0 only: the x_0 profile solves the 1-d heat equation
    const double w = 0.5;
    std::function<double(double, const Vec&)> f = [=](double, const Vec& x) {
        return std::exp(-0.5 * x(0) * x(0) / (w * w));
    };
    KineticGrid g;
    g.hv = g.hx = 0.1;
    g.v_extent = 6.0;
    g.x_extent = 8.0;
    g.ht = 1.5e-3;
    const auto out = grid_solve_kinetic(PerturbationSchedule::constant(mat2(0, 0, 0, 1), 1.0), f, {}, g);
    const std::size_t j0 = out.x.size() / 2;
    for (std::size_t i = out.v.size() / 2; i < out.v.size() * 3 / 4; i += 4) {
        const double v = out.v[i];
        const double expect = heat_bump(1.0, w, v * v, 1, 1.0);
        EXPECT_NEAR(out.at(0, i, j0), expect, 0.01 * expect) << v;
    }
}

TEST(GridSolveKinetic, AgreesWithClosedForm) {
    const auto spec = kinetic();
    const auto f = bump(1.0, vec2(0.2, -0.1), 0.5);
    for (const auto& sched : {PerturbationSchedule::constant(s_a(), 1.0), PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0)}) {
        std::vector<double> errs;
        for (double h : {0.2, 0.1}) {
            KineticGrid g;
            g.hv = g.hx = h;
            g.v_extent = g.x_extent = 5.0;
            g.ht = 0.8 / (2 * 1.5 * 2 / (h * h) + 2 * 0.25 / (h * h) + 5.0 / h);
            g.output_times = {0.5, 1.0};
            const auto out = grid_solve_kinetic(sched, f, g);
            ASSERT_EQ(out.times.size(), 2u);
            double err = 0.0;
            for (std::size_t k = 0; k < 2; ++k)
                for (const Vec& x : {vec2(0, 0), vec2(0.4, 0.4), vec2(-0.6, 0.2), vec2(0.2, -0.8)}) {
                    const double cf = gaussian_closed_form(spec, sched, f, out.times[k], x);
                    err = std::max(err, std::abs(out.interpolate(k, x(0), x(1)) - cf));
                    EXPECT_LE(std::abs(out.interpolate(k, x(0), x(1))), out.times[k] * 1.0 + 1e-12);
                }
            errs.push_back(err);
        }
        EXPECT_LT(errs[1], 0.01);
        EXPECT_LT(errs[1], errs[0]);
    }
}

TEST(GridSolveKinetic, Export) {
    KineticGrid g;
    g.hv = g.hx = 0.5;
    g.v_extent = g.x_extent = 2.0;
    g.ht = 0.02;
    g.output_times = {0.5, 1.0};
    const auto out = grid_solve_kinetic(PerturbationSchedule::zero(2, 1.0), bump(1.0, vec2(0, 0), 1.0), g);
    const std::string csv = tmp_path("grid.csv"), bin = tmp_path("grid.bin");
    out.write_csv(csv);
    out.write_binary(bin);
    std::ifstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# dims 9 9 2");
    std::size_t rows = 0;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') ++rows;
    EXPECT_EQ(rows, 1 + 2 * 81u);
    std::ifstream ib(bin, std::ios::binary);
    std::uint64_t dims[3];
    double hdr[5], times[2];
    ib.read(reinterpret_cast<char*>(dims), sizeof(dims));
    ib.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    ib.read(reinterpret_cast<char*>(times), sizeof(times));
    std::vector<double> frame(81);
    ib.read(reinterpret_cast<char*>(frame.data()), 81 * sizeof(double));
    EXPECT_EQ(dims[0], 9u);
    EXPECT_EQ(dims[2], 2u);
    EXPECT_EQ(hdr[0], 0.5);
    EXPECT_EQ(times[1], 1.0);
    EXPECT_EQ(frame, out.frames[0]);
    std::filesystem::remove(csv);
    std::filesystem::remove(bin);
    EXPECT_THROW(out.write_csv("/nonexistent-dir/x.csv"), std::runtime_error);
}

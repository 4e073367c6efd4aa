#include "common.hpp"

#include "oupert/levy.hpp"
#include "oupert/oracle.hpp"
#include "oupert/quadrature.hpp"
#include "oupert/semigroup.hpp"
#include "oupert/source.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace oupert;
using namespace testutil;

namespace {

Mat sample_cov(const OperatorSpec& spec, double s, double t, int n, std::uint64_t seed) {
    const auto ks = check_kalman(spec);
    const OUIntegralSampler smp(spec, ks, s, t, 16);
    Mat c = Mat::Zero(spec.dim(), spec.dim());
    for (int j = 0; j < n; ++j) {
        Rng rng = make_stream(seed, {static_cast<std::uint64_t>(j)});
        const Vec z = smp.sample(rng);
        c += z * z.transpose();
    }
    return c / n;
}

OperatorSpec stable_kinetic(double alpha) {
    OperatorSpec s = kinetic();
    s.alpha = alpha;
    s.spectral = SpectralMeasure::isotropic_1d();
    return s;
}

// log CF of the left-endpoint Riemann sum Σ_m e^{r_m A}σ ΔZ_m
double riemann_log_cf(const OperatorSpec& spec, const Vec& lam, double s, double t, int nsteps) {
    const auto ks = check_kalman(spec);
    const double dt = (t - s) / nsteps;
    double acc = 0.0;
    for (int m = 0; m < nsteps; ++m) {
        const Vec v = ks.sigma_factor.transpose() * expm((s + m * dt) * spec.A).transpose() * lam;
        acc += dt * levy_exponent(*spec.spectral, spec.alpha, v);
    }
    return acc;
}

double exact_log_cf(const OperatorSpec& spec, const Vec& lam, double s, double t) {
    const auto ks = check_kalman(spec);
    auto g = [&](double r) {
        const Vec v = ks.sigma_factor.transpose() * expm(r * spec.A).transpose() * lam;
        return levy_exponent(*spec.spectral, spec.alpha, v);
    };
    return quad::integrate(g, s, t, 1e-13, 1e-12);
}

} // namespace

TEST(OuCovariance, KineticExample) {
    const Mat m = ou_covariance(kinetic(), 0.0, 1.0);
    EXPECT_NEAR(m(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(m(0, 1), 0.5, 1e-12);
    EXPECT_NEAR(m(1, 0), 0.5, 1e-12);
    EXPECT_NEAR(m(1, 1), 1.0 / 3.0, 1e-12);
}

TEST(OuCovariance, TrivialCases) {
    EXPECT_EQ(ou_covariance(kinetic(), 0.4, 0.4), Mat::Zero(2, 2));
    const Mat h = ou_covariance(heat(3), 0.2, 0.9);
    EXPECT_LE((h - 0.7 * Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-13);
    OperatorSpec s = stable_kinetic(1.5);
    EXPECT_THROW(ou_covariance(s, 0.0, 1.0), ValidationError);
}

TEST(OuCovariance, SemigroupConsistency) {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    OperatorSpec spec;
    spec.A = Mat::Zero(3, 3);
    spec.A(1, 0) = 1;
    spec.A(2, 1) = 1;
    spec.A(0, 0) = -0.3;
    spec.B = Mat::Zero(3, 3);
    spec.B(0, 0) = 1.5;
    for (int i = 0; i < 20; ++i) {
        double p[3] = {u(gen), u(gen), u(gen)};
        std::sort(p, p + 3);
        const auto [s, m, t] = std::tuple{p[0], p[1], p[2]};
        const Mat e = expm((t - m) * spec.A);
        const Mat lhs = ou_covariance(spec, s, t);
        // M(s,t) = ∫_s^t e^{rA}Be^{rA*}dr is not shift invariant; the consistency holds for
        // the transition covariance Σ(s,t) = ∫_s^t e^{(t-r)A}Be^{(t-r)A*}dr = M(0, t-s)
        const Mat sig = ou_covariance(spec, 0.0, t - s);
        const Mat sig_rhs = e * ou_covariance(spec, 0.0, m - s) * e.transpose() + ou_covariance(spec, 0.0, t - m);
        EXPECT_LE((sig - sig_rhs).cwiseAbs().maxCoeff(), 1e-9);
        // additivity of M over [s, m] ∪ [m, t]
        EXPECT_LE((lhs - ou_covariance(spec, s, m) - ou_covariance(spec, m, t)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(OuKernelParams, IdentityAtEqualTimes) {
    const auto p = ou_kernel_params(kinetic(), 0.3, 0.3);
    EXPECT_EQ(p.mean_map, Mat::Identity(2, 2));
    EXPECT_EQ(p.cov, Mat::Zero(2, 2));
    const auto q = ou_kernel_params(kinetic(), 0.0, 1.0);
    EXPECT_LE((q.cov - q.cov.transpose()).norm(), 1e-15);
    EXPECT_GE(min_eigenvalue(q.cov), 0.0);
}

TEST(SampleOuIntegral, EqualTimesGiveZero) {
    Rng rng = make_stream(1, {});
    const auto ks = check_kalman(kinetic());
    EXPECT_EQ(sample_ou_integral(kinetic(), ks, 0.5, 0.5, 8, rng), Vec::Zero(2));
    EXPECT_THROW(sample_ou_integral(kinetic(), ks, 0.6, 0.5, 8, rng), ValidationError);
    EXPECT_THROW(sample_ou_integral(kinetic(), ks, 0.0, 0.5, 0, rng), ValidationError);
}

TEST(SampleOuIntegral, HeatCovariance) {
    OperatorSpec s = heat(2);
    s.B = mat2(1.0, 0.3, 0.3, 0.5);
    const Mat c = sample_cov(s, 0.25, 1.0, 100000, 4);
    const Mat target = 2.0 * 0.75 * s.B;
    EXPECT_LE((c - target).cwiseAbs().maxCoeff(), 0.02 * target.cwiseAbs().maxCoeff());
}

TEST(SampleOuIntegral, KineticCovariance) {
    const Mat c = sample_cov(kinetic(), 0.0, 1.0, 100000, 6);
    const Mat target = 2.0 * mat2(1, 0.5, 0.5, 1.0 / 3.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(c(i, j), target(i, j), 0.02 * std::abs(target(i, j))) << i << j;
}

TEST(SampleOuIntegral, StableRiemannSumConverges) {
    const OperatorSpec spec = stable_kinetic(1.5);
    const Vec lam = vec2(0.8, 1.1);
    const double exact = exact_log_cf(spec, lam, 0.0, 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {2, 4, 8, 16, 32, 64, 128}) {
        const double d = std::abs(std::exp(riemann_log_cf(spec, lam, 0.0, 1.0, n)) - std::exp(exact));
        EXPECT_LT(d, prev) << n;
        prev = d;
    }
    EXPECT_LT(prev, 5e-3);
}

TEST(SampleOuIntegral, StableSamplerMatchesItsCharacteristicFunction) {
    const OperatorSpec spec = stable_kinetic(1.2);
    const auto ks = check_kalman(spec);
    const Vec lam = vec2(0.6, -0.9);
    const OUIntegralSampler smp(spec, ks, 0.2, 1.0, 8);
    std::vector<double> c(100000);
    for (std::size_t j = 0; j < c.size(); ++j) {
        Rng rng = make_stream(12, {j});
        c[j] = std::cos(lam.dot(smp.sample(rng)));
    }
    const auto ms = mean_and_se(c);
    EXPECT_LE(std::abs(ms.mean - std::exp(riemann_log_cf(spec, lam, 0.2, 1.0, 8))), 3.5 * ms.std_error);
}

TEST(SolveUnperturbed, ZeroSource) {
    const auto ks = check_kalman(kinetic());
    SourceFunction zero = SourceFunction::single(SourceTerm::gaussian(0.0, Vec::Zero(2), 0.5), 0, 1);
    McParams mc;
    mc.samples = 100;
    mc.seed = 1;
    const Estimate e = solve_unperturbed(kinetic(), ks, zero, 0.7, vec2(0.1, 0.2), mc);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(SolveUnperturbed, ConstantSourceIsExact) {
    const auto spec = heat(2);
    const auto ks = check_kalman(spec);
    const auto f = SourceFunction::single(SourceTerm::constant(1.0, 2), 0, 1);
    McParams mc;
    mc.samples = 64;
    mc.seed = 2;
    for (double t : {0.0, 0.3, 1.0}) {
        const Estimate e = solve_unperturbed(spec, ks, f, t, vec2(0.4, -1.0), mc);
        EXPECT_NEAR(e.value, t, 1e-12);
    }
    // piecewise-in-time constant: ∫_0^t f̃(s) ds, midpoint panels aligned to breakpoints
    const SourceFunction g({SourcePiece{0.0, 0.4, {SourceTerm::constant(2.0, 2)}},
                            SourcePiece{0.4, 1.0, {SourceTerm::constant(-1.0, 2)}}});
    const Estimate e = solve_unperturbed(spec, ks, g, 1.0, vec2(0, 0), mc);
    EXPECT_NEAR(e.value, 2.0 * 0.4 - 0.6, 1e-12);
}

TEST(SolveUnperturbed, MatchesClosedFormOnKinetic) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto f = SourceFunction::single(SourceTerm::gaussian(1.0, Vec::Zero(2), 0.5), 0, 1);
    const auto zero = PerturbationSchedule::zero(2, 1.0);
    McParams mc;
    mc.samples = 40000;
    mc.seed = 3;
    for (const Vec& x : {vec2(0, 0), vec2(0.4, -0.3)}) {
        const Estimate e = solve_unperturbed(spec, ks, f, 1.0, x, mc);
        const double oracle = gaussian_closed_form(spec, zero, f, 1.0, x);
        EXPECT_LE(std::abs(e.value - oracle), 3 * e.std_error + 1e-4) << x.transpose();
        EXPECT_LE(std::abs(e.value), spec.horizon_T * f.sup_abs() + 3 * e.std_error);
    }
}

TEST(SolveUnperturbed, DeterministicAcrossThreadCounts) {
    const auto spec = stable_kinetic(1.5);
    const auto ks = check_kalman(spec);
    const auto f = SourceFunction::single(SourceTerm::gaussian(1.0, Vec::Zero(2), 0.5), 0, 1);
    McParams mc;
    mc.samples = 2000;
    mc.nsteps = 16;
    mc.n_time = 8;
    mc.seed = 99;
    const Estimate a = solve_unperturbed(spec, ks, f, 1.0, vec2(0.1, 0.1), mc);
    mc.threads = 3;
    const Estimate b = solve_unperturbed(spec, ks, f, 1.0, vec2(0.1, 0.1), mc);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(SolveUnperturbed, RejectsBadInputs) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto f = SourceFunction::single(SourceTerm::gaussian(1.0, Vec::Zero(2), 0.5), 0, 1);
    McParams mc;
    mc.seed = 1;
    EXPECT_THROW(solve_unperturbed(spec, ks, f, 1.5, vec2(0, 0), mc), ValidationError);
    mc.samples = 1;
    EXPECT_THROW(solve_unperturbed(spec, ks, f, 0.5, vec2(0, 0), mc), ValidationError);
}

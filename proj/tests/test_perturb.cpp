#include "common.hpp"

#include "oupert/oracle.hpp"
#include "oupert/perturb.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <type_traits>

using namespace oupert;
using namespace testutil;

namespace {

Mat random_psd(std::mt19937_64& gen, int n, double cond = 0.0) {
    std::normal_distribution<double> g;
    Mat q(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) q(i, j) = g(gen);
    Eigen::HouseholderQR<Mat> qr(q);
    const Mat o = qr.householderQ();
    Vec ev(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) ev(i) = cond > 0 ? std::pow(cond, -u(gen)) : u(gen) * (u(gen) < 0.3 ? 0.0 : 1.0);
    if (cond > 0) ev(0) = 1.0, ev(n - 1) = 1.0 / cond;
    const Mat s = o * ev.asDiagonal() * o.transpose();
    return 0.5 * (s + s.transpose());
}

SourceFunction bump(double amp = 1.0, double w = 0.5) {
    return SourceFunction::single(SourceTerm::gaussian(amp, Vec::Zero(2), w), 0, 1);
}

McParams mc(std::int64_t samples, std::uint64_t seed) {
    McParams m;
    m.samples = samples;
    m.seed = seed;
    return m;
}

} // namespace

TEST(PsdSqrt, Examples) {
    EXPECT_LE((psd_sqrt(mat2(4, 0, 0, 0)) - mat2(2, 0, 0, 0)).norm(), 1e-14);
    EXPECT_LE((psd_sqrt(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm(), 1e-14);
    const double a = (std::sqrt(3.0) + 1) / 2, b = (std::sqrt(3.0) - 1) / 2;
    EXPECT_LE((psd_sqrt(mat2(2, 1, 1, 2)) - mat2(a, b, b, a)).norm(), 1e-14);
    EXPECT_NEAR(a, 1.3660, 1e-4);
    EXPECT_THROW(psd_sqrt(mat2(1, 0.5, 0, 1)), ValidationError);
    EXPECT_THROW(psd_sqrt(mat2(1, 0, 0, -1e-8)), ValidationError);
    EXPECT_NO_THROW(psd_sqrt(mat2(1, 0, 0, -1e-11)));
}

TEST(PsdSqrt, SquaresBackOnRandomMatrices) {
    std::mt19937_64 gen(1);
    for (int i = 0; i < 100; ++i) {
        const Mat s = random_psd(gen, 1 + i % 5);
        const Mat r = psd_sqrt(s);
        EXPECT_LE((r * r - s).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_GE(min_eigenvalue(r), -1e-12);
    }
}

TEST(PsdSqrtIntegral, Examples) {
    EXPECT_LE((psd_sqrt_integral(Mat::Identity(2, 2)) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
    Mat d = mat2(4, 0, 0, 1);
    EXPECT_LE((psd_sqrt_integral(d) - mat2(2, 0, 0, 1)).cwiseAbs().maxCoeff(), 1e-6);
    const Mat s = mat2(2, 1, 1, 2);
    EXPECT_LE((psd_sqrt_integral(s) - psd_sqrt(s)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_THROW(psd_sqrt_integral(mat2(1, 0.5, 0, 1)), ValidationError);
}

TEST(PsdSqrtIntegral, AgreesWithEigenRootOnWellConditionedMatrices) {
    std::mt19937_64 gen(2);
    for (int i = 0; i < 12; ++i) {
        const Mat s = random_psd(gen, 2 + i % 3, std::pow(10.0, 1 + i % 4));
        EXPECT_LE((psd_sqrt_integral(s) - psd_sqrt(s)).cwiseAbs().maxCoeff(), 1e-6) << i;
    }
}

TEST(BuildJumpSystem, Examples) {
    const auto spec = heat(2);
    const auto zero = build_jump_system(spec, PerturbationSchedule::zero(2, 1.0), 0.1);
    EXPECT_TRUE(zero.empty());
    const auto id = build_jump_system(spec, PerturbationSchedule::constant(Mat::Identity(2, 2), 1.0), 0.1);
    for (const auto& cell : id.cells) {
        ASSERT_EQ(cell.entries.size(), 2u);
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(cell.entries[i].intensity, 100.0, 1e-9);
            Vec e = Vec::Zero(2);
            e(i) = 0.1;
            EXPECT_LE((cell.entries[i].jump - e).norm(), 1e-15);
        }
    }
    const auto one = build_jump_system(spec, PerturbationSchedule::constant(mat2(1, 0, 0, 0), 1.0), 0.1);
    for (const auto& cell : one.cells) {
        ASSERT_EQ(cell.entries.size(), 1u);
        EXPECT_LE((cell.entries[0].jump - vec2(0.1, 0)).norm(), 1e-15);
    }
    EXPECT_THROW(build_jump_system(spec, PerturbationSchedule::zero(2, 1.0), 0.0), ValidationError);
}

TEST(BuildJumpSystem, FactorReproducesConjugatedMatrix) {
    const auto spec = kinetic();
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    const auto sys = build_jump_system(spec, sched, 0.2);
    for (const auto& cell : sys.cells) {
        const double tm = 0.5 * (cell.t0 + cell.t1);
        const Mat e = expm(tm * spec.A);
        const Mat st = e * sched.at(tm) * e.transpose();
        EXPECT_LE((cell.factor * cell.factor.transpose() - st).cwiseAbs().maxCoeff(), 1e-12);
        // e^{tA} varies by less than 1% inside a cell
        EXPECT_LT((expm((cell.t1 - cell.t0) * spec.A) - Mat::Identity(2, 2)).norm(), 0.01 + 1e-12);
    }
}

TEST(ApplyJ, Examples) {
    const auto spec = heat(2);
    const auto sched = PerturbationSchedule::constant(Mat::Identity(2, 2), 1.0);
    for (double eps : {1.0, 0.1, 1e-3}) {
        const auto sys = build_jump_system(spec, sched, eps);
        auto sq = [](const Vec& x) { return x.squaredNorm(); };
        EXPECT_NEAR(apply_J(sys, sq, 0.5, vec2(0.3, -0.7)), 4.0, 1e-9);
        auto lin = [](const Vec& x) { return 3 * x(0) - 2 * x(1) + 1; };
        EXPECT_NEAR(apply_J(sys, lin, 0.5, vec2(0.3, -0.7)), 0.0, 1e-9);
    }
    const auto sys = build_jump_system(spec, sched, 0.1);
    auto c = [](const Vec& x) { return std::cos(x(0)); };
    const double expect = 2 * (std::cos(0.1) - 1) / 0.01;
    EXPECT_NEAR(apply_J(sys, c, 0.2, vec2(0, 0)), expect, 1e-12);
    EXPECT_NEAR(expect, -0.99917, 1e-5);
}

TEST(ApplyJ, ExactOnQuadraticsAgainstTrace) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> le(-3.0, 0.0);
    const auto spec = kinetic();
    for (int i = 0; i < 100; ++i) {
        const Mat s = random_psd(gen, 2);
        const double eps = std::pow(10.0, le(gen));
        const auto sys = build_jump_system(spec, PerturbationSchedule::constant(s, 1.0), eps);
        Mat q(2, 2);
        q << u(gen), u(gen), u(gen), u(gen);
        const Vec b = vec2(u(gen), u(gen));
        auto phi = [&](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::Scalar;
            return T(x.dot(q.cast<T>() * x) + b.cast<T>().dot(x) + T(0.5));
        };
        const double t = 0.5 * (u(gen) + 1);
        const Vec x = vec2(u(gen), u(gen));
        const Mat& l = sys.factor_at(t);
        const double exact = ((l * l.transpose()).cwiseProduct(q + q.transpose())).sum();
        EXPECT_NEAR(apply_J(sys, phi, t, x), exact, 1e-12) << "eps " << eps;
    }
}

TEST(ApplyJ, DoublePathStaysWithinRoundoffBound) {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto spec = kinetic();
    for (double eps : {1.0, 0.1, 1e-3}) {
        const auto sys = build_jump_system(spec, PerturbationSchedule::constant(s_a(), 1.0), eps);
        Mat q(2, 2);
        q << u(gen), u(gen), u(gen), u(gen);
        auto phi = [&](const Vec& x) { return x.dot(q * x) + 0.5; };
        const Vec x = vec2(u(gen), u(gen));
        const Mat& l = sys.factor_at(0.5);
        const double exact = ((l * l.transpose()).cwiseProduct(q + q.transpose())).sum();
        // each of the three evaluations is correct to a few ulps of |φ| ≤ 3
        const double bound = 2.0 * 16 * 3.0 * std::numeric_limits<double>::epsilon() / (eps * eps);
        EXPECT_NEAR(apply_J(sys, phi, 0.5, x), exact, bound + 1e-13) << eps;
    }
}

TEST(SampleCompoundShift, EmptySystem) {
    const auto sys = build_jump_system(heat(2), PerturbationSchedule::zero(2, 1.0), 0.1);
    Rng rng = make_stream(1, {});
    const auto p = sample_compound_shift(sys, 1.0, rng);
    EXPECT_EQ(p.jumps(), 0u);
    EXPECT_EQ(p.at(1.0), Vec::Zero(2));
}

TEST(SampleCompoundShift, MeanJumpCountAndOrdering) {
    const auto sys = build_jump_system(heat(2), PerturbationSchedule::constant(Mat::Identity(2, 2), 1.0), 0.1);
    const double t = 0.3;
    std::vector<double> counts(10000);
    for (std::size_t j = 0; j < counts.size(); ++j) {
        Rng rng = make_stream(8, {j});
        const auto p = sample_compound_shift(sys, t, rng);
        counts[j] = static_cast<double>(p.jumps());
        for (std::size_t n = 1; n < p.times.size(); ++n) ASSERT_LT(p.times[n - 1], p.times[n]);
        if (!p.times.empty()) {
            ASSERT_GT(p.times.front(), 0.0);
            ASSERT_LE(p.times.back(), t);
        }
        ASSERT_EQ(p.at(0.0), Vec::Zero(2));
    }
    const auto ms = mean_and_se(counts);
    EXPECT_LE(std::abs(ms.mean - 4 * 100 * t), 3 * ms.std_error);
}

TEST(SampleCompoundShift, PoissonExpectationIdentity) {
    // E[∫ g dπ] = λ∫ g for piecewise-constant g
    const std::vector<double> b{0.0, 0.25, 0.6, 1.0};
    const std::vector<double> v{1.5, -2.0, 0.7};
    const double lam = 8.0;
    std::vector<double> acc(10000);
    for (std::size_t j = 0; j < acc.size(); ++j) {
        Rng rng = make_stream(44, {j});
        std::vector<double> times;
        sample_poisson_times(lam, 0.0, 1.0, rng, times);
        for (double s : times) acc[j] += v[s < b[1] ? 0 : (s < b[2] ? 1 : 2)];
    }
    const double expect = lam * (1.5 * 0.25 - 2.0 * 0.35 + 0.7 * 0.4);
    const auto ms = mean_and_se(acc);
    EXPECT_LE(std::abs(ms.mean - expect), 3 * ms.std_error);
}

TEST(SolvePerturbed, ZeroSource) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    const Estimate e = solve_perturbed(spec, ks, sched, bump(0.0), 0.1, 1.0, vec2(0, 0), mc(100, 1));
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
    EXPECT_THROW(solve_perturbed(spec, ks, sched, bump(), 0.0, 1.0, vec2(0, 0), mc(100, 1)), ValidationError);
}

TEST(SolvePerturbed, ZeroScheduleReducesToUnperturbed) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto zero = PerturbationSchedule::zero(2, 1.0);
    const Estimate a = solve_perturbed(spec, ks, zero, bump(), 0.1, 1.0, vec2(0.2, 0.1), mc(20000, 3));
    const Estimate b = solve_unperturbed(spec, ks, bump(), 1.0, vec2(0.2, 0.1), mc(20000, 4));
    EXPECT_LE(std::abs(a.value - b.value), 3 * std::hypot(a.std_error, b.std_error));
}

TEST(SolvePerturbed, MatchesClosedFormWithSwitchingSchedule) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    for (const Vec& x : {vec2(0, 0), vec2(0.5, -0.2), vec2(-0.3, 0.4)}) {
        const Estimate e = solve_perturbed(spec, ks, sched, bump(), 0.05, 0.8, x, mc(30000, 5));
        const double oracle = gaussian_closed_form(spec, sched, bump(), 0.8, x);
        // 3σ plus a bias allowance of order ε² times the fourth derivatives of u
        EXPECT_LE(std::abs(e.value - oracle), 3 * e.std_error + 5e-4) << x.transpose();
        EXPECT_LE(std::abs(e.value), spec.horizon_T * bump().sup_abs() + 3 * e.std_error);
    }
}

TEST(SolvePerturbed, LinearInSource) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 3, 1.0);
    const SourceTerm t1 = SourceTerm::gaussian(1.0, vec2(0.2, 0), 0.5);
    const SourceTerm t2 = SourceTerm::cos_window(0.5, vec2(0, 0.3), 1.5, vec2(1, 2), 0.2);
    const SourceFunction f1 = SourceFunction::single(t1, 0, 1), f2 = SourceFunction::single(t2, 0, 1);
    const SourceFunction f12({SourcePiece{0, 1, {t1, t2}}});
    const Vec x = vec2(0.1, -0.2);
    const double a = solve_perturbed(spec, ks, sched, f1, 0.2, 0.9, x, mc(3000, 6)).value;
    const double b = solve_perturbed(spec, ks, sched, f2, 0.2, 0.9, x, mc(3000, 6)).value;
    const double c = solve_perturbed(spec, ks, sched, f12, 0.2, 0.9, x, mc(3000, 6)).value;
    EXPECT_NEAR(c, a + b, 1e-12);
}

TEST(SolvePerturbed, DeterministicAcrossThreadCounts) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    McParams m = mc(3000, 7);
    const Estimate a = solve_perturbed(spec, ks, sched, bump(), 0.1, 1.0, vec2(0, 0), m);
    m.threads = 4;
    const Estimate b = solve_perturbed(spec, ks, sched, bump(), 0.1, 1.0, vec2(0, 0), m);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(EpsilonSweep, ZeroScheduleColumnsAgree) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto r = epsilon_sweep(spec, ks, PerturbationSchedule::zero(2, 1.0), bump(), {0.4, 0.2, 0.1},
                                 {{1.0, vec2(0, 0)}, {0.5, vec2(0.3, 0)}}, mc(2000, 8));
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t j = 1; j < 3; ++j) EXPECT_EQ(r.values[j][p].value, r.values[0][p].value);
    for (double g : r.gaps) EXPECT_EQ(g, 0.0);
}

TEST(EpsilonSweep, QuadraticSourceIsEpsilonIndependent) {
    // J is exact on quadratics, so the mean does not depend on ε; the window radius is far away
    const auto spec = heat(2);
    const auto ks = check_kalman(spec);
    const SourceTerm q =
        SourceTerm::polynomial_window(1.0, Vec::Zero(2), 40.0, {{1.0, {2, 0}}, {0.5, {1, 1}}, {-0.3, {0, 2}}});
    const auto f = SourceFunction::single(q, 0, 1);
    const auto sched = PerturbationSchedule::constant(mat2(0.6, 0.2, 0.2, 0.4), 1.0);
    McParams m = mc(20000, 9);
    m.n_time = 16;
    const auto r = epsilon_sweep(spec, ks, sched, f, {0.4, 0.2, 0.1}, {{1.0, vec2(0.2, -0.1)}}, m);
    for (std::size_t j = 0; j < r.gaps.size(); ++j) EXPECT_LE(r.gaps[j], 3.5 * r.gap_std_errors[j] + 1e-12) << j;
}

TEST(EpsilonSweep, Errors) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto z = PerturbationSchedule::zero(2, 1.0);
    const std::vector<Probe> pr{{1.0, vec2(0, 0)}};
    EXPECT_THROW(epsilon_sweep(spec, ks, z, bump(), {0.1}, pr, mc(10, 1)), ValidationError);
    EXPECT_THROW(epsilon_sweep(spec, ks, z, bump(), {0.1, 0.2}, pr, mc(10, 1)), ValidationError);
    EXPECT_THROW(epsilon_sweep(spec, ks, z, bump(), {0.2, 0.1}, {}, mc(10, 1)), ValidationError);
}

TEST(TransformTSolve, IdentityIsBitwiseSolvePerturbed) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const auto sched = PerturbationSchedule::alternating(s_a(), s_b(), 4, 1.0);
    const auto tr = TimeTransform::identity(2, 1.0);
    const Estimate a = transform_T_solve(spec, ks, sched, tr, bump(), 0.7, vec2(0.1, 0), mc(2000, 10), 0.1);
    const Estimate b = solve_perturbed(spec, ks, sched, bump(), 0.1, 0.7, vec2(0.1, 0), mc(2000, 10));
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(TransformTSolve, ConstantDriftIsATranslation) {
    const auto spec = heat(2);
    const auto ks = check_kalman(spec);
    const auto zero = PerturbationSchedule::zero(2, 1.0);
    const Vec a = vec2(0.8, -0.5);
    const auto tr = TimeTransform::constant(a, 0.0, 1.0);
    const Vec x = vec2(0.1, 0.2);
    const Estimate v = transform_T_solve(spec, ks, zero, tr, bump(), 1.0, x, mc(20000, 11), 0.1);
    // with A = 0 the drift only translates each time slice of the Gaussian kernel
    const double oracle = gaussian_closed_form(spec, zero, bump(), 1.0, x, OracleQuad{}, &tr);
    EXPECT_LE(std::abs(v.value - oracle), 3 * v.std_error);
}

TEST(TransformTSolve, ConstantPotentialScalarOde) {
    const auto spec = heat(2);
    const auto ks = check_kalman(spec);
    const auto f = SourceFunction::single(SourceTerm::constant(1.0, 2), 0, 1);
    McParams m = mc(16, 13);
    m.n_time = 256;
    for (double c : {0.5, 2.0}) {
        const auto tr = TimeTransform::constant(Vec::Zero(2), c, 1.0);
        for (double t : {0.4, 1.0}) {
            const Estimate v =
                transform_T_solve(spec, ks, PerturbationSchedule::zero(2, 1.0), tr, f, t, vec2(0.3, 0.3), m, 0.1);
            // midpoint rule error ~ c² t³ / (24 n²)
            EXPECT_NEAR(v.value, (1 - std::exp(-c * t)) / c, 1e-5) << c << ' ' << t;
        }
    }
}

TEST(EllipticEmbedCheck, ZeroPair) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    auto zero = [](const Vec&) { return 0.0; };
    const auto rep = elliptic_embed_check(spec, ks, Vec::Zero(2), Mat::Zero(2, 2), zero, zero, {0.5, 1.0, 2.0},
                                          {vec2(0, 0), vec2(0.3, -0.2)});
    for (const auto& r : rep.rows) EXPECT_EQ(r.max_residual, 0.0);
}

TEST(EllipticEmbedCheck, ManufacturedPairAndLinearity) {
    const auto spec = kinetic();
    const auto ks = check_kalman(spec);
    const Mat s = mat2(0.3, 0.1, 0.1, 0.2);
    std::function<double(const Vec&)> u = [](const Vec& x) { return std::exp(-x.squaredNorm()); };
    // g := 𝓛u by the same discrete operator
    std::function<double(const Vec&)> g = [&](const Vec& x) {
        return elliptic_operator(spec, ks, Vec::Zero(2), s, u, x);
    };
    const std::vector<Vec> probes{vec2(0, 0), vec2(0.4, -0.3), vec2(-0.5, 0.6)};
    const auto rep = elliptic_embed_check(spec, ks, Vec::Zero(2), s, g, u, {0.5, 1.0, 4.0}, probes);
    double base = 0.0;
    for (const auto& r : rep.rows) {
        EXPECT_LE(r.max_residual, 1e-6) << r.horizon;
        base = std::max(base, r.max_residual);
    }
    // perturb g so that the residual is non-trivial, then double the pair
    std::function<double(const Vec&)> g1 = [&](const Vec& x) { return g(x) + 0.1; };
    std::function<double(const Vec&)> u2 = [&](const Vec& x) { return 2 * u(x); };
    std::function<double(const Vec&)> g2 = [&](const Vec& x) { return 2 * g1(x); };
    const auto r1 = elliptic_embed_check(spec, ks, Vec::Zero(2), s, g1, u, {1.0}, probes);
    const auto r2 = elliptic_embed_check(spec, ks, Vec::Zero(2), s, g2, u2, {1.0}, probes);
    EXPECT_GT(r1.rows[0].max_residual, 1e-3);
    EXPECT_NEAR(r2.rows[0].max_residual, 2 * r1.rows[0].max_residual, 1e-6);
    for (double r : rep.generator_residual) EXPECT_EQ(r, 0.0);
}

#include "ssm/autonomous.hpp"
#include "ssm/models.hpp"
#include "ssm/rom_analysis.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <random>

using namespace ssm;
using namespace ssm::testing;

namespace {

struct Fixture {
    BuiltinModel b;
    std::shared_ptr<FirstOrderSystem> sys;
    MasterSubspace sub;
    SsmResult ssm;
    CVec Fa;
    Vec obs;
};

Fixture build(BuiltinModel b, int order, int M = 2, ModeSelection sel = {}) {
    Fixture s;
    s.b = std::move(b);
    s.sys = std::make_shared<FirstOrderSystem>(s.b.model);
    s.sub = solve_master_subspace(*s.sys, M, 0.0, sel);
    SsmOptions o;
    o.max_order = order;
    s.ssm = compute_ssm(*s.sys, s.sub, o);
    s.Fa = CVec::Zero(s.sys->dim());
    s.Fa.head(s.b.model->dofs()) = s.b.forcing;
    s.obs = observable_on_state(s.b.observable, s.sys->dim());
    return s;
}

}  // namespace

TEST(Bialternate, EigenvaluesArePairSums) {
    std::mt19937 rng(3);
    std::normal_distribution<double> nd;
    Mat A(4, 4);
    for (Index i = 0; i < 16; ++i) A.data()[i] = nd(rng);
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(A).eigenvalues();
    Eigen::VectorXcd bi = Eigen::EigenSolver<Mat>(bialternate_product(A)).eigenvalues();
    ASSERT_EQ(bi.size(), 6);
    for (Index i = 0; i < 4; ++i)
        for (Index j = i + 1; j < 4; ++j) {
            const cplx s = ev[i] + ev[j];
            double best = 1e300;
            for (Index k = 0; k < 6; ++k) best = std::min(best, std::abs(bi[k] - s));
            EXPECT_LT(best, 1e-10);
        }
}

TEST(ReducedOde, JacobianMatchesFiniteDifferences) {
    Fixture s = build(make_one_to_two_chain(), 3, 4);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.01, {1, 2});
    Vec y(4);
    y << 0.03, -0.02, 0.01, 0.04;
    const double Om = 1.01;
    const Mat J = rom.rotating_jacobian(y, Om);
    for (int c = 0; c < 4; ++c) {
        Vec e = Vec::Zero(4);
        e[c] = 1e-6;
        const Vec fd = (rom.rotating_rhs(y + e, Om) - rom.rotating_rhs(y - e, Om)) / 2e-6;
        EXPECT_LT((fd - J.col(c)).norm(), 1e-8 * std::max(1.0, J.norm()));
    }
    const Vec fdO = (rom.rotating_rhs(y, Om + 1e-6) - rom.rotating_rhs(y, Om - 1e-6)) / 2e-6;
    EXPECT_LT((fdO - rom.rotating_dOmega(y)).norm(), 1e-8);
}

TEST(ReducedOde, ForcingMatchesBorderedSolve) {
    Fixture s = build(make_one_to_two_chain(), 3, 4);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 1.0, {1, 2});
    ASSERT_EQ(rom.forced_modes(), std::vector<int>({0}));
    NonAutonomousOptions o;
    o.resonant_modes = rom.forced_modes();
    const auto c = solve_leading_nonautonomous(*s.sys, s.sub, 1.3, s.Fa, o);
    EXPECT_LT((c.s0_plus - rom.s0_plus()).norm(), 1e-12 * rom.s0_plus().norm());
    EXPECT_LT((c.s0_minus - rom.s0_minus()).norm(), 1e-12 * rom.s0_plus().norm());
    EXPECT_LT(leading_order_residual(*s.sys, s.sub, c, s.Fa), 1e-10);
}

TEST(ReducedOde, ZeroAtOriginAndAutoRatios) {
    Fixture s = build(make_one_to_two_chain(), 3, 4);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.0, {}, 1.0);
    EXPECT_EQ(rom.ratios(), std::vector<int>({1, 2}));
    EXPECT_EQ(rom.rhs(CVec::Zero(4), 0.3, 1.0).norm(), 0.0);
    EXPECT_EQ(rom.rotating_rhs(Vec::Zero(4), 1.0).norm(), 0.0);
    EXPECT_LT(rom.dropped_norm(), 1e-12);
}

TEST(ReducedOde, PhaseGaugeLeavesEigenvaluesUnchanged) {
    Fixture s = build(make_one_to_two_chain(), 5, 4);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.01, {1, 2});
    Vec y(4);
    y << 0.05, 0.02, -0.03, 0.01;
    auto sorted_eigs = [&](const Vec& v) {
        Eigen::VectorXcd e = Eigen::EigenSolver<Mat>(rom.rotating_jacobian(v, 1.02)).eigenvalues();
        std::vector<std::pair<double, double>> out;
        for (Index i = 0; i < e.size(); ++i) out.emplace_back(e[i].real(), e[i].imag());
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto e0 = sorted_eigs(y);
    for (double c : {0.3, 1.7, -2.2}) {
        Vec yr(4);
        for (int k = 0; k < 2; ++k) {
            const cplx q = cplx(y[2 * k], y[2 * k + 1]) * std::polar(1.0, rom.ratios()[static_cast<std::size_t>(k)] * c);
            yr[2 * k] = q.real();
            yr[2 * k + 1] = q.imag();
        }
        const auto e1 = sorted_eigs(yr);
        for (std::size_t i = 0; i < e0.size(); ++i) {
            EXPECT_NEAR(e0[i].first, e1[i].first, 1e-12);
            EXPECT_NEAR(e0[i].second, e1[i].second, 1e-12);
        }
    }
}

TEST(Lift, ZeroAndRealness) {
    Fixture s = build(make_random_chain(3, 4), 3);
    EXPECT_EQ(lift_to_physical(s.ssm.table, nullptr, CVec::Zero(2), 0.0, 0.0, s.obs), 0.0);
    CVec p(2);
    p << cplx(0.1, 0.2), cplx(0.1, -0.2);
    EXPECT_NO_THROW(lift_to_physical(s.ssm.table, nullptr, p, 0.0, 0.0, s.obs));
    p[1] = cplx(0.3, 0.0);
    EXPECT_THROW(lift_to_physical(s.ssm.table, nullptr, p, 0.0, 0.0, s.obs), NumericalError);
}

TEST(Backbone, LinearSystemIsFlat) {
    DuffingParams d;
    d.gamma = 0.0;
    Fixture s = build(make_duffing(d), 5);
    const auto bb = backbone_curve(s.ssm.table, s.sub, {0.01, 0.1, 0.5}, s.obs);
    for (const auto& p : bb) EXPECT_NEAR(p.frequency, s.sub.lambdas[0].imag(), 1e-13);
    EXPECT_NEAR(bb[1].amplitude, 2 * 0.1 * s.sub.V(0, 0).real(), 1e-12);
}

TEST(Backbone, DuffingSlopeMatchesAveraging) {
    DuffingParams d;
    d.gamma = 0.1;
    d.zeta = 0.005;
    Fixture s = build(make_duffing(d), 3);
    const auto bb = backbone_curve(s.ssm.table, s.sub, {1e-3, 2e-3}, s.obs);
    const double w0 = s.sub.lambdas[0].imag();
    // omega(a) = omega_d + k a^2 with a the physical displacement amplitude.
    const double slope = (bb[1].frequency - w0) / (bb[1].amplitude * bb[1].amplitude);
    EXPECT_NEAR(slope / (3 * d.gamma / (8 * d.omega0)), 1.0, 5e-3);
    EXPECT_GT(bb[1].frequency, bb[0].frequency);
}

TEST(Backbone, RejectsFourDimensionalSubspace) {
    Fixture s = build(make_one_to_two_chain(), 3, 4);
    EXPECT_THROW(backbone_curve(s.ssm.table, s.sub, {0.1}, s.obs), ValidationError);
}

TEST(ChartRadius, FiniteAndOrdered) {
    Fixture s = build(make_random_chain(3, 2), 5);
    const double r = chart_radius(s.ssm.table);
    EXPECT_TRUE(std::isfinite(r));
    EXPECT_GT(r, 0.0);
    Fixture lin = build(make_random_chain(3, 2), 2);
    EXPECT_TRUE(std::isinf(chart_radius(lin.ssm.table)));
}

TEST(Frc, ZeroForcingGivesTrivialBranch) {
    Fixture s = build(make_duffing(), 3);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.0, {1});
    const auto frc = frc_continuation(rom, 0.8, 1.2, s.obs);
    ASSERT_GT(frc.size(), 3u);
    for (const auto& p : frc) {
        EXPECT_EQ(p.y.norm(), 0.0);
        EXPECT_EQ(p.flag, BifurcationFlag::Regular);
    }
    EXPECT_NEAR(frc.back().Omega, 1.2, 1e-14);
}

TEST(Frc, DuffingMatchesHarmonicBalance) {
    // Weakly nonlinear regime: 1 % peak frequency shift at a ~ 1, where the
    // leading-order forcing is accurate.
    DuffingParams d;
    d.zeta = 0.005;
    d.gamma = 0.0268;
    d.forcing = 0.5;
    Fixture s = build(make_duffing(d), 7);
    const double eps = 0.0101;
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, eps, {1});
    const auto frc = frc_continuation(rom, 0.9, 1.2, s.obs);
    const auto peak = find_peak(frc);
    const auto hb = duffing_hb_peak(d.omega0, d.zeta, d.gamma, 2 * d.forcing * eps);
    EXPECT_NEAR(peak.Omega / hb.Omega, 1.0, 1e-2);
    EXPECT_NEAR(peak.out_amp / hb.amplitude, 1.0, 1e-2);
    EXPECT_GT(hb.Omega, 1.005);
    int sn = 0;
    for (const auto& p : frc)
        if (p.flag == BifurcationFlag::SN) {
            ++sn;
            EXPECT_TRUE(verify_bifurcation(rom, p).confirmed) << verify_bifurcation(rom, p).detail;
        }
    EXPECT_EQ(sn, 2);
}

TEST(Frc, SofteningPeakBelowLinearFrequency) {
    DuffingParams d;
    d.gamma = -0.1;
    Fixture s = build(make_duffing(d), 5);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.005, {1});
    const auto peak = find_peak(frc_continuation(rom, 0.85, 1.1, s.obs));
    EXPECT_LT(peak.Omega, 0.995);
}

TEST(Frc, StabilityChangesOnlyAtFlags) {
    DuffingParams d;
    d.gamma = 0.28;
    Fixture s = build(make_duffing(d), 5);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.011, {1});
    const auto frc = frc_continuation(rom, 0.9, 1.2, s.obs);
    for (std::size_t i = 1; i < frc.size(); ++i) {
        if (frc[i].flag != BifurcationFlag::Regular || frc[i - 1].flag != BifurcationFlag::Regular) continue;
        EXPECT_EQ(frc[i].stability, frc[i - 1].stability) << "Omega " << frc[i].Omega;
    }
}

TEST(Frc, TiTvGapIsFirstOrderInEpsilon) {
    Fixture s = build(make_random_chain(3, 5), 5);
    const double w = s.sub.lambdas[0].imag();
    std::vector<double> gaps;
    for (double eps : {4e-3, 2e-3, 1e-3}) {
        ReducedOde rom(s.ssm.table, s.sub, s.Fa, eps, {1});
        NonAutonomousOptions no;
        no.resonant_modes = rom.forced_modes();
        NonAutonomousCache cache(*s.sys, s.sub, s.Fa, no);
        FrcOptions ti, tv;
        tv.mode = FrcMode::TV;
        const auto a = frc_continuation(rom, 0.9 * w, 1.1 * w, s.obs, ti);
        const auto b = frc_continuation(rom, 0.9 * w, 1.1 * w, s.obs, tv, &cache);
        gaps.push_back(amplitude_gap(a, b).max_abs);
        EXPECT_GT(cache.solves(), 0u);
    }
    EXPECT_NEAR(gaps[0] / gaps[1], 2.0, 0.6);
    EXPECT_NEAR(gaps[1] / gaps[2], 2.0, 0.6);
}

TEST(Frc, TvRequiresCache) {
    Fixture s = build(make_duffing(), 3);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.01, {1});
    FrcOptions o;
    o.mode = FrcMode::TV;
    EXPECT_THROW(frc_continuation(rom, 0.9, 1.1, s.obs, o), ValidationError);
    EXPECT_THROW(frc_continuation(rom, 1.1, 0.9, s.obs), ValidationError);
}

TEST(Frc, OrderConvergenceShrinks) {
    DuffingParams d;
    d.gamma = 0.28;
    Fixture s = build(make_duffing(d), 1);
    const auto c3 = frc_order_convergence(*s.sys, s.sub, s.Fa, 0.005, 3, 0.9, 1.2, s.obs);
    const auto c5 = frc_order_convergence(*s.sys, s.sub, s.Fa, 0.005, 5, 0.9, 1.2, s.obs);
    EXPECT_LT(c5.gap.max_curve, c3.gap.max_curve);
    EXPECT_LT(c5.gap.max_curve, 1e-2);
}

TEST(Integrate, LinearRomIsExponential) {
    DuffingParams d;
    d.gamma = 0.0;
    Fixture s = build(make_duffing(d), 3);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.0, {1});
    CVec p0(2);
    p0 << cplx(0.3, 0.1), cplx(0.3, -0.1);
    IntegrateOptions o;
    o.dt_out = 0.5;
    const auto tr = integrate_rom(rom, p0, 0.0, 20.0, o);
    ASSERT_FALSE(tr.truncated);
    for (std::size_t i = 0; i < tr.t.size(); ++i)
        EXPECT_LT(std::abs(tr.p[i][0] - std::exp(s.sub.lambdas[0] * tr.t[i]) * p0[0]), 1e-8);
}

TEST(Integrate, DecayFrequencyFollowsBackbone) {
    DuffingParams d;
    d.gamma = 0.5;
    d.zeta = 0.002;
    Fixture s = build(make_duffing(d), 5);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.0, {1});
    const double rho0 = 0.4;
    CVec p0(2);
    p0 << rho0, rho0;
    IntegrateOptions o;
    o.dt_out = 0.01;
    const auto tr = integrate_rom(rom, p0, 0.0, 60.0, o);
    // Peak counting on the physical output: period between successive maxima.
    std::vector<double> x;
    for (const auto& p : tr.p) x.push_back(lift_to_physical(s.ssm.table, nullptr, p, 0.0, 0.0, s.obs));
    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        if (x[i] > x[i - 1] && x[i] >= x[i + 1]) {
            const double a = x[i - 1], b = x[i], c = x[i + 1];
            peaks.push_back(tr.t[i] + o.dt_out * 0.5 * (a - c) / (a - 2 * b + c));
        }
    ASSERT_GE(peaks.size(), 4u);
    const double freq = 2 * M_PI / (peaks[1] - peaks[0]);
    const double t_mid = 0.5 * (peaks[0] + peaks[1]);
    const std::size_t im = static_cast<std::size_t>(std::lround(t_mid / o.dt_out));
    const double rho = std::abs(tr.p[im][0]);
    const auto bb = backbone_curve(s.ssm.table, s.sub, {rho}, s.obs);
    EXPECT_NEAR(freq / bb[0].frequency, 1.0, 2e-3);
}

TEST(Integrate, StableFixedPointIsStationary) {
    Fixture s = build(make_duffing(), 5);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.005, {1});
    const double Om = 0.97;
    auto y = solve_fixed_point(rom, Om, Vec::Zero(2));
    ASSERT_TRUE(y.has_value());
    IntegrateOptions o;
    o.Omega = Om;
    o.dt_out = 0.5;
    const auto tr = integrate_rom(rom, rom.p_of(*y, 0.0), 0.0, 40.0, o);
    for (std::size_t i = 0; i < tr.t.size(); ++i)
        EXPECT_LT((tr.p[i] - rom.p_of(*y, Om * tr.t[i])).norm(), 1e-7 * y->norm());
}

TEST(Integrate, BlowUpTruncates) {
    DuffingParams d;
    d.gamma = 0.1;
    d.zeta = -0.05;  // growing
    auto b = make_duffing({1.0, 0.05, 0.1, 0.5});
    Fixture s = build(b, 3);
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, 0.0, {1});
    CVec p0(2);
    p0 << 0.5, 0.5;
    IntegrateOptions o;
    o.chart_radius = 0.1;
    const auto tr = integrate_rom(rom, p0, 0.0, 10.0, o);
    EXPECT_TRUE(tr.truncated);
}

TEST(Integrate, FullChainSteadyStateMatchesFrc) {
    SpringChainParams cp;
    cp.n = 2;
    cp.k3 = {0.5, 0.5, 0.5};
    cp.alpha = 0.02;
    cp.beta = 0.02;
    cp.forcing = 0.01;
    Fixture s = build(make_spring_chain(cp), 7);
    const double eps = 1.0;
    const double Om = 0.97 * s.sub.lambdas[0].imag();
    ReducedOde rom(s.ssm.table, s.sub, s.Fa, eps, {1});
    auto y = solve_fixed_point(rom, Om, Vec::Zero(2));
    ASSERT_TRUE(y.has_value());
    NonAutonomousOptions no;
    no.resonant_modes = rom.forced_modes();
    const auto na = solve_leading_nonautonomous(*s.sys, s.sub, Om, s.Fa, no);
    const double amp_rom = output_amplitude(rom, *y, Om, s.obs, &na, 256);

    // Direct integration of the full 2-DOF model.
    namespace ode = boost::numeric::odeint;
    const Mat K(s.b.model->K()), C(s.b.model->C());
    using State = std::vector<double>;
    auto rhs = [&](const State& z, State& dz, double t) {
        Vec x(2), v(2);
        x << z[0], z[1];
        v << z[2], z[3];
        Vec f = s.b.model->nonlinearity().evaluate(x, v);
        Vec ext = 2.0 * eps * (s.b.forcing * std::polar(1.0, Om * t)).real();
        const Vec a = ext - C * v - K * x - f;
        dz = {z[2], z[3], a[0], a[1]};
    };
    State z(4, 0.0);
    const double T = 2 * M_PI / Om;
    ode::integrate_adaptive(ode::make_controlled(1e-11, 1e-11, ode::runge_kutta_dopri5<State>()), rhs, z, 0.0,
                            400 * T, T / 200);
    double amp_full = 0.0;
    for (int i = 0; i < 2000; ++i) {
        ode::integrate_adaptive(ode::make_controlled(1e-11, 1e-11, ode::runge_kutta_dopri5<State>()), rhs, z,
                                400 * T + i * T / 400, 400 * T + (i + 1) * T / 400, T / 400);
        amp_full = std::max(amp_full, std::abs(s.obs[0] * z[0] + s.obs[1] * z[1]));
    }
    EXPECT_NEAR(amp_rom / amp_full, 1.0, 1e-2);
}

#include "ssm/autonomous.hpp"
#include "ssm/nonautonomous.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ssm;
using namespace ssm::testing;

namespace {

std::shared_ptr<const SecondOrderModel> oscillator(double w, double zeta) {
    SpMat M = sparse_identity(1), C(1, 1), K(1, 1);
    C.insert(0, 0) = 2 * zeta * w;
    K.insert(0, 0) = w * w;
    auto f = std::make_shared<PolynomialNonlinearity>(1, std::vector<QuadTerm>{},
                                                      std::vector<CubicTerm>{{0, 0, 0, 0, 1.0}});
    return std::make_shared<SecondOrderModel>(M, C, K, f);
}

CVec lift(const CVec& fa) {
    CVec F = CVec::Zero(2 * fa.size());
    F.head(fa.size()) = fa;
    return F;
}

}  // namespace

TEST(NonAutonomous, ZeroForcingGivesZero) {
    FirstOrderSystem sys(oscillator(1.0, 0.01));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    auto c = solve_leading_nonautonomous(sys, sub, 1.0, CVec::Zero(2));
    EXPECT_EQ(c.x0.norm(), 0.0);
    EXPECT_EQ(c.s0_plus.norm(), 0.0);
    EXPECT_EQ(c.x0_bar.norm(), 0.0);
    EXPECT_EQ(c.s0_minus.norm(), 0.0);
}

TEST(NonAutonomous, OffResonanceMatchesLinearFrf) {
    const double w = 1.0, zeta = 0.01, Omega = 3.0;
    FirstOrderSystem sys(oscillator(w, zeta));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    CVec fa(1);
    fa << cplx(0.5, 0.2);
    auto c = solve_leading_nonautonomous(sys, sub, Omega, lift(fa));
    EXPECT_TRUE(c.resonant_plus.empty());
    EXPECT_EQ(c.s0_plus.norm(), 0.0);
    // (K - Omega^2 M + i Omega C) X = fa, velocity i Omega X.
    const cplx X = fa[0] / cplx(w * w - Omega * Omega, Omega * 2 * zeta * w);
    EXPECT_LT(std::abs(c.x0[0] - X), 1e-14);
    EXPECT_LT(std::abs(c.x0[1] - cplx(0, Omega) * X), 1e-14);
}

TEST(NonAutonomous, ResonantForcingUsesBorderedSolve) {
    FirstOrderSystem sys(oscillator(2.0, 0.005));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    CVec fa(1);
    fa << cplx(0.3, 0.0);
    const CVec Fa = lift(fa);
    auto c = solve_leading_nonautonomous(sys, sub, sub.lambdas[0].imag(), Fa);
    ASSERT_EQ(c.resonant_plus, std::vector<int>{0});
    EXPECT_GT(std::abs(c.s0_plus[0]), 0.0);
    EXPECT_LT(std::abs(c.s0_plus[0] - sub.W_left.col(0).dot(Fa)), 1e-14);
    EXPECT_LE(leading_order_residual(sys, sub, c, Fa), 1e-10);
    const cplx ortho = (sub.W_left.col(0).adjoint() * (sys.B().cast<cplx>() * c.x0))(0, 0);
    EXPECT_LT(std::abs(ortho), 1e-12);
}

TEST(NonAutonomous, RandomFrequenciesAndConjugacy) {
    auto poly = random_polynomial(4, 3);
    FirstOrderSystem sys(random_model(poly, 4));
    MasterSubspace sub = solve_master_subspace(sys, 4);
    std::mt19937 rng(8);
    CVec fa = random_cvec(4, rng);
    const CVec Fa = lift(fa);
    std::uniform_real_distribution<double> om(0.2 * sub.lambdas[0].imag(), 2.0 * sub.lambdas[2].imag());
    NonAutonomousOptions both;
    both.exploit_conjugacy = false;
    for (int trial = 0; trial < 50; ++trial) {
        const double Omega = om(rng);
        auto a = solve_leading_nonautonomous(sys, sub, Omega, Fa);
        auto b = solve_leading_nonautonomous(sys, sub, Omega, Fa, both);
        EXPECT_LE(leading_order_residual(sys, sub, a, Fa), 1e-9);
        EXPECT_LE(leading_order_residual(sys, sub, b, Fa), 1e-9);
        EXPECT_LT((a.x0_bar - b.x0_bar).norm(), 1e-12 * std::max(1.0, a.x0.norm()));
        EXPECT_LT((a.s0_minus - b.s0_minus).norm(), 1e-12 * std::max(1.0, a.s0_plus.norm()));
    }
}

TEST(NonAutonomous, CacheReusesSolves) {
    FirstOrderSystem sys(oscillator(1.0, 0.02));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    CVec fa(1);
    fa << 1.0;
    NonAutonomousCache cache(sys, sub, lift(fa));
    cache.get(0.9);
    cache.get(0.9);
    cache.get(1.1);
    EXPECT_EQ(cache.solves(), 2u);
}

TEST(NonAutonomous, TimeVaryingState) {
    auto poly = random_polynomial(2, 3);
    FirstOrderSystem sys(random_model(poly, 5));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    SsmOptions o;
    o.max_order = 3;
    SsmResult r = compute_ssm(sys, sub, o);
    CVec fa(2);
    fa << 1.0, 0.5;
    auto c = solve_leading_nonautonomous(sys, sub, 1.3, lift(fa));
    CVec p(2);
    p << cplx(0.02, 0.01), cplx(0.02, -0.01);
    EXPECT_TRUE((evaluate_tv_state(r.table, &c, p, 0.3, 0.0).array() == r.table.eval_W(p).array()).all());
    const CVec z0 = evaluate_tv_state(r.table, &c, CVec::Zero(2), 0.3, 0.1);
    const cplx e = std::polar(1.0, 0.3);
    EXPECT_LT(rel_err(z0, 0.1 * (c.x0 * e + c.x0_bar * std::conj(e))), 1e-15);
    EXPECT_LT(z0.imag().norm(), 1e-14 * z0.norm());
}

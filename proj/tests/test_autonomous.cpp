#include "ssm/autonomous.hpp"
#include "ssm/polynomial.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssm;
using namespace ssm::testing;

namespace {

std::shared_ptr<const SecondOrderModel> duffing_like(double w0, double zeta, double gamma) {
    SpMat M = sparse_identity(1), C(1, 1), K(1, 1);
    C.insert(0, 0) = 2 * zeta * w0;
    K.insert(0, 0) = w0 * w0;
    auto f = std::make_shared<PolynomialNonlinearity>(1, std::vector<QuadTerm>{},
                                                      std::vector<CubicTerm>{{0, 0, 0, 0, gamma}});
    return std::make_shared<SecondOrderModel>(M, C, K, f);
}

double max_rel_table_diff(const CoefficientTable& a, const CoefficientTable& b) {
    double worst = 0.0;
    for (int k = 1; k <= a.max_order(); ++k)
        for (const auto& [m, c] : a.degree(k)) {
            const Coefficient& d = b.at(m);
            const double sw = std::max({c.W.norm(), d.W.norm(), 1e-300});
            worst = std::max(worst, (c.W - d.W).norm() / sw);
            if (c.R.norm() > 0 || d.R.norm() > 0)
                worst = std::max(worst, (c.R - d.R).norm() / std::max(c.R.norm(), d.R.norm()));
        }
    return worst;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace

TEST(Resonance, ConjugatePairInnerResonance) {
    CVec lam(2);
    lam << cplx(-0.01, 1.0), cplx(-0.01, -1.0);
    EXPECT_EQ(detect_resonances(MultiIndex{2, 1}, lam), std::vector<int>{0});
    EXPECT_EQ(detect_resonances(MultiIndex{1, 2}, lam), std::vector<int>{1});
    EXPECT_TRUE(detect_resonances(MultiIndex{2, 0}, lam).empty());
    EXPECT_TRUE(detect_resonances(MultiIndex{1, 1}, lam).empty());
    EXPECT_EQ(Lambda_of(MultiIndex{2, 1}, lam), cplx(-0.03, 1.0));
}

TEST(Resonance, StructuralRuleForHeavyDamping) {
    CVec lam(2);
    lam << cplx(-0.2, 1.0), cplx(-0.2, -1.0);
    ResonanceOptions plain;
    plain.structural_inner = false;
    EXPECT_TRUE(detect_resonances(MultiIndex{2, 1}, lam, plain).empty());
    EXPECT_EQ(detect_resonances(MultiIndex{2, 1}, lam), std::vector<int>{0});
}

TEST(Resonance, OneToTwoInternal) {
    CVec lam(4);
    lam << cplx(-0.30, 149.22), cplx(-0.30, -149.22), cplx(-0.60, 298.78), cplx(-0.60, -298.78);
    const auto r = detect_resonances(MultiIndex{2, 0, 0, 0}, lam);
    EXPECT_EQ(r, std::vector<int>{2});
    // |Lambda - lambda_3| / |lambda_3| from the arithmetic above.
    EXPECT_LT(std::abs(Lambda_of(MultiIndex{2, 0, 0, 0}, lam) - lam[2]) / std::abs(lam[2]), 0.05);
}

TEST(Cm, VanishesAtDegreeTwo) {
    CoefficientTable t = random_table(2, 4, 1, 3);
    for (auto& m : enumerate_degree(2, 1)) {
        CVec R(2);
        R << cplx(1, 2), cplx(3, 4);
        t.set(m, t.W(m), R);
    }
    for (const auto& m : enumerate_degree(2, 2)) EXPECT_EQ(compute_Cm(m, t, sparse_identity(4)).norm(), 0.0);
}

TEST(Cm, OneModeDegreeFiveMatchesSeriesProduct) {
    // M = 1: coefficients of (DW R) at degree 5 from a direct series product, minus
    // the |u| = 1 and |u| = 5 contributions that the homological operator absorbs.
    std::mt19937 rng(5);
    const Index N = 3;
    CoefficientTable t(1, N);
    std::vector<CVec> W(6), R(6);
    for (int d = 1; d <= 4; ++d) {
        W[static_cast<std::size_t>(d)] = random_cvec(N, rng);
        R[static_cast<std::size_t>(d)] = random_cvec(1, rng);
        t.set(MultiIndex{d}, W[static_cast<std::size_t>(d)], R[static_cast<std::size_t>(d)]);
    }
    CVec ref = CVec::Zero(N);
    for (int a = 1; a <= 5; ++a)
        for (int b = 1; b <= 5; ++b) {
            if (a - 1 + b != 5 || a == 1 || a == 5) continue;
            ref += static_cast<double>(a) * R[static_cast<std::size_t>(b)][0] * W[static_cast<std::size_t>(a)];
        }
    EXPECT_LT(rel_err(compute_Cm(MultiIndex{5}, t, sparse_identity(N)), ref), 1e-14);
}

TEST(Autonomous, LinearSystemGivesLinearManifold) {
    auto f = std::make_shared<PolynomialNonlinearity>(3, std::vector<QuadTerm>{}, std::vector<CubicTerm>{});
    FirstOrderSystem sys(random_model(f, 2));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    SsmOptions o;
    o.max_order = 5;
    SsmResult r = compute_ssm(sys, sub, o);
    for (int k = 2; k <= 5; ++k)
        for (const auto& [m, c] : r.table.degree(k)) {
            EXPECT_EQ(c.W.norm(), 0.0) << m.to_string();
            EXPECT_EQ(c.R.norm(), 0.0) << m.to_string();
        }
    CVec p(2);
    p << cplx(0.1, 0.2), cplx(0.1, -0.2);
    EXPECT_LT(rel_err(r.table.eval_W(p), sub.V * p), 1e-15);
}

TEST(Autonomous, DuffingNormalFormCoefficient) {
    const double w0 = 1.0, zeta = 0.005, gamma = 0.4;
    FirstOrderSystem sys(duffing_like(w0, zeta, gamma));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    SsmOptions o;
    o.max_order = 3;
    SsmResult r = compute_ssm(sys, sub, o);
    // R^1_(2,1) = w_1^* [F o W]_(2,1) with [F o W]_(2,1) = (-3 gamma |v_x|^2 v_x, 0).
    const cplx vx = sub.V(0, 0);
    const cplx ref = -3.0 * gamma * std::norm(vx) * vx * std::conj(sub.W_left(0, 0));
    EXPECT_LT(std::abs(r.table.R(MultiIndex{2, 1})[0] - ref), 1e-12 * std::abs(ref));
    EXPECT_EQ(r.table.R(MultiIndex{2, 1})[1], cplx(0.0));
    for (int k = 2; k <= 3; ++k)
        for (const auto& [m, c] : r.table.degree(k)) {
            const bool inner = m == MultiIndex{2, 1} || m == MultiIndex{1, 2};
            if (!inner) EXPECT_EQ(c.R.norm(), 0.0) << m.to_string();
        }
    ASSERT_EQ(r.resonances.size(), 2u);
    // Hardening: Im of the (2,1) coefficient is positive for gamma > 0.
    EXPECT_GT(r.table.R(MultiIndex{2, 1})[0].imag(), 0.0);
}

TEST(Autonomous, NonIntrusiveMatchesIntrusive) {
    for (unsigned seed = 1; seed <= 3; ++seed) {
        auto poly = random_polynomial(3, seed, 10, 14);
        FirstOrderSystem sys(random_model(poly, seed + 20));
        MasterSubspace sub = solve_master_subspace(sys, 4);
        SsmOptions o;
        o.max_order = 5;
        TensorComposer tc(sys, poly);
        SsmResult a = compute_ssm(sys, sub, o);
        SsmResult b = compute_ssm(sys, sub, tc, o);
        EXPECT_LT(max_rel_table_diff(a.table, b.table), 1e-10);
    }
}

TEST(Autonomous, ConjugateSymmetryModesAgree) {
    auto poly = random_polynomial(3, 4, 10, 14);
    FirstOrderSystem sys(random_model(poly, 30));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    SsmOptions on, off;
    on.max_order = off.max_order = 6;
    off.conjugate_symmetry = false;
    EvaluationStats s_on, s_off;
    SsmResult a = compute_ssm(sys, sub, on, {}, &s_on);
    SsmResult b = compute_ssm(sys, sub, off, {}, &s_off);
    EXPECT_TRUE(a.used_conjugate_symmetry);
    EXPECT_FALSE(b.used_conjugate_symmetry);
    EXPECT_LT(max_rel_table_diff(a.table, b.table), 1e-12);
    EXPECT_LT(s_on.blackbox_calls, s_off.blackbox_calls);
    for (int k = 1; k <= 6; ++k)
        for (const auto& [m, c] : b.table.degree(k)) {
            const Coefficient& cb = b.table.at(m.conjugate_pairs());
            EXPECT_LT((c.W - cb.W.conjugate()).norm(), 1e-12 * std::max(1.0, c.W.norm())) << m.to_string();
            EXPECT_LT((c.R - swap_pairs(cb.R.conjugate())).norm(), 1e-12 * std::max(1.0, c.R.norm()));
        }
}

TEST(Autonomous, RealnessOnConjugateCoordinates) {
    auto poly = random_polynomial(3, 5, 10, 14);
    FirstOrderSystem sys(random_model(poly, 31));
    MasterSubspace sub = solve_master_subspace(sys, 4);
    SsmOptions o;
    o.max_order = 5;
    SsmResult r = compute_ssm(sys, sub, o);
    Vec rho(2), th(2);
    rho << 0.05, 0.03;
    th << 0.4, -1.3;
    const CVec W = r.table.eval_W(conjugate_pair_point(rho, th));
    EXPECT_LT(W.imag().norm(), 1e-10 * W.real().norm());
}

TEST(Autonomous, InvarianceResidualDecay) {
    auto poly = random_polynomial(3, 6, 10, 14);
    FirstOrderSystem sys(random_model(poly, 32));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    for (int order : {3, 5}) {
        SsmOptions o;
        o.max_order = order;
        SsmResult r = compute_ssm(sys, sub, o);
        std::vector<double> hs, res;
        for (double h = 1e-2; h <= 1e-1 * 1.0001; h *= std::pow(10.0, 0.25)) {
            Vec rho(1), th(1);
            rho << h / std::sqrt(2.0);
            th << 0.7;
            hs.push_back(h);
            res.push_back(invariance_residual(sys, r.table, conjugate_pair_point(rho, th)).norm());
        }
        EXPECT_NEAR(fit_slope(hs, res), order + 1, 0.3) << "order " << order;
    }
}

TEST(Autonomous, HomologicalResidualsAreSmall) {
    auto poly = random_polynomial(4, 7, 10, 14);
    FirstOrderSystem sys(random_model(poly, 33));
    MasterSubspace sub = solve_master_subspace(sys, 4);
    SsmOptions o;
    o.max_order = 4;
    SsmResult r = compute_ssm(sys, sub, o);
    for (const auto& d : r.degrees) EXPECT_LE(d.max_solve_residual, 1e-10);
}

TEST(Autonomous, RejectsBadOrder) {
    auto poly = random_polynomial(2, 1);
    FirstOrderSystem sys(random_model(poly, 2));
    MasterSubspace sub = solve_master_subspace(sys, 2);
    SsmOptions o;
    o.max_order = 0;
    EXPECT_THROW(compute_ssm(sys, sub, o), ValidationError);
}

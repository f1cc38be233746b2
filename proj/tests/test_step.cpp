#include "ssm/polynomial.hpp"
#include "ssm/step.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ssm;
using namespace ssm::testing;

namespace {

struct Fixture {
    std::shared_ptr<PolynomialNonlinearity> poly;
    std::shared_ptr<const SecondOrderModel> model;
    std::unique_ptr<FirstOrderSystem> sys;

    explicit Fixture(Index n = 4, unsigned seed = 3, bool real_only = true) {
        poly = random_polynomial(n, seed, 20, 30);
        ModelOptions o;
        o.real_only = real_only;
        model = random_model(poly, seed + 1, o);
        sys = std::make_unique<FirstOrderSystem>(model);
    }
};

void expect_match(Composer& step, Composer& ref, const CoefficientTable& t, int k, double tol) {
    const auto ms = enumerate_degree(t.dim(), k);
    step.prepare_degree(k, ms, t);
    for (const auto& m : ms) {
        CVec a = step.compose(m, t);
        CVec b = ref.compose(m, t);
        EXPECT_LT(rel_err(a, b), tol) << m.to_string();
    }
}

}  // namespace

TEST(StepIdentities, ParitySplit) {
    Fixture fx;
    std::mt19937 rng(9);
    CVec z = random_cvec(fx.sys->dim(), rng);
    StateFn F = [&](const CVec& v) { return fx.sys->F_native(v); };
    const Index n = fx.sys->dofs();
    CVec f2 = CVec::Zero(fx.sys->dim()), f3 = CVec::Zero(fx.sys->dim());
    f2.head(n) = -fx.poly->bilinear(z, z);
    f3.head(n) = -fx.poly->trilinear(z, z, z);
    EXPECT_LT(rel_err(split_even(F, z), f2), 1e-14);
    EXPECT_LT(rel_err(split_odd(F, z), f3), 1e-14);
}

TEST(StepIdentities, ComplexDecomposition) {
    Fixture fx;
    std::mt19937 rng(10);
    const Index n = fx.sys->dofs();
    for (int trial = 0; trial < 5; ++trial) {
        CVec v = random_cvec(2 * n, rng);
        RealStateFn F2 = [&](const Vec& x) { return fx.poly->bilinear(x.cast<cplx>(), x.cast<cplx>()).real().eval(); };
        RealStateFn F3 = [&](const Vec& x) {
            CVec xc = x.cast<cplx>();
            return fx.poly->trilinear(xc, xc, xc).real().eval();
        };
        EXPECT_LT(rel_err(eval_complex_quadratic(F2, v), fx.poly->bilinear(v, v)), 1e-13);
        EXPECT_LT(rel_err(eval_complex_cubic(F3, v), fx.poly->trilinear(v, v, v)), 1e-13);
    }
}

class StepVsTensor : public ::testing::TestWithParam<std::tuple<int, bool, bool>> {};

TEST_P(StepVsTensor, MatchesIntrusiveComposition) {
    const auto [dim, real_only, batch] = GetParam();
    Fixture fx(3, 5, real_only);
    StepOptions so;
    so.batch = batch;
    StepComposer step(*fx.sys, so);
    TensorComposer ref(*fx.sys, fx.poly);
    for (int k = 2; k <= 5; ++k) {
        CoefficientTable t = random_table(dim, fx.sys->dim(), k - 1, 100 + static_cast<unsigned>(k));
        step.reset();
        expect_match(step, ref, t, k, 1e-12);
    }
}

INSTANTIATE_TEST_SUITE_P(Configs, StepVsTensor,
                         ::testing::Combine(::testing::Values(1, 2, 4), ::testing::Bool(), ::testing::Bool()));

TEST(Step, RealOnlyEvaluationCounts) {
    Fixture fx(3, 7, true);
    StepComposer step(*fx.sys);
    CoefficientTable t = random_table(2, fx.sys->dim(), 4, 21);
    for (int k = 2; k <= 5; ++k) {
        const auto ms = enumerate_degree(2, k);
        step.prepare_degree(k, ms, t);
        for (const auto& m : ms) step.compose(m, t);
    }
    const auto& st = step.stats();
    EXPECT_GT(st.complex_even, 0u);
    EXPECT_GT(st.complex_odd, 0u);
    EXPECT_EQ(st.real_even, 3 * st.complex_even);
    EXPECT_EQ(st.real_odd, 4 * st.complex_odd);
    // Each distinct real input costs two black-box calls; Re/Im/Sum are shared between parities.
    EXPECT_EQ(st.blackbox_calls, 2 * step.cache().raw_size());
    EXPECT_GT(st.raw_cache_hits, 0u);
}

TEST(Step, BatchingDoesNotChangeResultsOrCounts) {
    Fixture fx(3, 8, true);
    CoefficientTable t = random_table(4, fx.sys->dim(), 3, 22);
    const auto ms = enumerate_degree(4, 4);
    StepOptions a, b;
    a.batch = true;
    b.batch = false;
    StepComposer sa(*fx.sys, a), sb(*fx.sys, b);
    sa.prepare_degree(4, ms, t);
    sb.prepare_degree(4, ms, t);
    for (const auto& m : ms) {
        CVec x = sa.compose(m, t);
        CVec y = sb.compose(m, t);
        EXPECT_TRUE((x.array() == y.array()).all());
    }
    EXPECT_EQ(sa.stats().blackbox_calls, sb.stats().blackbox_calls);
    EXPECT_EQ(sa.stats().complex_odd, sb.stats().complex_odd);
    EXPECT_EQ(sa.stats().raw_cache_hits, sb.stats().raw_cache_hits);
    EXPECT_EQ(sa.stats().batches, 1u);
    EXPECT_GT(sb.stats().batches, 1u);
}

TEST(Step, ThreadsGiveIdenticalResults) {
    Fixture fx(3, 9, true);
    CoefficientTable t = random_table(2, fx.sys->dim(), 4, 23);
    const auto ms = enumerate_degree(2, 5);
    StepOptions one, four;
    four.threads = 4;
    StepComposer s1(*fx.sys, one), s4(*fx.sys, four);
    s1.prepare_degree(5, ms, t);
    s4.prepare_degree(5, ms, t);
    for (const auto& m : ms) EXPECT_TRUE((s1.compose(m, t).array() == s4.compose(m, t).array()).all());
}

TEST(Step, ZeroShortcutSkipsWork) {
    Fixture fx(3, 10, true);
    CoefficientTable t = random_table(2, fx.sys->dim(), 4, 24);
    for (const auto& m : enumerate_degree(2, 2)) t.set(m, CVec::Zero(fx.sys->dim()), CVec::Zero(2));
    const auto ms = enumerate_degree(2, 5);
    StepOptions on, off;
    off.zero_shortcut = false;
    StepComposer a(*fx.sys, on), b(*fx.sys, off);
    TensorComposer ref(*fx.sys, fx.poly);
    a.prepare_degree(5, ms, t);
    b.prepare_degree(5, ms, t);
    for (const auto& m : ms) {
        CVec r = ref.compose(m, t);
        EXPECT_LT(rel_err(a.compose(m, t), r), 1e-12);
        EXPECT_LT(rel_err(b.compose(m, t), r), 1e-12);
    }
    EXPECT_GT(a.stats().zero_skips, 0u);
    EXPECT_LT(a.stats().blackbox_calls, b.stats().blackbox_calls);
}

TEST(Step, AutoscaleKeepsAccuracyForLargeInputs) {
    Fixture fx(3, 11, true);
    CoefficientTable t = random_table(2, fx.sys->dim(), 2, 25, 1e5);
    TensorComposer ref(*fx.sys, fx.poly);
    StepComposer step(*fx.sys);
    expect_match(step, ref, t, 3, 1e-12);
    EXPECT_GT(step.stats().autoscaled, 0u);
}

TEST(Step, SecondPassIsServedFromCache) {
    Fixture fx(3, 12, true);
    CoefficientTable t = random_table(2, fx.sys->dim(), 3, 26);
    const auto ms = enumerate_degree(2, 4);
    StepComposer step(*fx.sys);
    step.prepare_degree(4, ms, t);
    for (const auto& m : ms) step.compose(m, t);
    const auto calls = step.stats().blackbox_calls;
    step.prepare_degree(4, ms, t);
    for (const auto& m : ms) step.compose(m, t);
    EXPECT_EQ(step.stats().blackbox_calls, calls);
    EXPECT_GT(step.stats().cache_hits, 0u);
}

TEST(Step, NativeComplexPathUsesTwoCallsPerCombination) {
    Fixture fx(3, 13, false);
    CoefficientTable t = random_table(2, fx.sys->dim(), 3, 27);
    const auto ms = enumerate_degree(2, 4);
    StepComposer step(*fx.sys);
    step.prepare_degree(4, ms, t);
    for (const auto& m : ms) step.compose(m, t);
    EXPECT_EQ(step.stats().real_even + step.stats().real_odd, 0u);
    EXPECT_EQ(step.stats().blackbox_calls, 2 * step.cache().raw_size());
}

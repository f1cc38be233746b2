#include "ssm/coefficient_table.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ssm;
using namespace ssm::testing;

TEST(CoefficientTable, MissingEntryNamesIndex) {
    CoefficientTable t(2, 4);
    try {
        (void)t.W(MultiIndex{1, 1});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
    }
}

TEST(CoefficientTable, BinaryRoundTripIsExact) {
    CoefficientTable t = random_table(2, 6, 5, 11);
    std::stringstream ss;
    t.write_binary(ss);
    CoefficientTable r = CoefficientTable::read_binary(ss);
    ASSERT_EQ(r.size(), t.size());
    ASSERT_EQ(r.max_order(), t.max_order());
    for (int k = 0; k <= t.max_order(); ++k) {
        const auto& a = t.degree(k);
        const auto& b = r.degree(k);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].first, b[i].first);
            EXPECT_TRUE((a[i].second.W.array() == b[i].second.W.array()).all());
            EXPECT_TRUE((a[i].second.R.array() == b[i].second.R.array()).all());
        }
    }
}

TEST(CoefficientTable, RejectsBadMagic) {
    std::stringstream ss("NOTATABLE and some more bytes");
    EXPECT_THROW(CoefficientTable::read_binary(ss), ValidationError);
}

TEST(CoefficientTable, EvaluationMatchesMonomialSum) {
    CoefficientTable t = random_table(2, 3, 3, 5);
    CVec p(2);
    p << cplx(0.3, 0.1), cplx(0.3, -0.1);
    CVec ref = CVec::Zero(3);
    for (int k = 0; k <= 3; ++k)
        for (const auto& [m, c] : t.degree(k)) ref += std::pow(p[0], m[0]) * std::pow(p[1], m[1]) * c.W;
    EXPECT_LT(rel_err(t.eval_W(p), ref), 1e-14);

    // Directional derivative against a central difference.
    CVec dp(2);
    dp << cplx(1.0, 0.0), cplx(0.0, 1.0);
    const double h = 1e-6;
    CVec fd = (t.eval_W(p + h * dp) - t.eval_W(p - h * dp)) / (2 * h);
    EXPECT_LT(rel_err(t.eval_DW(p, dp), fd), 1e-8);
}

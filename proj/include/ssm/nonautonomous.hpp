#pragma once

#include "ssm/coefficient_table.hpp"
#include "ssm/spectral.hpp"

#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace ssm {

/// Leading-order periodic correction: X0(phi) = x0 e^{i phi} + x0_bar e^{-i phi}
/// and S0(phi) = s0_plus e^{i phi} + s0_minus e^{-i phi}.
struct NonAutonomousCoeffs {
    double Omega = 0.0;
    CVec x0, x0_bar;
    CVec s0_plus, s0_minus;
    std::vector<int> resonant_plus, resonant_minus;
};

struct NonAutonomousOptions {
    double tol_res = 0.05;  // |lambda_i -+ i Omega| <= tol_res |lambda_i| flags mode i
    // Fill the e^{-i phi} terms by conjugation for real systems with conjugate-paired subspaces.
    bool exploit_conjugacy = true;
    // Explicit modes carrying s0_plus, replacing the tolerance test. Their conjugate
    // partners carry s0_minus; requires a conjugate-paired subspace.
    std::optional<std::vector<int>> resonant_modes;
};

/// Solves (A - i Omega B) x0 = B W_I s0_plus - Fa and
///        (A + i Omega B) x0_bar = B W_I s0_minus - conj(Fa),
/// with s0 nonzero only on near-resonant modes, fixed by w_i^* B x0 = 0.
NonAutonomousCoeffs solve_leading_nonautonomous(const FirstOrderSystem& sys, const MasterSubspace& sub, double Omega,
                                                const CVec& Fa, const NonAutonomousOptions& opts = {});

/// Residual of both e^{+-i phi} balances relative to |Fa|.
double leading_order_residual(const FirstOrderSystem& sys, const MasterSubspace& sub, const NonAutonomousCoeffs& c,
                              const CVec& Fa);

/// Per-Omega memo of leading-order solves.
class NonAutonomousCache {
public:
    NonAutonomousCache(const FirstOrderSystem& sys, const MasterSubspace& sub, CVec Fa, NonAutonomousOptions opts = {});

    const NonAutonomousCoeffs& get(double Omega);
    std::size_t solves() const { return solves_; }
    const CVec& Fa() const { return Fa_; }

private:
    const FirstOrderSystem* sys_;
    const MasterSubspace* sub_;
    CVec Fa_;
    NonAutonomousOptions opts_;
    std::map<double, NonAutonomousCoeffs> cache_;
    std::size_t solves_ = 0;
};

/// Time-independent: W(p). Time-varying: W(p) + eps (x0 e^{i phi} + x0_bar e^{-i phi}).
CVec evaluate_tv_state(const CoefficientTable& table, const NonAutonomousCoeffs* nonaut, const CVec& p, double phi,
                       double epsilon);

}  // namespace ssm

#pragma once

#include "ssm/coefficient_table.hpp"
#include "ssm/composer.hpp"
#include "ssm/spectral.hpp"
#include "ssm/step.hpp"

#include <map>
#include <string>
#include <vector>

namespace ssm {

struct ResonanceOptions {
    double rho_rel = 0.05;
    // Always flag inner resonances of a conjugate pair: |m| odd and Im(Lambda_m) within rho_rel of Im(lambda_i).
    bool structural_inner = true;
};

struct SsmOptions {
    int max_order = 3;
    ResonanceOptions resonance;
    // Compute only one of each conjugate multi-index pair and fill the other by
    // conjugation. Used only when the subspace is conjugate-paired.
    bool conjugate_symmetry = true;
    // Linear-solve residual above which a homological solve is reported as failed.
    double solve_tol = 1e-8;
};

struct ResonanceRecord {
    MultiIndex m;
    std::vector<int> modes;
};

struct DegreeReport {
    int degree = 0;
    std::size_t solved = 0;        // multi-indices solved directly
    std::size_t mirrored = 0;      // filled by conjugation
    std::size_t factorizations = 0;
    double compose_seconds = 0.0;
    double solve_seconds = 0.0;
    double max_solve_residual = 0.0;
};

struct SsmResult {
    CoefficientTable table;
    std::vector<ResonanceRecord> resonances;
    std::vector<DegreeReport> degrees;
    bool used_conjugate_symmetry = false;
};

cplx Lambda_of(const MultiIndex& m, const CVec& lambdas);

/// Modes i with |Lambda_m - lambda_i| <= rho |lambda_i| plus structural inner resonances.
std::vector<int> detect_resonances(const MultiIndex& m, const CVec& lambdas, const ResonanceOptions& opts = {});

/// Mixed term sum_j sum_{u + k - e_j = m, 1 < |u| < |m|} B W_u u_j R^j_k.
CVec compute_Cm(const MultiIndex& m, const CoefficientTable& table, const SpMat& B);

/// Solves (A - Lambda_m B) W_m = sum_j B v_j R^j_m + rhs with R^j_m = 0 except for
/// flagged modes, which are fixed by the constraint w_j^* B W_m = 0 through a
/// bordered system. Factorizations are cached by (Lambda_m, flagged set).
class HomologicalSolver {
public:
    HomologicalSolver(const FirstOrderSystem& sys, const MasterSubspace& sub);

    struct Solution {
        CVec W, R;
        double residual = 0.0;  // relative residual of the linear solve
    };
    Solution solve(cplx Lambda, const CVec& rhs, const std::vector<int>& resonant);

    std::size_t factorizations() const { return factorizations_; }
    void clear() { cache_.clear(); }

private:
    struct Factor;
    const FirstOrderSystem* sys_;
    const MasterSubspace* sub_;
    CMat BV_, WB_;  // B V and W_left^* B
    std::map<std::string, std::shared_ptr<Factor>> cache_;
    std::size_t factorizations_ = 0;
};

/// Order-by-order normal-form-style SSM computation. The composer supplies [F o W]_m.
SsmResult compute_ssm(const FirstOrderSystem& sys, const MasterSubspace& sub, Composer& composer,
                      const SsmOptions& opts = {});

/// Convenience overload using the non-intrusive composer.
SsmResult compute_ssm(const FirstOrderSystem& sys, const MasterSubspace& sub, const SsmOptions& opts = {},
                      const StepOptions& step_opts = {}, EvaluationStats* stats = nullptr);

/// B DW(p) R(p) - A W(p) - F(W(p)) with both expansions truncated at max_degree.
CVec invariance_residual(const FirstOrderSystem& sys, const CoefficientTable& table, const CVec& p,
                         int max_degree = -1);

/// Reduced coordinates in conjugate-pair form: p_{2k} = rho_k e^{i theta_k}, p_{2k+1} = conj.
CVec conjugate_pair_point(const Vec& rho, const Vec& theta);

/// Swaps entries of consecutive conjugate slots (0,1), (2,3), ...
CVec swap_pairs(const CVec& v);

}  // namespace ssm

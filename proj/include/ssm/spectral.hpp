#pragma once

#include "ssm/model.hpp"

#include <string>
#include <vector>

namespace ssm {

struct EigenOptions {
    Index dense_threshold = 2000;  // N at or below this uses the dense solver
    double tol = 1e-10;            // relative eigen-residual target
    int refine_iterations = 4;     // inverse-iteration sweeps after the initial solve
    int max_krylov = 400;          // cap on the Arnoldi basis size (sparse path)
    double binorm_tol = 1e-10;
    double hyperbolic_tol = 1e-12;  // |Re lambda| <= tol |lambda| is rejected
};

/// Which eigenvalues span the master subspace.
struct ModeSelection {
    enum class Kind { Nearest, PairIndices, FrequencyWindow };
    Kind kind = Kind::Nearest;
    // Zero-based indices of conjugate pairs ordered by increasing |Im lambda|.
    std::vector<int> pairs;
    // All eigenvalues with |Im lambda| in [freq_lo, freq_hi].
    double freq_lo = 0.0, freq_hi = 0.0;

    static ModeSelection nearest() { return {}; }
    static ModeSelection by_pairs(std::vector<int> p) { return {Kind::PairIndices, std::move(p), 0.0, 0.0}; }
    static ModeSelection window(double lo, double hi) { return {Kind::FrequencyWindow, {}, lo, hi}; }
    // Parses "nearest", "pairs:0,2" or "window:lo,hi".
    static ModeSelection parse(const std::string& text);
    std::string to_string() const;
};

/// Selected eigenvalues with B-binormalized right and left eigenvectors. Modes
/// are sorted by |Re| ascending, ties by |Im| ascending, then positive Im first,
/// so conjugate pairs occupy consecutive slots (2k, 2k+1).
struct MasterSubspace {
    CVec lambdas;
    CMat V;       // right eigenvectors, also the order-one manifold coefficients W_I
    CMat W_left;  // left eigenvectors with W_left^* B V = I
    Vec residuals;

    int dim() const { return static_cast<int>(lambdas.size()); }
    Index state_dim() const { return V.rows(); }
    const CMat& W_I() const { return V; }
    // True when slots (2k, 2k+1) hold exact conjugate pairs for every k.
    bool conjugate_paired() const;
};

MasterSubspace solve_master_subspace(const FirstOrderSystem& sys, int M_dim, cplx shift = 0.0,
                                     const ModeSelection& sel = {}, const EigenOptions& opts = {});

/// Rescales W_left so that W_left^* B V = I; V is left untouched.
void binormalize(const CMat& V, CMat& W_left, const SpMat& B, double tol = 1e-10);

/// Deterministic mode order used by MasterSubspace.
bool mode_order_less(cplx a, cplx b);

/// JSON header at `path` plus raw eigenvector data at `path + ".bin"`.
void save_subspace(const MasterSubspace& s, const std::string& path);
MasterSubspace load_subspace(const std::string& path);

}  // namespace ssm

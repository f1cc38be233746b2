#pragma once

#include "ssm/common.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssm {

/// Black-box nonlinear internal force f(x, xdot). Implementations must have
/// no constant and no linear part, and be at most cubic. Only real inputs are
/// guaranteed to be supported; complex evaluation is an optional capability.
class Nonlinearity {
public:
    virtual ~Nonlinearity() = default;

    virtual Index dofs() const = 0;
    virtual Vec evaluate(const Vec& x, const Vec& xdot) const = 0;

    // Batched evaluation of states z = (x, xdot). The default loops over evaluate().
    virtual std::vector<Vec> evaluate_batch(std::span<const Vec> states) const;

    virtual bool supports_complex() const { return false; }
    virtual CVec evaluate_complex(const CVec& x, const CVec& xdot) const;

    // False when calls must be serialized (stateful FE sessions, external processes).
    virtual bool reentrant() const { return true; }
};

using RealForceFn = std::function<Vec(const Vec& x, const Vec& xdot)>;
using ComplexForceFn = std::function<CVec(const CVec& x, const CVec& xdot)>;

/// Wraps plain callables as a Nonlinearity.
class FunctionNonlinearity final : public Nonlinearity {
public:
    FunctionNonlinearity(Index n, RealForceFn f, ComplexForceFn fc = {}, bool reentrant = true);

    Index dofs() const override { return n_; }
    Vec evaluate(const Vec& x, const Vec& xdot) const override { return f_(x, xdot); }
    bool supports_complex() const override { return static_cast<bool>(fc_); }
    CVec evaluate_complex(const CVec& x, const CVec& xdot) const override;
    bool reentrant() const override { return reentrant_; }

private:
    Index n_;
    RealForceFn f_;
    ComplexForceFn fc_;
    bool reentrant_;
};

/// Harmonic forcing f_ext = fa e^{i Omega t} + conj(fa) e^{-i Omega t}, scaled by epsilon.
struct ForcingSpec {
    CVec amplitude;
    double epsilon = 0.0;
};

struct ModelOptions {
    // Route every complex evaluation through real-input decomposition identities.
    bool real_only = true;
    bool validate = true;
    double probe_scale = 1e-2;
    double linear_tol = 1e-8;
    double zero_tol = 1e-12;
};

struct ValidationReport {
    double zero_force_norm = 0.0;
    double linear_part_norm = 0.0;   // relative to the linear operator scale
    double closure_residual = 0.0;   // relative mismatch of F(2z) vs 4 F2(z) + 8 F3(z)
    bool zero_ok = true;
    bool linear_ok = true;
    bool closure_ok = true;
    bool ok() const { return zero_ok && linear_ok && closure_ok; }
};

class SecondOrderModel {
public:
    SecondOrderModel(SpMat M, SpMat C, SpMat K, std::shared_ptr<const Nonlinearity> f,
                     std::optional<ForcingSpec> forcing = std::nullopt, ModelOptions opts = {});

    Index dofs() const { return n_; }
    const SpMat& M() const { return M_; }
    const SpMat& C() const { return C_; }
    const SpMat& K() const { return K_; }
    const Nonlinearity& nonlinearity() const { return *f_; }
    std::shared_ptr<const Nonlinearity> nonlinearity_ptr() const { return f_; }
    const std::optional<ForcingSpec>& forcing() const { return forcing_; }
    const ModelOptions& options() const { return opts_; }

    // A copy sharing matrices and nonlinearity, with a different forcing definition.
    SecondOrderModel with_forcing(std::optional<ForcingSpec> forcing) const;

private:
    SecondOrderModel() = default;

    Index n_ = 0;
    SpMat M_, C_, K_;
    std::shared_ptr<const Nonlinearity> f_;
    std::optional<ForcingSpec> forcing_;
    ModelOptions opts_;
};

/// Checks f(0,0) = 0, absence of a linear part (Richardson-extrapolated central
/// differences) and cubic closure F(2z) = 4 F2(z) + 8 F3(z) at a random probe.
ValidationReport validate_nonlinearity(const SecondOrderModel& model, double probe_scale, double tol,
                                       unsigned seed = 7);

/// First-order form B zdot = A z + F(z) + eps Fext with z = (x, xdot).
class FirstOrderSystem {
public:
    explicit FirstOrderSystem(std::shared_ptr<const SecondOrderModel> model);

    Index dim() const { return N_; }
    Index dofs() const { return n_; }
    const SpMat& A() const { return A_; }
    const SpMat& B() const { return B_; }
    const SecondOrderModel& model() const { return *model_; }
    std::shared_ptr<const SecondOrderModel> model_ptr() const { return model_; }
    bool real_only() const { return model_->options().real_only || !model_->nonlinearity().supports_complex(); }

    // F(z) = [-f(x, xdot); 0].
    Vec F(const Vec& z) const;
    std::vector<Vec> F_batch(std::span<const Vec> states) const;
    // Native complex evaluation; requires the black box to support it.
    CVec F_native(const CVec& z) const;
    // Fext = [fa; 0]; zero vector when the model has no forcing.
    CVec Fext() const;

private:
    std::shared_ptr<const SecondOrderModel> model_;
    Index n_ = 0;
    Index N_ = 0;
    SpMat A_, B_;
};

FirstOrderSystem lift_to_first_order(std::shared_ptr<const SecondOrderModel> model);

}  // namespace ssm

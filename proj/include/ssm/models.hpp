#pragma once

#include "ssm/model.hpp"
#include "ssm/polynomial.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ssm {

using ParamMap = std::map<std::string, double>;

struct BuiltinModel {
    std::string id;
    ParamMap params;
    std::shared_ptr<const SecondOrderModel> model;
    // Explicit tensors of the same nonlinearity, when available.
    std::shared_ptr<const PolynomialNonlinearity> tensors;
    CVec forcing;    // default forcing amplitude fa (length n)
    Vec observable;  // default output: weights on the displacement DOFs
    std::string description;
};

struct DuffingParams {
    double omega0 = 1.0;
    double zeta = 0.005;
    double gamma = 0.1;
    double forcing = 0.5;
};
BuiltinModel make_duffing(const DuffingParams& p = {});

/// Chain of n unit masses between two walls with n+1 springs. Spring e acts on the
/// relative displacement d and velocity dv of its end masses with force
/// k_lin d + k2 d^2 + k3 d^3 + c2 d dv + c3 d^2 dv. Damping C = alpha M + beta K.
struct SpringChainParams {
    int n = 2;
    std::vector<double> k_lin;  // per spring, size n+1; empty means all 1
    std::vector<double> k2, k3, c2, c3;  // per spring; empty means all zero
    double alpha = 0.0;
    double beta = 0.01;
    int forced_dof = 0;
    double forcing = 0.1;
};
BuiltinModel make_spring_chain(const SpringChainParams& p);

/// Randomized chain with mixed quadratic, cubic and velocity-dependent terms.
BuiltinModel make_random_chain(int n, unsigned seed);

/// Two-mass chain with linear frequencies 1 and 2 and a shared quadratic spring
/// nonlinearity, giving a 1:2 internal resonance between its two modes.
struct InternalResonanceParams {
    double k2 = 0.5;
    double k3 = 0.0;
    double zeta1 = 0.01;  // modal damping ratios
    double zeta2 = 0.01;
    double detune = 0.0;  // relative shift of the middle spring stiffness
    double forcing = 0.02;
};
BuiltinModel make_one_to_two_chain(const InternalResonanceParams& p = {});

/// Clamped-clamped von Karman beam: axial u, transverse w and rotation per node,
/// linear axial and Hermite cubic bending elements. The nonlinear internal force
/// is evaluated by an element loop; no explicit tensors.
struct BeamParams {
    int n_elem = 8;
    double length = 1.0;
    double thickness = 0.1;
    double width = 0.1;
    double youngs = 1.0;
    double density = 1.0;
    double rayleigh_alpha = 0.0;
    double rayleigh_beta = 1e-4;
    double forcing = 1e-3;
};
BuiltinModel make_vonkarman_beam(const BeamParams& p = {});

/// Galerkin-reduced cantilever pipe conveying fluid (nondimensional). Coriolis and
/// centrifugal flow terms make C and K non-symmetric; the nonlinearity is a cubic
/// curvature stiffness plus a cubic viscoelastic (velocity-dependent) damping.
struct PipeParams {
    int n_modes = 4;
    double flow_velocity = 6.0;
    double viscoelastic = 5e-3;
    double mass_ratio = 0.2;
    int quadrature = 40;
    double forcing = 0.1;
};
BuiltinModel make_pipe_conveying_fluid(const PipeParams& p = {});

/// Roots of 1 + cos(b) cosh(b) = 0, the cantilever beam eigenvalue parameters.
std::vector<double> cantilever_roots(int count);

struct BuiltinInfo {
    std::string id;
    std::string summary;
    ParamMap defaults;
};
std::vector<BuiltinInfo> list_builtin_models();
/// Builds a model from its id and parameter overrides; unknown ids or
/// parameters raise ValidationError.
BuiltinModel make_builtin(const std::string& id, const ParamMap& overrides = {});

}  // namespace ssm

#pragma once

#include "ssm/autonomous.hpp"
#include "ssm/coefficient_table.hpp"
#include "ssm/nonautonomous.hpp"
#include "ssm/spectral.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ssm {

/// Reduced dynamics p' = R(p) + eps (s0_plus e^{i Omega t} + s0_minus e^{-i Omega t}) on a
/// conjugate-paired master subspace, plus its rotating-frame form. Pair k is written
/// p_{2k} = q_k e^{i r_k Omega t} with integer ratio r_k; pairs with r_k = 1 are forced.
class ReducedOde {
public:
    // ratios empty: r_k = max(1, round(Im lambda_{2k} / Omega_center)).
    ReducedOde(const CoefficientTable& table, const MasterSubspace& sub, const CVec& Fa, double epsilon,
               std::vector<int> ratios = {}, double Omega_center = 0.0);

    int dim() const { return dim_; }
    int pairs() const { return dim_ / 2; }
    double epsilon() const { return epsilon_; }
    const std::vector<int>& ratios() const { return ratios_; }
    // Master modes carrying s0_plus (slot 2k of every pair with r_k = 1).
    const std::vector<int>& forced_modes() const { return forced_; }
    const CVec& s0_plus() const { return s0_plus_; }
    const CVec& s0_minus() const { return s0_minus_; }
    const CoefficientTable& table() const { return *table_; }
    // Largest coefficient dropped because its phase does not match the rotating frame.
    double dropped_norm() const { return dropped_; }

    ReducedOde with_epsilon(double epsilon) const;

    // Full reduced vector field in the original (non-rotating) coordinates.
    CVec rhs(const CVec& p, double t, double Omega) const;

    // Rotating frame on y = (Re q_0, Im q_0, Re q_1, ...): G(y, Omega) and its derivatives.
    Vec rotating_rhs(const Vec& y, double Omega) const;
    Mat rotating_jacobian(const Vec& y, double Omega) const;
    Vec rotating_dOmega(const Vec& y) const;

    // p at phase phi = Omega t for a rotating-frame state y.
    CVec p_of(const Vec& y, double phi) const;

private:
    struct Term {
        int pair;
        std::vector<int> exps;
        cplx coef;
    };
    CVec slots(const Vec& y) const;

    const CoefficientTable* table_;
    int dim_;
    double epsilon_;
    std::vector<int> ratios_;
    std::vector<int> forced_;
    CVec s0_plus_, s0_minus_;
    std::vector<Term> terms_;
    double dropped_ = 0.0;
};

/// Real linear functional on the first-order state z (length N).
Vec observable_on_state(const Vec& displacement_weights, Index state_dim);

/// Real output of the observable at reduced state p; throws NumericalError when
/// the imaginary leakage exceeds 1e-8 relative.
double lift_to_physical(const CoefficientTable& table, const NonAutonomousCoeffs* nonaut, const CVec& p, double phi,
                        double epsilon, const Vec& observable);

struct BackbonePoint {
    double rho = 0.0;
    double frequency = 0.0;  // Im[R(p)/p]
    double damping = 0.0;    // Re[R(p)/p]
    double amplitude = 0.0;  // max over one cycle of |observable|
};

std::vector<BackbonePoint> backbone_curve(const CoefficientTable& table, const MasterSubspace& sub,
                                          const std::vector<double>& amp_grid, const Vec& observable,
                                          int phase_samples = 128);

/// rho at which the degree-k and degree-(k-2) truncations of W differ by rel_gap;
/// infinity when the table has order below 3.
double chart_radius(const CoefficientTable& table, double rel_gap = 0.05, int phase_samples = 16);

enum class FrcMode { TI, TV };
enum class Stability { Stable, Unstable };
enum class BifurcationFlag { Regular, SN, HB };

std::string to_string(FrcMode m);
std::string to_string(Stability s);
std::string to_string(BifurcationFlag f);

struct FrcPoint {
    double Omega = 0.0;
    Vec rho, theta;  // per pair, rotating frame
    Vec y;           // Cartesian rotating-frame state
    double out_amp = 0.0;
    Stability stability = Stability::Stable;
    BifurcationFlag flag = BifurcationFlag::Regular;
    double max_real_eig = 0.0;
    bool outside_chart = false;
};

struct StepControl {
    double ds = 1e-3;
    double ds_min = 1e-9;
    double ds_max = 2e-2;
    int max_steps = 20000;
    double newton_tol = 1e-11;
    int newton_max_iter = 12;
    double bisection_tol = 1e-6;  // relative in Omega
};

struct FrcOptions {
    FrcMode mode = FrcMode::TI;
    StepControl step;
    int phase_samples = 128;
    double chart_radius = std::numeric_limits<double>::infinity();
    bool detect_bifurcations = true;
};

/// Thrown when continuation cannot proceed; carries the points computed so far.
class ContinuationError : public NumericalError {
public:
    ContinuationError(const std::string& what, std::vector<FrcPoint> partial)
        : NumericalError(what), partial_(std::move(partial)) {}
    const std::vector<FrcPoint>& partial() const { return partial_; }

private:
    std::vector<FrcPoint> partial_;
};

/// Pseudo-arclength continuation of rotating-frame fixed points over
/// [Omega_lo, Omega_hi]. In TV mode the leading-order correction is added to the
/// physical amplitude; nonaut must then be non-null and solve with the rom's forced modes.
std::vector<FrcPoint> frc_continuation(const ReducedOde& rom, double Omega_lo, double Omega_hi, const Vec& observable,
                                       const FrcOptions& opts = {}, NonAutonomousCache* nonaut = nullptr);

/// Newton solve of G(y, Omega) = 0 from y0; returns nullopt on failure.
std::optional<Vec> solve_fixed_point(const ReducedOde& rom, double Omega, const Vec& y0, double tol = 1e-12,
                                     int max_iter = 30);

/// 2A (.) I: eigenvalues are lambda_i + lambda_j for i < j.
Mat bialternate_product(const Mat& A);

/// Max over the sampled period of |observable| at the rotating-frame state y.
double output_amplitude(const ReducedOde& rom, const Vec& y, double Omega, const Vec& observable,
                        const NonAutonomousCoeffs* nonaut, int phase_samples = 128);

struct FrcPeak {
    double Omega = 0.0;
    double out_amp = 0.0;
};
/// Largest out_amp, refined by a parabola through the neighboring points.
FrcPeak find_peak(const std::vector<FrcPoint>& frc);

struct AmplitudeGap {
    double max_abs = 0.0;    // amplitude difference at equal Omega
    double max_rel = 0.0;    // the same, relative to the larger amplitude
    double max_curve = 0.0;  // distance to curve b in the (Omega, amplitude) plane, both relative
    double max_peak = 0.0;   // max_abs over the largest amplitude of a
};
/// Compares out_amp of b against a at a's Omega values, interpolating along b's
/// segments and choosing the closest branch when b is multivalued. max_curve is
/// insensitive to small fold shifts, where equal-Omega gaps jump between branches.
AmplitudeGap amplitude_gap(const std::vector<FrcPoint>& a, const std::vector<FrcPoint>& b);

struct BifurcationCheck {
    bool confirmed = false;
    std::string detail;
};
/// Recomputes fixed points at Omega -+ dOmega around a flagged point. SN: nearby
/// solutions exist on one side only, with opposite det J. HB: the critical
/// complex pair has real parts of opposite sign on the two sides.
BifurcationCheck verify_bifurcation(const ReducedOde& rom, const FrcPoint& point, double dOmega = 1e-4);

struct OrderConvergence {
    int order_low = 0, order_high = 0;
    AmplitudeGap gap;
    FrcPeak peak_low, peak_high;
};
/// FRCs at orders k and k+2 on the same forcing and range, compared by amplitude_gap.
/// Both are continued at the same step control.
OrderConvergence frc_order_convergence(const FirstOrderSystem& sys, const MasterSubspace& sub, const CVec& Fa,
                                       double epsilon, int k, double Omega_lo, double Omega_hi, const Vec& observable,
                                       const SsmOptions& ssm_opts = {}, const FrcOptions& frc_opts = {},
                                       const std::vector<int>& ratios = {});

struct RomTrajectory {
    std::vector<double> t;
    std::vector<CVec> p;
    bool truncated = false;  // stopped because |p| left the chart
};

struct IntegrateOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double dt_out = 0.05;
    double Omega = 0.0;  // forcing frequency; ignored when epsilon = 0
    double chart_radius = std::numeric_limits<double>::infinity();
    double safety = 2.0;
};

/// Adaptive Dormand-Prince integration of the reduced dynamics from p0.
RomTrajectory integrate_rom(const ReducedOde& rom, const CVec& p0, double t0, double t1,
                            const IntegrateOptions& opts = {});

}  // namespace ssm

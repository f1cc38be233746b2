#include "ssm/nonautonomous.hpp"
#include "ssm/autonomous.hpp"

#include <Eigen/SparseLU>

#include <sstream>

namespace ssm {

namespace {

// Solves (A - s B) x = B V_I y - f with w_i^* B x = 0 for the flagged modes.
void bordered_solve(const FirstOrderSystem& sys, const MasterSubspace& sub, cplx s, const CVec& f,
                    const std::vector<int>& modes, CVec& x, CVec& y) {
    const Index N = sys.dim();
    const Index r = static_cast<Index>(modes.size());
    const CMat BV = sys.B().cast<cplx>() * sub.V;
    const CMat WB = sub.W_left.adjoint() * sys.B().cast<cplx>();
    using T = Eigen::Triplet<cplx>;
    std::vector<T> trip;
    for (Index c = 0; c < sys.A().outerSize(); ++c)
        for (SpMat::InnerIterator a(sys.A(), c); a; ++a) trip.emplace_back(a.row(), a.col(), a.value());
    for (Index c = 0; c < sys.B().outerSize(); ++c)
        for (SpMat::InnerIterator b(sys.B(), c); b; ++b) trip.emplace_back(b.row(), b.col(), -s * b.value());
    for (Index q = 0; q < r; ++q) {
        const int i = modes[static_cast<std::size_t>(q)];
        for (Index row = 0; row < N; ++row) {
            if (BV(row, i) != cplx(0.0)) trip.emplace_back(row, N + q, -BV(row, i));
            if (WB(i, row) != cplx(0.0)) trip.emplace_back(N + q, row, WB(i, row));
        }
    }
    CSpMat L(N + r, N + r);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<CSpMat> lu;
    lu.compute(L);
    if (lu.info() != Eigen::Success) {
        std::ostringstream os;
        if (r == 0)
            os << "A - i Omega B is singular at i Omega = " << s
               << " with no resonant mode flagged; increase the forcing resonance tolerance";
        else
            os << "bordered forcing system is singular at i Omega = " << s << ": defective pencil";
        throw NumericalError(os.str());
    }
    CVec b = CVec::Zero(N + r);
    b.head(N) = -f;
    const CVec sol = lu.solve(b);
    x = sol.head(N);
    y = CVec::Zero(sub.dim());
    for (Index q = 0; q < r; ++q) y[modes[static_cast<std::size_t>(q)]] = sol[N + q];
}

std::vector<int> flagged(const CVec& lambdas, cplx s, double tol) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(lambdas.size()); ++i)
        if (std::abs(lambdas[i] - s) <= tol * std::abs(lambdas[i])) out.push_back(i);
    return out;
}

}  // namespace

NonAutonomousCoeffs solve_leading_nonautonomous(const FirstOrderSystem& sys, const MasterSubspace& sub, double Omega,
                                                const CVec& Fa, const NonAutonomousOptions& opts) {
    if (!(Omega > 0.0)) throw ValidationError("forcing frequency Omega must be positive");
    if (Fa.size() != sys.dim()) throw ValidationError("forcing vector must have the first-order state length");
    NonAutonomousCoeffs c;
    c.Omega = Omega;
    const cplx s(0.0, Omega);
    if (opts.resonant_modes) {
        if (!sub.conjugate_paired()) throw ValidationError("explicit forced modes need a conjugate-paired subspace");
        for (int i : *opts.resonant_modes) {
            if (i < 0 || i >= sub.dim()) throw ValidationError("forced mode index out of range");
            c.resonant_plus.push_back(i);
            c.resonant_minus.push_back(i ^ 1);
        }
    } else {
        c.resonant_plus = flagged(sub.lambdas, s, opts.tol_res);
        c.resonant_minus = flagged(sub.lambdas, -s, opts.tol_res);
    }
    bordered_solve(sys, sub, s, Fa, c.resonant_plus, c.x0, c.s0_plus);
    if (opts.exploit_conjugacy && sub.conjugate_paired()) {
        c.x0_bar = c.x0.conjugate();
        c.s0_minus = swap_pairs(c.s0_plus.conjugate());
    } else {
        bordered_solve(sys, sub, -s, Fa.conjugate(), c.resonant_minus, c.x0_bar, c.s0_minus);
    }
    return c;
}

double leading_order_residual(const FirstOrderSystem& sys, const MasterSubspace& sub, const NonAutonomousCoeffs& c,
                              const CVec& Fa) {
    const CSpMat A = sys.A().cast<cplx>(), B = sys.B().cast<cplx>();
    const cplx s(0.0, c.Omega);
    const CVec rp = A * c.x0 - s * (B * c.x0) - B * (sub.V * c.s0_plus) + Fa;
    const CVec rm = A * c.x0_bar + s * (B * c.x0_bar) - B * (sub.V * c.s0_minus) + Fa.conjugate();
    const double scale = std::max(Fa.norm(), 1e-300);
    if (Fa.norm() == 0.0) return std::max(rp.norm(), rm.norm());
    return std::max(rp.norm(), rm.norm()) / scale;
}

NonAutonomousCache::NonAutonomousCache(const FirstOrderSystem& sys, const MasterSubspace& sub, CVec Fa,
                                       NonAutonomousOptions opts)
    : sys_(&sys), sub_(&sub), Fa_(std::move(Fa)), opts_(opts) {}

const NonAutonomousCoeffs& NonAutonomousCache::get(double Omega) {
    auto it = cache_.find(Omega);
    if (it != cache_.end()) return it->second;
    ++solves_;
    return cache_.emplace(Omega, solve_leading_nonautonomous(*sys_, *sub_, Omega, Fa_, opts_)).first->second;
}

CVec evaluate_tv_state(const CoefficientTable& table, const NonAutonomousCoeffs* nonaut, const CVec& p, double phi,
                       double epsilon) {
    CVec z = table.eval_W(p);
    if (nonaut && epsilon != 0.0) {
        const cplx e = std::polar(1.0, phi);
        z += epsilon * (nonaut->x0 * e + nonaut->x0_bar * std::conj(e));
    }
    return z;
}

}  // namespace ssm

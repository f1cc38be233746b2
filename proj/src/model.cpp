#include "ssm/model.hpp"

#include <Eigen/SparseLU>

#include <random>
#include <sstream>

namespace ssm {

std::vector<Vec> Nonlinearity::evaluate_batch(std::span<const Vec> states) const {
    const Index n = dofs();
    std::vector<Vec> out;
    out.reserve(states.size());
    for (const Vec& z : states) out.push_back(evaluate(z.head(n), z.tail(n)));
    return out;
}

CVec Nonlinearity::evaluate_complex(const CVec&, const CVec&) const {
    throw ValidationError("nonlinearity does not support complex inputs");
}

FunctionNonlinearity::FunctionNonlinearity(Index n, RealForceFn f, ComplexForceFn fc, bool reentrant)
    : n_(n), f_(std::move(f)), fc_(std::move(fc)), reentrant_(reentrant) {
    if (!f_) throw ValidationError("FunctionNonlinearity needs a real evaluation callable");
}

CVec FunctionNonlinearity::evaluate_complex(const CVec& x, const CVec& xdot) const {
    if (!fc_) return Nonlinearity::evaluate_complex(x, xdot);
    return fc_(x, xdot);
}

namespace {

void check_square(const SpMat& A, Index n, const char* name) {
    if (A.rows() != n || A.cols() != n) {
        std::ostringstream os;
        os << name << " must be " << n << "x" << n << ", got " << A.rows() << "x" << A.cols();
        throw ValidationError(os.str());
    }
}

double op_inf_norm(const SpMat& A) {
    Vec rs = Vec::Zero(A.rows());
    for (Index k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) rs[it.row()] += std::abs(it.value());
    return rs.size() ? rs.maxCoeff() : 0.0;
}

}  // namespace

SecondOrderModel::SecondOrderModel(SpMat M, SpMat C, SpMat K, std::shared_ptr<const Nonlinearity> f,
                                   std::optional<ForcingSpec> forcing, ModelOptions opts)
    : n_(M.rows()), M_(std::move(M)), C_(std::move(C)), K_(std::move(K)), f_(std::move(f)),
      forcing_(std::move(forcing)), opts_(opts) {
    if (n_ <= 0) throw ValidationError("model needs at least one degree of freedom");
    check_square(M_, n_, "M");
    check_square(C_, n_, "C");
    check_square(K_, n_, "K");
    M_.makeCompressed();
    C_.makeCompressed();
    K_.makeCompressed();
    if (!f_) throw ValidationError("model needs a nonlinearity (use a zero force for linear systems)");
    if (f_->dofs() != n_) throw ValidationError("nonlinearity dof count does not match the matrices");
    if (forcing_) {
        if (forcing_->amplitude.size() != n_) throw ValidationError("forcing amplitude has wrong length");
        if (!(forcing_->epsilon >= 0.0)) throw ValidationError("forcing epsilon must be >= 0");
    }

    Eigen::SparseLU<SpMat> lu;
    lu.compute(M_);
    if (lu.info() != Eigen::Success) throw NumericalError("sparse LU factorization of M failed: M is singular");
    Vec probe = Vec::LinSpaced(n_, 1.0, 2.0);
    Vec sol = lu.solve(probe);
    if (!sol.allFinite() || (M_ * sol - probe).norm() > 1e-8 * probe.norm())
        throw NumericalError("sparse LU factorization of M failed: M is numerically singular");

    if (opts_.validate) {
        ValidationReport rep = validate_nonlinearity(*this, opts_.probe_scale, opts_.linear_tol);
        if (rep.zero_force_norm > opts_.zero_tol) {
            std::ostringstream os;
            os << "nonlinearity has a constant part: |f(0,0)| = " << rep.zero_force_norm;
            throw ValidationError(os.str());
        }
        if (!rep.linear_ok) {
            std::ostringstream os;
            os << "nonlinearity has a linear part (relative size " << rep.linear_part_norm
               << "); move it into K or C";
            throw ValidationError(os.str());
        }
    }
}

SecondOrderModel SecondOrderModel::with_forcing(std::optional<ForcingSpec> forcing) const {
    SecondOrderModel m;
    m.n_ = n_;
    m.M_ = M_;
    m.C_ = C_;
    m.K_ = K_;
    m.f_ = f_;
    m.opts_ = opts_;
    if (forcing) {
        if (forcing->amplitude.size() != n_) throw ValidationError("forcing amplitude has wrong length");
        if (!(forcing->epsilon >= 0.0)) throw ValidationError("forcing epsilon must be >= 0");
    }
    m.forcing_ = std::move(forcing);
    return m;
}

ValidationReport validate_nonlinearity(const SecondOrderModel& model, double probe_scale, double tol,
                                       unsigned seed) {
    if (!(probe_scale > 0.0)) throw ValidationError("probe_scale must be positive");
    const Index n = model.dofs();
    const Nonlinearity& f = model.nonlinearity();
    auto eval = [&](const Vec& z) { return f.evaluate(z.head(n), z.tail(n)); };

    ValidationReport rep;
    rep.zero_force_norm = eval(Vec::Zero(2 * n)).norm();
    rep.zero_ok = rep.zero_force_norm <= tol;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Vec dir(2 * n);
    for (Index i = 0; i < 2 * n; ++i) dir[i] = nd(rng);
    dir /= dir.norm();

    // D(h) = L dir + h^2 F3(dir) exactly for cubic f, so Richardson removes the cubic part.
    auto central = [&](double h) -> Vec { return (eval(h * dir) - eval(-h * dir)) / (2.0 * h); };
    const Vec lin = (4.0 * central(0.5 * probe_scale) - central(probe_scale)) / 3.0;
    const Vec lin_ref = model.K() * dir.head(n) + model.C() * dir.tail(n);
    const double scale = std::max({lin_ref.norm(), op_inf_norm(model.K()), op_inf_norm(model.C()), 1e-300});
    rep.linear_part_norm = lin.norm() / scale;
    rep.linear_ok = rep.linear_part_norm <= tol;

    const Vec z = probe_scale * dir;
    const Vec fp = eval(z);
    const Vec fm = eval(-z);
    const Vec f2 = 0.5 * (fp + fm);
    const Vec f3 = 0.5 * (fp - fm);
    const Vec f_double = eval(2.0 * z);
    const Vec recon = 4.0 * f2 + 8.0 * f3;
    const double denom = std::max({f_double.norm(), recon.norm(), 1e-300});
    rep.closure_residual = (f_double.norm() == 0.0 && recon.norm() == 0.0) ? 0.0 : (f_double - recon).norm() / denom;
    rep.closure_ok = rep.closure_residual <= std::max(tol, 1e-10);
    return rep;
}

FirstOrderSystem::FirstOrderSystem(std::shared_ptr<const SecondOrderModel> model) : model_(std::move(model)) {
    if (!model_) throw ValidationError("null model");
    n_ = model_->dofs();
    N_ = 2 * n_;
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> ta, tb;
    auto add = [](std::vector<Triplet>& t, const SpMat& S, Index r0, Index c0, double s) {
        for (Index k = 0; k < S.outerSize(); ++k)
            for (SpMat::InnerIterator it(S, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
    };
    add(ta, model_->K(), 0, 0, -1.0);
    add(ta, model_->M(), n_, n_, 1.0);
    add(tb, model_->C(), 0, 0, 1.0);
    add(tb, model_->M(), 0, n_, 1.0);
    add(tb, model_->M(), n_, 0, 1.0);
    A_.resize(N_, N_);
    B_.resize(N_, N_);
    A_.setFromTriplets(ta.begin(), ta.end());
    B_.setFromTriplets(tb.begin(), tb.end());
    A_.makeCompressed();
    B_.makeCompressed();
}

Vec FirstOrderSystem::F(const Vec& z) const {
    Vec out = Vec::Zero(N_);
    out.head(n_) = -model_->nonlinearity().evaluate(z.head(n_), z.tail(n_));
    return out;
}

std::vector<Vec> FirstOrderSystem::F_batch(std::span<const Vec> states) const {
    std::vector<Vec> f = model_->nonlinearity().evaluate_batch(states);
    std::vector<Vec> out;
    out.reserve(f.size());
    for (const Vec& fi : f) {
        if (fi.size() != n_) throw NumericalError("black-box returned a force vector of wrong length");
        Vec o = Vec::Zero(N_);
        o.head(n_) = -fi;
        out.push_back(std::move(o));
    }
    return out;
}

CVec FirstOrderSystem::F_native(const CVec& z) const {
    CVec out = CVec::Zero(N_);
    out.head(n_) = -model_->nonlinearity().evaluate_complex(z.head(n_), z.tail(n_));
    return out;
}

CVec FirstOrderSystem::Fext() const {
    CVec out = CVec::Zero(N_);
    if (model_->forcing()) out.head(n_) = model_->forcing()->amplitude;
    return out;
}

FirstOrderSystem lift_to_first_order(std::shared_ptr<const SecondOrderModel> model) {
    return FirstOrderSystem(std::move(model));
}

}  // namespace ssm

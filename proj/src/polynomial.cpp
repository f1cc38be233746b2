#include "ssm/polynomial.hpp"

namespace ssm {

PolynomialNonlinearity::PolynomialNonlinearity(Index n, std::vector<QuadTerm> quad, std::vector<CubicTerm> cubic)
    : n_(n), quad_(std::move(quad)), cubic_(std::move(cubic)) {
    if (n_ <= 0) throw ValidationError("polynomial nonlinearity needs n > 0");
    auto in_range = [&](Index i, Index hi) { return i >= 0 && i < hi; };
    for (const auto& t : quad_)
        if (!in_range(t.row, n_) || !in_range(t.a, 2 * n_) || !in_range(t.b, 2 * n_))
            throw ValidationError("quadratic term index out of range");
    for (const auto& t : cubic_)
        if (!in_range(t.row, n_) || !in_range(t.a, 2 * n_) || !in_range(t.b, 2 * n_) || !in_range(t.c, 2 * n_))
            throw ValidationError("cubic term index out of range");
}

template <class V>
V PolynomialNonlinearity::eval_state(const V& z) const {
    V f = V::Zero(n_);
    for (const auto& t : quad_) f[t.row] += t.coef * z[t.a] * z[t.b];
    for (const auto& t : cubic_) f[t.row] += t.coef * z[t.a] * z[t.b] * z[t.c];
    return f;
}

Vec PolynomialNonlinearity::evaluate(const Vec& x, const Vec& xdot) const {
    Vec z(2 * n_);
    z << x, xdot;
    return eval_state(z);
}

CVec PolynomialNonlinearity::evaluate_complex(const CVec& x, const CVec& xdot) const {
    CVec z(2 * n_);
    z << x, xdot;
    return eval_state(z);
}

CVec PolynomialNonlinearity::bilinear(const CVec& u, const CVec& v) const {
    CVec f = CVec::Zero(n_);
    for (const auto& t : quad_) f[t.row] += 0.5 * t.coef * (u[t.a] * v[t.b] + u[t.b] * v[t.a]);
    return f;
}

CVec PolynomialNonlinearity::trilinear(const CVec& u, const CVec& v, const CVec& w) const {
    CVec f = CVec::Zero(n_);
    for (const auto& t : cubic_) {
        const cplx s = u[t.a] * (v[t.b] * w[t.c] + v[t.c] * w[t.b]) + u[t.b] * (v[t.a] * w[t.c] + v[t.c] * w[t.a]) +
                       u[t.c] * (v[t.a] * w[t.b] + v[t.b] * w[t.a]);
        f[t.row] += t.coef * s / 6.0;
    }
    return f;
}

TensorComposer::TensorComposer(const FirstOrderSystem& sys, std::shared_ptr<const PolynomialNonlinearity> poly)
    : sys_(&sys), poly_(std::move(poly)) {
    if (!poly_ || poly_->dofs() != sys.dofs()) throw ValidationError("tensor composer needs a matching polynomial");
}

CVec TensorComposer::compose(const MultiIndex& m, const CoefficientTable& table) {
    const Index n = sys_->dofs();
    CVec f = CVec::Zero(n);
    if (m.degree() >= 2) {
        for (const MultiIndex& u : sub_indices(m)) {
            if (u.degree() == 0 || u == m) continue;
            const MultiIndex rest = m - u;
            f += poly_->bilinear(table.W(u), table.W(rest));
            for (const MultiIndex& v : sub_indices(rest)) {
                if (v.degree() == 0 || v == rest) continue;
                f += poly_->trilinear(table.W(u), table.W(v), table.W(rest - v));
            }
        }
    }
    CVec out = CVec::Zero(sys_->dim());
    out.head(n) = -f;
    return out;
}

}  // namespace ssm

#pragma once

#include "ssm/composer.hpp"
#include "ssm/model.hpp"

#include <memory>
#include <vector>

namespace ssm {

// f_row += coef * z_a * z_b with z = (x, xdot), indices in [0, 2n).
struct QuadTerm {
    Index row, a, b;
    double coef;
};

// f_row += coef * z_a * z_b * z_c
struct CubicTerm {
    Index row, a, b, c;
    double coef;
};

/// Explicit quadratic plus cubic nonlinearity stored as sparse term lists.
/// Exposes its symmetric multilinear forms so an intrusive composer can be
/// built on top of it.
class PolynomialNonlinearity final : public Nonlinearity {
public:
    PolynomialNonlinearity(Index n, std::vector<QuadTerm> quad, std::vector<CubicTerm> cubic);

    Index dofs() const override { return n_; }
    Vec evaluate(const Vec& x, const Vec& xdot) const override;
    bool supports_complex() const override { return true; }
    CVec evaluate_complex(const CVec& x, const CVec& xdot) const override;

    const std::vector<QuadTerm>& quadratic_terms() const { return quad_; }
    const std::vector<CubicTerm>& cubic_terms() const { return cubic_; }

    // Symmetric forms on full states z of length 2n, so that f2(z) = bilinear(z, z).
    CVec bilinear(const CVec& u, const CVec& v) const;
    CVec trilinear(const CVec& u, const CVec& v, const CVec& w) const;

private:
    template <class V>
    V eval_state(const V& z) const;

    Index n_;
    std::vector<QuadTerm> quad_;
    std::vector<CubicTerm> cubic_;
};

/// Intrusive composition through the explicit tensors: ordered sums over all
/// pairs and triples of sub-indices. Serves as an independent reference.
class TensorComposer final : public Composer {
public:
    TensorComposer(const FirstOrderSystem& sys, std::shared_ptr<const PolynomialNonlinearity> poly);

    CVec compose(const MultiIndex& m, const CoefficientTable& table) override;

private:
    const FirstOrderSystem* sys_;
    std::shared_ptr<const PolynomialNonlinearity> poly_;
};

}  // namespace ssm

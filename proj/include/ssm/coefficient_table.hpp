#pragma once

#include "ssm/common.hpp"
#include "ssm/multiindex.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ssm {

struct Coefficient {
    CVec W;  // manifold coefficient, length N
    CVec R;  // reduced-dynamics coefficient, length M
};

/// Expansion coefficients W_m, R_m stored per degree. Each degree block keeps
/// its entries in insertion order; the solver inserts in canonical order.
class CoefficientTable {
public:
    CoefficientTable() = default;
    CoefficientTable(int dim, Index N);

    int dim() const { return dim_; }
    Index state_dim() const { return N_; }
    int max_order() const { return static_cast<int>(degrees_.size()) - 1; }

    void set(const MultiIndex& m, CVec W, CVec R);
    bool contains(const MultiIndex& m) const;
    const Coefficient* find(const MultiIndex& m) const;
    // Throws NumericalError naming m when it is absent (solver ordering bug).
    const Coefficient& at(const MultiIndex& m) const;
    const CVec& W(const MultiIndex& m) const { return at(m).W; }
    const CVec& R(const MultiIndex& m) const { return at(m).R; }

    const std::vector<std::pair<MultiIndex, Coefficient>>& degree(int k) const;
    std::size_t size() const;

    // Polynomial evaluation; max_degree < 0 means all stored degrees.
    CVec eval_W(const CVec& p, int max_degree = -1) const;
    CVec eval_R(const CVec& p, int max_degree = -1) const;
    // DW(p) * dp
    CVec eval_DW(const CVec& p, const CVec& dp, int max_degree = -1) const;

    // Binary format: see docs/file_formats.md.
    void write_binary(std::ostream& os) const;
    static CoefficientTable read_binary(std::istream& is);
    void save(const std::string& path) const;
    static CoefficientTable load(const std::string& path);

private:
    void ensure_degree(int k);

    int dim_ = 0;
    Index N_ = 0;
    std::vector<std::vector<std::pair<MultiIndex, Coefficient>>> degrees_;
    std::unordered_map<MultiIndex, std::pair<int, std::size_t>, MultiIndexHash> lookup_;
};

/// p^m for complex p.
cplx monomial(const CVec& p, const MultiIndex& m);

}  // namespace ssm

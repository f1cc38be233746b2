#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace ssm {

/// Exponent vector m of a monomial p^m = p_1^{m_1} ... p_M^{m_M}. The total
/// degree |m| is cached and kept in sync by every mutating operation.
class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> exponents);
    MultiIndex(std::initializer_list<int> exponents);

    static MultiIndex zero(int dim);
    static MultiIndex unit(int dim, int j);

    int dim() const { return static_cast<int>(exp_.size()); }
    int degree() const { return degree_; }
    int operator[](int i) const { return exp_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& exponents() const { return exp_; }

    MultiIndex operator+(const MultiIndex& o) const;
    // Componentwise difference; throws if any component would become negative.
    MultiIndex operator-(const MultiIndex& o) const;
    bool dominates(const MultiIndex& o) const;  // this >= o componentwise

    // Swaps the exponents of consecutive conjugate coordinates (0,1), (2,3), ...
    MultiIndex conjugate_pairs() const;

    std::string to_string() const;

    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
    // Lexicographic on exponents. Reverse of this order is the canonical
    // enumeration order.
    friend std::strong_ordering operator<=>(const MultiIndex& a, const MultiIndex& b) {
        return a.exp_ <=> b.exp_;
    }

private:
    std::vector<int> exp_;
    int degree_ = 0;
};

struct MultiIndexHash {
    std::size_t operator()(const MultiIndex& m) const noexcept;
};

/// binomial(n, k); throws ValidationError on 64-bit overflow.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// All multi-indices of dimension `dim` and degree `k`, in reverse-lexicographic
/// order: (2,0), (1,1), (0,2). This order is part of the file format contract.
std::vector<MultiIndex> enumerate_degree(int dim, int k);

/// All sub-indices s <= m componentwise, in reverse-lexicographic order.
std::vector<MultiIndex> sub_indices(const MultiIndex& m);

struct IndexPair {
    MultiIndex first;
    MultiIndex second;
    bool diagonal = false;
};

/// Unordered pairs {m1, m2} with m1 + m2 = m and both degrees >= min_deg.
/// The larger part (lexicographically) comes first; the diagonal pair appears once.
std::vector<IndexPair> pairs_summing_to(const MultiIndex& m, int min_deg = 1);

enum class TripleKind { AllEqual, TwoEqual, AllDistinct };

struct IndexTriple {
    // For TwoEqual, parts[0] == parts[1] is the repeated index and parts[2] the single one.
    std::array<MultiIndex, 3> parts;
    TripleKind kind = TripleKind::AllDistinct;
};

/// Multisets {m1, m2, m3} with m1 + m2 + m3 = m and every degree >= min_deg.
std::vector<IndexTriple> triples_summing_to(const MultiIndex& m, int min_deg = 1);

}  // namespace ssm

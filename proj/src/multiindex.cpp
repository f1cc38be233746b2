#include "ssm/multiindex.hpp"

#include "ssm/common.hpp"

#include <limits>
#include <numeric>
#include <sstream>

namespace ssm {

MultiIndex::MultiIndex(std::vector<int> exponents) : exp_(std::move(exponents)) {
    for (int e : exp_) {
        if (e < 0) throw ValidationError("multi-index exponents must be non-negative");
        degree_ += e;
    }
}

MultiIndex::MultiIndex(std::initializer_list<int> exponents)
    : MultiIndex(std::vector<int>(exponents)) {}

MultiIndex MultiIndex::zero(int dim) { return MultiIndex(std::vector<int>(static_cast<std::size_t>(dim), 0)); }

MultiIndex MultiIndex::unit(int dim, int j) {
    std::vector<int> e(static_cast<std::size_t>(dim), 0);
    e.at(static_cast<std::size_t>(j)) = 1;
    return MultiIndex(std::move(e));
}

MultiIndex MultiIndex::operator+(const MultiIndex& o) const {
    MultiIndex r = *this;
    for (std::size_t i = 0; i < exp_.size(); ++i) r.exp_[i] += o.exp_[i];
    r.degree_ = degree_ + o.degree_;
    return r;
}

MultiIndex MultiIndex::operator-(const MultiIndex& o) const {
    MultiIndex r = *this;
    for (std::size_t i = 0; i < exp_.size(); ++i) {
        r.exp_[i] -= o.exp_[i];
        if (r.exp_[i] < 0) throw ValidationError("multi-index difference is negative");
    }
    r.degree_ = degree_ - o.degree_;
    return r;
}

bool MultiIndex::dominates(const MultiIndex& o) const {
    for (std::size_t i = 0; i < exp_.size(); ++i)
        if (exp_[i] < o.exp_[i]) return false;
    return true;
}

MultiIndex MultiIndex::conjugate_pairs() const {
    MultiIndex r = *this;
    for (std::size_t i = 0; i + 1 < exp_.size(); i += 2) std::swap(r.exp_[i], r.exp_[i + 1]);
    return r;
}

std::string MultiIndex::to_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < exp_.size(); ++i) os << (i ? "," : "") << exp_[i];
    os << ')';
    return os.str();
}

std::size_t MultiIndexHash::operator()(const MultiIndex& m) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (int e : m.exponents()) {
        h ^= static_cast<std::size_t>(e) + 0x9e3779b97f4a7c15ull;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t num = n - k + i;
        const std::uint64_t g = std::gcd(r, i);
        const std::uint64_t rr = r / g;
        const std::uint64_t ii = i / g;
        if (rr > std::numeric_limits<std::uint64_t>::max() / num)
            throw ValidationError("multi-index count overflows 64 bits");
        r = rr * num / ii;
    }
    return r;
}

namespace {

void enumerate_rec(std::vector<int>& cur, std::size_t pos, int remaining, std::vector<MultiIndex>& out) {
    if (pos + 1 == cur.size()) {
        cur[pos] = remaining;
        out.emplace_back(cur);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        cur[pos] = e;
        enumerate_rec(cur, pos + 1, remaining - e, out);
    }
}

void sub_rec(const MultiIndex& m, std::vector<int>& cur, std::size_t pos, std::vector<MultiIndex>& out) {
    if (pos == cur.size()) {
        out.emplace_back(cur);
        return;
    }
    for (int e = m[static_cast<int>(pos)]; e >= 0; --e) {
        cur[pos] = e;
        sub_rec(m, cur, pos + 1, out);
    }
}

}  // namespace

std::vector<MultiIndex> enumerate_degree(int dim, int k) {
    if (dim < 1 || k < 0) throw ValidationError("enumerate_degree needs dim >= 1 and k >= 0");
    const std::uint64_t count = binomial(static_cast<std::uint64_t>(k + dim - 1), static_cast<std::uint64_t>(dim - 1));
    if (count > (std::uint64_t{1} << 32)) throw ValidationError("too many multi-indices requested");
    std::vector<MultiIndex> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<int> cur(static_cast<std::size_t>(dim), 0);
    enumerate_rec(cur, 0, k, out);
    return out;
}

std::vector<MultiIndex> sub_indices(const MultiIndex& m) {
    std::vector<MultiIndex> out;
    std::vector<int> cur(static_cast<std::size_t>(m.dim()), 0);
    sub_rec(m, cur, 0, out);
    return out;
}

std::vector<IndexPair> pairs_summing_to(const MultiIndex& m, int min_deg) {
    std::vector<IndexPair> out;
    for (const MultiIndex& a : sub_indices(m)) {
        MultiIndex b = m - a;
        if (a.degree() < min_deg || b.degree() < min_deg) continue;
        if (a < b) continue;
        out.push_back({a, b, a == b});
    }
    return out;
}

std::vector<IndexTriple> triples_summing_to(const MultiIndex& m, int min_deg) {
    std::vector<IndexTriple> out;
    for (const MultiIndex& a : sub_indices(m)) {
        if (a.degree() < min_deg) continue;
        const MultiIndex rest = m - a;
        for (const MultiIndex& b : sub_indices(rest)) {
            if (b.degree() < min_deg || a < b) continue;
            MultiIndex c = rest - b;
            if (c.degree() < min_deg || b < c) continue;
            IndexTriple t;
            if (a == b && b == c) {
                t.parts = {a, b, c};
                t.kind = TripleKind::AllEqual;
            } else if (a == b) {
                t.parts = {a, b, c};
                t.kind = TripleKind::TwoEqual;
            } else if (b == c) {
                t.parts = {b, c, a};
                t.kind = TripleKind::TwoEqual;
            } else {
                t.parts = {a, b, c};
                t.kind = TripleKind::AllDistinct;
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

}  // namespace ssm

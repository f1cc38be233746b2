#include "ssm/coefficient_table.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ssm {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'S', 'M', 'C', 'T', 'A', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError("coefficient table file is truncated");
    return v;
}

void put_cvec(std::ostream& os, const CVec& v) {
    for (Index i = 0; i < v.size(); ++i) {
        put(os, v[i].real());
        put(os, v[i].imag());
    }
}

CVec get_cvec(std::istream& is, Index n) {
    CVec v(n);
    for (Index i = 0; i < n; ++i) {
        const double re = get<double>(is);
        const double im = get<double>(is);
        v[i] = cplx(re, im);
    }
    return v;
}

}  // namespace

cplx monomial(const CVec& p, const MultiIndex& m) {
    cplx r = 1.0;
    for (int i = 0; i < m.dim(); ++i)
        for (int e = 0; e < m[i]; ++e) r *= p[i];
    return r;
}

CoefficientTable::CoefficientTable(int dim, Index N) : dim_(dim), N_(N) {
    if (dim < 1 || N < 1) throw ValidationError("coefficient table needs positive dimensions");
}

void CoefficientTable::ensure_degree(int k) {
    if (static_cast<int>(degrees_.size()) <= k) degrees_.resize(static_cast<std::size_t>(k) + 1);
}

void CoefficientTable::set(const MultiIndex& m, CVec W, CVec R) {
    if (m.dim() != dim_) throw ValidationError("multi-index dimension does not match table");
    if (W.size() != N_ || R.size() != dim_) throw ValidationError("coefficient size mismatch for " + m.to_string());
    ensure_degree(m.degree());
    auto it = lookup_.find(m);
    if (it != lookup_.end()) {
        degrees_[static_cast<std::size_t>(it->second.first)][it->second.second].second = {std::move(W), std::move(R)};
        return;
    }
    auto& block = degrees_[static_cast<std::size_t>(m.degree())];
    lookup_.emplace(m, std::make_pair(m.degree(), block.size()));
    block.emplace_back(m, Coefficient{std::move(W), std::move(R)});
}

bool CoefficientTable::contains(const MultiIndex& m) const { return lookup_.count(m) != 0; }

const Coefficient* CoefficientTable::find(const MultiIndex& m) const {
    auto it = lookup_.find(m);
    if (it == lookup_.end()) return nullptr;
    return &degrees_[static_cast<std::size_t>(it->second.first)][it->second.second].second;
}

const Coefficient& CoefficientTable::at(const MultiIndex& m) const {
    const Coefficient* c = find(m);
    if (!c) throw NumericalError("coefficient " + m.to_string() + " requested before it was computed");
    return *c;
}

const std::vector<std::pair<MultiIndex, Coefficient>>& CoefficientTable::degree(int k) const {
    static const std::vector<std::pair<MultiIndex, Coefficient>> empty;
    if (k < 0 || k >= static_cast<int>(degrees_.size())) return empty;
    return degrees_[static_cast<std::size_t>(k)];
}

std::size_t CoefficientTable::size() const { return lookup_.size(); }

CVec CoefficientTable::eval_W(const CVec& p, int max_degree) const {
    CVec out = CVec::Zero(N_);
    const int top = max_degree < 0 ? max_order() : std::min(max_degree, max_order());
    for (int k = 0; k <= top; ++k)
        for (const auto& [m, c] : degree(k)) out += monomial(p, m) * c.W;
    return out;
}

CVec CoefficientTable::eval_R(const CVec& p, int max_degree) const {
    CVec out = CVec::Zero(dim_);
    const int top = max_degree < 0 ? max_order() : std::min(max_degree, max_order());
    for (int k = 0; k <= top; ++k)
        for (const auto& [m, c] : degree(k)) out += monomial(p, m) * c.R;
    return out;
}

CVec CoefficientTable::eval_DW(const CVec& p, const CVec& dp, int max_degree) const {
    CVec out = CVec::Zero(N_);
    const int top = max_degree < 0 ? max_order() : std::min(max_degree, max_order());
    for (int k = 1; k <= top; ++k) {
        for (const auto& [m, c] : degree(k)) {
            cplx s = 0.0;
            for (int j = 0; j < dim_; ++j) {
                if (m[j] == 0) continue;
                s += static_cast<double>(m[j]) * monomial(p, m - MultiIndex::unit(dim_, j)) * dp[j];
            }
            out += s * c.W;
        }
    }
    return out;
}

void CoefficientTable::write_binary(std::ostream& os) const {
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(dim_));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(N_));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(std::max(max_order(), 0)));
    for (int k = 0; k <= max_order(); ++k) {
        const auto& block = degree(k);
        put<std::uint64_t>(os, block.size());
        for (const auto& [m, c] : block) {
            for (int e : m.exponents()) put<std::int32_t>(os, e);
            put_cvec(os, c.W);
            put_cvec(os, c.R);
        }
    }
}

CoefficientTable CoefficientTable::read_binary(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw ValidationError("not a coefficient table file (bad magic)");
    if (get<std::uint32_t>(is) != kVersion) throw ValidationError("unsupported coefficient table version");
    const int dim = static_cast<int>(get<std::uint32_t>(is));
    const Index N = static_cast<Index>(get<std::uint64_t>(is));
    const int order = static_cast<int>(get<std::uint32_t>(is));
    CoefficientTable t(dim, N);
    for (int k = 0; k <= order; ++k) {
        const auto count = get<std::uint64_t>(is);
        t.ensure_degree(k);
        for (std::uint64_t r = 0; r < count; ++r) {
            std::vector<int> e(static_cast<std::size_t>(dim));
            for (auto& x : e) x = get<std::int32_t>(is);
            MultiIndex m(std::move(e));
            if (m.degree() != k) throw ValidationError("coefficient record stored under the wrong degree");
            CVec W = get_cvec(is, N);
            CVec R = get_cvec(is, dim);
            t.set(m, std::move(W), std::move(R));
        }
    }
    return t;
}

void CoefficientTable::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open " + path + " for writing");
    write_binary(os);
}

CoefficientTable CoefficientTable::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open " + path);
    return read_binary(is);
}

}  // namespace ssm

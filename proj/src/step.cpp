#include "ssm/step.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

namespace ssm {

CVec split_even(const StateFn& F, const CVec& z) { return 0.5 * (F(z) + F(-z)); }

CVec split_odd(const StateFn& F, const CVec& z) { return 0.5 * (F(z) - F(-z)); }

CVec combine_quadratic(const Vec& f_a, const Vec& f_b, const Vec& f_sum) {
    return I * f_sum.cast<cplx>() + cplx(1.0, -1.0) * f_a.cast<cplx>() - cplx(1.0, 1.0) * f_b.cast<cplx>();
}

CVec combine_cubic(const Vec& f_a, const Vec& f_b, const Vec& f_sum, const Vec& f_diff) {
    return 2.0 * f_a.cast<cplx>() + cplx(-0.5, 0.5) * f_sum.cast<cplx>() - cplx(0.5, 0.5) * f_diff.cast<cplx>() -
           cplx(0.0, 2.0) * f_b.cast<cplx>();
}

CVec eval_complex_quadratic(const RealStateFn& F2, const CVec& v) {
    const Vec a = v.real();
    const Vec b = v.imag();
    return combine_quadratic(F2(a), F2(b), F2(a + b));
}

CVec eval_complex_cubic(const RealStateFn& F3, const CVec& v) {
    const Vec a = v.real();
    const Vec b = v.imag();
    return combine_cubic(F3(a), F3(b), F3(a + b), F3(a - b));
}

CVec evaluate_complex_state(const FirstOrderSystem& sys, const CVec& z) {
    if (!sys.real_only()) return sys.F_native(z);
    if ((z.imag().array() == 0.0).all()) return sys.F(z.real()).cast<cplx>();
    RealStateFn F2 = [&](const Vec& x) -> Vec { return 0.5 * (sys.F(x) + sys.F(-x)); };
    RealStateFn F3 = [&](const Vec& x) -> Vec { return 0.5 * (sys.F(x) - sys.F(-x)); };
    return eval_complex_quadratic(F2, z) + eval_complex_cubic(F3, z);
}

// ---------------------------------------------------------------------------

const CVec* EvaluationCache::find(Parity parity, const ProbeKey& key) const {
    auto it = combos_.find({static_cast<int>(parity), key});
    return it == combos_.end() ? nullptr : &it->second;
}

void EvaluationCache::store(Parity parity, const ProbeKey& key, CVec value) {
    combos_.insert_or_assign({static_cast<int>(parity), key}, std::move(value));
}

const EvaluationCache::Raw* EvaluationCache::find_raw(const ProbeKey& key, RealPart part) const {
    auto it = raw_.find({key, part});
    return it == raw_.end() ? nullptr : &it->second;
}

void EvaluationCache::store_raw(const ProbeKey& key, RealPart part, Raw raw) {
    raw_.insert_or_assign({key, part}, std::move(raw));
}

const EvaluationCache::Raw& EvaluationCache::use_raw(const ProbeKey& key, RealPart part) {
    Raw& r = raw_.at({key, part});
    if (r.uses++ > 0) ++stats_.raw_cache_hits;
    return r;
}

void EvaluationCache::clear() {
    combos_.clear();
    raw_.clear();
    stats_ = {};
}

// ---------------------------------------------------------------------------

StepComposer::StepComposer(const FirstOrderSystem& sys, StepOptions opts)
    : sys_(&sys), opts_(opts), real_only_(sys.real_only()) {}

void StepComposer::reset() {
    cache_.clear();
    ids_.clear();
    id_to_index_.clear();
    zero_flags_.clear();
    pending_.clear();
}

std::uint32_t StepComposer::id_of(const MultiIndex& m) {
    auto [it, inserted] = ids_.try_emplace(m, static_cast<std::uint32_t>(id_to_index_.size()));
    if (inserted) id_to_index_.push_back(m);
    return it->second;
}

ProbeKey StepComposer::make_key(std::vector<std::pair<MultiIndex, int>> terms, int& sign) {
    ProbeKey key;
    key.terms.reserve(terms.size());
    for (auto& [m, s] : terms) key.terms.emplace_back(id_of(m), s);
    std::sort(key.terms.begin(), key.terms.end());
    sign = 1;
    if (key.terms.front().second < 0) {
        sign = -1;
        for (auto& t : key.terms) t.second = -t.second;
    }
    return key;
}

CVec StepComposer::combination(const ProbeKey& key, const CoefficientTable& table) const {
    CVec v = CVec::Zero(sys_->dim());
    for (const auto& [id, s] : key.terms) {
        const CVec& w = table.W(id_to_index_[id]);
        if (s > 0)
            v += w;
        else
            v -= w;
    }
    return v;
}

bool StepComposer::is_zero(const MultiIndex& m, const CoefficientTable& table) {
    const std::uint32_t id = id_of(m);
    auto it = zero_flags_.find(id);
    if (it != zero_flags_.end()) return it->second;
    const CVec& w = table.W(m);
    const bool z = (w.array() == cplx(0.0, 0.0)).all();
    zero_flags_.emplace(id, z);
    return z;
}

Vec StepComposer::part_vector(const CVec& v, RealPart part) const {
    switch (part) {
        case RealPart::Re: return v.real();
        case RealPart::Im: return v.imag();
        case RealPart::Sum: return v.real() + v.imag();
        case RealPart::Diff: return v.real() - v.imag();
        case RealPart::Native: break;
    }
    throw NumericalError("native part has no real vector");
}

double StepComposer::scale_for(double inf_norm) const {
    if (!opts_.autoscale || !(inf_norm > opts_.autoscale_threshold) || !std::isfinite(inf_norm)) return 1.0;
    const int k = static_cast<int>(std::ceil(std::log2(inf_norm / opts_.autoscale_threshold)));
    return std::ldexp(1.0, k);
}

namespace {

std::vector<RealPart> parts_for(Parity parity) {
    if (parity == Parity::Even) return {RealPart::Re, RealPart::Im, RealPart::Sum};
    return {RealPart::Re, RealPart::Im, RealPart::Sum, RealPart::Diff};
}

}  // namespace

void StepComposer::plan_probe(Parity parity, const std::vector<std::pair<MultiIndex, int>>& terms,
                              const CoefficientTable& table) {
    int sign = 1;
    ProbeKey key = make_key(terms, sign);
    if (cache_.find(parity, key)) return;
    const CVec v = combination(key, table);
    auto already = [&](RealPart part) {
        if (cache_.find_raw(key, part)) return true;
        return std::any_of(pending_.begin(), pending_.end(),
                           [&](const Pending& p) { return p.part == part && p.key == key; });
    };
    if (!real_only_) {
        if (already(RealPart::Native) || (v.array() == cplx(0.0, 0.0)).all()) return;
        const double s = scale_for(v.cwiseAbs().maxCoeff());
        pending_.push_back({key, RealPart::Native, Vec(), v / s, s});
        return;
    }
    for (RealPart part : parts_for(parity)) {
        Vec x = part_vector(v, part);
        if ((x.array() == 0.0).all() || already(part)) continue;
        const double s = scale_for(x.cwiseAbs().maxCoeff());
        pending_.push_back({key, part, x / s, CVec(), s});
    }
}

void StepComposer::evaluate_pending() {
    if (pending_.empty()) return;
    auto& st = cache_.stats();
    const auto t0 = std::chrono::steady_clock::now();
    if (real_only_) {
        std::vector<Vec> states;
        states.reserve(2 * pending_.size());
        for (const Pending& p : pending_) {
            states.push_back(p.x);
            states.push_back(-p.x);
        }
        std::vector<Vec> results(states.size());
        const int threads = std::max(1, opts_.threads);
        const bool parallel = threads > 1 && sys_->model().nonlinearity().reentrant() && states.size() > 1;
        if (parallel) {
            const std::size_t chunk = (states.size() + threads - 1) / static_cast<std::size_t>(threads);
            std::vector<std::thread> workers;
            for (std::size_t start = 0; start < states.size(); start += chunk) {
                const std::size_t stop = std::min(states.size(), start + chunk);
                workers.emplace_back([&, start, stop] {
                    std::span<const Vec> in(states.data() + start, stop - start);
                    std::vector<Vec> out = sys_->F_batch(in);
                    for (std::size_t i = 0; i < out.size(); ++i) results[start + i] = std::move(out[i]);
                });
            }
            for (auto& w : workers) w.join();
        } else {
            results = sys_->F_batch(states);
        }
        st.blackbox_calls += states.size();
        for (std::size_t i = 0; i < pending_.size(); ++i) {
            EvaluationCache::Raw raw;
            raw.plus = std::move(results[2 * i]);
            raw.minus = std::move(results[2 * i + 1]);
            raw.scale = pending_[i].scale;
            if (raw.scale != 1.0) ++st.autoscaled;
            cache_.store_raw(pending_[i].key, pending_[i].part, std::move(raw));
        }
    } else {
        for (const Pending& p : pending_) {
            EvaluationCache::Raw raw;
            raw.cplus = sys_->F_native(p.xc);
            raw.cminus = sys_->F_native(-p.xc);
            raw.scale = p.scale;
            if (raw.scale != 1.0) ++st.autoscaled;
            st.blackbox_calls += 2;
            cache_.store_raw(p.key, p.part, std::move(raw));
        }
    }
    ++st.batches;
    st.blackbox_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pending_.clear();
}

CVec StepComposer::probe_value(Parity parity, const ProbeKey& key, const CoefficientTable& table) {
    auto& st = cache_.stats();
    if (const CVec* hit = cache_.find(parity, key)) {
        ++st.cache_hits;
        return *hit;
    }
    (parity == Parity::Even ? st.complex_even : st.complex_odd) += 1;
    const CVec v = combination(key, table);

    auto obtain = [&](RealPart part, const auto& make_pending) -> const EvaluationCache::Raw& {
        if (!cache_.find_raw(key, part)) {
            pending_.push_back(make_pending());
            evaluate_pending();
        }
        return cache_.use_raw(key, part);
    };
    const bool even = parity == Parity::Even;

    CVec value;
    if (!real_only_) {
        if ((v.array() == cplx(0.0, 0.0)).all()) {
            value = CVec::Zero(sys_->dim());
        } else {
            const auto& raw = obtain(RealPart::Native, [&] {
                const double s = scale_for(v.cwiseAbs().maxCoeff());
                return Pending{key, RealPart::Native, Vec(), v / s, s};
            });
            const double f = even ? raw.scale * raw.scale : raw.scale * raw.scale * raw.scale;
            value = even ? CVec(0.5 * f * (raw.cplus + raw.cminus)) : CVec(0.5 * f * (raw.cplus - raw.cminus));
        }
    } else {
        auto real_value = [&](RealPart part) -> Vec {
            Vec x = part_vector(v, part);
            if ((x.array() == 0.0).all()) return Vec::Zero(sys_->dim());
            (even ? st.real_even : st.real_odd) += 1;
            const auto& raw = obtain(part, [&] {
                const double s = scale_for(x.cwiseAbs().maxCoeff());
                return Pending{key, part, x / s, CVec(), s};
            });
            const double f = even ? raw.scale * raw.scale : raw.scale * raw.scale * raw.scale;
            return even ? Vec(0.5 * f * (raw.plus + raw.minus)) : Vec(0.5 * f * (raw.plus - raw.minus));
        };
        if (even)
            value = combine_quadratic(real_value(RealPart::Re), real_value(RealPart::Im), real_value(RealPart::Sum));
        else
            value = combine_cubic(real_value(RealPart::Re), real_value(RealPart::Im), real_value(RealPart::Sum),
                                  real_value(RealPart::Diff));
    }
    cache_.store(parity, key, value);
    return value;
}

CVec StepComposer::probe(Parity parity, const std::vector<std::pair<MultiIndex, int>>& terms,
                         const CoefficientTable& table) {
    int sign = 1;
    ProbeKey key = make_key(terms, sign);
    CVec v = probe_value(parity, key, table);
    if (parity == Parity::Odd && sign < 0) v = -v;
    return v;
}

template <class ProbeFn>
CVec StepComposer::quadratic_terms(const MultiIndex& m, const CoefficientTable& table, ProbeFn&& probe_fn) {
    CVec out = CVec::Zero(sys_->dim());
    for (const IndexPair& pr : pairs_summing_to(m, 1)) {
        if (opts_.zero_shortcut && (is_zero(pr.first, table) || is_zero(pr.second, table))) {
            probe_fn.skip();
            continue;
        }
        if (pr.diagonal) {
            out += probe_fn(Parity::Even, {{pr.first, 1}});
        } else {
            out += 0.5 * (probe_fn(Parity::Even, {{pr.first, 1}, {pr.second, 1}}) -
                          probe_fn(Parity::Even, {{pr.first, 1}, {pr.second, -1}}));
        }
    }
    return out;
}

template <class ProbeFn>
CVec StepComposer::cubic_terms(const MultiIndex& m, const CoefficientTable& table, ProbeFn&& probe_fn) {
    CVec out = CVec::Zero(sys_->dim());
    for (const IndexTriple& t : triples_summing_to(m, 1)) {
        const auto& [a, b, c] = t.parts;
        if (opts_.zero_shortcut && (is_zero(a, table) || is_zero(b, table) || is_zero(c, table))) {
            probe_fn.skip();
            continue;
        }
        switch (t.kind) {
            case TripleKind::AllEqual:
                out += probe_fn(Parity::Odd, {{a, 1}});
                break;
            case TripleKind::TwoEqual:
                // a == b repeated, c single: sum over sigma[1,1,2].
                out += 0.5 * (probe_fn(Parity::Odd, {{a, 1}, {c, 1}}) - probe_fn(Parity::Odd, {{a, 1}, {c, -1}}) -
                              2.0 * probe_fn(Parity::Odd, {{c, 1}}));
                break;
            case TripleKind::AllDistinct:
                out += probe_fn(Parity::Odd, {{a, 1}, {b, 1}, {c, 1}}) - probe_fn(Parity::Odd, {{a, 1}, {b, 1}}) -
                       probe_fn(Parity::Odd, {{a, 1}, {c, 1}}) - probe_fn(Parity::Odd, {{b, 1}, {c, 1}}) +
                       probe_fn(Parity::Odd, {{a, 1}}) + probe_fn(Parity::Odd, {{b, 1}}) +
                       probe_fn(Parity::Odd, {{c, 1}});
                break;
        }
    }
    return out;
}

namespace {

struct EvalProbe {
    StepComposer* self;
    const CoefficientTable* table;
    std::function<CVec(Parity, const std::vector<std::pair<MultiIndex, int>>&)> fn;
    EvaluationStats* stats;
    CVec operator()(Parity p, const std::vector<std::pair<MultiIndex, int>>& terms) { return fn(p, terms); }
    void skip() {
        if (stats) ++stats->zero_skips;
    }
};

}  // namespace

void StepComposer::prepare_degree(int, const std::vector<MultiIndex>& ms, const CoefficientTable& table) {
    if (!opts_.batch) return;
    const CVec zero = CVec::Zero(sys_->dim());
    EvalProbe planner{this, &table,
                      [&](Parity p, const std::vector<std::pair<MultiIndex, int>>& terms) {
                          plan_probe(p, terms, table);
                          return zero;
                      },
                      nullptr};
    for (const MultiIndex& m : ms) {
        if (m.degree() < 2) continue;
        quadratic_terms(m, table, planner);
        cubic_terms(m, table, planner);
    }
    evaluate_pending();
}

CVec StepComposer::compose_quadratic(const MultiIndex& m, const CoefficientTable& table) {
    if (m.degree() < 2) return CVec::Zero(sys_->dim());
    EvalProbe ev{this, &table,
                 [&](Parity p, const std::vector<std::pair<MultiIndex, int>>& terms) { return probe(p, terms, table); },
                 &cache_.stats()};
    return quadratic_terms(m, table, ev);
}

CVec StepComposer::compose_cubic(const MultiIndex& m, const CoefficientTable& table) {
    if (m.degree() < 3) return CVec::Zero(sys_->dim());
    EvalProbe ev{this, &table,
                 [&](Parity p, const std::vector<std::pair<MultiIndex, int>>& terms) { return probe(p, terms, table); },
                 &cache_.stats()};
    return cubic_terms(m, table, ev);
}

CVec StepComposer::compose(const MultiIndex& m, const CoefficientTable& table) {
    if (m.degree() < 2) return CVec::Zero(sys_->dim());
    return compose_quadratic(m, table) + compose_cubic(m, table);
}

}  // namespace ssm

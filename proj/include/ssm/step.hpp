#pragma once

#include "ssm/composer.hpp"
#include "ssm/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace ssm {

using StateFn = std::function<CVec(const CVec&)>;
using RealStateFn = std::function<Vec(const Vec&)>;

/// F2(z) = (F(z) + F(-z)) / 2, the quadratic part of a cubic-at-most F.
CVec split_even(const StateFn& F, const CVec& z);
/// F3(z) = (F(z) - F(-z)) / 2, the cubic part of a cubic-at-most F.
CVec split_odd(const StateFn& F, const CVec& z);

/// i F2(a+b) + (1-i) F2(a) - (1+i) F2(b) for v = a + i b; three real evaluations.
CVec combine_quadratic(const Vec& f_a, const Vec& f_b, const Vec& f_sum);
/// 2 F3(a) + (-1+i)/2 F3(a+b) - (1+i)/2 F3(a-b) - 2i F3(b); four real evaluations.
CVec combine_cubic(const Vec& f_a, const Vec& f_b, const Vec& f_sum, const Vec& f_diff);

/// Analytic continuation of a quadratic F2 to a complex input, from real evaluations only.
CVec eval_complex_quadratic(const RealStateFn& F2, const CVec& v);
/// Analytic continuation of a cubic F3 to a complex input, from real evaluations only.
CVec eval_complex_cubic(const RealStateFn& F3, const CVec& v);

/// F(z) for a complex state: native evaluation when the model allows it,
/// otherwise parity split plus the real-input decomposition (14 black-box calls).
CVec evaluate_complex_state(const FirstOrderSystem& sys, const CVec& z);

enum class Parity { Even, Odd };

struct EvaluationStats {
    std::uint64_t complex_even = 0;    // distinct F2 evaluations at complex combinations
    std::uint64_t complex_odd = 0;     // distinct F3 evaluations at complex combinations
    std::uint64_t real_even = 0;       // real-input F2 values consumed by the decomposition
    std::uint64_t real_odd = 0;        // real-input F3 values consumed by the decomposition
    std::uint64_t blackbox_calls = 0;  // calls of the nonlinearity itself
    std::uint64_t cache_hits = 0;      // combination-level hits
    std::uint64_t raw_cache_hits = 0;  // real-input level hits (shared between parities)
    std::uint64_t zero_skips = 0;      // terms skipped because a coefficient is exactly zero
    std::uint64_t autoscaled = 0;      // inputs rescaled by a power of two
    std::uint64_t batches = 0;
    double blackbox_seconds = 0.0;
};

/// A combination sum_i sign_i W_{m_i}, identified by coefficient ids. Canonical
/// form: ids ascending and the first sign positive.
struct ProbeKey {
    std::vector<std::pair<std::uint32_t, int>> terms;
    friend auto operator<=>(const ProbeKey&, const ProbeKey&) = default;
};

enum class RealPart : std::uint8_t { Re = 0, Im = 1, Sum = 2, Diff = 3, Native = 4 };

/// Memo of composition evaluations, keyed by the generating combination rather
/// than floating-point content so hits are exact.
class EvaluationCache {
public:
    struct Raw {
        // F at +x/scale and -x/scale. Real path fills the real vectors; native path the complex ones.
        Vec plus, minus;
        CVec cplus, cminus;
        double scale = 1.0;
        std::uint32_t uses = 0;
    };

    const CVec* find(Parity parity, const ProbeKey& key) const;
    void store(Parity parity, const ProbeKey& key, CVec value);

    const Raw* find_raw(const ProbeKey& key, RealPart part) const;
    void store_raw(const ProbeKey& key, RealPart part, Raw raw);
    // Returns the entry and counts a reuse when it was consumed before.
    const Raw& use_raw(const ProbeKey& key, RealPart part);

    void clear();
    std::size_t size() const { return combos_.size(); }
    std::size_t raw_size() const { return raw_.size(); }

    EvaluationStats& stats() { return stats_; }
    const EvaluationStats& stats() const { return stats_; }

private:
    std::map<std::pair<int, ProbeKey>, CVec> combos_;
    std::map<std::pair<ProbeKey, RealPart>, Raw> raw_;
    EvaluationStats stats_;
};

struct StepOptions {
    bool zero_shortcut = true;
    bool autoscale = true;
    double autoscale_threshold = 1e3;
    bool batch = true;
    int threads = 1;
};

/// Non-intrusive evaluation of [F o W]_m using only black-box evaluations of F:
/// parity splits, pair/triple combination identities and, for real-only black
/// boxes, the complex-input decomposition.
class StepComposer final : public Composer {
public:
    explicit StepComposer(const FirstOrderSystem& sys, StepOptions opts = {});

    void prepare_degree(int k, const std::vector<MultiIndex>& ms, const CoefficientTable& table) override;
    CVec compose(const MultiIndex& m, const CoefficientTable& table) override;

    CVec compose_quadratic(const MultiIndex& m, const CoefficientTable& table);
    CVec compose_cubic(const MultiIndex& m, const CoefficientTable& table);

    const EvaluationStats& stats() const { return cache_.stats(); }
    const EvaluationCache& cache() const { return cache_; }
    void reset() override;

private:
    std::uint32_t id_of(const MultiIndex& m);
    ProbeKey make_key(std::vector<std::pair<MultiIndex, int>> terms, int& sign);
    CVec combination(const ProbeKey& key, const CoefficientTable& table) const;
    bool is_zero(const MultiIndex& m, const CoefficientTable& table);

    CVec probe(Parity parity, const std::vector<std::pair<MultiIndex, int>>& terms, const CoefficientTable& table);
    CVec probe_value(Parity parity, const ProbeKey& key, const CoefficientTable& table);
    void plan_probe(Parity parity, const std::vector<std::pair<MultiIndex, int>>& terms, const CoefficientTable& table);

    template <class ProbeFn>
    CVec quadratic_terms(const MultiIndex& m, const CoefficientTable& table, ProbeFn&& probe);
    template <class ProbeFn>
    CVec cubic_terms(const MultiIndex& m, const CoefficientTable& table, ProbeFn&& probe);

    Vec part_vector(const CVec& v, RealPart part) const;
    double scale_for(double inf_norm) const;
    void evaluate_pending();

    const FirstOrderSystem* sys_;
    StepOptions opts_;
    bool real_only_;
    EvaluationCache cache_;
    std::map<MultiIndex, std::uint32_t> ids_;
    std::vector<MultiIndex> id_to_index_;
    std::map<std::uint32_t, bool> zero_flags_;

    struct Pending {
        ProbeKey key;
        RealPart part;
        Vec x;    // real path
        CVec xc;  // native complex path
        double scale = 1.0;
    };
    std::vector<Pending> pending_;
};

}  // namespace ssm

#include "ssm/autonomous.hpp"

#include <Eigen/SparseLU>

#include <chrono>
#include <cstdio>
#include <sstream>

namespace ssm {

cplx Lambda_of(const MultiIndex& m, const CVec& lambdas) {
    cplx L = 0.0;
    for (int i = 0; i < m.dim(); ++i) L += static_cast<double>(m[i]) * lambdas[i];
    return L;
}

std::vector<int> detect_resonances(const MultiIndex& m, const CVec& lambdas, const ResonanceOptions& opts) {
    if (!(opts.rho_rel > 0.0)) throw ValidationError("resonance tolerance rho_rel must be positive");
    const cplx L = Lambda_of(m, lambdas);
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(lambdas.size()); ++i) {
        const double scale = std::abs(lambdas[i]);
        bool flag = std::abs(L - lambdas[i]) <= opts.rho_rel * scale;
        if (!flag && opts.structural_inner && m.degree() % 2 == 1 && lambdas[i].imag() != 0.0)
            flag = std::abs(L.imag() - lambdas[i].imag()) <= opts.rho_rel * scale;
        if (flag) out.push_back(i);
    }
    return out;
}

CVec compute_Cm(const MultiIndex& m, const CoefficientTable& table, const SpMat& B) {
    const int M = m.dim();
    CVec acc = CVec::Zero(table.state_dim());
    for (int d = 2; d < m.degree(); ++d) {
        for (const auto& [u, cu] : table.degree(d)) {
            for (int j = 0; j < M; ++j) {
                if (u[j] == 0) continue;
                const MultiIndex mj = m + MultiIndex::unit(M, j);
                if (!mj.dominates(u)) continue;
                const cplx r = table.R(mj - u)[j];
                if (r == cplx(0.0, 0.0)) continue;
                acc += (static_cast<double>(u[j]) * r) * cu.W;
            }
        }
    }
    return B.cast<cplx>() * acc;
}

CVec swap_pairs(const CVec& v) {
    CVec out = v;
    for (Index k = 0; k + 1 < v.size(); k += 2) std::swap(out[k], out[k + 1]);
    return out;
}

CVec conjugate_pair_point(const Vec& rho, const Vec& theta) {
    CVec p(2 * rho.size());
    for (Index k = 0; k < rho.size(); ++k) {
        p[2 * k] = std::polar(rho[k], theta[k]);
        p[2 * k + 1] = std::conj(p[2 * k]);
    }
    return p;
}

// ---------------------------------------------------------------------------

struct HomologicalSolver::Factor {
    Eigen::SparseLU<CSpMat> lu;
    std::vector<int> modes;
};

HomologicalSolver::HomologicalSolver(const FirstOrderSystem& sys, const MasterSubspace& sub) : sys_(&sys), sub_(&sub) {
    BV_ = sys.B().cast<cplx>() * sub.V;
    WB_ = sub.W_left.adjoint() * sys.B().cast<cplx>();
}

HomologicalSolver::Solution HomologicalSolver::solve(cplx Lambda, const CVec& rhs, const std::vector<int>& resonant) {
    const Index N = sys_->dim();
    const Index r = static_cast<Index>(resonant.size());
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.11e|%.11e", Lambda.real(), Lambda.imag());
    std::string key(buf);
    for (int i : resonant) key += "|" + std::to_string(i);

    auto it = cache_.find(key);
    if (it == cache_.end()) {
        using T = Eigen::Triplet<cplx>;
        std::vector<T> trip;
        const SpMat& A = sys_->A();
        const SpMat& B = sys_->B();
        for (Index c = 0; c < A.outerSize(); ++c)
            for (SpMat::InnerIterator a(A, c); a; ++a) trip.emplace_back(a.row(), a.col(), a.value());
        for (Index c = 0; c < B.outerSize(); ++c)
            for (SpMat::InnerIterator b(B, c); b; ++b) trip.emplace_back(b.row(), b.col(), -Lambda * b.value());
        for (Index q = 0; q < r; ++q) {
            const int i = resonant[static_cast<std::size_t>(q)];
            for (Index row = 0; row < N; ++row) {
                if (BV_(row, i) != cplx(0.0, 0.0)) trip.emplace_back(row, N + q, -BV_(row, i));
                if (WB_(i, row) != cplx(0.0, 0.0)) trip.emplace_back(N + q, row, WB_(i, row));
            }
        }
        CSpMat L(N + r, N + r);
        L.setFromTriplets(trip.begin(), trip.end());
        L.makeCompressed();
        auto f = std::make_shared<Factor>();
        f->modes = resonant;
        f->lu.compute(L);
        ++factorizations_;
        if (f->lu.info() != Eigen::Success) {
            std::ostringstream os;
            if (r == 0)
                os << "homological operator A - Lambda B is singular at Lambda = " << Lambda
                   << " while no resonance is flagged; the resonance tolerance is too tight, increase rho_rel";
            else
                os << "bordered homological system is singular at Lambda = " << Lambda
                   << ": the pencil is defective or the resonant modes are degenerate";
            throw NumericalError(os.str());
        }
        it = cache_.emplace(key, std::move(f)).first;
    }

    CVec b = CVec::Zero(N + r);
    b.head(N) = rhs;
    const CVec x = it->second->lu.solve(b);
    Solution s;
    s.W = x.head(N);
    s.R = CVec::Zero(sub_->dim());
    for (Index q = 0; q < r; ++q) s.R[resonant[static_cast<std::size_t>(q)]] = x[N + q];
    if (!s.W.allFinite() || !s.R.allFinite()) throw NumericalError("homological solve produced non-finite values");

    CVec res = sys_->A().cast<cplx>() * s.W - Lambda * (sys_->B().cast<cplx>() * s.W) - BV_ * s.R - rhs;
    const double scale = std::max({rhs.norm(), (BV_ * s.R).norm(), 1e-300});
    s.residual = (rhs.norm() == 0.0 && s.R.norm() == 0.0) ? 0.0 : res.norm() / scale;
    return s;
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

SsmResult compute_ssm(const FirstOrderSystem& sys, const MasterSubspace& sub, Composer& composer,
                      const SsmOptions& opts) {
    if (opts.max_order < 1) throw ValidationError("max_order must be >= 1");
    if (sub.state_dim() != sys.dim()) throw ValidationError("subspace does not belong to this system");
    const int M = sub.dim();
    const Index N = sys.dim();

    SsmResult out;
    out.table = CoefficientTable(M, N);
    out.used_conjugate_symmetry = opts.conjugate_symmetry && sub.conjugate_paired();
    for (int i = 0; i < M; ++i) {
        CVec R = CVec::Zero(M);
        R[i] = sub.lambdas[i];
        out.table.set(MultiIndex::unit(M, i), sub.V.col(i), R);
    }
    out.degrees.push_back({1, static_cast<std::size_t>(M), 0, 0, 0.0, 0.0, 0.0});

    composer.reset();
    HomologicalSolver solver(sys, sub);
    for (int k = 2; k <= opts.max_order; ++k) {
        DegreeReport rep;
        rep.degree = k;
        const std::size_t fact0 = solver.factorizations();
        const auto all = enumerate_degree(M, k);
        std::vector<MultiIndex> todo;
        for (const auto& m : all)
            if (!out.used_conjugate_symmetry || !(m < m.conjugate_pairs())) todo.push_back(m);

        auto t0 = Clock::now();
        std::vector<CVec> composed;
        composed.reserve(todo.size());
        composer.prepare_degree(k, todo, out.table);
        for (const auto& m : todo) composed.push_back(composer.compose(m, out.table));
        rep.compose_seconds = seconds_since(t0);

        t0 = Clock::now();
        std::map<MultiIndex, std::pair<Coefficient, std::vector<int>>> solved;
        for (std::size_t q = 0; q < todo.size(); ++q) {
            const MultiIndex& m = todo[q];
            const auto res = detect_resonances(m, sub.lambdas, opts.resonance);
            const CVec rhs = compute_Cm(m, out.table, sys.B()) - composed[q];
            HomologicalSolver::Solution s;
            try {
                s = solver.solve(Lambda_of(m, sub.lambdas), rhs, res);
            } catch (const NumericalError& e) {
                throw NumericalError("at multi-index " + m.to_string() + ": " + e.what());
            }
            if (s.residual > opts.solve_tol) {
                std::ostringstream os;
                os << "at multi-index " << m.to_string() << ": homological solve residual " << s.residual
                   << " exceeds " << opts.solve_tol << "; the operator is nearly singular, increase rho_rel";
                throw NumericalError(os.str());
            }
            rep.max_solve_residual = std::max(rep.max_solve_residual, s.residual);
            solved.emplace(m, std::make_pair(Coefficient{std::move(s.W), std::move(s.R)}, res));
        }
        for (const auto& m : all) {
            auto it = solved.find(m);
            if (it != solved.end()) {
                out.table.set(m, it->second.first.W, it->second.first.R);
                if (!it->second.second.empty()) out.resonances.push_back({m, it->second.second});
                ++rep.solved;
                continue;
            }
            const auto& src = solved.at(m.conjugate_pairs());
            out.table.set(m, src.first.W.conjugate(), swap_pairs(src.first.R.conjugate()));
            if (!src.second.empty()) {
                std::vector<int> modes;
                for (int i : src.second) modes.push_back(i ^ 1);
                std::sort(modes.begin(), modes.end());
                out.resonances.push_back({m, modes});
            }
            ++rep.mirrored;
        }
        rep.solve_seconds = seconds_since(t0);
        rep.factorizations = solver.factorizations() - fact0;
        solver.clear();
        out.degrees.push_back(rep);
    }
    return out;
}

SsmResult compute_ssm(const FirstOrderSystem& sys, const MasterSubspace& sub, const SsmOptions& opts,
                      const StepOptions& step_opts, EvaluationStats* stats) {
    StepComposer composer(sys, step_opts);
    SsmResult r = compute_ssm(sys, sub, composer, opts);
    if (stats) *stats = composer.stats();
    return r;
}

CVec invariance_residual(const FirstOrderSystem& sys, const CoefficientTable& table, const CVec& p, int max_degree) {
    const CVec W = table.eval_W(p, max_degree);
    const CVec R = table.eval_R(p, max_degree);
    const CVec DWR = table.eval_DW(p, R, max_degree);
    return sys.B().cast<cplx>() * DWR - sys.A().cast<cplx>() * W - evaluate_complex_state(sys, W);
}

}  // namespace ssm

#include "ssm/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace ssm {

namespace {

struct Candidate {
    cplx lambda;
    CVec v;
};

double col_norm1(const SpMat& A) {
    double best = 0.0;
    for (Index k = 0; k < A.outerSize(); ++k) {
        double s = 0.0;
        for (SpMat::InnerIterator it(A, k); it; ++it) s += std::abs(it.value());
        best = std::max(best, s);
    }
    return best;
}

CSpMat pencil(const SpMat& A, const SpMat& B, cplx s) {
    CSpMat L = A.cast<cplx>() - s * B.cast<cplx>();
    L.makeCompressed();
    return L;
}

bool near(cplx a, cplx b, double rel) { return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-300}); }

std::vector<Candidate> dense_candidates(const FirstOrderSystem& sys) {
    const Mat A(sys.A());
    const Mat B(sys.B());
    Eigen::PartialPivLU<Mat> lu(B);
    const Mat T = lu.solve(A);
    Eigen::EigenSolver<Mat> es(T, true);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed to converge");
    std::vector<Candidate> out;
    out.reserve(static_cast<std::size_t>(T.rows()));
    for (Index i = 0; i < T.rows(); ++i) out.push_back({es.eigenvalues()[i], es.eigenvectors().col(i)});
    return out;
}

std::vector<Candidate> arnoldi_candidates(const FirstOrderSystem& sys, cplx shift, int nev, const EigenOptions& opts) {
    const Index N = sys.dim();
    Eigen::SparseLU<CSpMat> lu;
    lu.compute(pencil(sys.A(), sys.B(), shift));
    if (lu.info() != Eigen::Success) {
        std::ostringstream os;
        os << "factorization of A - shift*B failed at shift " << shift << "; retry with a slightly perturbed shift";
        throw NumericalError(os.str());
    }
    const CSpMat Bc = sys.B().cast<cplx>();
    auto op = [&](const CVec& x) -> CVec { return lu.solve(Bc * x); };

    std::mt19937_64 rng(12345);
    std::normal_distribution<double> nd;
    CVec start(N);
    for (Index i = 0; i < N; ++i) start[i] = cplx(nd(rng), 0.0);

    Index m = std::min<Index>(N, std::max<Index>(2 * nev + 20, 40));
    const Index cap = std::min<Index>(N, std::max<Index>(opts.max_krylov, m));
    double worst = 0.0;
    for (;;) {
        CMat Q = CMat::Zero(N, m + 1);
        CMat H = CMat::Zero(m + 1, m);
        Q.col(0) = start / start.norm();
        Index built = m;
        for (Index j = 0; j < m; ++j) {
            CVec w = op(Q.col(j));
            for (int pass = 0; pass < 2; ++pass) {
                const CVec h = Q.leftCols(j + 1).adjoint() * w;
                w -= Q.leftCols(j + 1) * h;
                H.col(j).head(j + 1) += h;
            }
            H(j + 1, j) = w.norm();
            if (std::abs(H(j + 1, j)) < 1e-14 * H.col(j).norm()) {
                built = j + 1;
                break;
            }
            Q.col(j + 1) = w / H(j + 1, j);
        }
        Eigen::ComplexEigenSolver<CMat> es(H.topLeftCorner(built, built));
        std::vector<Index> idx(static_cast<std::size_t>(built));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
            return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
        });
        const Index take = std::min<Index>(nev, built);
        worst = 0.0;
        std::vector<Candidate> out;
        for (Index k = 0; k < take; ++k) {
            const Index i = idx[static_cast<std::size_t>(k)];
            const cplx theta = es.eigenvalues()[i];
            const CVec y = es.eigenvectors().col(i);
            const double est = built < m ? 0.0
                                         : std::abs(H(built, built - 1) * y[built - 1]) /
                                               std::max(std::abs(theta), 1e-300);
            worst = std::max(worst, est);
            out.push_back({shift + 1.0 / theta, Q.leftCols(built) * y});
        }
        if (worst <= 1e-8 || built < m || m >= cap) {
            if (worst > 1e-4) {
                std::ostringstream os;
                os << "shift-invert Arnoldi did not converge: basis size " << m << ", worst Ritz residual "
                   << worst;
                throw NumericalError(os.str());
            }
            return out;
        }
        m = std::min(cap, 2 * m);
    }
}

void normalize_right(CVec& v, Index n) {
    const double s = v.head(n).norm();
    if (!(s > 0.0)) throw NumericalError("eigenvector has a zero displacement part");
    v /= s;
    Index imax = 0;
    for (Index i = 1; i < n; ++i)
        if (std::abs(v[i]) > std::abs(v[imax]) * (1.0 + 1e-12)) imax = i;
    v *= std::conj(v[imax]) / std::abs(v[imax]);
    v[imax] = cplx(v[imax].real(), 0.0);
}

struct Refined {
    cplx lambda;
    CVec v, w;
    double residual;
};

Refined refine(const FirstOrderSystem& sys, cplx lambda, CVec v, const EigenOptions& opts, double anorm) {
    const SpMat& A = sys.A();
    const SpMat& B = sys.B();
    const CSpMat Ac = A.cast<cplx>(), Bc = B.cast<cplx>();
    const bool real_mode = lambda.imag() == 0.0;
    CVec w = v;
    double res = 0.0;
    auto residual = [&](cplx lam, const CVec& x) { return (Ac * x - lam * (Bc * x)).norm() / (anorm * x.norm()); };
    for (int it = 0; it < std::max(1, opts.refine_iterations); ++it) {
        const double d = 1e-8 * std::max(std::abs(lambda), 1e-3);
        const cplx sigma = lambda + (real_mode ? cplx(d, 0.0) : cplx(d, d));
        Eigen::SparseLU<CSpMat> lu;
        lu.compute(pencil(A, B, sigma));
        if (lu.info() != Eigen::Success) throw NumericalError("factorization failed during eigenvector refinement");
        v = lu.solve(Bc * v);
        v /= v.norm();
        w = lu.adjoint().solve(Bc.adjoint() * w);
        w /= w.norm();
        const cplx den = w.dot(Bc * v);
        if (std::abs(den) < 1e-14) throw NumericalError("left and right eigenvectors are B-orthogonal: defective pencil");
        lambda = w.dot(Ac * v) / den;
        if (real_mode) lambda = cplx(lambda.real(), 0.0);
        res = residual(lambda, v);
        if (it >= 1 && res <= 1e-3 * opts.tol) break;
    }
    return {lambda, v, w, res};
}

}  // namespace

bool mode_order_less(cplx a, cplx b) {
    const double ra = std::abs(a.real()), rb = std::abs(b.real());
    if (std::abs(ra - rb) > 1e-9 * std::max({ra, rb, 1e-300})) return ra < rb;
    const double ia = std::abs(a.imag()), ib = std::abs(b.imag());
    if (std::abs(ia - ib) > 1e-9 * std::max({ia, ib, 1e-300})) return ia < ib;
    return a.imag() > b.imag();
}

bool MasterSubspace::conjugate_paired() const {
    if (dim() % 2 != 0) return false;
    for (int k = 0; k + 1 < dim(); k += 2) {
        if (lambdas[k] != std::conj(lambdas[k + 1]) || lambdas[k].imag() <= 0.0) return false;
        if (!(V.col(k + 1).array() == V.col(k).conjugate().array()).all()) return false;
    }
    return true;
}

ModeSelection ModeSelection::parse(const std::string& text) {
    if (text.empty() || text == "nearest") return nearest();
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    std::vector<double> nums;
    if (colon != std::string::npos) {
        std::stringstream ss(text.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                nums.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ValidationError("bad number '" + tok + "' in mode selection '" + text + "'");
            }
        }
    }
    if (kind == "pairs") {
        if (nums.empty()) throw ValidationError("mode selection 'pairs:' needs at least one index");
        std::vector<int> p;
        for (double d : nums) {
            if (d < 0 || d != std::floor(d)) throw ValidationError("pair indices must be non-negative integers");
            p.push_back(static_cast<int>(d));
        }
        return by_pairs(p);
    }
    if (kind == "window") {
        if (nums.size() != 2 || !(nums[0] <= nums[1]))
            throw ValidationError("mode selection 'window:lo,hi' needs lo <= hi");
        return window(nums[0], nums[1]);
    }
    throw ValidationError("unknown mode selection '" + text + "' (use nearest, pairs:i,j or window:lo,hi)");
}

std::string ModeSelection::to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
        case Kind::Nearest: return "nearest";
        case Kind::PairIndices:
            os << "pairs:";
            for (std::size_t i = 0; i < pairs.size(); ++i) os << (i ? "," : "") << pairs[i];
            return os.str();
        case Kind::FrequencyWindow: os << "window:" << freq_lo << "," << freq_hi; return os.str();
    }
    return "nearest";
}

void binormalize(const CMat& V, CMat& W_left, const SpMat& B, double tol) {
    if (V.cols() != W_left.cols() || V.rows() != W_left.rows())
        throw ValidationError("binormalize: V and W_left shapes differ");
    const CMat BV = B.cast<cplx>() * V;
    const CMat D = W_left.adjoint() * BV;
    for (Index j = 0; j < D.rows(); ++j) {
        const double scale = W_left.col(j).norm() * BV.col(j).norm();
        if (std::abs(D(j, j)) <= tol * scale) {
            std::ostringstream os;
            os << "left/right eigenvector pair " << j << " is nearly B-orthogonal (|w* B v| = " << std::abs(D(j, j))
               << "): defective or ill-conditioned pencil";
            throw NumericalError(os.str());
        }
    }
    // W_new^* B V = D^{-1} D = I.
    W_left = W_left * D.inverse().adjoint();
}

MasterSubspace solve_master_subspace(const FirstOrderSystem& sys, int M_dim, cplx shift, const ModeSelection& sel,
                                     const EigenOptions& opts) {
    const Index N = sys.dim();
    const Index n = sys.dofs();
    if (sel.kind == ModeSelection::Kind::Nearest) {
        if (M_dim < 2 || M_dim % 2 != 0 || M_dim > N)
            throw ValidationError("master subspace dimension must be even with 2 <= M <= N");
    } else if (M_dim < 0 || M_dim > N) {
        throw ValidationError("master subspace dimension out of range");
    }

    std::vector<Candidate> cands;
    if (N <= opts.dense_threshold) {
        cands = dense_candidates(sys);
    } else {
        int nev = std::max(M_dim, 2) + 4;
        cplx s = shift;
        if (sel.kind == ModeSelection::Kind::PairIndices)
            nev = 2 * (*std::max_element(sel.pairs.begin(), sel.pairs.end()) + 1) + 6;
        if (sel.kind == ModeSelection::Kind::FrequencyWindow) {
            s = cplx(0.0, 0.5 * (sel.freq_lo + sel.freq_hi));
            nev = std::max(2 * M_dim, 12);
        }
        cands = arnoldi_candidates(sys, s, static_cast<int>(std::min<Index>(nev, N)), opts);
    }

    // Group candidates into conjugate clusters: one representative with Im >= 0.
    struct Cluster {
        std::size_t rep;
        bool pair;
    };
    std::vector<Cluster> clusters;
    std::vector<bool> used(cands.size(), false);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        const cplx li = cands[i].lambda;
        if (std::abs(li.imag()) <= 1e-12 * std::abs(li)) {
            cands[i].lambda = cplx(li.real(), 0.0);
            clusters.push_back({i, false});
            continue;
        }
        std::size_t partner = cands.size();
        for (std::size_t j = i + 1; j < cands.size(); ++j)
            if (!used[j] && near(cands[j].lambda, std::conj(li), 1e-8)) {
                partner = j;
                break;
            }
        if (partner == cands.size()) {
            // Conjugate partner outside the computed set (sparse path); keep as a pair anyway.
            if (li.imag() < 0.0) {
                cands[i].lambda = std::conj(li);
                cands[i].v = cands[i].v.conjugate().eval();
            }
            clusters.push_back({i, true});
            continue;
        }
        used[partner] = true;
        clusters.push_back({li.imag() > 0.0 ? i : partner, true});
    }

    std::vector<Cluster> chosen;
    int count = 0;
    switch (sel.kind) {
        case ModeSelection::Kind::Nearest: {
            std::stable_sort(clusters.begin(), clusters.end(), [&](const Cluster& a, const Cluster& b) {
                const double da = std::abs(cands[a.rep].lambda - shift);
                const double db = std::abs(cands[b.rep].lambda - shift);
                const double dac = a.pair ? std::min(da, std::abs(std::conj(cands[a.rep].lambda) - shift)) : da;
                const double dbc = b.pair ? std::min(db, std::abs(std::conj(cands[b.rep].lambda) - shift)) : db;
                if (std::abs(dac - dbc) > 1e-12 * std::max(dac, dbc)) return dac < dbc;
                return mode_order_less(cands[a.rep].lambda, cands[b.rep].lambda);
            });
            for (const Cluster& c : clusters) {
                if (count >= M_dim) break;
                const int size = c.pair ? 2 : 1;
                if (count + size > M_dim) throw ValidationError("requested subspace dimension splits a conjugate pair");
                chosen.push_back(c);
                count += size;
            }
            if (count != M_dim) throw NumericalError("not enough eigenvalues found near the shift");
            break;
        }
        case ModeSelection::Kind::PairIndices: {
            std::vector<Cluster> pairs;
            for (const Cluster& c : clusters)
                if (c.pair) pairs.push_back(c);
            std::stable_sort(pairs.begin(), pairs.end(), [&](const Cluster& a, const Cluster& b) {
                const cplx la = cands[a.rep].lambda, lb = cands[b.rep].lambda;
                if (la.imag() != lb.imag()) return la.imag() < lb.imag();
                return std::abs(la.real()) < std::abs(lb.real());
            });
            std::vector<int> want = sel.pairs;
            std::sort(want.begin(), want.end());
            want.erase(std::unique(want.begin(), want.end()), want.end());
            for (int p : want) {
                if (p >= static_cast<int>(pairs.size()))
                    throw ValidationError("mode pair index " + std::to_string(p) + " exceeds the computed spectrum");
                chosen.push_back(pairs[static_cast<std::size_t>(p)]);
                count += 2;
            }
            break;
        }
        case ModeSelection::Kind::FrequencyWindow: {
            for (const Cluster& c : clusters) {
                const double f = std::abs(cands[c.rep].lambda.imag());
                if (f >= sel.freq_lo && f <= sel.freq_hi) {
                    chosen.push_back(c);
                    count += c.pair ? 2 : 1;
                }
            }
            if (chosen.empty()) throw ValidationError("no eigenvalue inside the requested frequency window");
            break;
        }
    }
    if (sel.kind != ModeSelection::Kind::Nearest && M_dim != 0 && M_dim != count) {
        std::ostringstream os;
        os << "mode selection '" << sel.to_string() << "' yields " << count << " modes but M = " << M_dim;
        throw ValidationError(os.str());
    }

    const double anorm = std::max(col_norm1(sys.A()), 1e-300);
    struct Mode {
        cplx lambda;
        CVec v, w;
        double res;
    };
    std::vector<Mode> modes;
    for (const Cluster& c : chosen) {
        Refined r = refine(sys, cands[c.rep].lambda, cands[c.rep].v, opts, anorm);
        if (r.residual > opts.tol) {
            std::ostringstream os;
            os << "eigenpair near " << r.lambda << " did not converge: relative residual " << r.residual << " after "
               << opts.refine_iterations << " refinement sweeps";
            throw NumericalError(os.str());
        }
        if (std::abs(r.lambda.real()) <= opts.hyperbolic_tol * std::abs(r.lambda)) {
            std::ostringstream os;
            os << "eigenvalue " << r.lambda << " has zero real part: the master subspace is not hyperbolic";
            throw NumericalError(os.str());
        }
        normalize_right(r.v, n);
        if (c.pair) {
            if (r.lambda.imag() < 0.0) {
                r.lambda = std::conj(r.lambda);
                r.v = r.v.conjugate().eval();
                r.w = r.w.conjugate().eval();
            }
            modes.push_back({r.lambda, r.v, r.w, r.residual});
            modes.push_back({std::conj(r.lambda), r.v.conjugate(), r.w.conjugate(), r.residual});
        } else {
            modes.push_back({r.lambda, r.v, r.w, r.residual});
        }
    }
    std::stable_sort(modes.begin(), modes.end(),
                     [](const Mode& a, const Mode& b) { return mode_order_less(a.lambda, b.lambda); });

    MasterSubspace s;
    const Index M = static_cast<Index>(modes.size());
    s.lambdas.resize(M);
    s.V.resize(N, M);
    s.W_left.resize(N, M);
    s.residuals.resize(M);
    for (Index j = 0; j < M; ++j) {
        s.lambdas[j] = modes[static_cast<std::size_t>(j)].lambda;
        s.V.col(j) = modes[static_cast<std::size_t>(j)].v;
        s.W_left.col(j) = modes[static_cast<std::size_t>(j)].w;
        s.residuals[j] = modes[static_cast<std::size_t>(j)].res;
    }
    binormalize(s.V, s.W_left, sys.B(), opts.binorm_tol);
    for (Index j = 0; j + 1 < M; ++j)
        if (s.lambdas[j].imag() > 0.0 && s.lambdas[j + 1] == std::conj(s.lambdas[j])) {
            s.W_left.col(j + 1) = s.W_left.col(j).conjugate();
            ++j;
        }
    return s;
}

namespace {

constexpr std::array<char, 8> kSubMagic = {'S', 'S', 'M', 'S', 'U', 'B', 'S', '1'};

void write_cmat(std::ostream& os, const CMat& A) {
    for (Index j = 0; j < A.cols(); ++j)
        for (Index i = 0; i < A.rows(); ++i) {
            const double re = A(i, j).real(), im = A(i, j).imag();
            os.write(reinterpret_cast<const char*>(&re), sizeof re);
            os.write(reinterpret_cast<const char*>(&im), sizeof im);
        }
}

CMat read_cmat(std::istream& is, Index rows, Index cols) {
    CMat A(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) {
            double re = 0, im = 0;
            is.read(reinterpret_cast<char*>(&re), sizeof re);
            is.read(reinterpret_cast<char*>(&im), sizeof im);
            A(i, j) = cplx(re, im);
        }
    if (!is) throw ValidationError("subspace binary sidecar is truncated");
    return A;
}

}  // namespace

void save_subspace(const MasterSubspace& s, const std::string& path) {
    const std::string bin = path + ".bin";
    nlohmann::json j;
    j["format"] = "ssm-subspace";
    j["version"] = 1;
    j["M"] = s.dim();
    j["N"] = s.state_dim();
    j["binary"] = std::filesystem::path(bin).filename().string();
    auto& lam = j["lambdas"] = nlohmann::json::array();
    for (Index i = 0; i < s.lambdas.size(); ++i) lam.push_back({s.lambdas[i].real(), s.lambdas[i].imag()});
    j["residuals"] = std::vector<double>(s.residuals.data(), s.residuals.data() + s.residuals.size());
    std::ofstream js(path);
    if (!js) throw ValidationError("cannot open " + path + " for writing");
    js << j.dump(2) << "\n";

    std::ofstream os(bin, std::ios::binary);
    if (!os) throw ValidationError("cannot open " + bin + " for writing");
    os.write(kSubMagic.data(), kSubMagic.size());
    const std::uint64_t N = static_cast<std::uint64_t>(s.state_dim());
    const std::uint32_t M = static_cast<std::uint32_t>(s.dim());
    os.write(reinterpret_cast<const char*>(&N), sizeof N);
    os.write(reinterpret_cast<const char*>(&M), sizeof M);
    write_cmat(os, s.lambdas);
    write_cmat(os, s.V);
    write_cmat(os, s.W_left);
}

MasterSubspace load_subspace(const std::string& path) {
    std::ifstream js(path);
    if (!js) throw ValidationError("cannot open " + path);
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    if (j.value("format", "") != "ssm-subspace") throw ValidationError(path + " is not a subspace file");
    const std::string bin =
        (std::filesystem::path(path).parent_path() / j.at("binary").get<std::string>()).string();
    std::ifstream is(bin, std::ios::binary);
    if (!is) throw ValidationError("cannot open " + bin);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (magic != kSubMagic) throw ValidationError(bin + " has a bad magic header");
    std::uint64_t N = 0;
    std::uint32_t M = 0;
    is.read(reinterpret_cast<char*>(&N), sizeof N);
    is.read(reinterpret_cast<char*>(&M), sizeof M);
    MasterSubspace s;
    s.lambdas = read_cmat(is, M, 1);
    s.V = read_cmat(is, static_cast<Index>(N), M);
    s.W_left = read_cmat(is, static_cast<Index>(N), M);
    const auto res = j.value("residuals", std::vector<double>(M, 0.0));
    s.residuals = Eigen::Map<const Vec>(res.data(), static_cast<Index>(res.size()));
    return s;
}

}  // namespace ssm

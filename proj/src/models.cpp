#include "ssm/models.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <random>
#include <sstream>

namespace ssm {

namespace {

SpMat dense_to_sparse(const Mat& A) {
    SpMat S = A.sparseView(0.0, 0.0);
    S.makeCompressed();
    return S;
}

// Gauss-Legendre rule on [0, 1] (Golub-Welsch).
void gauss_legendre(int n, Vec& x, Vec& w) {
    Mat J = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k, k - 1) = J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    x = (es.eigenvalues().array() + 1.0) * 0.5;
    w = es.eigenvectors().row(0).transpose().array().square();  // weights sum to 1 on [0, 1]
}

// Linear combination sum_j coef_j z_{idx_j}.
using LinForm = std::vector<std::pair<Index, double>>;

void add_quadratic(std::vector<QuadTerm>& out, Index row, double scale, const LinForm& a, const LinForm& b) {
    if (scale == 0.0) return;
    for (auto [ia, ca] : a)
        for (auto [ib, cb] : b) out.push_back({row, ia, ib, scale * ca * cb});
}

void add_cubic(std::vector<CubicTerm>& out, Index row, double scale, const LinForm& a, const LinForm& b,
               const LinForm& c) {
    if (scale == 0.0) return;
    for (auto [ia, ca] : a)
        for (auto [ib, cb] : b)
            for (auto [ic, cc] : c) out.push_back({row, ia, ib, ic, scale * ca * cb * cc});
}

std::vector<double> per_spring(const std::vector<double>& v, int count, double fill, const char* name) {
    if (v.empty()) return std::vector<double>(static_cast<std::size_t>(count), fill);
    if (static_cast<int>(v.size()) != count)
        throw ValidationError(std::string("spring chain parameter '") + name + "' needs one value per spring");
    return v;
}

double param(const ParamMap& p, const std::string& key) {
    auto it = p.find(key);
    if (it == p.end()) throw ValidationError("missing model parameter '" + key + "'");
    return it->second;
}

int int_param(const ParamMap& p, const std::string& key) {
    const double v = param(p, key);
    if (v != std::floor(v)) throw ValidationError("model parameter '" + key + "' must be an integer");
    return static_cast<int>(v);
}

}  // namespace

BuiltinModel make_duffing(const DuffingParams& p) {
    if (!(p.omega0 > 0.0) || !(p.zeta > 0.0)) throw ValidationError("duffing needs omega0 > 0 and zeta > 0");
    SpMat M(1, 1), C(1, 1), K(1, 1);
    M.insert(0, 0) = 1.0;
    C.insert(0, 0) = 2.0 * p.zeta * p.omega0;
    K.insert(0, 0) = p.omega0 * p.omega0;
    std::vector<CubicTerm> cubic;
    if (p.gamma != 0.0) cubic.push_back({0, 0, 0, 0, p.gamma});
    auto poly = std::make_shared<PolynomialNonlinearity>(1, std::vector<QuadTerm>{}, cubic);
    const double g = p.gamma;
    auto bb = std::make_shared<FunctionNonlinearity>(1, [g](const Vec& x, const Vec&) {
        Vec f(1);
        f[0] = g * x[0] * x[0] * x[0];
        return f;
    });
    BuiltinModel b;
    b.id = "duffing";
    b.params = {{"omega0", p.omega0}, {"zeta", p.zeta}, {"gamma", p.gamma}, {"forcing", p.forcing}};
    b.model = std::make_shared<SecondOrderModel>(M, C, K, bb);
    b.tensors = poly;
    b.forcing = CVec::Constant(1, p.forcing);
    b.observable = Vec::Ones(1);
    b.description = "single-DOF Duffing oscillator x'' + 2 zeta omega0 x' + omega0^2 x + gamma x^3 = f";
    return b;
}

namespace {

// Chain nonlinearity as explicit terms. DOF i sits between springs i and i+1.
std::vector<LinForm> chain_relative(int n, Index offset) {
    std::vector<LinForm> d(static_cast<std::size_t>(n + 1));
    for (int e = 0; e <= n; ++e) {
        LinForm f;
        if (e < n) f.push_back({offset + e, 1.0});
        if (e > 0) f.push_back({offset + e - 1, -1.0});
        d[static_cast<std::size_t>(e)] = f;
    }
    return d;
}

}  // namespace

BuiltinModel make_spring_chain(const SpringChainParams& p) {
    const int n = p.n;
    if (n < 1) throw ValidationError("spring chain needs n >= 1");
    const int ns = n + 1;
    const auto kl = per_spring(p.k_lin, ns, 1.0, "k_lin");
    const auto k2 = per_spring(p.k2, ns, 0.0, "k2");
    const auto k3 = per_spring(p.k3, ns, 0.0, "k3");
    const auto c2 = per_spring(p.c2, ns, 0.0, "c2");
    const auto c3 = per_spring(p.c3, ns, 0.0, "c3");
    if (p.forced_dof < 0 || p.forced_dof >= n) throw ValidationError("forced_dof out of range");

    Mat K = Mat::Zero(n, n);
    for (int e = 0; e < ns; ++e) {
        // Spring e connects DOF e-1 (left) and DOF e (right); walls outside [0, n).
        const int a = e - 1, b = e;
        if (a >= 0) K(a, a) += kl[static_cast<std::size_t>(e)];
        if (b < n) K(b, b) += kl[static_cast<std::size_t>(e)];
        if (a >= 0 && b < n) {
            K(a, b) -= kl[static_cast<std::size_t>(e)];
            K(b, a) -= kl[static_cast<std::size_t>(e)];
        }
    }
    const Mat Md = Mat::Identity(n, n);
    const Mat C = p.alpha * Md + p.beta * K;

    // Relative displacement d_e = x_e - x_{e-1}; spring force s_e acts +s on DOF e-1 and -s on DOF e,
    // so the internal force is f_{e-1} -= ... in the sign convention M x'' + ... + f = 0:
    // f_e += s_e, f_{e-1} -= s_e.
    const auto dx = chain_relative(n, 0);
    const auto dv = chain_relative(n, n);
    std::vector<QuadTerm> q;
    std::vector<CubicTerm> c;
    for (int e = 0; e < ns; ++e) {
        const auto& d = dx[static_cast<std::size_t>(e)];
        const auto& v = dv[static_cast<std::size_t>(e)];
        const std::size_t se = static_cast<std::size_t>(e);
        for (auto [row, sign] : {std::pair<int, double>{e, 1.0}, std::pair<int, double>{e - 1, -1.0}}) {
            if (row < 0 || row >= n) continue;
            add_quadratic(q, row, sign * k2[se], d, d);
            add_quadratic(q, row, sign * c2[se], d, v);
            add_cubic(c, row, sign * k3[se], d, d, d);
            add_cubic(c, row, sign * c3[se], d, d, v);
        }
    }
    auto poly = std::make_shared<PolynomialNonlinearity>(n, q, c);

    // Black box: element loop on relative motions, independent of the term lists.
    auto bb = std::make_shared<FunctionNonlinearity>(n, [=](const Vec& x, const Vec& xd) {
        Vec f = Vec::Zero(n);
        for (int e = 0; e < ns; ++e) {
            const std::size_t se = static_cast<std::size_t>(e);
            const double xr = e < n ? x[e] : 0.0, xl = e > 0 ? x[e - 1] : 0.0;
            const double vr = e < n ? xd[e] : 0.0, vl = e > 0 ? xd[e - 1] : 0.0;
            const double d = xr - xl, v = vr - vl;
            const double s = k2[se] * d * d + k3[se] * d * d * d + c2[se] * d * v + c3[se] * d * d * v;
            if (e < n) f[e] += s;
            if (e > 0) f[e - 1] -= s;
        }
        return f;
    });

    BuiltinModel b;
    b.id = "spring_chain";
    b.params = {{"n", n}, {"alpha", p.alpha}, {"beta", p.beta}, {"forced_dof", p.forced_dof}, {"forcing", p.forcing}};
    b.model = std::make_shared<SecondOrderModel>(dense_to_sparse(Md), dense_to_sparse(C), dense_to_sparse(K), bb);
    b.tensors = poly;
    b.forcing = CVec::Zero(n);
    b.forcing[p.forced_dof] = p.forcing;
    b.observable = Vec::Zero(n);
    b.observable[p.forced_dof] = 1.0;
    std::ostringstream os;
    os << n << "-mass chain with " << ns << " springs, polynomial spring and damper nonlinearities";
    b.description = os.str();
    return b;
}

BuiltinModel make_random_chain(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> kl(0.8, 1.6), nl(-0.5, 0.5), dmp(-0.1, 0.1);
    SpringChainParams p;
    p.n = n;
    for (int e = 0; e <= n; ++e) {
        p.k_lin.push_back(kl(rng));
        p.k2.push_back(nl(rng));
        p.k3.push_back(nl(rng));
        p.c2.push_back(dmp(rng));
        p.c3.push_back(dmp(rng));
    }
    p.alpha = 0.01;
    p.beta = 0.01;
    BuiltinModel b = make_spring_chain(p);
    b.id = "random_chain";
    b.params = {{"n", n}, {"seed", static_cast<double>(seed)}};
    return b;
}

BuiltinModel make_one_to_two_chain(const InternalResonanceParams& p) {
    // Springs k_a = k_c = 1, k_b = 1.5 (1 + detune): K eigenvalues 1 and 4 for detune = 0.
    SpringChainParams c;
    c.n = 2;
    c.k_lin = {1.0, 1.5 * (1.0 + p.detune), 1.0};
    c.k2 = {p.k2, p.k2, p.k2};
    c.k3 = {p.k3, p.k3, p.k3};
    c.alpha = 0.0;
    c.beta = 0.0;
    c.forcing = p.forcing;
    BuiltinModel b = make_spring_chain(c);

    Mat K(b.model->K());
    Eigen::SelfAdjointEigenSolver<Mat> es(K);
    const Vec w = es.eigenvalues().cwiseSqrt();
    Vec z(2);
    z << p.zeta1, p.zeta2;
    const Mat Phi = es.eigenvectors();
    const Mat C = Phi * (2.0 * z.cwiseProduct(w)).asDiagonal() * Phi.transpose();
    b.model = std::make_shared<SecondOrderModel>(b.model->M(), dense_to_sparse(C), b.model->K(),
                                                 b.model->nonlinearity_ptr());
    b.id = "one_to_two_chain";
    b.params = {{"k2", p.k2}, {"k3", p.k3}, {"zeta1", p.zeta1}, {"zeta2", p.zeta2}, {"detune", p.detune},
                {"forcing", p.forcing}};
    b.description = "two-mass chain with linear frequencies 1 and 2 (1:2 internal resonance)";
    return b;
}

// ---------------------------------------------------------------------------

namespace {

struct BeamElement {
    // Shape functions at a Gauss point of an element of length l.
    double Nu[2], dNu[2];
    double Nw[4], dNw[4], d2Nw[4];
};

BeamElement beam_shapes(double xi, double l) {
    BeamElement e{};
    e.Nu[0] = 1 - xi;
    e.Nu[1] = xi;
    e.dNu[0] = -1 / l;
    e.dNu[1] = 1 / l;
    e.Nw[0] = 1 - 3 * xi * xi + 2 * xi * xi * xi;
    e.Nw[1] = l * (xi - 2 * xi * xi + xi * xi * xi);
    e.Nw[2] = 3 * xi * xi - 2 * xi * xi * xi;
    e.Nw[3] = l * (-xi * xi + xi * xi * xi);
    e.dNw[0] = (-6 * xi + 6 * xi * xi) / l;
    e.dNw[1] = 1 - 4 * xi + 3 * xi * xi;
    e.dNw[2] = (6 * xi - 6 * xi * xi) / l;
    e.dNw[3] = -2 * xi + 3 * xi * xi;
    e.d2Nw[0] = (-6 + 12 * xi) / (l * l);
    e.d2Nw[1] = (-4 + 6 * xi) / l;
    e.d2Nw[2] = (6 - 12 * xi) / (l * l);
    e.d2Nw[3] = (-2 + 6 * xi) / l;
    return e;
}

}  // namespace

BuiltinModel make_vonkarman_beam(const BeamParams& p) {
    if (p.n_elem < 2) throw ValidationError("beam needs at least two elements");
    if (!(p.length > 0 && p.thickness > 0 && p.width > 0 && p.youngs > 0 && p.density > 0))
        throw ValidationError("beam geometry and material must be positive");
    const int ne = p.n_elem;
    const int nodes = ne + 1;
    const int full = 3 * nodes;
    const double l = p.length / ne;
    const double A = p.width * p.thickness;
    const double Iz = p.width * p.thickness * p.thickness * p.thickness / 12.0;
    const double EA = p.youngs * A, EI = p.youngs * Iz, rA = p.density * A;

    // Free DOFs: interior nodes only (clamped at both ends).
    std::vector<Index> map(static_cast<std::size_t>(full), -1);
    Index n = 0;
    for (int node = 1; node < ne; ++node)
        for (int d = 0; d < 3; ++d) map[static_cast<std::size_t>(3 * node + d)] = n++;

    Vec gx, gw;
    gauss_legendre(5, gx, gw);
    std::vector<BeamElement> shapes;
    for (Index g = 0; g < gx.size(); ++g) shapes.push_back(beam_shapes(gx[g], l));

    Mat Kf = Mat::Zero(full, full), Mf = Mat::Zero(full, full);
    for (int e = 0; e < ne; ++e) {
        const int u[2] = {3 * e, 3 * (e + 1)};
        const int w[4] = {3 * e + 1, 3 * e + 2, 3 * (e + 1) + 1, 3 * (e + 1) + 2};
        for (Index g = 0; g < gx.size(); ++g) {
            const BeamElement& s = shapes[static_cast<std::size_t>(g)];
            const double wt = gw[g] * l;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    Kf(u[a], u[b]) += wt * EA * s.dNu[a] * s.dNu[b];
                    Mf(u[a], u[b]) += wt * rA * s.Nu[a] * s.Nu[b];
                }
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    Kf(w[a], w[b]) += wt * EI * s.d2Nw[a] * s.d2Nw[b];
                    Mf(w[a], w[b]) += wt * rA * s.Nw[a] * s.Nw[b];
                }
        }
    }
    Mat K = Mat::Zero(n, n), M = Mat::Zero(n, n);
    for (int i = 0; i < full; ++i)
        for (int j = 0; j < full; ++j) {
            const Index a = map[static_cast<std::size_t>(i)], b = map[static_cast<std::size_t>(j)];
            if (a >= 0 && b >= 0) {
                K(a, b) = Kf(i, j);
                M(a, b) = Mf(i, j);
            }
        }
    const Mat C = p.rayleigh_alpha * M + p.rayleigh_beta * K;

    auto bb = std::make_shared<FunctionNonlinearity>(n, [=](const Vec& x, const Vec&) {
        Vec q = Vec::Zero(full);
        for (int i = 0; i < full; ++i)
            if (map[static_cast<std::size_t>(i)] >= 0) q[i] = x[map[static_cast<std::size_t>(i)]];
        Vec f = Vec::Zero(full);
        for (int e = 0; e < ne; ++e) {
            const int u[2] = {3 * e, 3 * (e + 1)};
            const int w[4] = {3 * e + 1, 3 * e + 2, 3 * (e + 1) + 1, 3 * (e + 1) + 2};
            const double du = (q[u[1]] - q[u[0]]) / l;
            for (std::size_t g = 0; g < shapes.size(); ++g) {
                const BeamElement& s = shapes[g];
                const double wt = gw[static_cast<Index>(g)] * l;
                double dw = 0.0;
                for (int a = 0; a < 4; ++a) dw += s.dNw[a] * q[w[a]];
                // Nonlinear parts of N = EA (u' + w'^2 / 2) acting on the axial and bending variations.
                const double axial = EA * 0.5 * dw * dw;
                const double bend = EA * (du * dw + 0.5 * dw * dw * dw);
                for (int a = 0; a < 2; ++a) f[u[a]] += wt * axial * s.dNu[a];
                for (int a = 0; a < 4; ++a) f[w[a]] += wt * bend * s.dNw[a];
            }
        }
        Vec out(n);
        for (int i = 0; i < full; ++i)
            if (map[static_cast<std::size_t>(i)] >= 0) out[map[static_cast<std::size_t>(i)]] = f[i];
        return out;
    });

    BuiltinModel b;
    b.id = "vonkarman_beam";
    b.params = {{"n_elem", ne},
                {"length", p.length},
                {"thickness", p.thickness},
                {"width", p.width},
                {"youngs", p.youngs},
                {"density", p.density},
                {"rayleigh_alpha", p.rayleigh_alpha},
                {"rayleigh_beta", p.rayleigh_beta},
                {"forcing", p.forcing}};
    b.model = std::make_shared<SecondOrderModel>(dense_to_sparse(M), dense_to_sparse(C), dense_to_sparse(K), bb);
    const int mid = ne / 2;
    const Index wmid = map[static_cast<std::size_t>(3 * mid + 1)];
    b.forcing = CVec::Zero(n);
    b.forcing[wmid] = p.forcing;
    b.observable = Vec::Zero(n);
    b.observable[wmid] = 1.0;
    std::ostringstream os;
    os << "clamped-clamped von Karman beam, " << ne << " elements, " << n << " DOFs";
    b.description = os.str();
    return b;
}

// ---------------------------------------------------------------------------

std::vector<double> cantilever_roots(int count) {
    std::vector<double> out;
    const double pi = 3.14159265358979323846;
    auto g = [](double b) { return 1.0 / std::cosh(b) + std::cos(b); };
    for (int r = 1; r <= count; ++r) {
        const double lo = r == 1 ? 0.1 : (r - 1) * pi, hi = r * pi;
        boost::uintmax_t iters = 200;
        auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
        out.push_back(0.5 * (a + b));
    }
    return out;
}

BuiltinModel make_pipe_conveying_fluid(const PipeParams& p) {
    const int n = p.n_modes;
    if (n < 1) throw ValidationError("pipe needs at least one mode");
    if (p.quadrature < 8) throw ValidationError("pipe quadrature order must be >= 8");
    if (!(p.mass_ratio > 0.0 && p.mass_ratio < 1.0)) throw ValidationError("pipe mass ratio must be in (0, 1)");
    const auto beta = cantilever_roots(n);
    Vec gx, gw;
    gauss_legendre(p.quadrature, gx, gw);
    const Index G = gx.size();
    Mat phi(G, n), d1(G, n), d2(G, n);
    Vec tip(n);
    for (int r = 0; r < n; ++r) {
        const double b = beta[static_cast<std::size_t>(r)];
        const double s = (std::cosh(b) + std::cos(b)) / (std::sinh(b) + std::sin(b));
        auto shape = [&](double xi, double& f0, double& f1, double& f2) {
            const double ch = std::cosh(b * xi), c = std::cos(b * xi), sh = std::sinh(b * xi), sn = std::sin(b * xi);
            f0 = ch - c - s * (sh - sn);
            f1 = b * (sh + sn - s * (ch - c));
            f2 = b * b * (ch + c - s * (sh + sn));
        };
        for (Index g = 0; g < G; ++g) shape(gx[g], phi(g, r), d1(g, r), d2(g, r));
        const double norm = std::sqrt((gw.array() * phi.col(r).array().square()).sum());
        phi.col(r) /= norm;
        d1.col(r) /= norm;
        d2.col(r) /= norm;
        double t0, t1, t2;
        shape(1.0, t0, t1, t2);
        tip[r] = t0 / norm;
    }
    const Mat Wg = gw.asDiagonal();
    const Mat mass = phi.transpose() * Wg * phi;       // identity up to quadrature error
    const Mat b_ij = phi.transpose() * Wg * d2;         // int phi_i phi_j''
    const Mat c_ij = phi.transpose() * Wg * d1;         // int phi_i phi_j'
    Vec b4(n);
    for (int r = 0; r < n; ++r) b4[r] = std::pow(beta[static_cast<std::size_t>(r)], 4);
    const double u = p.flow_velocity, a = p.viscoelastic;
    const Mat K = Mat(b4.asDiagonal()) + u * u * b_ij;
    const Mat C = a * Mat(b4.asDiagonal()) + 2.0 * std::sqrt(p.mass_ratio) * u * c_ij;

    // Cubic tensors by quadrature. Stiffness: int (eta'' eta'^2 phi_i'' + eta''^2 eta' phi_i').
    // Damping: a int (eta_t'' eta'^2 phi_i'' + eta_t'' eta'' eta' phi_i' + eta'' eta' eta_t' phi_i'').
    std::vector<CubicTerm> cubic;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l2 = 0; l2 < n; ++l2) {
                    double ts = 0, td1 = 0, td2 = 0, td3 = 0;
                    for (Index g = 0; g < G; ++g) {
                        ts += gw[g] * (d2(g, j) * d1(g, k) * d1(g, l2) * d2(g, i) +
                                       d2(g, j) * d2(g, k) * d1(g, l2) * d1(g, i));
                        td1 += gw[g] * d2(g, j) * d1(g, k) * d1(g, l2) * d2(g, i);
                        td2 += gw[g] * d2(g, j) * d2(g, k) * d1(g, l2) * d1(g, i);
                        td3 += gw[g] * d2(g, j) * d1(g, k) * d1(g, l2) * d2(g, i);
                    }
                    // Displacement index j,k,l2 -> z index j,k,l2; velocity of mode j -> n + j.
                    if (ts != 0.0) cubic.push_back({i, j, k, l2, ts});
                    if (a != 0.0) {
                        cubic.push_back({i, n + j, k, l2, a * td1});  // eta_t'' eta' eta'
                        cubic.push_back({i, n + j, k, l2, a * td2});  // eta_t'' eta'' eta'
                        cubic.push_back({i, j, k, n + l2, a * td3});  // eta'' eta' eta_t'
                    }
                }
    auto poly = std::make_shared<PolynomialNonlinearity>(n, std::vector<QuadTerm>{}, cubic);

    auto bb = std::make_shared<FunctionNonlinearity>(n, [=](const Vec& q, const Vec& qd) {
        const Vec e1 = d1 * q, e2 = d2 * q, v1 = d1 * qd, v2 = d2 * qd;
        Vec f = Vec::Zero(n);
        for (Index g = 0; g < G; ++g) {
            const double cs2 = e2[g] * e1[g] * e1[g] + a * (v2[g] * e1[g] * e1[g] + e2[g] * e1[g] * v1[g]);
            const double cs1 = e2[g] * e2[g] * e1[g] + a * v2[g] * e2[g] * e1[g];
            for (int i = 0; i < n; ++i) f[i] += gw[g] * (cs2 * d2(g, i) + cs1 * d1(g, i));
        }
        return f;
    });

    BuiltinModel bm;
    bm.id = "pipe";
    bm.params = {{"n_modes", n},           {"flow_velocity", u},       {"viscoelastic", a},
                 {"mass_ratio", p.mass_ratio}, {"quadrature", p.quadrature}, {"forcing", p.forcing}};
    bm.model = std::make_shared<SecondOrderModel>(dense_to_sparse(mass), dense_to_sparse(C), dense_to_sparse(K), bb);
    bm.tensors = poly;
    bm.forcing = (p.forcing * tip).cast<cplx>();
    bm.observable = tip;
    std::ostringstream os;
    os << "cantilever pipe conveying fluid, " << n << " Galerkin modes, flow velocity " << u;
    bm.description = os.str();
    return bm;
}

// ---------------------------------------------------------------------------

std::vector<BuiltinInfo> list_builtin_models() {
    const DuffingParams d;
    const InternalResonanceParams r;
    const BeamParams b;
    const PipeParams p;
    return {
        {"duffing", "single-DOF Duffing oscillator",
         {{"omega0", d.omega0}, {"zeta", d.zeta}, {"gamma", d.gamma}, {"forcing", d.forcing}}},
        {"spring_chain", "uniform chain of unit masses with polynomial springs",
         {{"n", 2}, {"k", 1.0}, {"k2", 0.0}, {"k3", 0.0}, {"c3", 0.0}, {"alpha", 0.0}, {"beta", 0.01}, {"forcing", 0.1}}},
        {"random_chain", "randomized chain with quadratic, cubic and velocity-dependent terms", {{"n", 3}, {"seed", 1}}},
        {"one_to_two_chain", "two-mass chain with a 1:2 internal resonance",
         {{"k2", r.k2}, {"k3", r.k3}, {"zeta1", r.zeta1}, {"zeta2", r.zeta2}, {"detune", r.detune}, {"forcing", r.forcing}}},
        {"vonkarman_beam", "clamped-clamped von Karman beam (black-box element loop)",
         {{"n_elem", b.n_elem},
          {"length", b.length},
          {"thickness", b.thickness},
          {"width", b.width},
          {"youngs", b.youngs},
          {"density", b.density},
          {"rayleigh_alpha", b.rayleigh_alpha},
          {"rayleigh_beta", b.rayleigh_beta},
          {"forcing", b.forcing}}},
        {"pipe", "cantilever pipe conveying fluid (non-symmetric C and K)",
         {{"n_modes", p.n_modes},
          {"flow_velocity", p.flow_velocity},
          {"viscoelastic", p.viscoelastic},
          {"mass_ratio", p.mass_ratio},
          {"quadrature", p.quadrature},
          {"forcing", p.forcing}}},
    };
}

BuiltinModel make_builtin(const std::string& id, const ParamMap& overrides) {
    const auto all = list_builtin_models();
    auto it = std::find_if(all.begin(), all.end(), [&](const BuiltinInfo& i) { return i.id == id; });
    if (it == all.end()) {
        std::string names;
        for (const auto& i : all) names += (names.empty() ? "" : ", ") + i.id;
        throw ValidationError("unknown model '" + id + "' (available: " + names + ")");
    }
    ParamMap p = it->defaults;
    for (const auto& [k, v] : overrides) {
        if (!p.count(k)) throw ValidationError("model '" + id + "' has no parameter '" + k + "'");
        p[k] = v;
    }
    if (id == "duffing") return make_duffing({param(p, "omega0"), param(p, "zeta"), param(p, "gamma"), param(p, "forcing")});
    if (id == "spring_chain") {
        SpringChainParams c;
        c.n = int_param(p, "n");
        const std::size_t ns = static_cast<std::size_t>(c.n + 1);
        c.k_lin.assign(ns, param(p, "k"));
        c.k2.assign(ns, param(p, "k2"));
        c.k3.assign(ns, param(p, "k3"));
        c.c3.assign(ns, param(p, "c3"));
        c.alpha = param(p, "alpha");
        c.beta = param(p, "beta");
        c.forcing = param(p, "forcing");
        BuiltinModel b = make_spring_chain(c);
        b.params = p;
        return b;
    }
    if (id == "random_chain") {
        const int seed = int_param(p, "seed");
        if (seed < 0) throw ValidationError("seed must be non-negative");
        return make_random_chain(int_param(p, "n"), static_cast<unsigned>(seed));
    }
    if (id == "one_to_two_chain")
        return make_one_to_two_chain({param(p, "k2"), param(p, "k3"), param(p, "zeta1"), param(p, "zeta2"),
                                      param(p, "detune"), param(p, "forcing")});
    if (id == "vonkarman_beam")
        return make_vonkarman_beam({int_param(p, "n_elem"), param(p, "length"), param(p, "thickness"),
                                    param(p, "width"), param(p, "youngs"), param(p, "density"),
                                    param(p, "rayleigh_alpha"), param(p, "rayleigh_beta"), param(p, "forcing")});
    return make_pipe_conveying_fluid({int_param(p, "n_modes"), param(p, "flow_velocity"), param(p, "viscoelastic"),
                                      param(p, "mass_ratio"), int_param(p, "quadrature"), param(p, "forcing")});
}

}  // namespace ssm

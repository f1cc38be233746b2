#include "ssm/rom_analysis.hpp"

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssm {

namespace {

constexpr double kTwoPi = 6.283185307179586;

cplx mono(const CVec& P, const std::vector<int>& e) {
    cplx r = 1.0;
    for (std::size_t j = 0; j < e.size(); ++j)
        for (int q = 0; q < e[j]; ++q) r *= P[static_cast<Index>(j)];
    return r;
}

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

}  // namespace

ReducedOde::ReducedOde(const CoefficientTable& table, const MasterSubspace& sub, const CVec& Fa, double epsilon,
                       std::vector<int> ratios, double Omega_center)
    : table_(&table), dim_(sub.dim()), epsilon_(epsilon), ratios_(std::move(ratios)) {
    if (!sub.conjugate_paired()) throw ValidationError("reduced dynamics need a conjugate-paired master subspace");
    if (table.dim() != dim_) throw ValidationError("coefficient table does not match the master subspace");
    if (Fa.size() != sub.state_dim()) throw ValidationError("forcing vector must have the first-order state length");
    const int np = dim_ / 2;
    if (ratios_.empty()) {
        if (!(Omega_center > 0.0)) throw ValidationError("auto-detected resonance ratios need Omega_center > 0");
        for (int k = 0; k < np; ++k)
            ratios_.push_back(std::max(1, static_cast<int>(std::lround(sub.lambdas[2 * k].imag() / Omega_center))));
    }
    if (static_cast<int>(ratios_.size()) != np) throw ValidationError("need one resonance ratio per conjugate pair");
    for (int r : ratios_)
        if (r < 1) throw ValidationError("resonance ratios must be positive integers");

    const CVec proj = sub.W_left.adjoint() * Fa;
    s0_plus_ = CVec::Zero(dim_);
    s0_minus_ = CVec::Zero(dim_);
    for (int k = 0; k < np; ++k) {
        if (ratios_[static_cast<std::size_t>(k)] != 1) continue;
        forced_.push_back(2 * k);
        s0_plus_[2 * k] = proj[2 * k];
        s0_minus_[2 * k + 1] = std::conj(proj[2 * k]);
    }

    for (int d = 1; d <= table.max_order(); ++d)
        for (const auto& [m, c] : table.degree(d)) {
            int phase_total = 0;
            for (int j = 0; j < np; ++j) phase_total += ratios_[static_cast<std::size_t>(j)] * (m[2 * j] - m[2 * j + 1]);
            for (int k = 0; k < np; ++k) {
                const cplx v = c.R[2 * k];
                if (v == cplx(0.0)) continue;
                if (phase_total == ratios_[static_cast<std::size_t>(k)])
                    terms_.push_back({k, m.exponents(), v});
                else
                    dropped_ = std::max(dropped_, std::abs(v));
            }
        }
}

ReducedOde ReducedOde::with_epsilon(double epsilon) const {
    ReducedOde r = *this;
    r.epsilon_ = epsilon;
    return r;
}

CVec ReducedOde::rhs(const CVec& p, double t, double Omega) const {
    CVec out = table_->eval_R(p);
    if (epsilon_ != 0.0) {
        const cplx e = std::polar(1.0, Omega * t);
        out += epsilon_ * (s0_plus_ * e + s0_minus_ * std::conj(e));
    }
    return out;
}

CVec ReducedOde::slots(const Vec& y) const {
    CVec P(dim_);
    for (int k = 0; k < dim_ / 2; ++k) {
        P[2 * k] = cplx(y[2 * k], y[2 * k + 1]);
        P[2 * k + 1] = std::conj(P[2 * k]);
    }
    return P;
}

Vec ReducedOde::rotating_rhs(const Vec& y, double Omega) const {
    const CVec P = slots(y);
    CVec f = CVec::Zero(dim_ / 2);
    for (const Term& t : terms_) f[t.pair] += t.coef * mono(P, t.exps);
    Vec out(dim_);
    for (int k = 0; k < dim_ / 2; ++k) {
        const double r = ratios_[static_cast<std::size_t>(k)];
        f[k] += -I * r * Omega * P[2 * k] + epsilon_ * s0_plus_[2 * k];
        out[2 * k] = f[k].real();
        out[2 * k + 1] = f[k].imag();
    }
    return out;
}

Mat ReducedOde::rotating_jacobian(const Vec& y, double Omega) const {
    const CVec P = slots(y);
    const int np = dim_ / 2;
    CMat dA = CMat::Zero(np, np), dB = CMat::Zero(np, np);
    for (const Term& t : terms_) {
        std::vector<int> e = t.exps;
        for (int j = 0; j < dim_; ++j) {
            if (e[static_cast<std::size_t>(j)] == 0) continue;
            const int mj = e[static_cast<std::size_t>(j)];
            --e[static_cast<std::size_t>(j)];
            const cplx d = t.coef * static_cast<double>(mj) * mono(P, e);
            ++e[static_cast<std::size_t>(j)];
            const int l = j / 2;
            dA(t.pair, l) += d;
            dB(t.pair, l) += (j % 2 == 0 ? I : -I) * d;
        }
    }
    Mat J(dim_, dim_);
    for (int k = 0; k < np; ++k)
        for (int l = 0; l < np; ++l) {
            J(2 * k, 2 * l) = dA(k, l).real();
            J(2 * k + 1, 2 * l) = dA(k, l).imag();
            J(2 * k, 2 * l + 1) = dB(k, l).real();
            J(2 * k + 1, 2 * l + 1) = dB(k, l).imag();
        }
    for (int k = 0; k < np; ++k) {
        const double r = ratios_[static_cast<std::size_t>(k)];
        J(2 * k + 1, 2 * k) -= r * Omega;
        J(2 * k, 2 * k + 1) += r * Omega;
    }
    return J;
}

Vec ReducedOde::rotating_dOmega(const Vec& y) const {
    Vec out(dim_);
    for (int k = 0; k < dim_ / 2; ++k) {
        const double r = ratios_[static_cast<std::size_t>(k)];
        out[2 * k] = r * y[2 * k + 1];
        out[2 * k + 1] = -r * y[2 * k];
    }
    return out;
}

CVec ReducedOde::p_of(const Vec& y, double phi) const {
    CVec P(dim_);
    for (int k = 0; k < dim_ / 2; ++k) {
        P[2 * k] = cplx(y[2 * k], y[2 * k + 1]) * std::polar(1.0, ratios_[static_cast<std::size_t>(k)] * phi);
        P[2 * k + 1] = std::conj(P[2 * k]);
    }
    return P;
}

// ---------------------------------------------------------------------------

Vec observable_on_state(const Vec& displacement_weights, Index state_dim) {
    if (displacement_weights.size() == state_dim) return displacement_weights;
    if (2 * displacement_weights.size() != state_dim)
        throw ValidationError("observable must have length n (displacements) or 2n (full state)");
    Vec o = Vec::Zero(state_dim);
    o.head(displacement_weights.size()) = displacement_weights;
    return o;
}

double lift_to_physical(const CoefficientTable& table, const NonAutonomousCoeffs* nonaut, const CVec& p, double phi,
                        double epsilon, const Vec& observable) {
    const CVec z = evaluate_tv_state(table, nonaut, p, phi, epsilon);
    if (observable.size() != z.size()) throw ValidationError("observable length does not match the state");
    const cplx o = observable.cast<cplx>().dot(z);
    const double scale = observable.lpNorm<1>() * z.lpNorm<Eigen::Infinity>();
    if (std::abs(o.imag()) > 1e-8 * scale) {
        std::ostringstream os;
        os << "physical output has imaginary part " << o.imag() << " (real part " << o.real()
           << "); reduced state is not conjugate-symmetric";
        throw NumericalError(os.str());
    }
    return o.real();
}

std::vector<BackbonePoint> backbone_curve(const CoefficientTable& table, const MasterSubspace& sub,
                                          const std::vector<double>& amp_grid, const Vec& observable,
                                          int phase_samples) {
    if (sub.dim() != 2 || table.dim() != 2)
        throw ValidationError("backbone curves need a two-dimensional master subspace (one conjugate pair)");
    if (!sub.conjugate_paired()) throw ValidationError("backbone curves need an underdamped conjugate pair");
    const Vec obs = observable_on_state(observable, table.state_dim());
    std::vector<BackbonePoint> out;
    for (double rho : amp_grid) {
        if (!(rho > 0.0)) throw ValidationError("backbone amplitudes must be positive");
        BackbonePoint b;
        b.rho = rho;
        CVec p(2);
        p << rho, rho;
        const cplx ratio = table.eval_R(p)[0] / p[0];
        b.frequency = ratio.imag();
        b.damping = ratio.real();
        for (int s = 0; s < phase_samples; ++s) {
            const cplx e = std::polar(rho, kTwoPi * s / phase_samples);
            CVec q(2);
            q << e, std::conj(e);
            b.amplitude = std::max(b.amplitude, std::abs(lift_to_physical(table, nullptr, q, 0.0, 0.0, obs)));
        }
        out.push_back(b);
    }
    return out;
}

double chart_radius(const CoefficientTable& table, double rel_gap, int phase_samples) {
    const int k = table.max_order();
    if (k < 3) return std::numeric_limits<double>::infinity();
    const int M = table.dim();
    if (M % 2 != 0) throw ValidationError("chart radius needs conjugate-pair coordinates");
    auto gap = [&](double rho) {
        double g = 0.0;
        for (int s = 0; s < phase_samples; ++s) {
            Vec r = Vec::Constant(M / 2, rho), th(M / 2);
            for (int q = 0; q < M / 2; ++q) th[q] = kTwoPi * s / phase_samples + 0.7 * q;
            const CVec p = conjugate_pair_point(r, th);
            const CVec hi = table.eval_W(p, k), lo = table.eval_W(p, k - 2);
            g = std::max(g, (hi - lo).norm() / std::max(hi.norm(), 1e-300));
        }
        return g;
    };
    double lo = 1e-8, hi = lo;
    while (gap(hi) < rel_gap) {
        lo = hi;
        hi *= 1.25;
        if (hi > 1e8) return std::numeric_limits<double>::infinity();
    }
    if (hi == 1e-8) return hi;
    for (int it = 0; it < 60; ++it) {
        const double mid = std::sqrt(lo * hi);
        (gap(mid) < rel_gap ? lo : hi) = mid;
    }
    return lo;
}

std::string to_string(FrcMode m) { return m == FrcMode::TI ? "TI" : "TV"; }
std::string to_string(Stability s) { return s == Stability::Stable ? "stable" : "unstable"; }
std::string to_string(BifurcationFlag f) {
    switch (f) {
        case BifurcationFlag::SN: return "SN";
        case BifurcationFlag::HB: return "HB";
        default: return "regular";
    }
}

Mat bialternate_product(const Mat& A) {
    const Index n = A.rows();
    const Index m = n * (n - 1) / 2;
    Mat out = Mat::Zero(m, m);
    // Row/column (p, q) with p > q, ordered (1,0), (2,0), (2,1), (3,0), ...
    std::vector<std::pair<Index, Index>> idx;
    for (Index p = 1; p < n; ++p)
        for (Index q = 0; q < p; ++q) idx.emplace_back(p, q);
    for (Index a = 0; a < m; ++a) {
        const auto [p, q] = idx[static_cast<std::size_t>(a)];
        for (Index b = 0; b < m; ++b) {
            const auto [r, s] = idx[static_cast<std::size_t>(b)];
            double v = 0.0;
            if (r == q)
                v = -A(p, s);
            else if (r != p && s == q)
                v = A(p, r);
            else if (r == p && s == q)
                v = A(p, p) + A(q, q);
            else if (r == p && s != q)
                v = A(q, s);
            else if (s == p)
                v = -A(q, r);
            out(a, b) = v;
        }
    }
    return out;
}

std::optional<Vec> solve_fixed_point(const ReducedOde& rom, double Omega, const Vec& y0, double tol, int max_iter) {
    Vec y = y0;
    for (int it = 0; it < max_iter; ++it) {
        const Vec G = rom.rotating_rhs(y, Omega);
        Eigen::PartialPivLU<Mat> lu(rom.rotating_jacobian(y, Omega));
        const Vec dy = lu.solve(G);
        if (!dy.allFinite()) return std::nullopt;
        y -= dy;
        if (dy.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, y.lpNorm<Eigen::Infinity>())) return y;
    }
    return std::nullopt;
}

double output_amplitude(const ReducedOde& rom, const Vec& y, double Omega, const Vec& observable,
                        const NonAutonomousCoeffs* nonaut, int phase_samples) {
    (void)Omega;
    double amp = 0.0;
    for (int s = 0; s < phase_samples; ++s) {
        const double phi = kTwoPi * s / phase_samples;
        amp = std::max(amp, std::abs(lift_to_physical(rom.table(), nonaut, rom.p_of(y, phi), phi,
                                                      nonaut ? rom.epsilon() : 0.0, observable)));
    }
    return amp;
}

// ---------------------------------------------------------------------------

namespace {

struct Arc {
    const ReducedOde& rom;
    int M;

    Vec y_of(const Vec& u) const { return u.head(M); }
    double Om(const Vec& u) const { return u[M]; }

    Mat extended_jacobian(const Vec& u) const {
        Mat J(M, M + 1);
        J.leftCols(M) = rom.rotating_jacobian(y_of(u), Om(u));
        J.col(M) = rom.rotating_dOmega(y_of(u));
        return J;
    }

    // Newton on [G(u); d . (u - c)] = 0. Returns iterations used or -1.
    int correct(Vec& u, const Vec& d, const Vec& c, double tol, int max_iter) const {
        for (int it = 1; it <= max_iter; ++it) {
            Mat H(M + 1, M + 1);
            H.topRows(M) = extended_jacobian(u);
            H.row(M) = d.transpose();
            Vec r(M + 1);
            r.head(M) = rom.rotating_rhs(y_of(u), Om(u));
            r[M] = d.dot(u - c);
            const Vec du = Eigen::PartialPivLU<Mat>(H).solve(r);
            if (!du.allFinite()) return -1;
            u -= du;
            if (du.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, u.lpNorm<Eigen::Infinity>())) return it;
        }
        return -1;
    }

    Vec tangent(const Vec& u, const Vec& prev) const {
        Mat H(M + 1, M + 1);
        H.topRows(M) = extended_jacobian(u);
        H.row(M) = prev.transpose();
        Vec e = Vec::Zero(M + 1);
        e[M] = 1.0;
        Vec t = Eigen::PartialPivLU<Mat>(H).solve(e);
        t.normalize();
        if (t.dot(prev) < 0.0) t = -t;
        return t;
    }
};

double sn_test(const Mat& J) { return J.determinant(); }
double hb_test(const Mat& J) { return J.rows() == 2 ? J.trace() : bialternate_product(J).determinant(); }

Vec eigenvalues_real_parts(const Mat& J, Eigen::VectorXcd& ev) {
    ev = Eigen::EigenSolver<Mat>(J, false).eigenvalues();
    return ev.real();
}

// True when the eigenvalue pair closest to summing to zero is a complex-conjugate pair.
bool critical_pair_is_complex(const Mat& J) {
    Eigen::VectorXcd ev;
    eigenvalues_real_parts(J, ev);
    double best = std::numeric_limits<double>::infinity();
    bool complex_pair = false;
    for (Index i = 0; i < ev.size(); ++i)
        for (Index j = i + 1; j < ev.size(); ++j) {
            const double s = std::abs(ev[i] + ev[j]);
            if (s < best) {
                best = s;
                complex_pair = std::abs(ev[i].imag()) > 1e-10 * std::max(1.0, std::abs(ev[i])) &&
                               std::abs(ev[i] - std::conj(ev[j])) <= 1e-8 * std::max(1.0, std::abs(ev[i]));
            }
        }
    return complex_pair;
}

}  // namespace

std::vector<FrcPoint> frc_continuation(const ReducedOde& rom, double Omega_lo, double Omega_hi, const Vec& observable,
                                       const FrcOptions& opts, NonAutonomousCache* nonaut) {
    if (!(Omega_lo > 0.0 && Omega_hi > Omega_lo)) throw ValidationError("need 0 < Omega_lo < Omega_hi");
    if (opts.mode == FrcMode::TV && !nonaut) throw ValidationError("TV mode needs the leading-order forcing solves");
    const int M = rom.dim();
    const Vec obs = observable_on_state(observable, rom.table().state_dim());
    const StepControl& sc = opts.step;
    Arc arc{rom, M};

    auto make_point = [&](const Vec& u) {
        FrcPoint p;
        p.Omega = u[M];
        p.y = u.head(M);
        p.rho.resize(M / 2);
        p.theta.resize(M / 2);
        for (int k = 0; k < M / 2; ++k) {
            const cplx q(p.y[2 * k], p.y[2 * k + 1]);
            p.rho[k] = std::abs(q);
            p.theta[k] = std::arg(q);
        }
        const NonAutonomousCoeffs* na = nullptr;
        if (opts.mode == FrcMode::TV) na = &nonaut->get(p.Omega);
        p.out_amp = output_amplitude(rom, p.y, p.Omega, obs, na, opts.phase_samples);
        Eigen::VectorXcd ev;
        p.max_real_eig = eigenvalues_real_parts(rom.rotating_jacobian(p.y, p.Omega), ev).maxCoeff();
        p.stability = p.max_real_eig < 0.0 ? Stability::Stable : Stability::Unstable;
        p.outside_chart = p.rho.size() > 0 && p.rho.maxCoeff() > opts.chart_radius;
        return p;
    };

    std::vector<FrcPoint> out;
    auto fail = [&](const std::string& why, double Omega) {
        std::ostringstream os;
        os << "FRC continuation stopped near Omega = " << Omega << ": " << why;
        if (!out.empty()) os << " (last good point Omega = " << out.back().Omega << ")";
        throw ContinuationError(os.str(), out);
    };

    auto y0 = solve_fixed_point(rom, Omega_lo, Vec::Zero(M), sc.newton_tol, 50);
    if (!y0) fail("no fixed point found at the start of the range", Omega_lo);
    Vec u(M + 1);
    u << *y0, Omega_lo;
    Vec e_om = Vec::Zero(M + 1);
    e_om[M] = 1.0;
    Vec t = arc.tangent(u, e_om);
    out.push_back(make_point(u));

    double ds = sc.ds;
    double sn_prev = sn_test(rom.rotating_jacobian(arc.y_of(u), u[M]));
    double hb_prev = hb_test(rom.rotating_jacobian(arc.y_of(u), u[M]));

    // Bisection along the arc between ua and ub for a sign change of test().
    auto localize = [&](Vec ua, Vec ub, auto test) {
        double fa = test(ua);
        Vec um = 0.5 * (ua + ub);
        for (int it = 0; it < 100; ++it) {
            const Vec d = ub - ua;
            if (d.lpNorm<Eigen::Infinity>() <= sc.bisection_tol * std::max(1.0, ua.lpNorm<Eigen::Infinity>())) break;
            const Vec c = 0.5 * (ua + ub);
            Vec w = c;
            if (arc.correct(w, d, c, sc.newton_tol, sc.newton_max_iter) < 0) break;
            um = w;
            const double fm = test(w);
            if (sign_of(fm) == sign_of(fa)) {
                ua = w;
                fa = fm;
            } else {
                ub = w;
            }
        }
        const Vec c = 0.5 * (ua + ub);
        Vec w = c;
        if (arc.correct(w, ub - ua, c, sc.newton_tol, sc.newton_max_iter) >= 0) um = w;
        return um;
    };

    for (int step = 0; step < sc.max_steps; ++step) {
        Vec un;
        int iters = -1;
        while (true) {
            un = u + ds * t;
            const Vec c = un;
            iters = arc.correct(un, t, c, sc.newton_tol, sc.newton_max_iter);
            bool ok = iters >= 0;
            if (ok) {
                // Limit the relative change of the response per step.
                const double dy = (arc.y_of(un) - arc.y_of(u)).norm();
                const double ref = std::max(arc.y_of(un).norm(), arc.y_of(u).norm());
                if (dy > 0.1 * ref && ds > sc.ds_min * 4) ok = false;
            }
            if (ok) break;
            ds *= 0.5;
            if (ds < sc.ds_min) fail("Newton corrector did not converge at the minimum step", u[M]);
        }
        const Vec tn = arc.tangent(un, t);

        const Mat Jn = rom.rotating_jacobian(arc.y_of(un), un[M]);
        const double sn_now = sn_test(Jn), hb_now = hb_test(Jn);
        if (opts.detect_bifurcations) {
            std::vector<std::pair<double, FrcPoint>> events;
            if (sign_of(sn_now) != sign_of(sn_prev) && sign_of(sn_now) != 0 && sign_of(sn_prev) != 0) {
                const Vec w = localize(u, un, [&](const Vec& v) {
                    return sn_test(rom.rotating_jacobian(arc.y_of(v), v[M]));
                });
                FrcPoint p = make_point(w);
                p.flag = BifurcationFlag::SN;
                events.emplace_back((w - u).norm(), p);
            }
            if (sign_of(hb_now) != sign_of(hb_prev) && sign_of(hb_now) != 0 && sign_of(hb_prev) != 0) {
                const Vec w = localize(u, un, [&](const Vec& v) {
                    return hb_test(rom.rotating_jacobian(arc.y_of(v), v[M]));
                });
                if (critical_pair_is_complex(rom.rotating_jacobian(arc.y_of(w), w[M]))) {
                    FrcPoint p = make_point(w);
                    p.flag = BifurcationFlag::HB;
                    events.emplace_back((w - u).norm(), p);
                }
            }
            std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            for (auto& e : events) out.push_back(std::move(e.second));
        }
        sn_prev = sn_now;
        hb_prev = hb_now;

        if (un[M] > Omega_hi || un[M] < Omega_lo) {
            // Land exactly on the range boundary.
            const double target = un[M] > Omega_hi ? Omega_hi : Omega_lo;
            const double a = (target - u[M]) / (un[M] - u[M]);
            const Vec guess = arc.y_of(u) + a * (arc.y_of(un) - arc.y_of(u));
            if (auto yb = solve_fixed_point(rom, target, guess, sc.newton_tol, 50)) {
                Vec ub(M + 1);
                ub << *yb, target;
                out.push_back(make_point(ub));
            }
            break;
        }
        out.push_back(make_point(un));
        u = un;
        t = tn;
        if (iters <= 3) ds = std::min(ds * 1.5, sc.ds_max);
        else if (iters >= 6) ds *= 0.7;
    }
    return out;
}

FrcPeak find_peak(const std::vector<FrcPoint>& frc) {
    if (frc.empty()) throw ValidationError("empty FRC");
    std::size_t i = 0;
    for (std::size_t j = 1; j < frc.size(); ++j)
        if (frc[j].out_amp > frc[i].out_amp) i = j;
    FrcPeak pk{frc[i].Omega, frc[i].out_amp};
    if (i == 0 || i + 1 >= frc.size()) return pk;
    // Parabolas in a chord-length parameter, so a peak next to a fold is handled too.
    const FrcPoint* q[3] = {&frc[i - 1], &frc[i], &frc[i + 1]};
    auto dist = [](const FrcPoint& a, const FrcPoint& b) {
        return std::hypot((a.Omega - b.Omega) / b.Omega, (a.out_amp - b.out_amp) / std::max(b.out_amp, 1e-300));
    };
    const double s0 = 0.0, s1 = dist(*q[0], *q[1]), s2 = s1 + dist(*q[1], *q[2]);
    if (!(s1 > 0.0 && s2 > s1)) return pk;
    auto fit = [&](double f0, double f1, double f2, double& a, double& b) {
        const double d01 = (f1 - f0) / (s1 - s0), d12 = (f2 - f1) / (s2 - s1);
        a = (d12 - d01) / (s2 - s0);
        b = d01 - a * (s0 + s1);
    };
    double aa, ba, ao, bo;
    fit(q[0]->out_amp, q[1]->out_amp, q[2]->out_amp, aa, ba);
    if (!(aa < 0.0)) return pk;
    const double sv = -ba / (2.0 * aa);
    if (sv < s0 || sv > s2) return pk;
    const double fv = q[1]->out_amp + ba * (sv - s1) + aa * (sv * sv - s1 * s1);
    fit(q[0]->Omega, q[1]->Omega, q[2]->Omega, ao, bo);
    const double ov = q[1]->Omega + bo * (sv - s1) + ao * (sv * sv - s1 * s1);
    if (fv >= pk.out_amp) pk = {ov, fv};
    return pk;
}

AmplitudeGap amplitude_gap(const std::vector<FrcPoint>& a, const std::vector<FrcPoint>& b) {
    AmplitudeGap g;
    for (const FrcPoint& pa : a) {
        const double sa = std::max(pa.out_amp, 1e-300);
        double best = std::numeric_limits<double>::infinity(), best_amp = 0.0;
        double curve = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j + 1 < b.size(); ++j) {
            const double o0 = b[j].Omega, o1 = b[j + 1].Omega;
            const double lo = std::min(o0, o1), hi = std::max(o0, o1);
            // Distance to the segment in the (Omega, amplitude) plane scaled by pa.
            const Eigen::Vector2d A((o0 - pa.Omega) / pa.Omega, (b[j].out_amp - pa.out_amp) / sa);
            const Eigen::Vector2d B((o1 - pa.Omega) / pa.Omega, (b[j + 1].out_amp - pa.out_amp) / sa);
            const Eigen::Vector2d d = B - A;
            const double t = d.squaredNorm() > 0.0 ? std::clamp(-A.dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
            curve = std::min(curve, (A + t * d).norm());
            if (pa.Omega < lo || pa.Omega > hi) continue;
            const double w = hi > lo ? (pa.Omega - o0) / (o1 - o0) : 0.0;
            const double amp = b[j].out_amp + w * (b[j + 1].out_amp - b[j].out_amp);
            if (std::abs(amp - pa.out_amp) < best) {
                best = std::abs(amp - pa.out_amp);
                best_amp = amp;
            }
        }
        if (std::isfinite(curve)) g.max_curve = std::max(g.max_curve, curve);
        if (!std::isfinite(best)) continue;
        g.max_abs = std::max(g.max_abs, best);
        g.max_rel = std::max(g.max_rel, best / std::max({pa.out_amp, best_amp, 1e-300}));
    }
    double peak = 0.0;
    for (const FrcPoint& pa : a) peak = std::max(peak, pa.out_amp);
    if (peak > 0.0) g.max_peak = g.max_abs / peak;
    return g;
}

BifurcationCheck verify_bifurcation(const ReducedOde& rom, const FrcPoint& point, double dOmega) {
    BifurcationCheck res;
    const Vec& ys = point.y;
    const double scale = std::max(ys.norm(), 1e-12);
    std::ostringstream os;
    if (point.flag == BifurcationFlag::SN) {
        const Mat J = rom.rotating_jacobian(ys, point.Omega);
        Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
        const Vec phi = svd.matrixV().col(J.cols() - 1);
        int count[2] = {0, 0};
        bool opposite[2] = {false, false};
        for (int side = 0; side < 2; ++side) {
            const double Om = point.Omega + (side == 0 ? -dOmega : dOmega);
            std::vector<Vec> found;
            for (double amp : {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1})
                for (double sg : {-1.0, 1.0}) {
                    auto y = solve_fixed_point(rom, Om, ys + sg * amp * scale * phi);
                    if (!y || (*y - ys).norm() > 0.2 * scale) continue;
                    bool dup = false;
                    for (const Vec& f : found) dup = dup || (f - *y).norm() <= 1e-7 * scale;
                    if (!dup) found.push_back(*y);
                }
            count[side] = static_cast<int>(found.size());
            int pos = 0, neg = 0;
            for (const Vec& f : found) (rom.rotating_jacobian(f, Om).determinant() > 0 ? pos : neg)++;
            opposite[side] = pos > 0 && neg > 0;
        }
        res.confirmed = (count[0] == 0 && count[1] >= 2 && opposite[1]) || (count[1] == 0 && count[0] >= 2 && opposite[0]);
        os << "SN at Omega=" << point.Omega << ": nearby solutions " << count[0] << " below, " << count[1] << " above";
    } else if (point.flag == BifurcationFlag::HB) {
        double re[2] = {0.0, 0.0};
        bool ok = true;
        const Mat J0 = rom.rotating_jacobian(ys, point.Omega);
        Eigen::VectorXcd ev0 = Eigen::EigenSolver<Mat>(J0, false).eigenvalues();
        // Critical eigenvalue: complex with the smallest |Re|.
        Index crit = -1;
        for (Index i = 0; i < ev0.size(); ++i)
            if (ev0[i].imag() > 0 && (crit < 0 || std::abs(ev0[i].real()) < std::abs(ev0[crit].real()))) crit = i;
        if (crit < 0) ok = false;
        for (int side = 0; side < 2 && ok; ++side) {
            const double Om = point.Omega + (side == 0 ? -dOmega : dOmega);
            auto y = solve_fixed_point(rom, Om, ys);
            if (!y || (*y - ys).norm() > 0.2 * scale) {
                ok = false;
                break;
            }
            const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(rom.rotating_jacobian(*y, Om), false).eigenvalues();
            Index k = 0;
            for (Index i = 1; i < ev.size(); ++i)
                if (std::abs(ev[i] - ev0[crit]) < std::abs(ev[k] - ev0[crit])) k = i;
            re[side] = ev[k].real();
        }
        res.confirmed = ok && sign_of(re[0]) * sign_of(re[1]) < 0;
        os << "HB at Omega=" << point.Omega << ": critical real part " << re[0] << " below, " << re[1] << " above";
    } else {
        os << "regular point";
    }
    res.detail = os.str();
    return res;
}

OrderConvergence frc_order_convergence(const FirstOrderSystem& sys, const MasterSubspace& sub, const CVec& Fa,
                                       double epsilon, int k, double Omega_lo, double Omega_hi, const Vec& observable,
                                       const SsmOptions& ssm_opts, const FrcOptions& frc_opts,
                                       const std::vector<int>& ratios) {
    OrderConvergence r;
    r.order_low = k;
    r.order_high = k + 2;
    SsmOptions o = ssm_opts;
    o.max_order = k + 2;
    const SsmResult full = compute_ssm(sys, sub, o);
    CoefficientTable low(full.table.dim(), full.table.state_dim());
    for (int d = 0; d <= k; ++d)
        for (const auto& [m, c] : full.table.degree(d)) low.set(m, c.W, c.R);
    const double center = 0.5 * (Omega_lo + Omega_hi);
    NonAutonomousOptions nopt;
    ReducedOde rl(low, sub, Fa, epsilon, ratios, center), rh(full.table, sub, Fa, epsilon, ratios, center);
    nopt.resonant_modes = rl.forced_modes();
    NonAutonomousCache cache(sys, sub, Fa, nopt);
    const auto a = frc_continuation(rl, Omega_lo, Omega_hi, observable, frc_opts, &cache);
    const auto b = frc_continuation(rh, Omega_lo, Omega_hi, observable, frc_opts, &cache);
    r.gap = amplitude_gap(a, b);
    r.peak_low = find_peak(a);
    r.peak_high = find_peak(b);
    return r;
}

RomTrajectory integrate_rom(const ReducedOde& rom, const CVec& p0, double t0, double t1, const IntegrateOptions& opts) {
    namespace ode = boost::numeric::odeint;
    const int M = rom.dim();
    if (p0.size() != M) throw ValidationError("initial reduced state has the wrong length");
    if (!(t1 > t0) || !(opts.dt_out > 0.0)) throw ValidationError("need t1 > t0 and dt_out > 0");
    using State = std::vector<double>;
    auto to_p = [M](const State& x) {
        CVec p(M);
        for (int k = 0; k < M / 2; ++k) {
            p[2 * k] = cplx(x[2 * k], x[2 * k + 1]);
            p[2 * k + 1] = std::conj(p[2 * k]);
        }
        return p;
    };
    State x(static_cast<std::size_t>(M));
    for (int k = 0; k < M / 2; ++k) {
        x[2 * k] = p0[2 * k].real();
        x[2 * k + 1] = p0[2 * k].imag();
    }
    auto system = [&](const State& s, State& dsdt, double t) {
        const CVec f = rom.rhs(to_p(s), t, opts.Omega);
        for (int k = 0; k < M / 2; ++k) {
            dsdt[2 * k] = f[2 * k].real();
            dsdt[2 * k + 1] = f[2 * k].imag();
        }
    };
    std::vector<double> times;
    for (double t = t0; t < t1 - 1e-12 * (t1 - t0); t += opts.dt_out) times.push_back(t);
    times.push_back(t1);

    RomTrajectory traj;
    const double limit = opts.chart_radius * opts.safety;
    struct BlowUp {};
    auto observer = [&](const State& s, double t) {
        const CVec p = to_p(s);
        traj.t.push_back(t);
        traj.p.push_back(p);
        if (!p.allFinite() || p.cwiseAbs().maxCoeff() > limit) throw BlowUp{};
    };
    auto stepper = ode::make_dense_output(opts.abs_tol, opts.rel_tol, ode::runge_kutta_dopri5<State>());
    try {
        ode::integrate_times(stepper, system, x, times.begin(), times.end(), opts.dt_out * 0.1, observer);
    } catch (const BlowUp&) {
        traj.truncated = true;
    }
    return traj;
}

}  // namespace ssm

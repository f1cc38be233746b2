#include "ssm/run.hpp"

#include "ssm/blackbox_client.hpp"
#include "ssm/io.hpp"
#include "ssm/nonautonomous.hpp"
#include "ssm/rom_analysis.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace ssm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Reads fields of one JSON object, remembering which keys were consumed so that
// unknown (misspelled) keys can be reported with their full path.
class FieldReader {
public:
    FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(where() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ValidationError(field(key) + ": wrong type (" + j_.at(key).dump() + ")");
        }
    }

    void get_int(const char* key, int& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_number_integer()) throw ValidationError(field(key) + ": expected an integer");
        out = v.get<int>();
    }

    void get_seed(const char* key, unsigned& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 0xffffffffLL)
            throw ValidationError(field(key) + ": expected an integer in [0, 2^32)");
        out = static_cast<unsigned>(v.get<long long>());
    }

    void get_number(const char* key, double& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        if (!j_.at(key).is_number()) throw ValidationError(field(key) + ": expected a number");
        out = j_.at(key).get<double>();
    }

    std::optional<FieldReader> sub(const char* key) {
        if (!j_.contains(key)) return std::nullopt;
        seen_.insert(key);
        return FieldReader(j_.at(key), field(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ValidationError(field(k.c_str()) + ": unknown field");
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double asymmetry(const SpMat& A) {
    const double n = A.norm();
    return n > 0.0 ? (A - SpMat(A.transpose())).norm() / n : 0.0;
}

// CSV writer; every double goes out with 17 significant digits.
class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
        if (!out_) throw ValidationError("cannot write " + path.string());
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::ofstream out_;
};

std::string num(double v) { return format_double(v); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

SsmOptions ssm_options(const RunConfig& c) {
    SsmOptions o;
    o.max_order = c.ssm.max_order;
    o.resonance.rho_rel = c.ssm.rho_rel;
    o.resonance.structural_inner = c.ssm.structural_inner;
    o.conjugate_symmetry = c.ssm.conjugate_symmetry;
    return o;
}

StepOptions step_options(const RunConfig& c) {
    StepOptions o;
    o.batch = c.ssm.batch;
    o.autoscale = c.ssm.autoscale;
    o.threads = c.threads;
    return o;
}

json stats_json(const EvaluationStats& s) {
    return {{"complex_even", s.complex_even},       {"complex_odd", s.complex_odd},
            {"real_even", s.real_even},             {"real_odd", s.real_odd},
            {"blackbox_calls", s.blackbox_calls},   {"cache_hits", s.cache_hits},
            {"raw_cache_hits", s.raw_cache_hits},   {"zero_skips", s.zero_skips},
            {"autoscaled", s.autoscaled},           {"batches", s.batches},
            {"blackbox_seconds", s.blackbox_seconds}};
}

std::string multiindex_cell(const MultiIndex& m) {
    std::string s;
    for (int i = 0; i < m.dim(); ++i) s += (i ? " " : "") + std::to_string(m[i]);
    return s;
}

CVec first_order_forcing(const CVec& fa, Index N) {
    CVec F = CVec::Zero(N);
    F.head(fa.size()) = fa;
    return F;
}

void log_log_slope(const std::vector<double>& x, const std::vector<double>& y, double& slope) {
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = std::log(x[i]) - mx;
        sxy += a * (std::log(y[i]) - my);
        sxx += a * a;
    }
    slope = sxy / sxx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config serialization

void to_json(json& j, const RunConfig& c) {
    j = json::object();
    j["model"] = {{"builtin", c.model.builtin},
                  {"params", c.model.params},
                  {"manifest", c.model.manifest},
                  {"endpoint", c.model.endpoint},
                  {"observable_dof", c.model.observable_dof}};
    j["subspace"] = {{"dim", c.subspace.dim},
                     {"select", c.subspace.select},
                     {"shift_re", c.subspace.shift_re},
                     {"shift_im", c.subspace.shift_im}};
    j["ssm"] = {{"max_order", c.ssm.max_order},
                {"style", c.ssm.style},
                {"rho_rel", c.ssm.rho_rel},
                {"structural_inner", c.ssm.structural_inner},
                {"conjugate_symmetry", c.ssm.conjugate_symmetry},
                {"batch", c.ssm.batch},
                {"autoscale", c.ssm.autoscale}};
    j["analysis"] = c.analysis;
    j["backbone"] = {{"rho_max", c.backbone.rho_max}, {"points", c.backbone.points}};
    j["frc"] = {{"omega_min", c.frc.omega_min},
                {"omega_max", c.frc.omega_max},
                {"epsilon", c.frc.epsilon},
                {"mode", c.frc.mode},
                {"ratios", c.frc.ratios},
                {"ds", c.frc.ds},
                {"ds_max", c.frc.ds_max},
                {"max_steps", c.frc.max_steps},
                {"detect_bifurcations", c.frc.detect_bifurcations},
                {"verify_bifurcations", c.frc.verify_bifurcations}};
    j["simulate"] = {{"t_end", c.simulate.t_end},
                     {"dt_out", c.simulate.dt_out},
                     {"rho0", c.simulate.rho0},
                     {"theta0", c.simulate.theta0},
                     {"epsilon", c.simulate.epsilon},
                     {"omega", c.simulate.omega}};
    j["output_dir"] = c.output_dir;
    j["plot_data"] = c.plot_data;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
}

void from_json(const json& j, RunConfig& c) {
    FieldReader r(j, "");
    if (auto m = r.sub("model")) {
        m->get("builtin", c.model.builtin);
        m->get("params", c.model.params);
        m->get("manifest", c.model.manifest);
        m->get("endpoint", c.model.endpoint);
        m->get_int("observable_dof", c.model.observable_dof);
        m->finish();
    }
    if (auto s = r.sub("subspace")) {
        s->get_int("dim", c.subspace.dim);
        s->get("select", c.subspace.select);
        s->get_number("shift_re", c.subspace.shift_re);
        s->get_number("shift_im", c.subspace.shift_im);
        s->finish();
    }
    if (auto s = r.sub("ssm")) {
        s->get_int("max_order", c.ssm.max_order);
        s->get("style", c.ssm.style);
        s->get_number("rho_rel", c.ssm.rho_rel);
        s->get("structural_inner", c.ssm.structural_inner);
        s->get("conjugate_symmetry", c.ssm.conjugate_symmetry);
        s->get("batch", c.ssm.batch);
        s->get("autoscale", c.ssm.autoscale);
        s->finish();
    }
    r.get("analysis", c.analysis);
    if (auto b = r.sub("backbone")) {
        b->get_number("rho_max", c.backbone.rho_max);
        b->get_int("points", c.backbone.points);
        b->finish();
    }
    if (auto f = r.sub("frc")) {
        f->get_number("omega_min", c.frc.omega_min);
        f->get_number("omega_max", c.frc.omega_max);
        f->get_number("epsilon", c.frc.epsilon);
        f->get("mode", c.frc.mode);
        f->get("ratios", c.frc.ratios);
        f->get_number("ds", c.frc.ds);
        f->get_number("ds_max", c.frc.ds_max);
        f->get_int("max_steps", c.frc.max_steps);
        f->get("detect_bifurcations", c.frc.detect_bifurcations);
        f->get("verify_bifurcations", c.frc.verify_bifurcations);
        f->finish();
    }
    if (auto s = r.sub("simulate")) {
        s->get_number("t_end", c.simulate.t_end);
        s->get_number("dt_out", c.simulate.dt_out);
        s->get("rho0", c.simulate.rho0);
        s->get("theta0", c.simulate.theta0);
        s->get_number("epsilon", c.simulate.epsilon);
        s->get_number("omega", c.simulate.omega);
        s->finish();
    }
    r.get("output_dir", c.output_dir);
    r.get("plot_data", c.plot_data);
    r.get_seed("seed", c.seed);
    r.get_int("threads", c.threads);
    r.finish();
}

void validate(const RunConfig& c) {
    auto fail = [](const std::string& field, const std::string& msg) { throw ValidationError(field + ": " + msg); };
    if (c.model.builtin.empty() == c.model.manifest.empty())
        fail("model", "set exactly one of model.builtin and model.manifest");
    if (!c.model.endpoint.empty() && c.model.manifest.empty())
        fail("model.endpoint", "an external black box needs model.manifest for M, C, K");
    if (c.model.observable_dof < -1) fail("model.observable_dof", "must be -1 or a DOF index");
    const ModeSelection sel = ModeSelection::parse(c.subspace.select);
    if (sel.kind == ModeSelection::Kind::Nearest && (c.subspace.dim < 1))
        fail("subspace.dim", "must be positive");
    if (c.ssm.max_order < 1) fail("ssm.max_order", "must be >= 1");
    if (c.ssm.max_order > 25) fail("ssm.max_order", "must be <= 25");
    if (c.ssm.style != "normal_form") fail("ssm.style", "only normal_form is supported");
    if (!(c.ssm.rho_rel > 0.0)) fail("ssm.rho_rel", "must be > 0");
    static const std::set<std::string> kinds{"none", "backbone", "frc", "simulate"};
    if (!kinds.count(c.analysis)) fail("analysis", "must be none, backbone, frc or simulate");
    if (c.backbone.rho_max < 0.0) fail("backbone.rho_max", "must be >= 0");
    if (c.backbone.points < 2) fail("backbone.points", "must be >= 2");
    const bool auto_range = c.frc.omega_min == 0.0 && c.frc.omega_max == 0.0;
    if (!auto_range && !(c.frc.omega_min > 0.0 && c.frc.omega_min < c.frc.omega_max))
        fail("frc.omega_min", "need 0 < omega_min < omega_max (or both 0)");
    if (!(c.frc.epsilon >= 0.0)) fail("frc.epsilon", "must be >= 0");
    if (c.frc.mode != "TI" && c.frc.mode != "TV") fail("frc.mode", "must be TI or TV");
    for (int r : c.frc.ratios)
        if (r < 1) fail("frc.ratios", "entries must be >= 1");
    if (!(c.frc.ds > 0.0)) fail("frc.ds", "must be > 0");
    if (!(c.frc.ds_max >= c.frc.ds)) fail("frc.ds_max", "must be >= frc.ds");
    if (c.frc.max_steps < 1) fail("frc.max_steps", "must be >= 1");
    if (!(c.simulate.t_end > 0.0)) fail("simulate.t_end", "must be > 0");
    if (!(c.simulate.dt_out > 0.0)) fail("simulate.dt_out", "must be > 0");
    if (c.simulate.rho0.empty()) fail("simulate.rho0", "needs one amplitude per pair");
    for (double r : c.simulate.rho0)
        if (!(r >= 0.0)) fail("simulate.rho0", "amplitudes must be >= 0");
    if (!c.simulate.theta0.empty() && c.simulate.theta0.size() != c.simulate.rho0.size())
        fail("simulate.theta0", "must be empty or match simulate.rho0");
    if (!(c.simulate.epsilon >= 0.0)) fail("simulate.epsilon", "must be >= 0");
    if (c.simulate.epsilon > 0.0 && !(c.simulate.omega > 0.0))
        fail("simulate.omega", "must be > 0 when simulate.epsilon > 0");
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
    if (c.threads < 1) fail("threads", "must be >= 1");
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    RunConfig c;
    from_json(j, c);
    return c;
}

void save_run_config(const RunConfig& c, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << json(c).dump(2) << '\n';
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' must be key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    std::string pointer;
    std::istringstream ks(key);
    for (std::string part; std::getline(ks, part, '.');) {
        if (part.empty()) throw ValidationError("override '" + assignment + "' has an empty key segment");
        pointer += "/" + part;
    }
    j[json::json_pointer(pointer)] = value;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Model loading

LoadedModel load_model(const ModelSource& src) {
    LoadedModel out;
    if (!src.builtin.empty()) {
        BuiltinModel b = make_builtin(src.builtin, src.params);
        out.model = b.model;
        out.tensors = b.tensors;
        out.forcing = b.forcing;
        out.observable = b.observable;
        out.name = b.id;
        out.params = b.params;
    } else {
        ModelFiles mf = read_model_manifest(src.manifest);
        std::shared_ptr<const Nonlinearity> f;
        if (!src.endpoint.empty()) {
            auto client = std::make_shared<BlackBoxClient>(open_endpoint(src.endpoint));
            f = std::make_shared<RemoteNonlinearity>(client);
            out.name = "external:" + client->header().name;
        } else if (mf.nonlinearity.value("kind", std::string()) == "builtin") {
            ParamMap params = mf.nonlinearity.value("params", ParamMap{});
            BuiltinModel b = make_builtin(mf.nonlinearity.at("id").get<std::string>(), params);
            f = b.model->nonlinearity_ptr();
            out.tensors = b.tensors;
            out.name = "files:" + b.id;
            out.params = b.params;
        } else {
            throw ValidationError("model.endpoint: " + src.manifest +
                                  " does not name a built-in nonlinearity, so an endpoint is required");
        }
        if (f->dofs() != mf.M.rows())
            throw ValidationError("model.endpoint: black box has " + std::to_string(f->dofs()) + " DOFs, matrices " +
                                  std::to_string(mf.M.rows()));
        out.forcing = mf.forcing.value_or(CVec::Zero(mf.M.rows()));
        out.observable = mf.observable.value_or(Vec::Unit(mf.M.rows(), 0));
        out.model = std::make_shared<SecondOrderModel>(mf.M, mf.C, mf.K, f);
    }
    if (src.observable_dof >= 0) {
        if (src.observable_dof >= out.model->dofs())
            throw ValidationError("model.observable_dof: index out of range");
        out.observable = Vec::Unit(out.model->dofs(), src.observable_dof);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Verification against explicit tensors

VerifyResult verify_against_tensors(const FirstOrderSystem& sys, std::shared_ptr<const PolynomialNonlinearity> tensors,
                                    const MasterSubspace& sub, const SsmOptions& opts) {
    if (!tensors) throw ValidationError("verify: the model has no explicit tensors");
    VerifyResult res;
    const SsmResult step = compute_ssm(sys, sub, opts, {}, &res.stats);
    TensorComposer tc(sys, tensors);
    const SsmResult ref = compute_ssm(sys, sub, tc, opts);
    for (int k = 1; k <= opts.max_order; ++k) {
        VerifyRow row;
        row.degree = k;
        for (const auto& [m, c] : ref.table.degree(k)) {
            const Coefficient& s = step.table.at(m);
            row.count++;
            row.max_rel_W = std::max(row.max_rel_W, (s.W - c.W).norm() / std::max(c.W.norm(), 1e-300));
            if (c.R.norm() > 0.0 || s.R.norm() > 0.0)
                row.max_rel_R = std::max(row.max_rel_R, (s.R - c.R).norm() / std::max(c.R.norm(), 1e-300));
        }
        res.worst = std::max({res.worst, row.max_rel_W, row.max_rel_R});
        res.rows.push_back(row);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct Pipeline {
    const RunConfig& c;
    fs::path dir;
    RunReport report;
    json summary = json::object();
    std::string current = "config";

    template <class Fn>
    void stage(const std::string& name, Fn&& fn) {
        current = name;
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        report.timings.push_back({name, seconds_since(t0)});
    }

    void add(const fs::path& p) { report.files.push_back(p); }

    void write_manifest(const std::string& status, const std::string& error) {
        json m;
        m["tool"] = "ssm";
        m["version"] = kToolVersion;
        m["status"] = status;
        if (!error.empty()) m["error"] = {{"stage", current}, {"message", error}};
        m["config"] = json(c);
        json hashed = c;
        hashed.erase("output_dir");  // same computation, same hash
        m["config_hash"] = fnv1a_hex(hashed.dump());
        m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION);
        m["compiler"] = __VERSION__;
        json outputs = json::array();
        for (const fs::path& p : report.files) {
            const std::string bytes = read_file(p);
            outputs.push_back({{"file", p.filename().string()}, {"bytes", bytes.size()}, {"fnv1a", fnv1a_hex(bytes)}});
        }
        m["outputs"] = outputs;
        json stages = json::array();
        double total = 0.0;
        for (const auto& t : report.timings) {
            stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
            total += t.seconds;
        }
        m["stages"] = stages;
        m["total_seconds"] = total;
        m["evaluations"] = stats_json(report.stats);
        double compute_s = 0.0;
        for (const auto& t : report.timings)
            if (t.stage == "compute") compute_s = t.seconds;
        if (compute_s > 0.0) m["evaluation_share_of_compute"] = report.stats.blackbox_seconds / compute_s;
        m["summary"] = summary;
        using clock = std::chrono::system_clock;
        m["finished_at_unix"] = std::chrono::duration_cast<std::chrono::seconds>(clock::now().time_since_epoch()).count();
        report.manifest = dir / "manifest.json";
        std::ofstream out(report.manifest);
        out << m.dump(2) << '\n';
        report.summary = summary;
    }
};

}  // namespace

RunReport run(const RunConfig& c, Stage stop) {
    validate(c);
    Pipeline P{c, fs::path(c.output_dir), {}, json::object(), "config"};
    fs::create_directories(P.dir);

    LoadedModel lm;
    std::unique_ptr<FirstOrderSystem> sys;
    MasterSubspace sub;
    SsmResult ssm;

    try {
        P.stage("model", [&] {
            lm = load_model(c.model);
            sys = std::make_unique<FirstOrderSystem>(lm.model);
            const ValidationReport vr = validate_nonlinearity(*lm.model, 1e-2, 1e-6, c.seed + 7);
            P.summary["model"] = {{"name", lm.name},
                                  {"dofs", lm.model->dofs()},
                                  {"state_dim", sys->dim()},
                                  {"asymmetry_K", asymmetry(lm.model->K())},
                                  {"asymmetry_C", asymmetry(lm.model->C())},
                                  {"tensor_backed", static_cast<bool>(lm.tensors)},
                                  {"reentrant", lm.model->nonlinearity().reentrant()},
                                  {"validation",
                                   {{"ok", vr.ok()},
                                    {"zero_force_norm", vr.zero_force_norm},
                                    {"linear_part_norm", vr.linear_part_norm},
                                    {"closure_residual", vr.closure_residual}}}};
            if (!lm.params.empty()) P.summary["model"]["params"] = lm.params;
            if (!vr.ok()) throw ValidationError("model nonlinearity failed validation (constant, linear or above cubic)");
        });
        if (stop == Stage::Model) {
            P.write_manifest("ok", "");
            return P.report;
        }

        P.stage("eig", [&] {
            const ModeSelection sel = ModeSelection::parse(c.subspace.select);
            sub = solve_master_subspace(*sys, sel.kind == ModeSelection::Kind::Nearest ? c.subspace.dim : 0,
                                        cplx(c.subspace.shift_re, c.subspace.shift_im), sel);
            Csv e(P.dir / "eigenvalues.csv", {"mode", "re", "im", "abs", "damping_ratio", "residual"});
            for (int i = 0; i < sub.dim(); ++i) {
                const cplx l = sub.lambdas[i];
                e.row({std::to_string(i), num(l.real()), num(l.imag()), num(std::abs(l)), num(-l.real() / std::abs(l)),
                       num(sub.residuals[i])});
            }
            P.add(e.path());
            json lam = json::array();
            for (int i = 0; i < sub.dim(); ++i) lam.push_back({sub.lambdas[i].real(), sub.lambdas[i].imag()});
            P.summary["master_eigenvalues"] = lam;
            if (sys->dim() <= 2000) {
                const Mat A(sys->A()), B(sys->B());
                Eigen::ComplexEigenSolver<CMat> es((B.partialPivLu().solve(A)).cast<cplx>(), false);
                std::vector<cplx> all(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
                std::sort(all.begin(), all.end(), mode_order_less);
                Csv s(P.dir / "spectrum.csv", {"index", "re", "im", "selected"});
                int unstable = 0;
                for (std::size_t i = 0; i < all.size(); ++i) {
                    bool selected = false;
                    for (int k = 0; k < sub.dim(); ++k)
                        selected = selected || std::abs(all[i] - sub.lambdas[k]) <= 1e-6 * std::abs(sub.lambdas[k]);
                    unstable += all[i].real() > 0.0;
                    s.row({std::to_string(i), num(all[i].real()), num(all[i].imag()), selected ? "1" : "0"});
                }
                P.add(s.path());
                P.summary["unstable_eigenvalues"] = unstable;
            }
            save_subspace(sub, (P.dir / "subspace.json").string());
            P.add(P.dir / "subspace.json");
            P.add(P.dir / "subspace.json.bin");
        });
        if (stop == Stage::Eig) {
            P.write_manifest("ok", "");
            return P.report;
        }

        P.stage("compute", [&] {
            ssm = compute_ssm(*sys, sub, ssm_options(c), step_options(c), &P.report.stats);
            ssm.table.save((P.dir / "coefficients.bin").string());
            P.add(P.dir / "coefficients.bin");
            std::vector<std::string> head{"degree", "m", "norm_W"};
            for (int i = 0; i < sub.dim(); ++i) {
                head.push_back("R" + std::to_string(i) + "_re");
                head.push_back("R" + std::to_string(i) + "_im");
            }
            Csv t(P.dir / "coefficients.csv", head);
            for (int k = 1; k <= ssm.table.max_order(); ++k)
                for (const auto& [m, co] : ssm.table.degree(k)) {
                    std::vector<std::string> row{std::to_string(k), multiindex_cell(m), num(co.W.norm())};
                    for (Index i = 0; i < co.R.size(); ++i) {
                        row.push_back(num(co.R[i].real()));
                        row.push_back(num(co.R[i].imag()));
                    }
                    t.row(row);
                }
            P.add(t.path());
            Csv d(P.dir / "degrees.csv", {"degree", "solved", "mirrored", "factorizations", "max_solve_residual"});
            for (const DegreeReport& r : ssm.degrees)
                d.row({std::to_string(r.degree), std::to_string(r.solved), std::to_string(r.mirrored),
                       std::to_string(r.factorizations), num(r.max_solve_residual)});
            P.add(d.path());

            // Invariance residual on h in [1e-2, 1e-1] along a seeded random direction.
            std::mt19937 rng(c.seed);
            std::uniform_real_distribution<double> ud(0.0, 2.0 * std::acos(-1.0));
            const bool paired = sub.conjugate_paired();
            CVec dir(sub.dim());
            if (paired) {
                Vec rho = Vec::Constant(sub.dim() / 2, 1.0 / std::sqrt(static_cast<double>(sub.dim()))), th(sub.dim() / 2);
                for (Index k = 0; k < th.size(); ++k) th[k] = ud(rng);
                dir = conjugate_pair_point(rho, th);
            } else {
                for (Index k = 0; k < dir.size(); ++k) dir[k] = std::polar(1.0, ud(rng));
                dir /= dir.norm();
            }
            Csv rcsv(P.dir / "residual.csv", {"h", "residual"});
            std::vector<double> hs, rs;
            for (int i = 0; i <= 8; ++i) {
                const double h = 1e-2 * std::pow(10.0, i / 8.0);
                const double r = invariance_residual(*sys, ssm.table, h * dir).norm();
                hs.push_back(h);
                rs.push_back(std::max(r, 1e-300));
                rcsv.row({num(h), num(r)});
            }
            P.add(rcsv.path());
            double slope = 0.0;
            log_log_slope(hs, rs, slope);
            P.summary["residual_slope"] = slope;
            P.summary["coefficients"] = ssm.table.size();
            P.summary["resonant_multi_indices"] = ssm.resonances.size();
            if (ssm.table.max_order() >= 3 && paired) P.summary["chart_radius"] = chart_radius(ssm.table);
        });
        if (stop == Stage::Compute || c.analysis == "none") {
            P.write_manifest("ok", "");
            return P.report;
        }

        P.stage(c.analysis, [&] {
            const Index N = sys->dim();
            const Vec obs = observable_on_state(lm.observable, N);
            const double radius =
                ssm.table.max_order() >= 3 && sub.conjugate_paired() ? chart_radius(ssm.table)
                                                                      : std::numeric_limits<double>::infinity();
            if (c.analysis == "backbone") {
                double rmax = c.backbone.rho_max;
                if (rmax == 0.0) {
                    if (!std::isfinite(radius))
                        throw ValidationError("backbone.rho_max: set it explicitly (no chart radius below order 3)");
                    rmax = 0.9 * radius;
                }
                std::vector<double> grid;
                for (int i = 1; i <= c.backbone.points; ++i) grid.push_back(rmax * i / c.backbone.points);
                const auto bb = backbone_curve(ssm.table, sub, grid, lm.observable);
                Csv b(P.dir / "backbone.csv", {"rho", "frequency", "damping", "amplitude"});
                for (const auto& p : bb) b.row({num(p.rho), num(p.frequency), num(p.damping), num(p.amplitude)});
                P.add(b.path());
                if (c.plot_data) {
                    Csv pd(P.dir / "backbone_plot.csv", {"frequency", "amplitude"});
                    for (const auto& p : bb) pd.row({num(p.frequency), num(p.amplitude)});
                    P.add(pd.path());
                }
                P.summary["backbone"] = {{"rho_max", rmax},
                                         {"frequency_first", bb.front().frequency},
                                         {"frequency_last", bb.back().frequency}};
            } else if (c.analysis == "frc") {
                double lo = c.frc.omega_min, hi = c.frc.omega_max;
                if (lo == 0.0 && hi == 0.0) {
                    const double w = std::abs(sub.lambdas[0].imag());
                    lo = 0.9 * w;
                    hi = 1.1 * w;
                }
                const CVec Fa = first_order_forcing(lm.forcing, N);
                ReducedOde rom(ssm.table, sub, Fa, c.frc.epsilon, c.frc.ratios, 0.5 * (lo + hi));
                FrcOptions fo;
                fo.mode = c.frc.mode == "TV" ? FrcMode::TV : FrcMode::TI;
                fo.step.ds = c.frc.ds;
                fo.step.ds_max = c.frc.ds_max;
                fo.step.max_steps = c.frc.max_steps;
                fo.chart_radius = radius;
                fo.detect_bifurcations = c.frc.detect_bifurcations;
                std::unique_ptr<NonAutonomousCache> cache;
                if (fo.mode == FrcMode::TV) {
                    NonAutonomousOptions no;
                    no.resonant_modes = rom.forced_modes();
                    cache = std::make_unique<NonAutonomousCache>(*sys, sub, Fa, no);
                }
                std::vector<FrcPoint> frc;
                std::string failure;
                try {
                    frc = frc_continuation(rom, lo, hi, obs, fo, cache.get());
                } catch (const ContinuationError& e) {
                    frc = e.partial();
                    failure = e.what();
                }
                std::vector<std::string> head{"Omega", "amplitude", "stability", "flag", "max_real_eig", "outside_chart"};
                for (int k = 0; k < rom.pairs(); ++k) {
                    head.push_back("rho" + std::to_string(k));
                    head.push_back("theta" + std::to_string(k));
                }
                Csv f(P.dir / "frc.csv", head);
                Csv bif(P.dir / "bifurcations.csv", {"Omega", "amplitude", "flag", "confirmed"});
                int sn = 0, hb = 0, confirmed = 0;
                for (const FrcPoint& p : frc) {
                    std::vector<std::string> row{num(p.Omega),       num(p.out_amp),         to_string(p.stability),
                                                 to_string(p.flag),  num(p.max_real_eig),    p.outside_chart ? "1" : "0"};
                    for (Index k = 0; k < p.rho.size(); ++k) {
                        row.push_back(num(p.rho[k]));
                        row.push_back(num(p.theta[k]));
                    }
                    f.row(row);
                    if (p.flag == BifurcationFlag::Regular) continue;
                    (p.flag == BifurcationFlag::SN ? sn : hb)++;
                    bool ok = false;
                    if (c.frc.verify_bifurcations) ok = verify_bifurcation(rom, p).confirmed;
                    confirmed += ok;
                    bif.row({num(p.Omega), num(p.out_amp), to_string(p.flag),
                             c.frc.verify_bifurcations ? (ok ? "1" : "0") : ""});
                }
                P.add(f.path());
                P.add(bif.path());
                if (c.plot_data) {
                    // Blank lines separate runs of equal stability (gnuplot "index" blocks).
                    const fs::path pp = P.dir / "frc_plot.dat";
                    std::ofstream pd(pp);
                    pd << "# Omega amplitude stable\n";
                    for (std::size_t i = 0; i < frc.size(); ++i) {
                        if (i > 0 && frc[i].stability != frc[i - 1].stability) {
                            // Repeat the switching point so segments join.
                            pd << num(frc[i].Omega) << ' ' << num(frc[i].out_amp) << ' '
                               << (frc[i - 1].stability == Stability::Stable) << "\n\n\n";
                        }
                        pd << num(frc[i].Omega) << ' ' << num(frc[i].out_amp) << ' '
                           << (frc[i].stability == Stability::Stable) << '\n';
                    }
                    pd.close();
                    P.add(pp);
                }
                json fj = {{"omega_min", lo},
                            {"omega_max", hi},
                            {"points", frc.size()},
                            {"saddle_nodes", sn},
                            {"hopf", hb},
                            {"dropped_terms_norm", rom.dropped_norm()}};
                if (c.frc.verify_bifurcations) fj["confirmed_bifurcations"] = confirmed;
                if (!frc.empty()) {
                    const FrcPeak pk = find_peak(frc);
                    fj["peak_omega"] = pk.Omega;
                    fj["peak_amplitude"] = pk.out_amp;
                }
                if (cache) fj["nonautonomous_solves"] = cache->solves();
                P.summary["frc"] = fj;
                if (!failure.empty()) throw NumericalError(failure);
            } else if (c.analysis == "simulate") {
                if (!sub.conjugate_paired())
                    throw ValidationError("simulate: needs a conjugate-paired master subspace");
                const int pairs = sub.dim() / 2;
                if (static_cast<int>(c.simulate.rho0.size()) != pairs)
                    throw ValidationError("simulate.rho0: needs " + std::to_string(pairs) + " entries");
                Vec rho = Eigen::Map<const Vec>(c.simulate.rho0.data(), pairs);
                Vec th = c.simulate.theta0.empty() ? Vec::Zero(pairs)
                                                   : Vec(Eigen::Map<const Vec>(c.simulate.theta0.data(), pairs));
                const CVec Fa = first_order_forcing(lm.forcing, N);
                // Unforced runs have no frame to pick; forced runs reuse frc.ratios or detect them.
                std::vector<int> ratios = c.frc.ratios;
                if (c.simulate.epsilon == 0.0) ratios.assign(static_cast<std::size_t>(pairs), 1);
                ReducedOde rom(ssm.table, sub, Fa, c.simulate.epsilon, ratios, c.simulate.omega);
                IntegrateOptions io;
                io.dt_out = c.simulate.dt_out;
                io.Omega = c.simulate.omega;
                io.chart_radius = radius;
                const RomTrajectory tr = integrate_rom(rom, conjugate_pair_point(rho, th), 0.0, c.simulate.t_end, io);
                std::vector<std::string> head{"t", "output"};
                for (int k = 0; k < pairs; ++k) {
                    head.push_back("p" + std::to_string(2 * k) + "_re");
                    head.push_back("p" + std::to_string(2 * k) + "_im");
                }
                Csv s(P.dir / "trajectory.csv", head);
                for (std::size_t i = 0; i < tr.t.size(); ++i) {
                    const double phi = c.simulate.omega * tr.t[i];
                    std::vector<std::string> row{num(tr.t[i]),
                                                 num(lift_to_physical(ssm.table, nullptr, tr.p[i], phi, 0.0, obs))};
                    for (int k = 0; k < pairs; ++k) {
                        row.push_back(num(tr.p[i][2 * k].real()));
                        row.push_back(num(tr.p[i][2 * k].imag()));
                    }
                    s.row(row);
                }
                P.add(s.path());
                P.summary["simulate"] = {{"samples", tr.t.size()},
                                         {"truncated", tr.truncated},
                                         {"t_last", tr.t.empty() ? 0.0 : tr.t.back()}};
            }
        });
        P.write_manifest("ok", "");
        return P.report;
    } catch (const ValidationError& e) {
        P.write_manifest("failed", e.what());
        throw ValidationError("stage " + P.current + ": " + e.what());
    } catch (const NumericalError& e) {
        P.write_manifest("failed", e.what());
        throw NumericalError("stage " + P.current + ": " + e.what());
    }
}

}  // namespace ssm

// Command-line front end: ssm <model|eig|compute|backbone|frc|simulate|verify> [options]
//
// Settings are resolved in this order, later wins:
//   built-in defaults < --config file < --set key=value < dedicated flags.

#include "ssm/io.hpp"
#include "ssm/run.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> model, select, out, mode, manifest, endpoint;
    std::vector<std::string> params;
    std::optional<int> order, dim, threads, points, observable_dof;
    std::optional<unsigned> seed;
    std::optional<double> rho_rel, omega_min, omega_max, epsilon, rho_max, t_end, dt_out, omega;
    std::optional<std::vector<int>> ratios;
    std::optional<std::vector<double>> rho0;
    bool plot_data = false;
    // model subcommand
    std::string export_dir;
    // verify subcommand
    bool all = false;
    double tol = 1e-10;
};

void add_common(CLI::App* app, Flags& f) {
    app->add_option("-c,--config", f.config, "JSON run configuration");
    app->add_option("--set", f.sets, "override a config field, e.g. --set frc.epsilon=0.02");
    app->add_option("--model", f.model, "built-in model id");
    app->add_option("--param", f.params, "built-in model parameter name=value");
    app->add_option("--manifest", f.manifest, "model.json of a model stored as files");
    app->add_option("--endpoint", f.endpoint, "black-box endpoint (stdio:<cmd> or tcp:<host>:<port>)");
    app->add_option("--observable-dof", f.observable_dof, "output DOF index");
    app->add_option("--order", f.order, "maximal expansion order");
    app->add_option("--dim", f.dim, "master subspace dimension (nearest selection)");
    app->add_option("--select", f.select, "nearest | pairs:i,j | window:lo,hi");
    app->add_option("--rho-rel", f.rho_rel, "near-resonance tolerance");
    app->add_option("-o,--out", f.out, "output directory");
    app->add_option("--seed", f.seed, "seed for randomized probes");
    app->add_option("--threads", f.threads, "worker cap for batched evaluations");
    app->add_flag("--plot-data", f.plot_data, "also write plot-ready files");
}

json resolve(const Flags& f, const std::string& analysis) {
    json j = ssm::RunConfig{};
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw ssm::ValidationError("cannot open config " + f.config);
        json file;
        try {
            in >> file;
        } catch (const json::exception& e) {
            throw ssm::ValidationError(f.config + ": " + e.what());
        }
        if (!file.is_object()) throw ssm::ValidationError(f.config + ": expected a JSON object");
        // A file naming a manifest replaces the default built-in model.
        if (file.contains("model") && file["model"].is_object() && file["model"].contains("manifest") &&
            !file["model"].contains("builtin"))
            j["model"]["builtin"] = "";
        j.merge_patch(file);
    }
    for (const std::string& s : f.sets) ssm::apply_override(j, s);
    if (f.model) {
        j["model"]["builtin"] = *f.model;
        j["model"]["manifest"] = "";
    }
    if (f.manifest) {
        j["model"]["manifest"] = *f.manifest;
        j["model"]["builtin"] = "";
    }
    if (f.endpoint) j["model"]["endpoint"] = *f.endpoint;
    for (const std::string& p : f.params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw ssm::ValidationError("--param expects name=value, got '" + p + "'");
        try {
            j["model"]["params"][p.substr(0, eq)] = std::stod(p.substr(eq + 1));
        } catch (const std::exception&) {
            throw ssm::ValidationError("--param " + p + ": value is not a number");
        }
    }
    if (f.observable_dof) j["model"]["observable_dof"] = *f.observable_dof;
    if (f.order) j["ssm"]["max_order"] = *f.order;
    if (f.dim) j["subspace"]["dim"] = *f.dim;
    if (f.select) j["subspace"]["select"] = *f.select;
    if (f.rho_rel) j["ssm"]["rho_rel"] = *f.rho_rel;
    if (f.out) j["output_dir"] = *f.out;
    if (f.seed) j["seed"] = *f.seed;
    if (f.threads) j["threads"] = *f.threads;
    if (f.plot_data) j["plot_data"] = true;
    if (f.omega_min) j["frc"]["omega_min"] = *f.omega_min;
    if (f.omega_max) j["frc"]["omega_max"] = *f.omega_max;
    if (f.mode) j["frc"]["mode"] = *f.mode;
    if (f.ratios) j["frc"]["ratios"] = *f.ratios;
    if (f.rho_max) j["backbone"]["rho_max"] = *f.rho_max;
    if (f.points) j["backbone"]["points"] = *f.points;
    if (f.t_end) j["simulate"]["t_end"] = *f.t_end;
    if (f.dt_out) j["simulate"]["dt_out"] = *f.dt_out;
    if (f.rho0) j["simulate"]["rho0"] = *f.rho0;
    if (f.omega) j["simulate"]["omega"] = *f.omega;
    if (f.epsilon) j[analysis == "simulate" ? "simulate" : "frc"]["epsilon"] = *f.epsilon;
    if (!analysis.empty()) j["analysis"] = analysis;
    return j;
}

void print_report(const ssm::RunReport& r) {
    std::cout << r.summary.dump(2) << '\n';
    for (const auto& p : r.files) std::cerr << "wrote " << p.string() << '\n';
    std::cerr << "wrote " << r.manifest.string() << '\n';
}

int run_verify(const Flags& f) {
    ssm::RunConfig c;
    ssm::from_json(resolve(f, "none"), c);
    ssm::validate(c);
    std::vector<std::string> ids;
    if (f.all) {
        for (const auto& info : ssm::list_builtin_models()) ids.push_back(info.id);
    } else {
        if (c.model.builtin.empty()) throw ssm::ValidationError("verify: needs a built-in (tensor-backed) model");
        ids.push_back(c.model.builtin);
    }
    fs::create_directories(c.output_dir);
    const fs::path csv = fs::path(c.output_dir) / "verify.csv";
    std::ofstream out(csv);
    out << "model,degree,count,max_rel_W,max_rel_R\n";
    double worst = 0.0;
    for (const std::string& id : ids) {
        ssm::ModelSource src = c.model;
        src.builtin = id;
        if (f.all) src.params.clear();
        const ssm::LoadedModel lm = ssm::load_model(src);
        if (!lm.tensors) {
            std::cerr << id << ": no explicit tensors, skipped\n";
            continue;
        }
        ssm::SubspaceConfig sc = c.subspace;
        // The 1:2 chain needs both modes; a single pair meets an outer resonance.
        if (f.all && id == "one_to_two_chain") sc = ssm::SubspaceConfig{4, "nearest"};
        ssm::VerifyResult v;
        try {
            ssm::FirstOrderSystem sys(lm.model);
            const ssm::ModeSelection sel = ssm::ModeSelection::parse(sc.select);
            const ssm::MasterSubspace sub = ssm::solve_master_subspace(
                sys, sel.kind == ssm::ModeSelection::Kind::Nearest ? sc.dim : 0, ssm::cplx(sc.shift_re, sc.shift_im), sel);
            ssm::SsmOptions o;
            o.max_order = c.ssm.max_order;
            o.resonance.rho_rel = c.ssm.rho_rel;
            v = ssm::verify_against_tensors(sys, lm.tensors, sub, o);
        } catch (const ssm::NumericalError& e) {
            if (!f.all) throw;
            std::cout << id << ": FAILED (" << e.what() << ")\n";
            worst = std::numeric_limits<double>::infinity();
            continue;
        }
        for (const auto& r : v.rows)
            out << id << ',' << r.degree << ',' << r.count << ',' << ssm::format_double(r.max_rel_W) << ','
                << ssm::format_double(r.max_rel_R) << '\n';
        std::cout << id << ": worst relative difference " << v.worst << (v.worst <= f.tol ? "  ok" : "  FAILED")
                  << '\n';
        worst = std::max(worst, v.worst);
    }
    std::cerr << "wrote " << csv.string() << '\n';
    return worst <= f.tol ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral submanifold reduction with black-box nonlinearities"};
    app.require_subcommand(1);
    Flags f;

    auto* model = app.add_subcommand("model", "build and validate the model; print a summary");
    add_common(model, f);
    model->add_option("--export", f.export_dir, "write M, C, K, forcing and a manifest into this directory");
    auto* eig = app.add_subcommand("eig", "master subspace and spectrum");
    add_common(eig, f);
    auto* compute = app.add_subcommand("compute", "SSM coefficients up to the given order");
    add_common(compute, f);
    auto* backbone = app.add_subcommand("backbone", "backbone curve of a single-pair SSM");
    add_common(backbone, f);
    backbone->add_option("--rho-max", f.rho_max, "largest reduced amplitude (0: 0.9 x chart radius)");
    backbone->add_option("--points", f.points, "number of amplitudes");
    auto* frc = app.add_subcommand("frc", "forced response curve by continuation");
    add_common(frc, f);
    frc->add_option("--omega-min", f.omega_min);
    frc->add_option("--omega-max", f.omega_max);
    frc->add_option("--epsilon", f.epsilon, "forcing scale");
    frc->add_option("--mode", f.mode, "TI or TV");
    frc->add_option("--ratios", f.ratios, "rotating-frame ratio per pair");
    auto* simulate = app.add_subcommand("simulate", "integrate the reduced dynamics");
    add_common(simulate, f);
    simulate->add_option("--t-end", f.t_end);
    simulate->add_option("--dt-out", f.dt_out);
    simulate->add_option("--rho0", f.rho0, "initial amplitude per pair");
    simulate->add_option("--epsilon", f.epsilon, "forcing scale");
    simulate->add_option("--omega", f.omega, "forcing frequency");
    auto* verify = app.add_subcommand("verify", "compare non-intrusive and tensor coefficients");
    add_common(verify, f);
    verify->add_flag("--all", f.all, "every tensor-backed built-in model with default parameters");
    verify->add_option("--tol", f.tol, "relative tolerance (default 1e-10)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (verify->parsed()) return run_verify(f);
        std::string analysis;
        ssm::Stage stop = ssm::Stage::Analysis;
        if (model->parsed()) stop = ssm::Stage::Model;
        if (eig->parsed()) stop = ssm::Stage::Eig;
        if (compute->parsed()) stop = ssm::Stage::Compute;
        if (backbone->parsed()) analysis = "backbone";
        if (frc->parsed()) analysis = "frc";
        if (simulate->parsed()) analysis = "simulate";
        ssm::RunConfig c;
        ssm::from_json(resolve(f, analysis), c);
        const ssm::RunReport r = ssm::run(c, stop);
        if (model->parsed() && !f.export_dir.empty()) {
            const ssm::LoadedModel lm = ssm::load_model(c.model);
            json desc = json::object();
            if (!c.model.builtin.empty()) desc = {{"kind", "builtin"}, {"id", c.model.builtin}, {"params", c.model.params}};
            const fs::path m = ssm::export_model(lm.model->with_forcing(ssm::ForcingSpec{lm.forcing, 0.0}),
                                                 f.export_dir, desc, lm.observable);
            std::cerr << "exported " << m.string() << '\n';
        }
        print_report(r);
        return 0;
    } catch (const ssm::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ssm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 3;
    }
}

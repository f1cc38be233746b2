#pragma once

#include "ssm/autonomous.hpp"
#include "ssm/models.hpp"
#include "ssm/spectral.hpp"
#include "ssm/step.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ssm {

struct ModelSource {
    std::string builtin = "duffing";  // built-in id; empty for a model on disk
    ParamMap params;
    std::string manifest;  // model.json written by export_model
    std::string endpoint;  // black-box endpoint, e.g. "stdio:./server" or "tcp:127.0.0.1:5000"
    int observable_dof = -1;  // -1 keeps the model's default output
    friend bool operator==(const ModelSource&, const ModelSource&) = default;
};

struct SubspaceConfig {
    int dim = 2;                   // ignored by pairs:/window: selections
    std::string select = "nearest";  // "nearest", "pairs:i,j" or "window:lo,hi"
    double shift_re = 0.0, shift_im = 0.0;
    friend bool operator==(const SubspaceConfig&, const SubspaceConfig&) = default;
};

struct SsmConfig {
    int max_order = 5;
    std::string style = "normal_form";
    double rho_rel = 0.05;
    bool structural_inner = true;
    bool conjugate_symmetry = true;
    bool batch = true;
    bool autoscale = true;
    friend bool operator==(const SsmConfig&, const SsmConfig&) = default;
};

struct BackboneConfig {
    double rho_max = 0.0;  // 0 picks 0.9 of the chart radius
    int points = 41;
    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct FrcConfig {
    double omega_min = 0.0, omega_max = 0.0;  // both 0 picks [0.9, 1.1] x Im(lambda_0)
    double epsilon = 0.01;
    std::string mode = "TI";  // "TI" or "TV"
    std::vector<int> ratios;  // rotating-frame ratio per pair; empty means automatic
    double ds = 1e-3, ds_max = 2e-2;
    int max_steps = 20000;
    bool detect_bifurcations = true;
    bool verify_bifurcations = true;
    friend bool operator==(const FrcConfig&, const FrcConfig&) = default;
};

struct SimulateConfig {
    double t_end = 100.0;
    double dt_out = 0.05;
    std::vector<double> rho0 = {0.1};  // per pair
    std::vector<double> theta0;        // per pair, default 0
    double epsilon = 0.0;
    double omega = 0.0;
    friend bool operator==(const SimulateConfig&, const SimulateConfig&) = default;
};

struct RunConfig {
    ModelSource model;
    SubspaceConfig subspace;
    SsmConfig ssm;
    std::string analysis = "none";  // "none", "backbone", "frc" or "simulate"
    BackboneConfig backbone;
    FrcConfig frc;
    SimulateConfig simulate;
    std::string output_dir = "ssm_out";
    bool plot_data = false;
    unsigned seed = 0;
    int threads = 1;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Unknown keys and wrong types raise ValidationError naming the field path.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Range and consistency checks; errors name the offending field path.
void validate(const RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

/// Applies "a.b.c=value" to a config document. value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Last pipeline stage to execute.
enum class Stage { Model, Eig, Compute, Analysis };

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    std::vector<StageTiming> timings;
    EvaluationStats stats;
    std::vector<std::filesystem::path> files;  // CSV and sidecar outputs
    std::filesystem::path manifest;
    nlohmann::json summary;
};

/// Executes the pipeline up to `stop`, writing CSV outputs, the coefficient
/// table sidecar and manifest.json into c.output_dir.
RunReport run(const RunConfig& c, Stage stop = Stage::Analysis);

/// A model built from a config source, with its default forcing and output.
struct LoadedModel {
    std::shared_ptr<const SecondOrderModel> model;
    std::shared_ptr<const PolynomialNonlinearity> tensors;  // null when not tensor-backed
    CVec forcing;
    Vec observable;
    std::string name;
    ParamMap params;  // resolved parameters of a built-in model
};
LoadedModel load_model(const ModelSource& src);

/// Non-intrusive vs intrusive coefficient comparison on a tensor-backed model.
struct VerifyRow {
    int degree = 0;
    std::size_t count = 0;
    double max_rel_W = 0.0;
    double max_rel_R = 0.0;
};
struct VerifyResult {
    std::vector<VerifyRow> rows;
    double worst = 0.0;
    EvaluationStats stats;
};
VerifyResult verify_against_tensors(const FirstOrderSystem& sys, std::shared_ptr<const PolynomialNonlinearity> tensors,
                                    const MasterSubspace& sub, const SsmOptions& opts);

/// 64-bit FNV-1a of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace ssm

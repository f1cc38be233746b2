#pragma once

#include "ssm/common.hpp"
#include "ssm/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace ssm {

/// Reads a real coordinate Matrix Market file. Symmetric storage is expanded.
SpMat read_matrix_market(const std::filesystem::path& path);
/// Writes a general real coordinate Matrix Market file with 17 significant digits.
void write_matrix_market(const std::filesystem::path& path, const SpMat& A);

/// Dense vector file: one value per line, or two columns (real, imaginary).
/// Blank lines and lines starting with '#' or '%' are skipped.
CVec read_dense_vector(const std::filesystem::path& path);
/// Writes one column when v is real, two columns otherwise.
void write_dense_vector(const std::filesystem::path& path, const CVec& v);

/// Writes `value` with 17 significant digits.
std::string format_double(double value);

/// Linear data of a model on disk, as listed by a model manifest.
struct ModelFiles {
    SpMat M, C, K;
    std::optional<CVec> forcing;
    double epsilon = 0.0;
    std::optional<Vec> observable;
    nlohmann::json nonlinearity;  // descriptor, e.g. {"kind": "builtin", ...} or {"kind": "external", ...}
};

/// Reads model.json and the files it names (paths relative to the manifest).
ModelFiles read_model_manifest(const std::filesystem::path& manifest);

/// Writes M.mtx, C.mtx, K.mtx, forcing.txt, observable.txt and model.json into dir.
/// Returns the manifest path.
std::filesystem::path export_model(const SecondOrderModel& model, const std::filesystem::path& dir,
                                   const nlohmann::json& nonlinearity, const std::optional<Vec>& observable = {});

}  // namespace ssm

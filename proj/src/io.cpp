#include "ssm/io.hpp"

#include <unsupported/Eigen/SparseExtra>

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace ssm {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

SpMat read_matrix_market(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open matrix file " + path.string());
    std::string line;
    std::getline(in, line);
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || lower(object) != "matrix")
        throw ValidationError(path.string() + ": missing %%MatrixMarket matrix header");
    if (lower(format) != "coordinate")
        throw ValidationError(path.string() + ": only coordinate format is supported, got " + format);
    field = lower(field);
    if (field != "real" && field != "integer" && field != "double")
        throw ValidationError(path.string() + ": unsupported field '" + field + "' (real matrices only)");
    symmetry = lower(symmetry);
    if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric")
        throw ValidationError(path.string() + ": unsupported symmetry '" + symmetry + "'");

    SpMat A;
    if (!Eigen::loadMarket(A, path.string())) throw ValidationError("cannot read matrix file " + path.string());
    if (A.rows() == 0 || A.cols() == 0) throw ValidationError(path.string() + ": empty or malformed size line");
    if (symmetry != "general") {
        // Only one triangle is stored; mirror the strictly lower part.
        const double s = symmetry == "symmetric" ? 1.0 : -1.0;
        SpMat lowerPart = A.triangularView<Eigen::StrictlyLower>();
        SpMat mirrored = s * SpMat(lowerPart.transpose());
        A = A + mirrored;
    }
    A.makeCompressed();
    return A;
}

void write_matrix_market(const fs::path& path, const SpMat& A) {
    if (!Eigen::saveMarket(A, path.string())) throw ValidationError("cannot write matrix file " + path.string());
}

CVec read_dense_vector(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open vector file " + path.string());
    std::vector<cplx> values;
    int columns = 0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#' || line[first] == '%') continue;
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof() || row.empty() || row.size() > 2)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected one or two numbers");
        if (columns == 0) columns = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != columns)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": inconsistent column count");
        values.emplace_back(row[0], columns == 2 ? row[1] : 0.0);
    }
    if (values.empty()) throw ValidationError(path.string() + ": no values");
    return Eigen::Map<CVec>(values.data(), static_cast<Index>(values.size()));
}

std::string format_double(double value) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

void write_dense_vector(const fs::path& path, const CVec& v) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write vector file " + path.string());
    const bool complex = v.imag().cwiseAbs().maxCoeff() > 0.0;
    for (Index i = 0; i < v.size(); ++i) {
        out << format_double(v[i].real());
        if (complex) out << ' ' << format_double(v[i].imag());
        out << '\n';
    }
}

ModelFiles read_model_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw ValidationError("cannot open model manifest " + manifest.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(manifest.string() + ": " + e.what());
    }
    const fs::path base = manifest.parent_path();
    auto file = [&](const char* key) -> std::optional<fs::path> {
        if (!j.contains("files") || !j["files"].contains(key)) return std::nullopt;
        return base / j["files"][key].get<std::string>();
    };
    ModelFiles mf;
    for (const char* key : {"M", "C", "K"})
        if (!file(key)) throw ValidationError(manifest.string() + ": files." + key + " is required");
    mf.M = read_matrix_market(*file("M"));
    mf.C = read_matrix_market(*file("C"));
    mf.K = read_matrix_market(*file("K"));
    const Index n = mf.M.rows();
    for (const auto& [name, A] : {std::pair{"M", &mf.M}, {"C", &mf.C}, {"K", &mf.K}})
        if (A->rows() != n || A->cols() != n)
            throw ValidationError(manifest.string() + ": " + name + " must be " + std::to_string(n) + "x" +
                                  std::to_string(n));
    if (j.contains("dofs") && j["dofs"].get<Index>() != n)
        throw ValidationError(manifest.string() + ": dofs does not match the matrix size");
    if (auto f = file("forcing")) {
        mf.forcing = read_dense_vector(*f);
        if (mf.forcing->size() != n) throw ValidationError(manifest.string() + ": forcing length mismatch");
    }
    if (auto f = file("observable")) {
        CVec o = read_dense_vector(*f);
        if (o.size() != n) throw ValidationError(manifest.string() + ": observable length mismatch");
        mf.observable = o.real();
    }
    mf.epsilon = j.value("epsilon", 0.0);
    if (mf.epsilon < 0.0) throw ValidationError(manifest.string() + ": epsilon must be >= 0");
    mf.nonlinearity = j.value("nonlinearity", nlohmann::json::object());
    return mf;
}

fs::path export_model(const SecondOrderModel& model, const fs::path& dir, const nlohmann::json& nonlinearity,
                      const std::optional<Vec>& observable) {
    fs::create_directories(dir);
    write_matrix_market(dir / "M.mtx", model.M());
    write_matrix_market(dir / "C.mtx", model.C());
    write_matrix_market(dir / "K.mtx", model.K());
    nlohmann::json j;
    j["format"] = "ssm-model";
    j["version"] = 1;
    j["dofs"] = model.dofs();
    j["files"] = {{"M", "M.mtx"}, {"C", "C.mtx"}, {"K", "K.mtx"}};
    if (model.forcing()) {
        write_dense_vector(dir / "forcing.txt", model.forcing()->amplitude);
        j["files"]["forcing"] = "forcing.txt";
        j["epsilon"] = model.forcing()->epsilon;
    }
    if (observable) {
        write_dense_vector(dir / "observable.txt", observable->cast<cplx>());
        j["files"]["observable"] = "observable.txt";
    }
    j["nonlinearity"] = nonlinearity;
    const fs::path manifest = dir / "model.json";
    std::ofstream out(manifest);
    if (!out) throw ValidationError("cannot write " + manifest.string());
    out << j.dump(2) << '\n';
    return manifest;
}

}  // namespace ssm

#include "ssm/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ssm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ssm_test_run_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

std::string error_of(const json& j) {
    try {
        RunConfig c;
        from_json(j, c);
        validate(c);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(RunConfig, JsonRoundTripIsLossless) {
    RunConfig c;
    c.model = {"spring_chain", {{"n", 3}, {"k2", 0.5}}, "", "", 1};
    c.subspace.select = "pairs:0";
    c.ssm.max_order = 7;
    c.ssm.rho_rel = 0.1;
    c.analysis = "frc";
    c.frc.omega_min = 0.8;
    c.frc.omega_max = 1.3;
    c.frc.mode = "TV";
    c.frc.ratios = {1};
    c.simulate.rho0 = {0.3};
    c.simulate.theta0 = {0.7};
    c.seed = 42;
    c.plot_data = true;
    const json j = c;
    RunConfig back;
    from_json(json::parse(j.dump()), back);
    EXPECT_EQ(back, c);

    const fs::path d = scratch_dir("cfg");
    fs::create_directories(d);
    save_run_config(c, d / "run.json");
    EXPECT_EQ(load_run_config(d / "run.json"), c);
}

TEST(RunConfig, ErrorsNameTheField) {
    EXPECT_EQ(error_of({{"ssm", {{"maxorder", 3}}}}), "ssm.maxorder: unknown field");
    EXPECT_NE(error_of({{"frc", {{"epsilon", "big"}}}}).find("frc.epsilon"), std::string::npos);
    EXPECT_NE(error_of({{"ssm", {{"max_order", 0}}}}).find("ssm.max_order"), std::string::npos);
    EXPECT_NE(error_of({{"frc", {{"mode", "XX"}}}}).find("frc.mode"), std::string::npos);
    EXPECT_NE(error_of({{"analysis", "plot"}}).find("analysis"), std::string::npos);
    EXPECT_EQ(error_of(json::object()), "");
}

TEST(RunConfig, OverridesParseJsonValues) {
    json j = RunConfig{};
    apply_override(j, "ssm.max_order=9");
    apply_override(j, "frc.mode=TV");
    apply_override(j, "frc.ratios=[1,2]");
    apply_override(j, "model.params.k2=0.25");
    RunConfig c;
    from_json(j, c);
    EXPECT_EQ(c.ssm.max_order, 9);
    EXPECT_EQ(c.frc.mode, "TV");
    EXPECT_EQ(c.frc.ratios, (std::vector<int>{1, 2}));
    EXPECT_EQ(c.model.params.at("k2"), 0.25);
    EXPECT_THROW(apply_override(j, "no_equals_sign"), ValidationError);
}

TEST(Run, OrderZeroIsRejectedBeforeAnyWork) {
    RunConfig c;
    c.ssm.max_order = 0;
    c.output_dir = scratch_dir("order0").string();
    EXPECT_THROW(run(c), ValidationError);
}

TEST(Run, DuffingBackboneFrequencyIsMonotone) {
    RunConfig c;
    c.analysis = "backbone";
    c.output_dir = scratch_dir("backbone").string();
    const RunReport r = run(c);
    const auto rows = read_csv(fs::path(c.output_dir) / "backbone.csv");
    ASSERT_EQ(rows.size(), 41u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GT(rows[i][0], rows[i - 1][0]);
        EXPECT_GT(rows[i][1], rows[i - 1][1]);  // hardening spring
    }
    EXPECT_TRUE(fs::exists(r.manifest));
}

TEST(Run, OutputsAreByteIdenticalAcrossRuns) {
    RunConfig c;
    c.model = {"spring_chain", {{"n", 3}, {"k2", 0.5}, {"k3", 1.0}}, "", "", -1};
    c.analysis = "frc";
    c.ssm.max_order = 3;
    c.seed = 7;
    c.plot_data = true;
    c.output_dir = scratch_dir("det_a").string();
    const RunReport a = run(c);
    c.output_dir = scratch_dir("det_b").string();
    const RunReport b = run(c);
    ASSERT_EQ(a.files.size(), b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        EXPECT_EQ(a.files[i].filename(), b.files[i].filename());
        EXPECT_EQ(slurp(a.files[i]), slurp(b.files[i])) << a.files[i].filename();
    }
    const json ma = json::parse(slurp(a.manifest));
    const json mb = json::parse(slurp(b.manifest));
    EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
    EXPECT_EQ(ma["status"], "ok");
}

TEST(Run, FailingStageIsRecordedInManifest) {
    RunConfig c;
    c.model.builtin = "no_such_model";
    c.output_dir = scratch_dir("fail").string();
    EXPECT_THROW(run(c), ValidationError);
    const json m = json::parse(slurp(fs::path(c.output_dir) / "manifest.json"));
    EXPECT_EQ(m["status"], "failed");
    EXPECT_EQ(m["error"]["stage"], "model");
}

TEST(Run, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

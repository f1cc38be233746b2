#include "ssm/io.hpp"
#include "ssm/models.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ssm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ssm_test_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST(MatrixMarket, RoundTripIsExact) {
    const fs::path d = scratch_dir("mtx");
    BuiltinModel b = make_pipe_conveying_fluid();
    write_matrix_market(d / "K.mtx", b.model->K());
    const SpMat K = read_matrix_market(d / "K.mtx");
    EXPECT_EQ((Mat(K) - Mat(b.model->K())).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MatrixMarket, SymmetricStorageIsExpanded) {
    const fs::path d = scratch_dir("sym");
    write_text(d / "a.mtx",
               "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 2.0\n2 1 -0.5\n2 2 3.0\n");
    const Mat A(read_matrix_market(d / "a.mtx"));
    EXPECT_DOUBLE_EQ(A(0, 1), -0.5);
    EXPECT_DOUBLE_EQ(A(1, 0), -0.5);
    EXPECT_DOUBLE_EQ(A(1, 1), 3.0);
}

TEST(MatrixMarket, AsymmetryIsPreserved) {
    const fs::path d = scratch_dir("asym");
    write_text(d / "k.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 1\n1 2 0.3\n2 1 -0.1\n2 2 2\n");
    const Mat K(read_matrix_market(d / "k.mtx"));
    EXPECT_DOUBLE_EQ(K(0, 1), 0.3);
    EXPECT_DOUBLE_EQ(K(1, 0), -0.1);
}

TEST(MatrixMarket, RejectsUnsupportedFiles) {
    const fs::path d = scratch_dir("bad");
    write_text(d / "c.mtx", "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n");
    write_text(d / "arr.mtx", "%%MatrixMarket matrix array real general\n1 1\n1\n");
    write_text(d / "junk.mtx", "hello\n");
    EXPECT_THROW(read_matrix_market(d / "c.mtx"), ValidationError);
    EXPECT_THROW(read_matrix_market(d / "arr.mtx"), ValidationError);
    EXPECT_THROW(read_matrix_market(d / "junk.mtx"), ValidationError);
    EXPECT_THROW(read_matrix_market(d / "missing.mtx"), ValidationError);
}

TEST(DenseVector, OneAndTwoColumns) {
    const fs::path d = scratch_dir("vec");
    write_text(d / "r.txt", "# forcing\n1.5\n\n-2\n");
    write_text(d / "c.txt", "1 0.5\n0 -1\n");
    const CVec r = read_dense_vector(d / "r.txt");
    ASSERT_EQ(r.size(), 2);
    EXPECT_EQ(r[1], cplx(-2.0, 0.0));
    const CVec c = read_dense_vector(d / "c.txt");
    EXPECT_EQ(c[0], cplx(1.0, 0.5));
    EXPECT_EQ(c[1], cplx(0.0, -1.0));
    write_text(d / "mixed.txt", "1\n2 3\n");
    EXPECT_THROW(read_dense_vector(d / "mixed.txt"), ValidationError);
    write_text(d / "text.txt", "1\nabc\n");
    EXPECT_THROW(read_dense_vector(d / "text.txt"), ValidationError);
}

TEST(DenseVector, RoundTripKeepsAllDigits) {
    const fs::path d = scratch_dir("vec17");
    CVec v(3);
    v << cplx(0.1, 1.0 / 3.0), cplx(-2.0 / 7.0, 0.0), cplx(1e-300, -6.02214076e23);
    write_dense_vector(d / "v.txt", v);
    EXPECT_EQ(read_dense_vector(d / "v.txt"), v);
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(ModelExport, ManifestRoundTrip) {
    const fs::path d = scratch_dir("export");
    BuiltinModel b = make_spring_chain({});
    const nlohmann::json desc{{"kind", "builtin"}, {"id", b.id}};
    const SecondOrderModel forced = b.model->with_forcing(ForcingSpec{b.forcing, 0.25});
    const fs::path manifest = export_model(forced, d, desc, b.observable);
    const ModelFiles mf = read_model_manifest(manifest);
    EXPECT_EQ((Mat(mf.M) - Mat(b.model->M())).norm(), 0.0);
    EXPECT_EQ((Mat(mf.C) - Mat(b.model->C())).norm(), 0.0);
    EXPECT_EQ((Mat(mf.K) - Mat(b.model->K())).norm(), 0.0);
    ASSERT_TRUE(mf.forcing.has_value());
    EXPECT_EQ(*mf.forcing, b.forcing);
    EXPECT_EQ(mf.epsilon, 0.25);
    ASSERT_TRUE(mf.observable.has_value());
    EXPECT_EQ(*mf.observable, b.observable);
    EXPECT_EQ(mf.nonlinearity, desc);
}

TEST(ModelExport, SizeMismatchIsReported) {
    const fs::path d = scratch_dir("mismatch");
    BuiltinModel b = make_spring_chain({});
    const fs::path manifest =
        export_model(b.model->with_forcing(ForcingSpec{b.forcing, 0.1}), d, nlohmann::json::object());
    write_text(d / "forcing.txt", "1\n2\n3\n");
    EXPECT_THROW(read_model_manifest(manifest), ValidationError);
}

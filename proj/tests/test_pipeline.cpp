#include "generators.hpp"
#include "support.hpp"

#include "tfscope/export.hpp"
#include "tfscope/pipeline.hpp"
#include "tfscope/separability.hpp"
#include "tfscope/synth.hpp"

#include <gtest/gtest.h>

using namespace tfscope;

namespace {

CharacterizationConfig small_config() {
    CharacterizationConfig c;
    c.subsample_cap = 300;
    c.tsne_perplexity = 10;
    c.tsne_max_iter = 250;
    c.tsne_exaggeration_iters = 100;
    c.tsne_runs = 2;
    c.le_dims = 3;
    return c;
}

const JointCharacterization& small_run() {
    static const JointCharacterization jc = characterize(generate_toy_cube(30, 30, 100).cube, small_config());
    return jc;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::io; // sentinel: the call did not throw
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
    const CharacterizationConfig c;
    const auto j = config_to_json(c);
    EXPECT_EQ(j["subsample_cap"], 5000);
    EXPECT_EQ(j["le_neighbors"], 10);
    EXPECT_EQ(j["le_kernel"], "heat");
    EXPECT_EQ(j["le_normalization"], "symmetric");
    EXPECT_EQ(j["tsne_runs"], 10);
    EXPECT_TRUE(j["tsne_learning_rate"].is_null());
    const auto back = config_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(config_to_json(back).dump(), j.dump());
}

TEST(Config, StrictParse) {
    const auto parse = [](const std::string& s) { return config_from_json(nlohmann::json::parse(s)); };
    EXPECT_EQ(parse(R"({"pca_k": 4, "le_kernel": "binary", "tsne_learning_rate": 200})").pca_k, 4u);
    EXPECT_EQ(parse(R"({"le_kernel": "binary"})").le_kernel, Kernel::binary);
    EXPECT_DOUBLE_EQ(*parse(R"({"tsne_learning_rate": 200})").tsne_learning_rate, 200.0);
    EXPECT_EQ(code_of([&] { parse(R"({"pca_kk": 4})"); }), Errc::format);
    EXPECT_EQ(code_of([&] { parse(R"({"pca_k": "4"})"); }), Errc::format);
    EXPECT_EQ(code_of([&] { parse(R"({"pca_k": -1})"); }), Errc::format);
    EXPECT_EQ(code_of([&] { parse(R"({"le_kernel": "gauss"})"); }), Errc::format);
    EXPECT_EQ(code_of([&] { parse(R"({"rgb_dims": [1, 2]})"); }), Errc::invalid_argument);
    EXPECT_EQ(code_of([&] { parse(R"({"tsne_runs": 1})"); }), Errc::invalid_argument);
    EXPECT_EQ(code_of([&] { parse(R"({"subsample_cap": 30000})"); }), Errc::invalid_argument);
    EXPECT_EQ(code_of([&] { parse("[1]"); }), Errc::format);
}

TEST(Config, LoadFromFile) {
    support::TempDir dir;
    write_file_atomic(dir / "c.json", R"({"subsample_cap": 123})");
    EXPECT_EQ(load_config(dir / "c.json").subsample_cap, 123u);
    write_file_atomic(dir / "bad.json", "{not json");
    EXPECT_EQ(code_of([&] { load_config(dir / "bad.json"); }), Errc::format);
    EXPECT_EQ(code_of([&] { load_config(dir / "missing.json"); }), Errc::io);
}

TEST(Pipeline, SharedSubsampleFeedsEveryMethod) {
    const auto& jc = small_run();
    EXPECT_EQ(jc.matrix.n_samples(), 300u);
    EXPECT_EQ(jc.pca.scores.rows(), 300);
    EXPECT_EQ(jc.le.coordinates.rows(), 300);
    EXPECT_EQ(jc.le.coordinates.cols(), 3);
    EXPECT_EQ(jc.pctsne.stacked_scores.rows(), 300);
    EXPECT_EQ(jc.pctsne.realizations.size(), 2u);
    EXPECT_EQ(jc.pca.k(), 10);
    EXPECT_GT(jc.pca.variance_fractions(0) + jc.pca.variance_fractions(1), 0.99);
    EXPECT_EQ(jc.le.component_count, 1u);
}

TEST(Pipeline, NoSubsampleBelowCap) {
    auto c = small_config();
    c.subsample_cap = 1000;
    c.pca_k = 500;
    const auto m = prepare_matrix(generate_toy_cube(20, 20, 100).cube, c);
    EXPECT_EQ(m.n_samples(), 400u);
    EXPECT_EQ(run_pca(m, c).k(), 100); // clamped to the feature count
}

TEST(Pipeline, StageErrorsNameTheStage) {
    auto c = small_config();
    c.tsne_perplexity = 500; // too large for 300 samples
    try {
        characterize(generate_toy_cube(30, 30, 100).cube, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_argument);
        EXPECT_NE(std::string(e.what()).find("pctsne"), std::string::npos) << e.what();
    }
}

TEST(Export, WritesDeclaredFilesAndRoundTrips) {
    support::TempDir dir;
    const auto& jc = small_run();
    const auto written = write_characterization(jc, dir.path());
    for (const auto& name : {"pca.csv", "pca.json", "pca_dim1.pgm", "pca_rgb.ppm", "le.csv", "le.json", "le_rgb.ppm",
                             "pctsne.csv", "pctsne.json", "pctsne_rgb.ppm", "config.json"})
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    EXPECT_EQ(written.size(), 13u);

    const auto t = read_tfs_csv(dir / "pca.csv");
    ASSERT_EQ(t.coords.rows(), 300);
    EXPECT_EQ(t.dim_names.front(), "dim1");
    EXPECT_EQ(t.dim_names.size(), 10u);
    for (Eigen::Index i = 0; i < 300; ++i) {
        EXPECT_EQ(t.sample_ids[static_cast<std::size_t>(i)], jc.matrix.sample_id(static_cast<std::size_t>(i)));
        for (Eigen::Index c = 0; c < 10; ++c) {
            const double v = jc.pca.scores(i, c);
            EXPECT_NEAR(t.coords(i, c), v, 1e-8 * std::max(1.0, std::abs(v)));
        }
    }

    const auto meta = nlohmann::json::parse(read_file(dir / "pctsne.json"));
    EXPECT_EQ(meta["method"], "pctsne");
    EXPECT_EQ(meta["seed"], 0);
    EXPECT_EQ(meta["params"]["realization_seeds"], nlohmann::json::parse("[0, 1]"));
    EXPECT_EQ(meta["variance_fractions"].size(), 4u);
    const auto le = nlohmann::json::parse(read_file(dir / "le.json"));
    EXPECT_EQ(le["params"]["neighbors"], 10);
    EXPECT_EQ(le["params"]["kernel"], "heat");
}

TEST(Export, SelectedDimsHeader) {
    RowMatrix c(2, 3);
    c << 1, 2, 3, 4, 5, 6.5;
    const auto csv = tfs_csv(c, {{0, 0}, {1, 2}}, 4, {3, 1});
    EXPECT_EQ(csv, "sample_id,y,x,dim3,dim1\n0,0,0,3,1\n6,1,2,6.5,4\n");
    EXPECT_THROW(tfs_csv(c, {{0, 0}, {1, 2}}, 4, {4}), Error);
}

TEST(Export, RerunIsByteIdentical) {
    support::TempDir a, b;
    const auto cube = generate_toy_cube(20, 20, 100).cube;
    auto c = small_config();
    c.subsample_cap = 200;
    run_characterization(cube, c, a.path());
    run_characterization(cube, c, b.path());
    for (const auto& e : fs::directory_iterator(a.path()))
        EXPECT_EQ(read_file(e.path()), read_file(b.path() / e.path().filename())) << e.path().filename();
}

TEST(Maps, HeaderAndFlatField) {
    const RowMatrix v = RowMatrix::Constant(3, 1, 2.5);
    const auto bytes = render_map_bytes(v, {{0, 0}, {0, 1}, {1, 1}}, 2, 2);
    const std::string header = "P5\n2 2\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 4);
    EXPECT_EQ(bytes.substr(0, header.size()), header);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 0]), 128);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 128);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 2]), 0); // (1,0) has no sample
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 3]), 128);

    const auto rgb = render_map_bytes(RowMatrix::Random(3, 3), {{0, 0}, {0, 1}, {1, 1}}, 2, 2);
    EXPECT_EQ(rgb.substr(0, 3), "P6\n");
    EXPECT_EQ(rgb.size(), std::string("P6\n2 2\n255\n").size() + 12);
    EXPECT_THROW(render_map_bytes(RowMatrix::Random(3, 2), {{0, 0}, {0, 1}, {1, 1}}, 2, 2), Error);
}

TEST(Maps, PercentileStretch) {
    RowMatrix v(101, 1);
    std::vector<GridIndex> map;
    for (Eigen::Index i = 0; i < 101; ++i) {
        v(i, 0) = static_cast<double>(i);
        map.push_back({0, static_cast<std::uint32_t>(i)});
    }
    const auto bytes = render_map_bytes(v, map, 1, 101);
    const std::size_t off = std::string("P5\n101 1\n255\n").size();
    EXPECT_EQ(static_cast<unsigned char>(bytes[off + 0]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[off + 2]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[off + 50]), 128);
    EXPECT_EQ(static_cast<unsigned char>(bytes[off + 98]), 255);
    EXPECT_EQ(static_cast<unsigned char>(bytes[off + 100]), 255);
    EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 50), 2.0);
    EXPECT_DOUBLE_EQ(percentile({0, 10}, 25), 2.5);
}

TEST(Maps, SpatialGateContrastInFirstComponent) {
    ToyOptions opt;
    opt.spatial_gate = true;
    const auto toy = generate_toy_cube(100, 100, 100, 42, opt);
    const auto m = flatten(toy.cube);
    const auto d = pca_eof(m, 3);
    // Mean PC score differs between the gated and ungated halves on some leading component.
    double best = 0.0;
    for (Eigen::Index c = 0; c < 3; ++c) {
        double left = 0.0, right = 0.0;
        for (std::size_t i = 0; i < m.n_samples(); ++i)
            (m.index_map()[i].x < 50 ? left : right) += d.scores(static_cast<Eigen::Index>(i), c);
        const double sd = std::sqrt(d.eigenvalues(c));
        best = std::max(best, std::abs(left - right) / 5000.0 / sd);
    }
    EXPECT_GT(best, 0.5);
}

TEST(Separability, IdenticalDistributionsScoreLow) {
    gen::Source src(103);
    const RowMatrix x = src.gaussian(1000, 2);
    std::vector<std::int64_t> labels(1000);
    for (std::size_t i = 0; i < 1000; ++i) labels[i] = i < 500 ? 1 : 2;
    const auto rep = transformed_divergence(x, labels);
    EXPECT_LT(rep.td(1, 2), 0.2);
    EXPECT_EQ(rep.td(1, 1), 0.0);
}

TEST(Separability, FarApartClassesSaturate) {
    gen::Source src(107);
    RowMatrix x = src.gaussian(1000, 2);
    std::vector<std::int64_t> labels(1000);
    for (Eigen::Index i = 0; i < 1000; ++i) {
        labels[static_cast<std::size_t>(i)] = i < 500 ? 0 : 7;
        if (i >= 500) x(i, 0) += 50.0;
    }
    const auto rep = transformed_divergence(x, labels);
    EXPECT_GT(rep.td(0, 7), 1.99);
    EXPECT_LE(rep.td(0, 7), 2.0);
    // Equal unit covariances: D reduces to the squared mean separation.
    const double d2 = (rep.means[0] - rep.means[1]).squaredNorm();
    EXPECT_NEAR(rep.divergence(0, 1), d2, 0.05 * d2);
}

TEST(Separability, AnalyticDivergence) {
    // Symmetric point sets with exactly known sample covariances.
    RowMatrix x(8, 2);
    x << 1, 0, -1, 0, 0, 1, 0, -1, 3 + 2, 0, 3 - 2, 0, 3, 2, 3, -2;
    const std::vector<std::int64_t> labels{0, 0, 0, 0, 1, 1, 1, 1};
    const auto rep = transformed_divergence(x, labels);
    // Sample covariances: (2/3) I and (8/3) I. Means differ by (3, 0).
    const double a = 2.0 / 3.0, b = 8.0 / 3.0;
    const double want = 0.5 * 2 * (a - b) * (1 / b - 1 / a) + 0.5 * (1 / a + 1 / b) * 9.0;
    EXPECT_NEAR(rep.divergence(0, 1), want, 1e-6 * want);
    EXPECT_NEAR(rep.transformed(0, 1), 2 * (1 - std::exp(-want / 8)), 1e-9);
}

TEST(Separability, PropertiesOnRandomClasses) {
    gen::Source src(109);
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = static_cast<Eigen::Index>(src.index(1, 4));
        const int k = static_cast<int>(src.index(2, 4));
        RowMatrix x(60 * k, d);
        std::vector<std::int64_t> labels;
        for (int c = 0; c < k; ++c) {
            const RowMatrix block = src.anisotropic(60, d);
            x.middleRows(60 * c, 60) = block;
            for (int i = 0; i < 60; ++i) labels.push_back(c * 3 - 2);
        }
        const auto rep = transformed_divergence(x, labels);
        EXPECT_LT((rep.transformed - rep.transformed.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(rep.transformed.minCoeff(), 0.0);
        EXPECT_LE(rep.transformed.maxCoeff(), 2.0);
        // Invariant under an invertible affine map of the coordinates.
        Eigen::MatrixXd a = Eigen::MatrixXd::Random(d, d) + 3.0 * Eigen::MatrixXd::Identity(d, d);
        RowMatrix y = x * a;
        y.rowwise() += Eigen::RowVectorXd::Random(d);
        const auto rep2 = transformed_divergence(y, labels);
        EXPECT_LT((rep.transformed - rep2.transformed).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Separability, Errors) {
    const RowMatrix x = RowMatrix::Random(6, 2);
    const std::vector<std::int64_t> two{0, 0, 0, 0, 1, 1};
    EXPECT_EQ(code_of([&] { transformed_divergence(x, two); }), Errc::class_too_small);
    const std::vector<std::int64_t> one(6, 3);
    EXPECT_EQ(code_of([&] { transformed_divergence(x, one); }), Errc::invalid_argument);
    const std::vector<std::int64_t> short_labels{0, 1};
    EXPECT_EQ(code_of([&] { transformed_divergence(x, short_labels); }), Errc::size_mismatch);
}

TEST(UnmixOutputs, FilesBesideCsv) {
    support::TempDir dir;
    const auto toy = generate_toy_cube(10, 10, 100);
    const auto m = flatten(toy.cube);
    const std::vector<std::size_t> rows{0, 1, 2};
    const auto ems = endmembers_from_samples(m, rows);
    const auto r = unmix(m, ems);
    const auto s = write_unmix_outputs(r, ems, dir / "out" / "frac.csv");
    EXPECT_TRUE(fs::exists(dir / "out" / "frac.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "frac_misfit.pgm"));
    const auto j = nlohmann::json::parse(read_file(dir / "out" / "frac_summary.json"));
    EXPECT_EQ(j["constraint"], "sum_to_one");
    EXPECT_EQ(j["provenance"][0], "sample:0");
    EXPECT_EQ(j["misfit"]["count"], 100);
    EXPECT_DOUBLE_EQ(j["misfit"]["fraction_below"].get<double>(), s.fraction_below);
}

#include "generators.hpp"
#include "support.hpp"

#include "tfscope/cube.hpp"
#include "tfscope/io.hpp"
#include "tfscope/rng.hpp"
#include "tfscope/synth.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <set>

using namespace tfscope;

namespace {

DataCube small_cube() {
    std::vector<double> v(12);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * static_cast<double>(i) - 1.0;
    return DataCube({2, 2, 3, 1}, v, {}, SampleType::f32le);
}

void write_header(const fs::path& path, const std::string& body) { write_file_atomic(path, body); }

std::string f32_payload(std::size_t count) {
    std::string bytes;
    for (std::size_t i = 0; i < count; ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(i));
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    return bytes;
}

} // namespace

TEST(Cube, ConstructorRejectsWrongValueCount) {
    try {
        DataCube({2, 2, 3, 1}, std::vector<double>(11));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::size_mismatch);
    }
}

TEST(Cube, NonFiniteOnlyMattersUnderValidCells) {
    std::vector<double> v(8, 1.0);
    v[0] = std::nan("");
    EXPECT_NO_THROW(DataCube({2, 2, 2, 1}, v, {0, 1, 1, 1}));
    try {
        DataCube({2, 2, 2, 1}, v);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::non_finite);
    }
}

TEST(Cube, AccessorsFollowYXTVarOrder) {
    std::vector<double> v(2 * 3 * 4 * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    const DataCube c({2, 3, 4, 2}, v);
    EXPECT_EQ(c.at(1, 2, 3, 1), static_cast<double>(((1 * 3 + 2) * 4 + 3) * 2 + 1));
    EXPECT_EQ(c.cell(1, 0).size(), 8u);
    EXPECT_EQ(c.cell(1, 0)[0], static_cast<double>(3 * 8));
}

TEST(CubeIo, LoadsDeclaredSize) {
    support::TempDir dir;
    write_file_atomic(dir / "c.f32", f32_payload(12));
    write_header(dir / "c.json", R"({"ny":2,"nx":2,"nt":3,"nvars":1,"dtype":"f32le","order":"y,x,t,var","data":"c.f32","mask":null})");
    const DataCube c = load_cube(dir / "c.json");
    EXPECT_EQ(c.values().size(), 12u);
    EXPECT_EQ(c.at(1, 1, 2), 11.0);
}

TEST(CubeIo, ShortPayloadIsSizeMismatch) {
    support::TempDir dir;
    write_file_atomic(dir / "c.f32", f32_payload(11));
    write_header(dir / "c.json", R"({"ny":2,"nx":2,"nt":3,"nvars":1,"dtype":"f32le","data":"c.f32","mask":null})");
    try {
        load_cube(dir / "c.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::size_mismatch);
    }
}

TEST(CubeIo, MissingFilesAreIoErrors) {
    support::TempDir dir;
    try {
        load_cube(dir / "absent.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io);
    }
    write_header(dir / "c.json", R"({"ny":1,"nx":1,"nt":1,"data":"none.f32"})");
    try {
        load_cube(dir / "c.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io);
    }
}

TEST(CubeIo, MalformedHeaderIsFormatError) {
    support::TempDir dir;
    write_header(dir / "c.json", "{not json");
    try {
        load_cube(dir / "c.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::format);
    }
}

TEST(CubeIo, NonFiniteUnderValidMaskRejectedOnLoad) {
    support::TempDir dir;
    std::string payload = f32_payload(4);
    const auto nan_bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
    for (int b = 0; b < 4; ++b) payload[static_cast<std::size_t>(b)] = static_cast<char>((nan_bits >> (8 * b)) & 0xff);
    write_file_atomic(dir / "c.f32", payload);
    write_header(dir / "c.json", R"({"ny":2,"nx":2,"nt":1,"data":"c.f32","mask":null})");
    try {
        load_cube(dir / "c.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::non_finite);
    }
    write_file_atomic(dir / "c.mask", std::string("\x00\x01\x01\x01", 4));
    write_header(dir / "c.json", R"({"ny":2,"nx":2,"nt":1,"data":"c.f32","mask":"c.mask"})");
    EXPECT_EQ(load_cube(dir / "c.json").valid_count(), 3u);
}

TEST(CubeIo, ToyRoundTripIsBitIdentical) {
    support::TempDir dir;
    for (SampleType t : {SampleType::f32le, SampleType::f64le}) {
        ToyOptions opts;
        opts.dtype = t;
        const DataCube cube = generate_toy_cube(20, 30, 100, 42, opts).cube;
        save_cube(cube, dir / "toy.json");
        const DataCube back = load_cube(dir / "toy.json");
        ASSERT_EQ(back.dims(), cube.dims());
        ASSERT_EQ(back.dtype(), t);
        for (std::size_t i = 0; i < cube.values().size(); ++i) {
            ASSERT_EQ(std::bit_cast<std::uint64_t>(back.values()[i]), std::bit_cast<std::uint64_t>(cube.values()[i]));
        }
    }
}

TEST(CubeIo, RoundTripPropertyOnRandomMaskedCubes) {
    gen::Source src(11);
    support::TempDir dir;
    for (int trial = 0; trial < 25; ++trial) {
        const auto t = src.coin() ? SampleType::f32le : SampleType::f64le;
        const DataCube cube = gen::random_cube(src, src.index(1, 6), src.index(1, 6), src.index(1, 5),
                                               src.index(1, 3), 0.3, t);
        save_cube(cube, dir / "r.json");
        const DataCube back = load_cube(dir / "r.json");
        ASSERT_EQ(back.dims(), cube.dims());
        ASSERT_TRUE(std::equal(back.mask().begin(), back.mask().end(), cube.mask().begin()));
        for (std::size_t i = 0; i < cube.values().size(); ++i) {
            const double a = cube.values()[i], b = back.values()[i];
            ASSERT_TRUE((std::isnan(a) && std::isnan(b)) || std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b));
        }
    }
}

TEST(CubeIo, AllMaskedCubeKeepsFullPayload) {
    support::TempDir dir;
    const DataCube cube({2, 3, 4, 1}, std::vector<double>(24, 2.0), std::vector<std::uint8_t>(6, 0), SampleType::f32le);
    save_cube(cube, dir / "m.json");
    EXPECT_EQ(fs::file_size(dir / "m.f32"), 24u * 4u);
    EXPECT_EQ(fs::file_size(dir / "m.mask"), 6u);
}

TEST(CubeIo, RepeatedSavesAreByteIdentical) {
    support::TempDir dir;
    const DataCube cube = small_cube();
    save_cube(cube, dir / "a.json");
    save_cube(cube, dir / "b.json");
    EXPECT_EQ(read_file(dir / "a.f32"), read_file(dir / "b.f32"));
    std::string ha = read_file(dir / "a.json"), hb = read_file(dir / "b.json");
    EXPECT_EQ(ha.replace(ha.find("a.f32"), 5, "b.f32"), hb);
    EXPECT_NE(ha.find("\"order\": \"y,x,t,var\""), std::string::npos);
}

TEST(Flatten, FullToyIsTenThousandByHundred) {
    const SampleMatrix m = flatten(generate_toy_cube().cube);
    EXPECT_EQ(m.n_samples(), 10000u);
    EXPECT_EQ(m.n_features(), 100u);
    EXPECT_EQ(m.sample_id(123), 123u);
}

TEST(Flatten, KeepsValidCellsOnly) {
    std::vector<std::uint8_t> mask(16, 0);
    for (std::size_t i = 0; i < 8; ++i) mask[i * 2] = 1;
    const DataCube c({4, 4, 3, 1}, std::vector<double>(48, 1.5), mask);
    const SampleMatrix m = flatten(c);
    EXPECT_EQ(m.n_samples(), 8u);
    for (std::size_t i = 0; i < m.n_samples(); ++i) EXPECT_EQ(m.sample_id(i) % 2, 0u);
}

TEST(Flatten, ZeroValidCellsIsError) {
    const DataCube c({2, 2, 2, 1}, std::vector<double>(8, 1.0), std::vector<std::uint8_t>(4, 0));
    try {
        flatten(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_selection);
    }
}

TEST(Flatten, PooledZscorePerVariable) {
    gen::Source src(5);
    const DataCube c = gen::random_cube(src, 5, 6, 7, 2, 0.2);
    const SampleMatrix m = flatten(c, StandardizeMode::zscore);
    for (std::size_t var = 0; var < 2; ++var) {
        double sum = 0.0, sq = 0.0;
        std::size_t count = 0;
        for (Eigen::Index i = 0; i < m.data().rows(); ++i) {
            for (std::size_t f = var; f < m.n_features(); f += 2) {
                const double v = m.data()(i, static_cast<Eigen::Index>(f));
                sum += v;
                sq += v * v;
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(std::sqrt(sq / static_cast<double>(count) - mean * mean), 1.0, 1e-12);
        EXPECT_GT(m.standardization().divisors[var], 0.0);
    }
}

TEST(Flatten, ConstantVariableUnderZscoreIsDegenerate) {
    const DataCube c({2, 2, 3, 1}, std::vector<double>(12, 4.0));
    try {
        flatten(c, StandardizeMode::zscore);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::degenerate_variable);
    }
    EXPECT_NO_THROW(flatten(c, StandardizeMode::none));
}

TEST(Flatten, UnflattenRestoresValidSeries) {
    gen::Source src(9);
    for (int trial = 0; trial < 10; ++trial) {
        const DataCube c = gen::random_cube(src, 4, 5, 6, 2, 0.25);
        for (StandardizeMode mode : {StandardizeMode::none, StandardizeMode::zscore}) {
            const DataCube back = unflatten(flatten(c, mode));
            for (std::size_t y = 0; y < 4; ++y) {
                for (std::size_t x = 0; x < 5; ++x) {
                    ASSERT_EQ(back.valid(y, x), c.valid(y, x));
                    if (!c.valid(y, x)) continue;
                    for (std::size_t f = 0; f < 12; ++f) {
                        if (mode == StandardizeMode::none) {
                            ASSERT_EQ(back.cell(y, x)[f], c.cell(y, x)[f]);
                        } else {
                            ASSERT_NEAR(back.cell(y, x)[f], c.cell(y, x)[f], 1e-12 * (1.0 + std::abs(c.cell(y, x)[f])));
                        }
                    }
                }
            }
        }
    }
}

TEST(Subsample, NoOpWhenUnderCap) {
    const SampleMatrix m = flatten(generate_toy_cube(10, 10, 20).cube);
    const SampleMatrix s = subsample(m, 200, 3);
    EXPECT_EQ(s.n_samples(), 100u);
    EXPECT_EQ(s.data(), m.data());
}

TEST(Subsample, DeterministicUniqueExactCount) {
    const SampleMatrix m = flatten(generate_toy_cube(100, 100, 5).cube);
    const SampleMatrix a = subsample(m, 5000, 7);
    const SampleMatrix b = subsample(m, 5000, 7);
    ASSERT_EQ(a.n_samples(), 5000u);
    EXPECT_EQ(a.index_map(), b.index_map());
    std::set<std::size_t> ids;
    for (std::size_t i = 0; i < a.n_samples(); ++i) {
        ids.insert(a.sample_id(i));
        ASSERT_EQ(a.data().row(static_cast<Eigen::Index>(i)), m.data().row(static_cast<Eigen::Index>(a.sample_id(i))));
        if (i > 0) {
            ASSERT_LT(a.sample_id(i - 1), a.sample_id(i));
        }
    }
    EXPECT_EQ(ids.size(), 5000u);
    EXPECT_NE(subsample(m, 5000, 8).index_map(), a.index_map());
}

TEST(Subsample, SelectionIsRoughlyUniform) {
    // Each cell is kept with probability 1/2; over 40 seeds the per-half counts stay balanced.
    const SampleMatrix m = flatten(generate_toy_cube(20, 20, 2).cube);
    std::size_t low = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const SampleMatrix s = subsample(m, 200, seed);
        for (std::size_t i = 0; i < s.n_samples(); ++i) low += s.sample_id(i) < 200 ? 1 : 0;
        total += s.n_samples();
    }
    EXPECT_NEAR(static_cast<double>(low) / static_cast<double>(total), 0.5, 0.03);
}

TEST(SampleMatrix, RejectsDuplicateIndexEntries) {
    RowMatrix d = RowMatrix::Zero(2, 1);
    try {
        SampleMatrix(d, {{0, 1}, {0, 1}}, {1, 2, 1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_argument);
    }
}

TEST(Rng, StreamsAreIndependentAndRepeatable) {
    CounterRng a(42, streams::subsample), b(42, streams::subsample), c(42, streams::tsne_init);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        EXPECT_NE(x, c.next());
    }
    CounterRng u(1, 1);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = u.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Io, ParsersRejectTrailingJunk) {
    EXPECT_EQ(parse_real("1.5e3"), 1500.0);
    EXPECT_THROW(parse_real("1.5x"), Error);
    EXPECT_THROW(parse_integer("12 "), Error);
    EXPECT_EQ(split("a,,b", ',').size(), 3u);
    EXPECT_EQ(format_real(0.1234567891234, 9), "0.123456789");
}

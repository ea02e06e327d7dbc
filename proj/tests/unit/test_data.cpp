#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sign/data.hpp"
#include "sign/error.hpp"

using namespace sign;

namespace {

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels) {
    std::vector<std::uint8_t> b;
    for (std::uint32_t v : {magic, n, h, w})
        for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("sign_test_" + name)).string();
}

}  // namespace

TEST(Generate, SingleComponentMoments) {
    DatasetSpec spec;
    spec.mixture = "1:0.5,-2:0.3";
    spec.normalize = false;
    spec.count = 40000;
    Rng rng(1);
    Dataset ds = generate(spec, rng);
    auto m = column_mean(ds.samples);
    auto s = column_std(ds.samples);
    const double se = 0.3 / std::sqrt(40000.0);
    EXPECT_NEAR(m[0], 0.5, 4 * se);
    EXPECT_NEAR(m[1], -2.0, 4 * se);
    EXPECT_NEAR(s[0], 0.3, 4 * 0.3 / std::sqrt(2 * 40000.0));
}

TEST(Generate, NormalizationInvariantEveryKind) {
    for (auto kind : {DatasetKind::gaussian_mixture, DatasetKind::two_moons, DatasetKind::checkerboard2d,
                      DatasetKind::rings}) {
        DatasetSpec spec;
        spec.kind = kind;
        spec.count = 20000;
        Rng rng(2);
        Dataset ds = generate(spec, rng);
        ASSERT_EQ(ds.dim(), 2u);
        auto m = column_mean(ds.samples);
        auto s = column_std(ds.samples);
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_NEAR(m[c], 0.0, 0.05) << to_string(kind);
            EXPECT_NEAR(s[c], 1.0, 0.05) << to_string(kind);
        }
    }
}

TEST(Generate, MixtureTruthInSampleCoordinates) {
    DatasetSpec spec;
    Rng rng(3);
    Dataset ds = generate(spec, rng);
    ASSERT_TRUE(ds.mixture.has_value());
    auto m = ds.mixture->mean();
    auto v = ds.mixture->variance();
    EXPECT_NEAR(m[0], 0.0, 1e-12);
    EXPECT_NEAR(v[0], 1.0, 1e-12);
    EXPECT_NEAR(v[1], 1.0, 1e-12);
    // raw = sample * scale + shift maps back onto the configured means
    GaussianMixture raw = GaussianMixture::parse(spec.mixture);
    EXPECT_NEAR(ds.mixture->means()(0, 0) * ds.scale[0] + ds.shift[0], raw.means()(0, 0), 1e-12);
}

TEST(Generate, AnisotropicMixtureRejected) {
    DatasetSpec spec;
    spec.mixture = "0.5:5,0:0.1;0.5:-5,0:0.1";
    Rng rng(1);
    EXPECT_THROW(generate(spec, rng), ConfigError);
}

TEST(Generate, CheckerboardSquares) {
    DatasetSpec spec;
    spec.kind = DatasetKind::checkerboard2d;
    spec.count = 5000;
    Rng rng(4);
    Dataset ds = generate(spec, rng);
    for (std::size_t r = 0; r < ds.samples.rows(); ++r) {
        const double x = ds.samples(r, 0) * ds.scale[0] + ds.shift[0];
        const double y = ds.samples(r, 1) * ds.scale[1] + ds.shift[1];
        ASSERT_GE(x, -2.0 - 1e-9);
        ASSERT_LT(x, 2.0 + 1e-9);
        const long s = static_cast<long>(std::floor(x + 1e-9)) + static_cast<long>(std::floor(y + 1e-9));
        const long s2 = static_cast<long>(std::floor(x - 1e-9)) + static_cast<long>(std::floor(y - 1e-9));
        EXPECT_TRUE(((s % 2) + 2) % 2 == 0 || ((s2 % 2) + 2) % 2 == 0);
    }
}

TEST(Generate, Deterministic) {
    DatasetSpec spec;
    spec.kind = DatasetKind::two_moons;
    spec.count = 100;
    Rng a(9), b(9);
    EXPECT_EQ(generate(spec, a).samples, generate(spec, b).samples);
}

TEST(Generate, ToyImagesInPixelRange) {
    DatasetSpec spec;
    spec.kind = DatasetKind::toy_images;
    spec.count = 200;
    Rng rng(5);
    Dataset ds = generate(spec, rng);
    EXPECT_TRUE(ds.is_image());
    EXPECT_EQ(ds.dim(), 64u);
    for (double v : ds.samples.values()) EXPECT_LT(std::abs(v), 1.3);
}

TEST(Generate, UnknownKind) {
    EXPECT_THROW(parse_dataset_kind("spirals"), ConfigError);
    DatasetSpec spec;
    spec.count = 0;
    Rng rng(1);
    EXPECT_THROW(generate(spec, rng), ConfigError);
}

TEST(Idx, MagicChecked) {
    auto good = idx_images(0x803, 1, 1, 1, {7});
    EXPECT_NO_THROW(parse_idx(good));
    auto bad = idx_images(0x801, 1, 1, 1, {7});
    EXPECT_THROW(parse_idx(bad), FormatError);
}

TEST(Idx, ZeroPixelsMapToMinusOne) {
    auto b = idx_images(0x803, 3, 2, 2, std::vector<std::uint8_t>(12, 0));
    IdxImages im = parse_idx(b);
    for (double v : im.images.values()) EXPECT_EQ(v, -1.0);
}

TEST(Idx, TwoImageFixture) {
    std::vector<std::uint8_t> px = {0, 255, 51, 102, 153, 204, 1, 2, 3, 255, 254, 253, 128, 127, 0, 10, 20, 30};
    auto b = idx_images(0x803, 2, 3, 3, px);
    std::vector<std::uint8_t> lab = {0, 0, 8, 1, 0, 0, 0, 2, 4, 9};
    IdxImages im = parse_idx(b, std::span<const std::uint8_t>(lab));
    ASSERT_EQ(im.images.rows(), 2u);
    ASSERT_EQ(im.images.cols(), 9u);
    EXPECT_EQ(im.rows, 3u);
    const double want[18] = {-1.0,        1.0,         -0.6,        -0.2,        0.2,         0.6,
                             -253.0 / 255, -251.0 / 255, -249.0 / 255, 1.0,         253.0 / 255, 251.0 / 255,
                             1.0 / 255,   -1.0 / 255,  -1.0,        -235.0 / 255, -215.0 / 255, -195.0 / 255};
    for (std::size_t i = 0; i < 18; ++i) EXPECT_NEAR(im.images[i], want[i], 1e-15) << i;
    EXPECT_EQ(im.labels, (std::vector<std::uint8_t>{4, 9}));
}

TEST(Idx, TruncationReportsOffset) {
    auto b = idx_images(0x803, 2, 3, 3, std::vector<std::uint8_t>(10, 5));
    try {
        parse_idx(b);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 26u);
        EXPECT_NE(std::string(e.what()).find("26"), std::string::npos);
    }
    std::vector<std::uint8_t> header_only = {0, 0, 8};
    EXPECT_THROW(parse_idx(header_only), FormatError);
}

TEST(Idx, FileRoundTrip) {
    auto b = idx_images(0x803, 1, 2, 2, {0, 255, 0, 255});
    const std::string p = temp_path("img.idx");
    write_file(p, b);
    IdxImages im = load_idx(p);
    EXPECT_EQ(im.images[1], 1.0);
    std::remove(p.c_str());
    EXPECT_THROW(load_idx(temp_path("missing.idx")), IoError);
}

TEST(Csv, RoundTripBitwise) {
    Rng rng(6);
    Tensor x = gaussian({50, 3}, rng);
    x[0] = 1e-300;
    x[1] = -123456789.123456789;
    x[2] = 1.0 / 3.0;
    EXPECT_EQ(parse_samples(samples_to_csv(x)), x);
    EXPECT_EQ(parse_samples(samples_to_csv(x, true)), x);
    const std::string p = temp_path("s.csv");
    save_samples(p, x);
    EXPECT_EQ(load_samples(p), x);
    std::remove(p.c_str());
}

TEST(Csv, HeaderAndMalformedLine) {
    Tensor x = Tensor::matrix(1, 2, {1, 2});
    EXPECT_EQ(samples_to_csv(x).substr(0, 6), "x0,x1\n");
    try {
        parse_samples("x0,x1\n1,2\n3,oops\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    EXPECT_THROW(parse_samples("x0,x1\n1\n"), FormatError);
    EXPECT_THROW(parse_samples("a,b\n1,2\n"), FormatError);
}

TEST(Pgm, HeaderAndClamp) {
    Tensor img = Tensor::matrix(1, 6, {-5, -1, 0, 1, 5, 0.5});
    auto bytes = to_pgm(img, 2, 3);
    const std::string header = "P5\n3 2\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 6);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
    const std::uint8_t* p = bytes.data() + header.size();
    EXPECT_EQ(p[0], 0);
    EXPECT_EQ(p[1], 0);
    EXPECT_EQ(p[2], 128);
    EXPECT_EQ(p[3], 255);
    EXPECT_EQ(p[4], 255);
    EXPECT_EQ(p[5], 191);
}

TEST(Pgm, Grid) {
    Tensor imgs({5, 4}, 1.0);
    auto bytes = to_pgm(imgs, 2, 2, 2);
    const std::string header = "P5\n4 6\n255\n";
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
    EXPECT_THROW(to_pgm(imgs, 3, 3), DimensionError);
}

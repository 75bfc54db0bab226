#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lcq/datasets.hpp"
#include "lcq/models.hpp"

using namespace lcq;

namespace {

std::vector<unsigned char> be(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
            static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& out, const std::vector<unsigned char>& more) {
    out.insert(out.end(), more.begin(), more.end());
}

// Two 2x3 images with pixel value = 10*image + 3*row + col, plus labels (7, 2).
std::vector<unsigned char> image_fixture() {
    std::vector<unsigned char> b;
    append(b, be(0x803));
    append(b, be(2));
    append(b, be(2));
    append(b, be(3));
    for (int i = 0; i < 2; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) b.push_back(static_cast<unsigned char>(10 * i + 3 * r + c));
    return b;
}

std::vector<unsigned char> label_fixture(std::uint32_t count = 2) {
    std::vector<unsigned char> b;
    append(b, be(0x801));
    append(b, be(count));
    b.push_back(7);
    b.push_back(2);
    return b;
}

std::string write_temp(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto path = std::filesystem::temp_directory_path() / ("lcq_test_" + name);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path.string();
}

}  // namespace

TEST(Downscale, TapsAreNormalizedAndSymmetric) {
    const auto t = downscale_taps();
    EXPECT_NEAR(t[0] + t[1] + t[2] + t[3], 1.0, 1e-15);
    EXPECT_EQ(t[0], t[3]);
    EXPECT_EQ(t[1], t[2]);
    // Catmull-Rom at 0.75 and 0.25: 0.2265625 and 0.8671875.
    EXPECT_NEAR(t[0], 0.2265625 / 2.1875, 1e-15);
}

TEST(SuperRes, ConstantImageStaysConstant) {
    const Matrix img = Matrix::Constant(28 * 28, 2, 0.37);
    const auto s = gen_superres(img, 0.0, 1);
    ASSERT_EQ(s.X.rows(), 196);
    ASSERT_EQ(s.Y.rows(), 784);
    EXPECT_LT((s.X.array() - 0.37).abs().maxCoeff(), 1e-15);
}

TEST(SuperRes, Deterministic) {
    const Matrix img = gen_stroke_images(5, 16, 3);
    const auto a = gen_superres(img, 0.1, 9), b = gen_superres(img, 0.1, 9), c = gen_superres(img, 0.1, 10);
    EXPECT_EQ(a.X, b.X);
    EXPECT_NE(a.X, c.X);
    EXPECT_EQ(gen_stroke_images(5, 16, 3), img);
}

TEST(SuperRes, RejectsOddOrNonSquare) {
    EXPECT_THROW(gen_superres(Matrix::Zero(49, 1), 0.0, 1), ConfigError);
    EXPECT_THROW(gen_superres(Matrix::Zero(50, 1), 0.0, 1), ConfigError);
}

TEST(SuperRes, StrokeImagesInUnitRange) {
    const Matrix img = gen_stroke_images(20, 28, 1);
    EXPECT_GE(img.minCoeff(), 0.0);
    EXPECT_LE(img.maxCoeff(), 1.0);
    EXPECT_GT(img.maxCoeff(), 0.9);
}

TEST(SuperRes, OlsWeightsClusterAtZeroWithPositiveModes) {
    const auto data = gen_superres(gen_stroke_images(1000, 28, 7), 0.01, 11);
    const LinearRegressionModel m(data);
    const Vector w = m.solve_ols();
    const auto ws = m.layout().weights(w, 0);
    std::size_t near_zero = 0, far_pos = 0, far_neg = 0;
    std::vector<int> tail(15, 0);  // 0.1-wide bins covering [0.5, 2.0)
    for (double x : ws) {
        if (std::abs(x) < 0.1) ++near_zero;
        if (x > 0.85) ++far_pos;
        if (x < -0.85) ++far_neg;
        if (x >= 0.5 && x < 2.0) ++tail[static_cast<std::size_t>((x - 0.5) / 0.1)];
    }
    EXPECT_GT(near_zero / static_cast<double>(ws.size()), 0.6);
    EXPECT_GT(far_pos, 5 * far_neg);
    bool secondary_mode = false;
    for (std::size_t i = 1; i < tail.size(); ++i) secondary_mode |= tail[i] > tail[i - 1] + 10;
    EXPECT_TRUE(secondary_mode);
}

TEST(Idx, HandcraftedFixtureRoundTrip) {
    const Matrix img = parse_idx_images(image_fixture());
    ASSERT_EQ(img.rows(), 6);
    ASSERT_EQ(img.cols(), 2);
    for (int i = 0; i < 2; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(img(c * 2 + r, i), (10 * i + 3 * r + c) / 255.0);
    EXPECT_EQ(parse_idx_labels(label_fixture()), (std::vector<int>{7, 2}));
}

TEST(Idx, LoadScalesAndSubtractsMean) {
    const auto pi = write_temp("img", image_fixture()), pl = write_temp("lbl", label_fixture());
    const auto s = load_idx(pi, pl);
    EXPECT_TRUE(s.normalized);
    EXPECT_EQ(s.labels, (std::vector<int>{7, 2}));
    // Pixel (r=0,c=0): raw values 0 and 10, mean 5.
    EXPECT_NEAR(s.images(0, 0), -5.0 / 255.0, 1e-15);
    EXPECT_NEAR(s.images(0, 1), 5.0 / 255.0, 1e-15);
    EXPECT_LT(s.images.rowwise().sum().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Idx, CountMismatchIsError) {
    const auto pi = write_temp("img2", image_fixture());
    auto lbl = label_fixture(3);
    lbl.push_back(1);
    const auto pl = write_temp("lbl2", lbl);
    EXPECT_THROW(load_idx(pi, pl), ParseError);
}

TEST(Idx, MalformedFilesAreParseErrors) {
    EXPECT_THROW(parse_idx_images({}), ParseError);
    EXPECT_THROW(parse_idx_labels({}), ParseError);
    auto bad = image_fixture();
    bad[3] = 0x01;
    EXPECT_THROW(parse_idx_images(bad), ParseError);
    auto trunc = image_fixture();
    trunc.pop_back();
    EXPECT_THROW(parse_idx_images(trunc), ParseError);
    EXPECT_THROW(parse_idx_images({0, 0, 8}), ParseError);
    auto lbl = label_fixture();
    lbl.push_back(0);
    EXPECT_THROW(parse_idx_labels(lbl), ParseError);
    EXPECT_THROW(parse_idx_labels(image_fixture()), ParseError);
}

TEST(Idx, MissingFileIsIoError) {
    EXPECT_THROW(load_idx("/nonexistent/a", "/nonexistent/b"), IoError);
}

TEST(Normalization, SecondNormalizationRejected) {
    auto s = gen_synthetic_classes({}, 1);
    normalize(s);
    EXPECT_LT(s.images.rowwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(normalize(s), ConfigError);
    auto [tr, te] = split_set(s, 0.9, 2);
    EXPECT_TRUE(tr.normalized);
    EXPECT_THROW(normalize(te), ConfigError);
}

TEST(Synthetic, Deterministic) {
    SyntheticClassConfig cfg;
    cfg.n = 300;
    const auto a = gen_synthetic_classes(cfg, 4), b = gen_synthetic_classes(cfg, 4), c = gen_synthetic_classes(cfg, 5);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.images, c.images);
}

TEST(Synthetic, LabelHistogramNearUniform) {
    SyntheticClassConfig cfg;
    cfg.n = 20000;
    const auto s = gen_synthetic_classes(cfg, 8);
    std::vector<int> h(10, 0);
    for (int y : s.labels) ++h[static_cast<std::size_t>(y)];
    for (int c : h) EXPECT_LT(std::abs(c - 2000), 3 * std::sqrt(20000.0));
}

TEST(Synthetic, LargeSeparationIsLinearlySeparable) {
    SyntheticClassConfig cfg;
    cfg.n_classes = 4;
    cfg.d = 10;
    cfg.n = 400;
    cfg.separation = 200.0;
    auto s = gen_synthetic_classes(cfg, 2);
    normalize(s);
    const MlpModel m({10, 4}, Activation::tanh, s);
    SgdConfig sgd;
    sgd.lr = 0.01;
    sgd.batch_size = 32;
    const Vector w = train_reference(m, m.initial_weights(1), sgd, 20);
    EXPECT_EQ(m.error(w), 0.0);
}

TEST(Synthetic, RejectsSingleClass) {
    SyntheticClassConfig cfg;
    cfg.n_classes = 1;
    EXPECT_THROW(gen_synthetic_classes(cfg, 1), ConfigError);
}

TEST(Split, SizesAndTags) {
    SyntheticClassConfig cfg;
    cfg.n = 101;
    const auto s = gen_synthetic_classes(cfg, 1);
    const auto [tr, te] = split_set(s, 0.9, 3);
    EXPECT_EQ(tr.n(), 91);
    EXPECT_EQ(te.n(), 10);
    EXPECT_EQ(te.split, Split::test);
    EXPECT_EQ(tr.labels.size(), 91u);
}

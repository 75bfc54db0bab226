#pragma once

// Data sources: super-resolution regression pairs, IDX image/label files and
// synthetic Gaussian class blobs.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lcq/error.hpp"

namespace lcq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

/// Low-res inputs X (d_in x N) paired with high-res targets Y (d_out x N).
struct RegressionPairSet {
    Matrix X;
    Matrix Y;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::string kernel;

    Eigen::Index n() const { return X.cols(); }
};

/// Column-per-sample images with labels. `normalized` records that the
/// per-pixel mean has been subtracted so it cannot happen twice.
struct LabeledImageSet {
    Matrix images;
    std::vector<int> labels;
    Split split = Split::train;
    int n_classes = 10;
    bool normalized = false;

    Eigen::Index d() const { return images.rows(); }
    Eigen::Index n() const { return images.cols(); }
};

/// Per-pixel mean over the set.
inline Vector pixel_mean(const LabeledImageSet& s) {
    if (s.n() == 0) return Vector::Zero(s.d());
    return s.images.rowwise().mean();
}

/// Subtracts `mean` from every column. Throws if already normalized.
inline void subtract_mean(LabeledImageSet& s, const Vector& mean) {
    if (s.normalized) throw ConfigError(std::string("dataset split '") + to_string(s.split) + "' is already normalized");
    if (mean.size() != s.d()) throw ConfigError("subtract_mean: mean has wrong dimension");
    s.images.colwise() -= mean;
    s.normalized = true;
}

inline void normalize(LabeledImageSet& s) { subtract_mean(s, pixel_mean(s)); }

/// Deterministic shuffle and split; the first set gets round(frac * N) samples.
inline std::pair<LabeledImageSet, LabeledImageSet> split_set(const LabeledImageSet& s, double train_frac,
                                                             std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("split_set: train_frac must be in (0,1)");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(s.n()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(s.n())));
    auto take = [&](std::size_t from, std::size_t to, Split tag) {
        LabeledImageSet out;
        out.images.resize(s.d(), static_cast<Eigen::Index>(to - from));
        out.labels.resize(to - from);
        for (std::size_t i = from; i < to; ++i) {
            out.images.col(static_cast<Eigen::Index>(i - from)) = s.images.col(idx[i]);
            out.labels[i - from] = s.labels[static_cast<std::size_t>(idx[i])];
        }
        out.split = tag;
        out.n_classes = s.n_classes;
        out.normalized = s.normalized;
        return out;
    };
    return {take(0, n_train, Split::train), take(n_train, idx.size(), Split::test)};
}

// ---------------------------------------------------------------------------
// Super-resolution pairs

/// Catmull-Rom cubic evaluated at the four source-pixel centres that fall
/// under one output pixel when halving the resolution, normalized to sum 1.
inline std::array<double, 4> downscale_taps() {
    auto cr = [](double x) {
        x = std::abs(x);
        if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
        if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
        return 0.0;
    };
    std::array<double, 4> t{cr(0.75), cr(0.25), cr(0.25), cr(0.75)};
    const double s = t[0] + t[1] + t[2] + t[3];
    for (double& v : t) v /= s;
    return t;
}

inline const char* downscale_kernel_name() { return "catmull-rom 4-tap separable, factor 2, clamped borders"; }

/// Halves a side x side column-major image with the separable 4-tap kernel.
inline Vector downscale2(const Eigen::Ref<const Vector>& img, int side) {
    const auto taps = downscale_taps();
    const int lo = side / 2;
    auto at = [&](int r, int c) {
        r = std::clamp(r, 0, side - 1);
        c = std::clamp(c, 0, side - 1);
        return img[c * side + r];
    };
    Vector out(lo * lo);
    for (int c = 0; c < lo; ++c) {
        for (int r = 0; r < lo; ++r) {
            double acc = 0.0;
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) acc += taps[a] * taps[b] * at(2 * r - 1 + a, 2 * c - 1 + b);
            out[c * lo + r] = acc;
        }
    }
    return out;
}

/// Builds (low-res + noise, high-res) pairs from square images stored one
/// per column.
inline RegressionPairSet gen_superres(const Matrix& images, double noise_sigma, std::uint64_t seed) {
    const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(images.rows()))));
    if (static_cast<Eigen::Index>(side) * side != images.rows()) throw ConfigError("gen_superres: images must be square");
    if (side % 2 != 0) throw ConfigError("gen_superres: image side must be even, got " + std::to_string(side));
    if (images.cols() < 1) throw ConfigError("gen_superres: need at least one image");
    if (!(noise_sigma >= 0.0)) throw ConfigError("gen_superres: noise_sigma must be >= 0");

    RegressionPairSet out;
    out.Y = images;
    out.X.resize((side / 2) * (side / 2), images.cols());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index n = 0; n < images.cols(); ++n) {
        out.X.col(n) = downscale2(images.col(n), side);
        if (noise_sigma > 0.0)
            for (Eigen::Index i = 0; i < out.X.rows(); ++i) out.X(i, n) += noise_sigma * noise(rng);
    }
    out.noise_sigma = noise_sigma;
    out.seed = seed;
    out.kernel = downscale_kernel_name();
    return out;
}

/// Handwriting-like grayscale images in [0,1]: one to three quadratic
/// Bezier strokes drawn with a Gaussian brush.
inline Matrix gen_stroke_images(int count, int side, std::uint64_t seed) {
    if (count < 1 || side < 4) throw ConfigError("gen_stroke_images: need count >= 1 and side >= 4");
    std::mt19937_64 rng(seed);
    const double margin = side / 7.0;
    std::uniform_real_distribution<double> pos(margin, side - 1 - margin);
    std::uniform_real_distribution<double> width(0.7, 1.3);
    std::uniform_int_distribution<int> nstrokes(1, 3);
    constexpr int samples = 24;

    Matrix out = Matrix::Zero(side * side, count);
    std::vector<std::array<double, 2>> pts;
    for (int n = 0; n < count; ++n) {
        pts.clear();
        const int k = nstrokes(rng);
        std::vector<double> sig;
        for (int s = 0; s < k; ++s) {
            const double x0 = pos(rng), y0 = pos(rng), x1 = pos(rng), y1 = pos(rng), x2 = pos(rng), y2 = pos(rng);
            const double w = width(rng);
            for (int t = 0; t < samples; ++t) {
                const double u = t / static_cast<double>(samples - 1), v = 1.0 - u;
                pts.push_back({v * v * x0 + 2 * u * v * x1 + u * u * x2, v * v * y0 + 2 * u * v * y1 + u * u * y2});
                sig.push_back(w);
            }
        }
        for (int c = 0; c < side; ++c) {
            for (int r = 0; r < side; ++r) {
                double best = 0.0;
                for (std::size_t p = 0; p < pts.size(); ++p) {
                    const double dx = c - pts[p][0], dy = r - pts[p][1];
                    best = std::max(best, std::exp(-(dx * dx + dy * dy) / (2.0 * sig[p] * sig[p])));
                }
                out(c * side + r, n) = best;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX files

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
    if (b.size() < off + 4) throw ParseError(what + ": truncated header at byte " + std::to_string(off));
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

/// Parses an IDX3 unsigned-byte image file. Pixels are divided by 255;
/// returns (rows*cols) x N with column-major pixels per image.
inline Matrix parse_idx_images(const std::vector<unsigned char>& b, const std::string& what = "images") {
    if (b.empty()) throw ParseError(what + ": empty file");
    const auto magic = detail::be32(b, 0, what);
    if (magic != idx_images_magic) throw ParseError(what + ": bad magic 0x" + [&] {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%08x", magic);
        return std::string(buf);
    }());
    const std::size_t n = detail::be32(b, 4, what), rows = detail::be32(b, 8, what), cols = detail::be32(b, 12, what);
    const std::size_t need = 16 + n * rows * cols;
    if (b.size() < need)
        throw ParseError(what + ": truncated, expected " + std::to_string(need) + " bytes, got " + std::to_string(b.size()));
    if (b.size() > need) throw ParseError(what + ": " + std::to_string(b.size() - need) + " trailing bytes");
    Matrix out(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                out(static_cast<Eigen::Index>(c * rows + r), static_cast<Eigen::Index>(i)) =
                    b[16 + i * rows * cols + r * cols + c] / 255.0;
    return out;
}

inline std::vector<int> parse_idx_labels(const std::vector<unsigned char>& b, const std::string& what = "labels") {
    if (b.empty()) throw ParseError(what + ": empty file");
    if (detail::be32(b, 0, what) != idx_labels_magic) throw ParseError(what + ": bad magic");
    const std::size_t n = detail::be32(b, 4, what);
    if (b.size() != 8 + n)
        throw ParseError(what + ": expected " + std::to_string(8 + n) + " bytes, got " + std::to_string(b.size()));
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = b[8 + i];
    return out;
}

/// Reads an image/label IDX pair, scales pixels to [0,1] and subtracts the
/// per-pixel mean.
inline LabeledImageSet load_idx(const std::string& path_images, const std::string& path_labels,
                                Split split = Split::train) {
    LabeledImageSet s;
    s.images = parse_idx_images(detail::read_file(path_images), path_images);
    s.labels = parse_idx_labels(detail::read_file(path_labels), path_labels);
    if (static_cast<Eigen::Index>(s.labels.size()) != s.images.cols())
        throw ParseError("label count " + std::to_string(s.labels.size()) + " does not match image count " +
                         std::to_string(s.images.cols()));
    for (int l : s.labels)
        if (l < 0 || l > 9) throw ParseError(path_labels + ": label " + std::to_string(l) + " outside 0..9");
    s.split = split;
    s.n_classes = 10;
    normalize(s);
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic classification

struct SyntheticClassConfig {
    int n_classes = 10;
    int d = 64;
    int n = 6000;
    double separation = 3.0;   // class-mean norm in units of the mean noise level
    double noise_spread = 1.0; // log-normal spread of per-direction noise scales
};

/// Gaussian class blobs. Class means are random directions of length
/// `separation`; the noise is anisotropic, with log-normal per-direction
/// scales in a random rotated basis. Labels are drawn uniformly.
inline LabeledImageSet gen_synthetic_classes(const SyntheticClassConfig& cfg, std::uint64_t seed) {
    if (cfg.n_classes < 2) throw ConfigError("gen_synthetic_classes: n_classes must be >= 2");
    if (cfg.d < 1 || cfg.n < 1) throw ConfigError("gen_synthetic_classes: d and n must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const int d = cfg.d;

    Matrix means(d, cfg.n_classes);
    for (int c = 0; c < cfg.n_classes; ++c) {
        for (int i = 0; i < d; ++i) means(i, c) = g(rng);
        means.col(c) *= cfg.separation / means.col(c).norm();
    }
    Matrix gauss(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) gauss(i, j) = g(rng);
    const Matrix rot = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
    Vector scales(d);
    for (int i = 0; i < d; ++i) scales[i] = std::exp(cfg.noise_spread * g(rng));
    scales /= std::sqrt(scales.squaredNorm() / d);

    LabeledImageSet s;
    s.images.resize(d, cfg.n);
    s.labels.resize(static_cast<std::size_t>(cfg.n));
    s.n_classes = cfg.n_classes;
    std::uniform_int_distribution<int> label(0, cfg.n_classes - 1);
    Vector eps(d);
    for (int n = 0; n < cfg.n; ++n) {
        const int y = label(rng);
        for (int i = 0; i < d; ++i) eps[i] = scales[i] * g(rng);
        s.images.col(n) = means.col(y) + rot * eps;
        s.labels[static_cast<std::size_t>(n)] = y;
    }
    return s;
}

}  // namespace lcq

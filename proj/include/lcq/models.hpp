#pragma once

// Loss models for the L step: closed-form linear regression and a dense
// feedforward softmax classifier trained by minibatch SGD.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcq/datasets.hpp"
#include "lcq/error.hpp"
#include "lcq/penalty.hpp"

namespace lcq {

/// One dense layer: a rows x cols weight matrix followed by `rows` biases.
struct LayerShape {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool quantizable = true;

    bool operator==(const LayerShape&) const = default;
};

/// Flat parameter vector layout. Layer l occupies a contiguous block:
/// weights in column-major order, then biases.
class ParamLayout {
public:
    ParamLayout() = default;
    explicit ParamLayout(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
        Eigen::Index off = 0;
        for (const auto& l : layers_) {
            if (l.rows < 1 || l.cols < 1) throw ConfigError("layer shapes must be positive");
            w_off_.push_back(off);
            off += l.rows * l.cols;
            b_off_.push_back(off);
            off += l.rows;
        }
        total_ = off;
    }

    std::size_t num_layers() const { return layers_.size(); }
    const std::vector<LayerShape>& layers() const { return layers_; }
    const LayerShape& layer(std::size_t l) const { return layers_.at(l); }
    Eigen::Index total() const { return total_; }
    Eigen::Index weight_offset(std::size_t l) const { return w_off_.at(l); }
    Eigen::Index weight_count(std::size_t l) const { return layers_.at(l).rows * layers_.at(l).cols; }
    Eigen::Index bias_offset(std::size_t l) const { return b_off_.at(l); }
    Eigen::Index bias_count(std::size_t l) const { return layers_.at(l).rows; }

    /// P1: number of quantizable weights.
    Eigen::Index quantizable_count() const {
        Eigen::Index n = 0;
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].quantizable) n += weight_count(l);
        return n;
    }
    /// P0: everything else (biases and unquantized layers).
    Eigen::Index unquantized_count() const { return total_ - quantizable_count(); }

    /// 1 on quantizable weight entries, 0 elsewhere.
    Eigen::ArrayXd penalty_mask() const {
        Eigen::ArrayXd m = Eigen::ArrayXd::Zero(total_);
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].quantizable) m.segment(w_off_[l], weight_count(l)) = 1.0;
        return m;
    }

    /// g += mu (w - target) on quantizable weights. Other entries of target
    /// are not read.
    void add_penalty_gradient(Vector& g, const Vector& w, const Vector& target, double mu) const {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (!layers_[l].quantizable) continue;
            const auto o = w_off_[l], n = weight_count(l);
            g.segment(o, n) += mu * (w.segment(o, n) - target.segment(o, n));
        }
    }

    /// ||w - target||^2 over quantizable weights.
    double penalty_norm2(const Vector& w, const Vector& target) const {
        double s = 0.0;
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].quantizable)
                s += (w.segment(w_off_[l], weight_count(l)) - target.segment(w_off_[l], weight_count(l))).squaredNorm();
        return s;
    }

    std::span<double> weights(Vector& w, std::size_t l) const {
        return {w.data() + weight_offset(l), static_cast<std::size_t>(weight_count(l))};
    }
    std::span<const double> weights(const Vector& w, std::size_t l) const {
        return {w.data() + weight_offset(l), static_cast<std::size_t>(weight_count(l))};
    }

    Eigen::Map<const Matrix> weight_matrix(const Vector& w, std::size_t l) const {
        return {w.data() + weight_offset(l), layers_.at(l).rows, layers_.at(l).cols};
    }
    Eigen::Map<Matrix> weight_matrix(Vector& w, std::size_t l) const {
        return {w.data() + weight_offset(l), layers_.at(l).rows, layers_.at(l).cols};
    }
    Eigen::Map<const Vector> bias(const Vector& w, std::size_t l) const {
        return {w.data() + bias_offset(l), layers_.at(l).rows};
    }
    Eigen::Map<Vector> bias(Vector& w, std::size_t l) const { return {w.data() + bias_offset(l), layers_.at(l).rows}; }

    void check(const Vector& w, const char* what = "parameter vector") const {
        if (w.size() != total_)
            throw ConfigError(std::string(what) + " has " + std::to_string(w.size()) + " entries, layout expects " +
                              std::to_string(total_));
    }

    bool operator==(const ParamLayout& o) const { return layers_ == o.layers_; }

private:
    std::vector<LayerShape> layers_;
    std::vector<Eigen::Index> w_off_, b_off_;
    Eigen::Index total_ = 0;
};

/// Per-layer weight matrices and bias vectors.
struct WeightStore {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

inline Vector flatten(const ParamLayout& layout, const WeightStore& s) {
    if (s.weights.size() != layout.num_layers() || s.biases.size() != layout.num_layers())
        throw ConfigError("flatten: layer count mismatch");
    Vector w(layout.total());
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        if (s.weights[l].rows() != layout.layer(l).rows || s.weights[l].cols() != layout.layer(l).cols ||
            s.biases[l].size() != layout.layer(l).rows)
            throw ConfigError("flatten: shape mismatch in layer " + std::to_string(l));
        layout.weight_matrix(w, l) = s.weights[l];
        layout.bias(w, l) = s.biases[l];
    }
    return w;
}

inline WeightStore unflatten(const ParamLayout& layout, const Vector& w) {
    layout.check(w);
    WeightStore s;
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        s.weights.emplace_back(layout.weight_matrix(w, l));
        s.biases.emplace_back(layout.bias(w, l));
    }
    return s;
}

enum class MomentumType { classical, nesterov };

inline const char* to_string(MomentumType m) { return m == MomentumType::classical ? "classical" : "nesterov"; }

/// Minibatch SGD settings. The rate for epoch (or L step) t is lr * lr_decay^t.
struct SgdConfig {
    double lr = 0.1;
    double lr_decay = 0.99;
    double momentum = 0.95;
    MomentumType momentum_type = MomentumType::nesterov;
    int batch_size = 128;
    int epochs = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd: lr must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("sgd: lr_decay must be in (0,1]");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0,1)");
        if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("sgd: epochs must be >= 1");
    }

    double rate(int t) const { return lr * std::pow(lr_decay, t); }
};

class LossModel {
public:
    virtual ~LossModel() = default;

    virtual const ParamLayout& layout() const = 0;
    virtual std::string name() const = 0;
    virtual Eigen::Index num_samples() const = 0;

    /// Training loss.
    virtual double loss(const Vector& w) const = 0;
    /// Loss averaged over the given training samples.
    virtual double batch_loss(const Vector& w, std::span<const int> batch) const = 0;
    virtual Vector gradient(const Vector& w) const = 0;
    virtual Vector batch_gradient(const Vector& w, std::span<const int> batch) const = 0;

    virtual bool has_test() const { return false; }
    virtual double test_loss(const Vector&) const { return std::numeric_limits<double>::quiet_NaN(); }
    /// Classification error in [0,1]; NaN for regression.
    virtual double error(const Vector&) const { return std::numeric_limits<double>::quiet_NaN(); }
    virtual double test_error(const Vector&) const { return std::numeric_limits<double>::quiet_NaN(); }

    /// True when l_step returns the exact minimizer.
    virtual bool exact_l_step() const { return false; }

    /// argmin_w L(w) + mu/2 ||w - target||^2 (quantizable weights only),
    /// starting from w_init. `step` indexes the outer iteration and drives
    /// the learning-rate schedule of iterative solvers.
    virtual Vector l_step(const Vector& w_init, const Vector& target, double mu, const SgdConfig& cfg,
                          int step) const = 0;

    /// Starting point for reference training.
    virtual Vector initial_weights(std::uint64_t seed) const = 0;
};

/// L(w) + mu/2 ||w - target||^2, the penalty over quantizable weights only.
inline double penalized_loss(const LossModel& m, const Vector& w, const Vector& target, double mu) {
    return m.loss(w) + 0.5 * mu * m.layout().penalty_norm2(w, target);
}

/// Gradient of the penalized objective over the full training set.
inline Vector penalized_gradient(const LossModel& m, const Vector& w, const Vector& target, double mu) {
    Vector g = m.gradient(w);
    m.layout().add_penalty_gradient(g, w, target, mu);
    return g;
}

// ---------------------------------------------------------------------------
// SGD

/// Runs `epochs` passes of shuffled minibatch SGD with momentum on
/// L(w) + mu/2 ||w - target||^2 (target may be null when mu == 0).
/// `rate_of_epoch(e)` gives the step size for epoch e. Velocity starts at 0.
inline Vector run_sgd(const LossModel& m, Vector w, const Vector* target, double mu, const SgdConfig& cfg,
                      int epochs, const std::function<double(int)>& rate_of_epoch, std::uint64_t seed) {
    cfg.validate();
    m.layout().check(w, "sgd start point");
    if (mu > 0.0 && target == nullptr) throw ConfigError("run_sgd: penalty without target");
    const auto n = static_cast<std::size_t>(m.num_samples());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    Vector v = Vector::Zero(w.size());
    Vector probe(w.size());
    const double beta = cfg.momentum;

    for (int e = 0; e < epochs; ++e) {
        const double eta = rate_of_epoch(e);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
            const std::span<const int> batch(order.data() + start, len);
            const bool nesterov = cfg.momentum_type == MomentumType::nesterov && beta > 0.0;
            if (nesterov) probe.noalias() = w + beta * v;
            const Vector& at = nesterov ? probe : w;
            Vector g = m.batch_gradient(at, batch);
            if (mu > 0.0) m.layout().add_penalty_gradient(g, at, *target, mu);
            v = beta * v - eta * g;
            w += v;
        }
        if (!w.allFinite())
            throw NumericalError(m.name() + ": SGD diverged (non-finite weights) in epoch " + std::to_string(e));
    }
    return w;
}

/// SGD at mu = 0 with the per-epoch decayed rate lr * decay^e.
inline Vector train_reference(const LossModel& m, const Vector& w0, const SgdConfig& cfg, int epochs) {
    return run_sgd(m, w0, nullptr, 0.0, cfg, epochs, [&](int e) { return cfg.rate(e); }, cfg.seed);
}

// ---------------------------------------------------------------------------
// Linear regression

/// y = W x + b with loss (1/N) sum_n ||y_n - W x_n - b||^2. Normal-equation
/// Gram matrices are cached at construction, so every L step is one
/// Cholesky factorization of size d_in + 1.
class LinearRegressionModel final : public LossModel {
public:
    explicit LinearRegressionModel(RegressionPairSet train, std::optional<RegressionPairSet> test = std::nullopt)
        : train_(std::move(train)), test_(std::move(test)) {
        if (train_.X.cols() < 1 || train_.X.cols() != train_.Y.cols())
            throw ConfigError("linear regression: X and Y must have the same positive sample count");
        if (test_ && (test_->X.rows() != train_.X.rows() || test_->Y.rows() != train_.Y.rows()))
            throw ConfigError("linear regression: test set dimensions differ from training set");
        din_ = train_.X.rows();
        dout_ = train_.Y.rows();
        layout_ = ParamLayout({LayerShape{dout_, din_, true}});
        const double s = 2.0 / static_cast<double>(train_.X.cols());
        Matrix xt(din_ + 1, train_.X.cols());
        xt.topRows(din_) = train_.X;
        xt.row(din_).setOnes();
        gram_ = s * xt * xt.transpose();
        cross_ = s * xt * train_.Y.transpose();
    }

    const ParamLayout& layout() const override { return layout_; }
    std::string name() const override { return "linear_regression"; }
    Eigen::Index num_samples() const override { return train_.X.cols(); }
    const RegressionPairSet& train() const { return train_; }

    double loss(const Vector& w) const override { return mse(w, train_.X, train_.Y); }
    bool has_test() const override { return test_.has_value(); }
    double test_loss(const Vector& w) const override {
        return test_ ? mse(w, test_->X, test_->Y) : std::numeric_limits<double>::quiet_NaN();
    }

    double batch_loss(const Vector& w, std::span<const int> batch) const override {
        const std::vector<int> idx(batch.begin(), batch.end());
        return mse(w, train_.X(Eigen::all, idx), train_.Y(Eigen::all, idx));
    }

    Vector gradient(const Vector& w) const override { return grad(w, train_.X, train_.Y); }
    Vector batch_gradient(const Vector& w, std::span<const int> batch) const override {
        const std::vector<int> idx(batch.begin(), batch.end());
        return grad(w, train_.X(Eigen::all, idx), train_.Y(Eigen::all, idx));
    }

    bool exact_l_step() const override { return true; }

    /// Solves ((2/N) X~X~' + mu D) Theta = (2/N) X~Y' + mu D T~' where
    /// X~ = [X; 1'], D = diag(1,...,1,0) leaves the bias unpenalized.
    Vector l_step(const Vector& w_init, const Vector& target, double mu, const SgdConfig&, int) const override {
        layout_.check(w_init, "l_step start point");
        if (mu < 0.0) throw ConfigError("l_step: mu must be >= 0");
        Matrix a = gram_;
        Matrix rhs = cross_;
        if (mu > 0.0) {
            layout_.check(target, "l_step target");
            a.diagonal().head(din_).array() += mu;
            rhs.topRows(din_) += mu * layout_.weight_matrix(target, 0).transpose();
        }
        const Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) throw NumericalError("linear regression: normal equations are singular");
        const Vector diag = Matrix(llt.matrixL()).diagonal();
        const double ratio = diag.minCoeff() / diag.maxCoeff();
        if (!(ratio * ratio > 1e-14))
            throw NumericalError("linear regression: normal equations are numerically singular (pivot ratio " +
                                 std::to_string(ratio) + ")");
        const Matrix theta = llt.solve(rhs);
        Vector w(layout_.total());
        layout_.weight_matrix(w, 0) = theta.topRows(din_).transpose();
        layout_.bias(w, 0) = theta.row(din_).transpose();
        if (!w.allFinite()) throw NumericalError("linear regression: non-finite solution");
        return w;
    }

    /// Ordinary least squares.
    Vector solve_ols() const {
        const Vector zero = Vector::Zero(layout_.total());
        return l_step(zero, zero, 0.0, SgdConfig{}, 0);
    }

    Vector initial_weights(std::uint64_t) const override { return Vector::Zero(layout_.total()); }

private:
    template <class XT, class YT>
    double mse(const Vector& w, const XT& x, const YT& y) const {
        layout_.check(w);
        const Matrix r = (y - layout_.weight_matrix(w, 0) * x).colwise() - layout_.bias(w, 0);
        return r.squaredNorm() / static_cast<double>(x.cols());
    }

    template <class XT, class YT>
    Vector grad(const Vector& w, const XT& x, const YT& y) const {
        layout_.check(w);
        const Matrix r = (layout_.weight_matrix(w, 0) * x - y).colwise() + layout_.bias(w, 0);
        const double s = 2.0 / static_cast<double>(x.cols());
        Vector g(layout_.total());
        layout_.weight_matrix(g, 0) = s * r * x.transpose();
        layout_.bias(g, 0) = s * r.rowwise().sum();
        return g;
    }

    RegressionPairSet train_;
    std::optional<RegressionPairSet> test_;
    Eigen::Index din_ = 0, dout_ = 0;
    ParamLayout layout_;
    Matrix gram_, cross_;
};

// ---------------------------------------------------------------------------
// Dense classifier

enum class Activation { tanh, relu };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

/// Fully connected net, hidden activation tanh or relu, softmax output and
/// average cross-entropy loss. `sizes` = {input, hidden..., classes}.
class MlpModel final : public LossModel {
public:
    MlpModel(std::vector<int> sizes, Activation act, LabeledImageSet train,
             std::optional<LabeledImageSet> test = std::nullopt)
        : sizes_(std::move(sizes)), act_(act), train_(std::move(train)), test_(std::move(test)) {
        if (sizes_.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
        for (int s : sizes_)
            if (s < 1) throw ConfigError("mlp: layer sizes must be positive");
        check_set(train_);
        if (test_) check_set(*test_);
        std::vector<LayerShape> shapes;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) shapes.push_back({sizes_[l + 1], sizes_[l], true});
        layout_ = ParamLayout(std::move(shapes));
    }

    const ParamLayout& layout() const override { return layout_; }
    std::string name() const override { return "mlp"; }
    Eigen::Index num_samples() const override { return train_.n(); }
    const std::vector<int>& sizes() const { return sizes_; }
    Activation activation() const { return act_; }
    const LabeledImageSet& train() const { return train_; }

    /// Class probabilities, one column per sample.
    Matrix predict_proba(const Vector& w, const Matrix& x) const {
        layout_.check(w);
        Matrix a = x;
        for (std::size_t l = 0; l < layout_.num_layers(); ++l) {
            Matrix z = (layout_.weight_matrix(w, l) * a).colwise() + layout_.bias(w, l);
            if (l + 1 < layout_.num_layers()) {
                activate(z);
            } else {
                softmax(z);
            }
            a = std::move(z);
        }
        return a;
    }

    double loss(const Vector& w) const override { return set_loss(w, train_); }
    double batch_loss(const Vector& w, std::span<const int> batch) const override {
        const std::vector<int> idx(batch.begin(), batch.end());
        return xent(w, train_.images(Eigen::all, idx), train_.labels, idx);
    }
    bool has_test() const override { return test_.has_value(); }
    double test_loss(const Vector& w) const override {
        return test_ ? set_loss(w, *test_) : std::numeric_limits<double>::quiet_NaN();
    }
    double error(const Vector& w) const override { return set_error(w, train_); }
    double test_error(const Vector& w) const override {
        return test_ ? set_error(w, *test_) : std::numeric_limits<double>::quiet_NaN();
    }

    Vector gradient(const Vector& w) const override {
        Vector g = Vector::Zero(layout_.total());
        const Eigen::Index n = train_.n();
        std::vector<int> idx;
        for (Eigen::Index start = 0; start < n; start += chunk) {
            const Eigen::Index len = std::min(chunk, n - start);
            idx.resize(static_cast<std::size_t>(len));
            std::iota(idx.begin(), idx.end(), static_cast<int>(start));
            g += (static_cast<double>(len) / static_cast<double>(n)) * batch_gradient(w, idx);
        }
        return g;
    }

    /// Backpropagation of the average cross-entropy over `batch`.
    Vector batch_gradient(const Vector& w, std::span<const int> batch) const override {
        layout_.check(w);
        if (batch.empty()) throw ConfigError("mlp: empty minibatch");
        const std::vector<int> idx(batch.begin(), batch.end());
        const std::size_t L = layout_.num_layers();
        std::vector<Matrix> acts;
        acts.reserve(L + 1);
        acts.emplace_back(train_.images(Eigen::all, idx));
        for (std::size_t l = 0; l < L; ++l) {
            Matrix z = (layout_.weight_matrix(w, l) * acts.back()).colwise() + layout_.bias(w, l);
            if (l + 1 < L) {
                activate(z);
            } else {
                softmax(z);
            }
            acts.push_back(std::move(z));
        }
        const auto B = static_cast<double>(idx.size());
        Matrix delta = acts.back();
        for (std::size_t j = 0; j < idx.size(); ++j)
            delta(train_.labels[static_cast<std::size_t>(idx[j])], static_cast<Eigen::Index>(j)) -= 1.0;
        delta /= B;

        Vector g(layout_.total());
        for (std::size_t l = L; l-- > 0;) {
            layout_.weight_matrix(g, l).noalias() = delta * acts[l].transpose();
            layout_.bias(g, l) = delta.rowwise().sum();
            if (l > 0) {
                Matrix back = layout_.weight_matrix(w, l).transpose() * delta;
                if (act_ == Activation::tanh) {
                    back.array() *= 1.0 - acts[l].array().square();
                } else {
                    back.array() *= (acts[l].array() > 0.0).cast<double>();
                }
                delta = std::move(back);
            }
        }
        return g;
    }

    /// cfg.epochs of SGD at the constant clipped rate min(lr * decay^step, 1/mu).
    Vector l_step(const Vector& w_init, const Vector& target, double mu, const SgdConfig& cfg,
                  int step) const override {
        const double eta = clipped_lr(cfg.rate(step), mu);
        const std::uint64_t seed = cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(step + 1));
        return run_sgd(*this, w_init, mu > 0.0 ? &target : nullptr, mu, cfg, cfg.epochs,
                       [eta](int) { return eta; }, seed);
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
    Vector initial_weights(std::uint64_t seed) const override {
        std::mt19937_64 rng(seed);
        Vector w = Vector::Zero(layout_.total());
        for (std::size_t l = 0; l < layout_.num_layers(); ++l) {
            const auto& s = layout_.layer(l);
            const double r = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
            std::uniform_real_distribution<double> u(-r, r);
            for (double& x : layout_.weights(w, l)) x = u(rng);
        }
        return w;
    }

private:
    static constexpr Eigen::Index chunk = 1024;

    void check_set(const LabeledImageSet& s) const {
        if (s.d() != sizes_.front())
            throw ConfigError("mlp: data dimension " + std::to_string(s.d()) + " does not match input size " +
                              std::to_string(sizes_.front()));
        if (static_cast<Eigen::Index>(s.labels.size()) != s.n()) throw ConfigError("mlp: label count mismatch");
        if (s.n() < 1) throw ConfigError("mlp: empty dataset");
        for (int y : s.labels)
            if (y < 0 || y >= sizes_.back()) throw ConfigError("mlp: label " + std::to_string(y) + " out of range");
    }

    void activate(Matrix& z) const {
        if (act_ == Activation::tanh) {
            z = z.array().tanh().matrix();
        } else {
            z = z.array().max(0.0).matrix();
        }
    }

    static void softmax(Matrix& z) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const double m = z.col(j).maxCoeff();
            z.col(j) = (z.col(j).array() - m).exp().matrix();
            z.col(j) /= z.col(j).sum();
        }
    }

    /// Sum over columns of -log p_y, computed from logits with log-sum-exp.
    template <class XT>
    double xent_sum(const Vector& w, const XT& x, const std::vector<int>& labels, const std::vector<int>& idx) const {
        Matrix a = x;
        const std::size_t L = layout_.num_layers();
        for (std::size_t l = 0; l < L; ++l) {
            Matrix z = (layout_.weight_matrix(w, l) * a).colwise() + layout_.bias(w, l);
            if (l + 1 < L) activate(z);
            a = std::move(z);
        }
        double s = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double m = a.col(j).maxCoeff();
            const double lse = m + std::log((a.col(j).array() - m).exp().sum());
            s += lse - a(labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])], j);
        }
        return s;
    }

    template <class XT>
    double xent(const Vector& w, const XT& x, const std::vector<int>& labels, const std::vector<int>& idx) const {
        layout_.check(w);
        return xent_sum(w, x, labels, idx) / static_cast<double>(idx.size());
    }

    double set_loss(const Vector& w, const LabeledImageSet& s) const {
        layout_.check(w);
        double total = 0.0;
        std::vector<int> idx;
        for (Eigen::Index start = 0; start < s.n(); start += chunk) {
            const Eigen::Index len = std::min(chunk, s.n() - start);
            idx.resize(static_cast<std::size_t>(len));
            std::iota(idx.begin(), idx.end(), static_cast<int>(start));
            total += xent_sum(w, s.images.middleCols(start, len), s.labels, idx);
        }
        return total / static_cast<double>(s.n());
    }

    double set_error(const Vector& w, const LabeledImageSet& s) const {
        std::size_t wrong = 0;
        for (Eigen::Index start = 0; start < s.n(); start += chunk) {
            const Eigen::Index len = std::min(chunk, s.n() - start);
            const Matrix p = predict_proba(w, s.images.middleCols(start, len));
            for (Eigen::Index j = 0; j < len; ++j) {
                Eigen::Index arg = 0;
                p.col(j).maxCoeff(&arg);
                if (arg != s.labels[static_cast<std::size_t>(start + j)]) ++wrong;
            }
        }
        return static_cast<double>(wrong) / static_cast<double>(s.n());
    }

    std::vector<int> sizes_;
    Activation act_;
    LabeledImageSet train_;
    std::optional<LabeledImageSet> test_;
    ParamLayout layout_;
};

}  // namespace lcq

#pragma once

// Run configuration: a single JSON document describing task, data, model,
// quantization scheme, penalty schedule and SGD settings. Unknown keys are
// rejected at every level.

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lcq/datasets.hpp"
#include "lcq/error.hpp"
#include "lcq/io.hpp"
#include "lcq/lc.hpp"
#include "lcq/models.hpp"
#include "lcq/sweep.hpp"

#ifndef LCQ_VERSION
#define LCQ_VERSION "0.1.0"
#endif

namespace lcq {

inline const char* library_version() { return LCQ_VERSION; }

/// Environment variable naming the default data directory.
inline constexpr const char* data_dir_env = "LCQ_DATA_DIR";

enum class Task { regression, mlp_classify };

inline const char* to_string(Task t) { return t == Task::regression ? "regression" : "mlp_classify"; }

struct DataConfig {
    std::string source = "auto";  // regression: strokes|idx; classification: synthetic|idx|auto
    std::string dir;
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    int max_samples = 0;  // 0 keeps every sample
    double train_fraction = 0.9;
    SyntheticClassConfig synthetic;
    int n_images = 1000;
    int side = 28;
    double noise_sigma = 0.01;
    int n_test_images = 0;
};

struct RunConfig {
    Task task = Task::mlp_classify;
    std::uint64_t seed = 1;
    std::string output_dir = "lcq_out";
    DataConfig data;
    std::vector<int> hidden{40};
    Activation activation = Activation::tanh;
    QuantScheme scheme = QuantScheme::adaptive(2);
    PenaltySchedule schedule;
    double tolerance = 1e-6;
    SgdConfig sgd;
    int reference_epochs = 30;
    int idc_iters = 0;  // 0: use schedule.max_outer_iters
    int bits_per_float = 32;
    std::vector<int> sweep_hidden{2, 4, 8, 16};
    std::vector<int> sweep_log2k{1, 2, 3, 4, 0};
    double sweep_loss_quantile = 0.75;

    static RunConfig defaults(Task t) {
        RunConfig c;
        c.task = t;
        if (t == Task::regression) {
            c.schedule = PenaltySchedule::regression_default();
            c.data.source = "strokes";
        }
        return c;
    }

    void validate() const {
        schedule.validate();
        sgd.validate();
        for (const auto& s : scheme.layers) s.validate();
        if (scheme.layers.empty()) throw ConfigError("scheme: at least one entry required");
        if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
        if (reference_epochs < 0) throw ConfigError("reference_epochs must be >= 0");
        if (idc_iters < 0) throw ConfigError("idc_iters must be >= 0");
        if (bits_per_float < 1) throw ConfigError("bits_per_float must be >= 1");
        for (int h : hidden)
            if (h < 1) throw ConfigError("model.hidden entries must be >= 1");
        if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
            throw ConfigError("data.train_fraction must be in (0,1)");
        if (data.max_samples < 0) throw ConfigError("data.max_samples must be >= 0");
        if (task == Task::regression) {
            if (data.source != "strokes" && data.source != "idx")
                throw ConfigError("data.source for regression must be 'strokes' or 'idx'");
            if (data.n_images < 1 || data.side < 2 || data.side % 2 != 0)
                throw ConfigError("data: n_images >= 1 and an even side are required");
            if (!(data.noise_sigma >= 0.0)) throw ConfigError("data.noise_sigma must be >= 0");
        } else {
            if (data.source != "synthetic" && data.source != "idx" && data.source != "auto")
                throw ConfigError("data.source for classification must be 'synthetic', 'idx' or 'auto'");
            if (data.synthetic.n_classes < 2 || data.synthetic.d < 1 || data.synthetic.n < 2)
                throw ConfigError("data.synthetic: classes >= 2, d >= 1, n >= 2 required");
        }
        if (sweep_hidden.empty() || sweep_log2k.empty()) throw ConfigError("sweep grid must be nonempty");
        for (int k : sweep_log2k)
            if (k < 0 || k > 16) throw ConfigError("sweep.log2k entries must be 1..16 or \"inf\"");
    }

    nlohmann::json to_json() const {
        std::vector<std::string> layers;
        for (const auto& s : scheme.layers) layers.push_back(s.to_spec());
        nlohmann::json log2k = nlohmann::json::array();
        for (int k : sweep_log2k) log2k.push_back(k == 0 ? nlohmann::json("inf") : nlohmann::json(k));
        return {
            {"task", to_string(task)},
            {"seed", seed},
            {"output_dir", output_dir},
            {"data",
             {{"source", data.source},
              {"dir", data.dir},
              {"train_images", data.train_images},
              {"train_labels", data.train_labels},
              {"max_samples", data.max_samples},
              {"train_fraction", data.train_fraction},
              {"synthetic",
               {{"classes", data.synthetic.n_classes},
                {"d", data.synthetic.d},
                {"n", data.synthetic.n},
                {"separation", data.synthetic.separation},
                {"noise_spread", data.synthetic.noise_spread}}},
              {"n_images", data.n_images},
              {"side", data.side},
              {"noise_sigma", data.noise_sigma},
              {"n_test_images", data.n_test_images}}},
            {"model", {{"hidden", hidden}, {"activation", to_string(activation)}}},
            {"scheme", {{"layers", layers}, {"scope", scheme.scope == SchemeScope::global ? "global" : "per_layer"}}},
            {"schedule",
             {{"mu0", schedule.mu0},
              {"growth", schedule.growth},
              {"max_outer_iters", schedule.max_outer_iters},
              {"method", to_string(schedule.method)},
              {"tolerance", tolerance}}},
            {"sgd",
             {{"lr", sgd.lr},
              {"lr_decay", sgd.lr_decay},
              {"momentum", sgd.momentum},
              {"momentum_type", to_string(sgd.momentum_type)},
              {"batch_size", sgd.batch_size},
              {"epochs", sgd.epochs},
              {"reference_epochs", reference_epochs},
              {"seed", sgd.seed}}},
            {"idc_iters", idc_iters},
            {"bits_per_float", bits_per_float},
            {"sweep", {{"hidden", sweep_hidden}, {"log2k", log2k}, {"loss_quantile", sweep_loss_quantile}}},
        };
    }
};

namespace detail {

inline void allow_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!ok.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) +
                          "' has the wrong type");
    }
}

}  // namespace detail

/// Parses a config document. Missing keys keep the task's defaults.
inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::allow_keys;
    using detail::read_key;
    allow_keys(j, {"task", "seed", "output_dir", "data", "model", "scheme", "schedule", "sgd", "idc_iters",
                   "bits_per_float", "sweep"},
               "");
    std::string task = "mlp_classify";
    read_key(j, "task", task, "");
    if (task != "regression" && task != "mlp_classify")
        throw ConfigError("task must be 'regression' or 'mlp_classify', got '" + task + "'");
    RunConfig c = RunConfig::defaults(task == "regression" ? Task::regression : Task::mlp_classify);
    read_key(j, "seed", c.seed, "");
    read_key(j, "output_dir", c.output_dir, "");
    read_key(j, "idc_iters", c.idc_iters, "");
    read_key(j, "bits_per_float", c.bits_per_float, "");
    c.sgd.seed = c.seed;

    if (j.contains("data")) {
        const auto& d = j["data"];
        allow_keys(d, {"source", "dir", "train_images", "train_labels", "max_samples", "train_fraction", "synthetic",
                       "n_images", "side", "noise_sigma", "n_test_images"},
                   "data");
        read_key(d, "source", c.data.source, "data");
        read_key(d, "dir", c.data.dir, "data");
        read_key(d, "train_images", c.data.train_images, "data");
        read_key(d, "train_labels", c.data.train_labels, "data");
        read_key(d, "max_samples", c.data.max_samples, "data");
        read_key(d, "train_fraction", c.data.train_fraction, "data");
        read_key(d, "n_images", c.data.n_images, "data");
        read_key(d, "side", c.data.side, "data");
        read_key(d, "noise_sigma", c.data.noise_sigma, "data");
        read_key(d, "n_test_images", c.data.n_test_images, "data");
        if (d.contains("synthetic")) {
            const auto& s = d["synthetic"];
            allow_keys(s, {"classes", "d", "n", "separation", "noise_spread"}, "data.synthetic");
            read_key(s, "classes", c.data.synthetic.n_classes, "data.synthetic");
            read_key(s, "d", c.data.synthetic.d, "data.synthetic");
            read_key(s, "n", c.data.synthetic.n, "data.synthetic");
            read_key(s, "separation", c.data.synthetic.separation, "data.synthetic");
            read_key(s, "noise_spread", c.data.synthetic.noise_spread, "data.synthetic");
        }
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        allow_keys(m, {"hidden", "activation"}, "model");
        read_key(m, "hidden", c.hidden, "model");
        std::string act = to_string(c.activation);
        read_key(m, "activation", act, "model");
        c.activation = parse_activation(act);
    }
    if (j.contains("scheme")) {
        const auto& s = j["scheme"];
        allow_keys(s, {"layers", "scope"}, "scheme");
        std::vector<std::string> layers;
        read_key(s, "layers", layers, "scheme");
        if (!layers.empty()) {
            c.scheme.layers.clear();
            for (const auto& l : layers) c.scheme.layers.push_back(LayerScheme::parse(l));
        }
        std::string scope = "per_layer";
        read_key(s, "scope", scope, "scheme");
        if (scope != "per_layer" && scope != "global") throw ConfigError("scheme.scope must be 'per_layer' or 'global'");
        c.scheme.scope = scope == "global" ? SchemeScope::global : SchemeScope::per_layer;
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        allow_keys(s, {"mu0", "growth", "max_outer_iters", "method", "tolerance"}, "schedule");
        read_key(s, "mu0", c.schedule.mu0, "schedule");
        read_key(s, "growth", c.schedule.growth, "schedule");
        read_key(s, "max_outer_iters", c.schedule.max_outer_iters, "schedule");
        read_key(s, "tolerance", c.tolerance, "schedule");
        std::string method = to_string(c.schedule.method);
        read_key(s, "method", method, "schedule");
        c.schedule.method = parse_penalty_method(method);
    }
    if (j.contains("sgd")) {
        const auto& s = j["sgd"];
        allow_keys(s, {"lr", "lr_decay", "momentum", "momentum_type", "batch_size", "epochs", "reference_epochs", "seed"},
                   "sgd");
        read_key(s, "lr", c.sgd.lr, "sgd");
        read_key(s, "lr_decay", c.sgd.lr_decay, "sgd");
        read_key(s, "momentum", c.sgd.momentum, "sgd");
        read_key(s, "batch_size", c.sgd.batch_size, "sgd");
        read_key(s, "epochs", c.sgd.epochs, "sgd");
        read_key(s, "reference_epochs", c.reference_epochs, "sgd");
        read_key(s, "seed", c.sgd.seed, "sgd");
        std::string mt = to_string(c.sgd.momentum_type);
        read_key(s, "momentum_type", mt, "sgd");
        if (mt != "classical" && mt != "nesterov") throw ConfigError("sgd.momentum_type must be 'classical' or 'nesterov'");
        c.sgd.momentum_type = mt == "classical" ? MomentumType::classical : MomentumType::nesterov;
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        allow_keys(s, {"hidden", "log2k", "loss_quantile"}, "sweep");
        read_key(s, "hidden", c.sweep_hidden, "sweep");
        read_key(s, "loss_quantile", c.sweep_loss_quantile, "sweep");
        if (s.contains("log2k")) {
            if (!s["log2k"].is_array()) throw ConfigError("sweep.log2k must be an array");
            c.sweep_log2k.clear();
            for (const auto& v : s["log2k"]) {
                if (v.is_string() && v.get<std::string>() == "inf") {
                    c.sweep_log2k.push_back(0);
                } else if (v.is_number_integer()) {
                    c.sweep_log2k.push_back(v.get<int>());
                } else {
                    throw ConfigError("sweep.log2k entries must be integers or \"inf\"");
                }
            }
        }
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

/// Config, seed and library version, echoed into every output.
inline nlohmann::json provenance(const RunConfig& c) {
    return {{"library", "lcq"}, {"version", library_version()}, {"seed", c.seed}, {"config", c.to_json()}};
}

// ---------------------------------------------------------------------------
// Building data and models from a config

inline std::string resolve_data_dir(const DataConfig& d) {
    if (!d.dir.empty()) return d.dir;
    if (const char* env = std::getenv(data_dir_env)) return env;
    return ".";
}

inline std::string data_path(const DataConfig& d, const std::string& file) {
    const std::filesystem::path p(file);
    return p.is_absolute() ? file : (std::filesystem::path(resolve_data_dir(d)) / p).string();
}

struct ClassificationData {
    LabeledImageSet train;
    LabeledImageSet test;
    std::string description;
};

inline ClassificationData load_classification_data(const RunConfig& c) {
    const auto& d = c.data;
    const std::string img = data_path(d, d.train_images), lbl = data_path(d, d.train_labels);
    bool use_idx = d.source == "idx";
    if (d.source == "auto") use_idx = std::filesystem::exists(img) && std::filesystem::exists(lbl);
    LabeledImageSet all;
    std::string desc;
    if (use_idx) {
        all = load_idx(img, lbl);
        desc = "idx:" + img;
    } else {
        all = gen_synthetic_classes(d.synthetic, c.seed);
        normalize(all);
        desc = "synthetic gaussian classes";
    }
    if (d.max_samples > 0 && d.max_samples < all.n()) {
        all.images.conservativeResize(Eigen::NoChange, d.max_samples);
        all.labels.resize(static_cast<std::size_t>(d.max_samples));
    }
    auto [tr, te] = split_set(all, d.train_fraction, c.seed + 1);
    return {std::move(tr), std::move(te), desc};
}

inline std::pair<RegressionPairSet, std::optional<RegressionPairSet>> load_regression_data(const RunConfig& c) {
    const auto& d = c.data;
    Matrix images;
    if (d.source == "idx") {
        images = parse_idx_images(read_bytes(data_path(d, d.train_images)), d.train_images);
        if (images.cols() > d.n_images) images.conservativeResize(Eigen::NoChange, d.n_images);
    } else {
        images = gen_stroke_images(d.n_images, d.side, c.seed);
    }
    std::optional<RegressionPairSet> test;
    if (d.n_test_images > 0)
        test = gen_superres(gen_stroke_images(d.n_test_images, d.side, c.seed + 2), d.noise_sigma, c.seed + 3);
    return {gen_superres(images, d.noise_sigma, c.seed + 1), std::move(test)};
}

/// Model with its training (and test) data attached.
inline std::unique_ptr<LossModel> build_model(const RunConfig& c, std::string* description = nullptr) {
    c.validate();
    if (c.task == Task::regression) {
        auto [train, test] = load_regression_data(c);
        if (description) *description = "linear regression " + std::to_string(train.X.rows()) + " -> " +
                                         std::to_string(train.Y.rows()) + ", " + std::to_string(train.X.cols()) +
                                         " pairs (" + train.kernel + ")";
        return std::make_unique<LinearRegressionModel>(std::move(train), std::move(test));
    }
    auto data = load_classification_data(c);
    std::vector<int> sizes{static_cast<int>(data.train.d())};
    sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
    sizes.push_back(data.train.n_classes);
    if (description) {
        *description = "mlp";
        for (int s : sizes) *description += " " + std::to_string(s);
        *description += ", " + data.description + ", " + std::to_string(data.train.n()) + " train / " +
                        std::to_string(data.test.n()) + " test";
    }
    data.test.split = Split::test;
    return std::make_unique<MlpModel>(sizes, c.activation, std::move(data.train), std::move(data.test));
}

/// Least squares for regression; SGD from the seeded initialization otherwise.
inline Vector train_reference_model(const LossModel& m, const RunConfig& c) {
    if (const auto* lr = dynamic_cast<const LinearRegressionModel*>(&m)) return lr->solve_ols();
    return train_reference(m, m.initial_weights(c.seed), c.sgd, c.reference_epochs);
}

}  // namespace lcq

// lcq: train reference models, quantize them with DC, iDC or LC, quantize
// raw weight lists, sweep (H, K) grids and summarize results.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lcq/config.hpp"

namespace fs = std::filesystem;
using namespace lcq;
using nlohmann::json;

namespace {

enum Exit { ok = 0, other = 1, config = 2, io = 3, numerical = 4 };

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string weights;
    std::vector<std::string> scheme;
    std::optional<int> K;
    std::optional<double> mu0, growth, tolerance;
    std::optional<int> iters;
    std::string task;
};

RunConfig resolve(const Overrides& o) {
    RunConfig c;
    if (!o.config_path.empty()) {
        c = load_config(o.config_path);
    } else {
        c = RunConfig::defaults(o.task == "regression" ? Task::regression : Task::mlp_classify);
    }
    if (o.seed) {
        c.seed = *o.seed;
        c.sgd.seed = *o.seed;
    }
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.scheme.empty()) {
        c.scheme.layers.clear();
        for (const auto& s : o.scheme) c.scheme.layers.push_back(LayerScheme::parse(s));
    }
    if (o.K) c.scheme = QuantScheme::adaptive(*o.K, c.scheme.scope);
    if (o.mu0) c.schedule.mu0 = *o.mu0;
    if (o.growth) c.schedule.growth = *o.growth;
    if (o.iters) {
        c.schedule.max_outer_iters = *o.iters;
        c.idc_iters = *o.iters;
    }
    if (o.tolerance) c.tolerance = *o.tolerance;
    c.validate();
    return c;
}

std::string out_path(const RunConfig& c, const std::string& name) {
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + c.output_dir + "': " + ec.message());
    return (fs::path(c.output_dir) / name).string();
}

std::string comment_of(const json& prov) { return "lcq " + std::string(library_version()) + "\nprovenance " + prov.dump(); }

json stats_json(const CompressionStats& s) {
    return {{"P1", s.P1}, {"P0", s.P0}, {"K", s.K}, {"b", s.b}, {"bits_reference", s.bits_reference},
            {"bits_quantized", s.bits_quantized}, {"rho", s.rho}};
}

void print_eval(const LossModel& m, const Vector& w) {
    auto line = [](const char* split, double loss, double err) {
        if (std::isfinite(err)) {
            std::printf("%s loss %.6g  error %.4f%%\n", split, loss, 100.0 * err);
        } else {
            std::printf("%s loss %.6g\n", split, loss);
        }
    };
    line("train", m.loss(w), m.error(w));
    if (m.has_test()) line("test ", m.test_loss(w), m.test_error(w));
}

int cmd_train(const Overrides& o) {
    const RunConfig c = resolve(o);
    std::string desc;
    const auto m = build_model(c, &desc);
    std::printf("%s\n", desc.c_str());
    const Vector w = train_reference_model(*m, c);
    print_eval(*m, w);
    Checkpoint ck;
    ck.layout = m->layout();
    ck.params = w;
    ck.quant.assign(ck.layout.num_layers(), std::nullopt);
    ck.meta = {{"provenance", provenance(c)}, {"kind", "reference"}, {"model", desc}, {"loss_train", m->loss(w)}};
    const auto path = out_path(c, o.weights.empty() ? "reference.lcqm" : o.weights);
    save_checkpoint(path, ck);
    std::printf("wrote %s\n", path.c_str());
    return ok;
}

int cmd_compress(const Overrides& o, const std::string& method) {
    const RunConfig c = resolve(o);
    if (o.weights.empty()) throw ConfigError("compress: --weights <reference checkpoint> is required");
    std::string desc;
    const auto m = build_model(c, &desc);
    const Checkpoint ref = load_checkpoint(o.weights);
    if (!(ref.layout == m->layout()))
        throw ConfigError("compress: checkpoint layout does not match the model built from the config");
    std::printf("%s\n", desc.c_str());
    LcOptions opt;
    opt.schedule = c.schedule;
    opt.sgd = c.sgd;
    opt.tolerance = c.tolerance;
    opt.seed = c.seed;
    opt.on_iteration = [](const TraceRow& r) {
        std::printf("iter %3d  mu %-10.4g loss %-12.6g viol %.3g\n", r.outer_iter, r.mu, r.loss_train,
                    r.constraint_violation);
        std::fflush(stdout);
    };
    const json prov = provenance(c);
    LcResult r;
    try {
        if (method == "dc") {
            r = dc_run(*m, ref.params, c.scheme, c.seed);
        } else if (method == "idc") {
            r = idc_run(*m, ref.params, c.scheme, c.idc_iters > 0 ? c.idc_iters : c.schedule.max_outer_iters, opt);
        } else {
            r = lc_run(*m, ref.params, c.scheme, opt);
        }
    } catch (const DivergenceError& e) {
        write_text(out_path(c, method + "_trace.csv"), e.trace().to_csv(comment_of(prov) + "\ndiverged"));
        throw;
    }
    const Compressor comp(m->layout(), c.scheme, c.seed);
    const auto stats = compression_stats(m->layout(), comp, r.params, c.bits_per_float);
    print_eval(*m, r.weights);
    std::printf("converged %s after %d iterations (returned iterate %d)\n", r.converged ? "yes" : "no", r.iterations,
                r.selected_iter);
    std::printf("P1 %lld  P0 %lld  codebook entries %lld  b %d  rho x%.1f\n", static_cast<long long>(stats.P1),
                static_cast<long long>(stats.P0), static_cast<long long>(stats.K), stats.b, stats.rho);

    Checkpoint ck;
    ck.layout = m->layout();
    ck.params = r.weights;
    ck.quant = per_layer_params(ck.layout, comp, r.params);
    ck.meta = {{"provenance", prov},      {"kind", "quantized"}, {"method", method},
               {"scheme", [&] {
                    json a = json::array();
                    for (const auto& s : c.scheme.layers) a.push_back(s.to_spec());
                    return a;
                }()},
               {"converged", r.converged}, {"stats", stats_json(stats)}, {"source", o.weights}};
    save_checkpoint(out_path(c, method + ".lcqm"), ck);
    write_text(out_path(c, method + "_trace.csv"), r.trace.to_csv(comment_of(prov) + "\nmethod " + method));
    write_text(out_path(c, method + "_trace.json"),
               json{{"provenance", prov}, {"method", method}, {"rows", r.trace.to_json()}}.dump(1) + "\n");
    write_text(out_path(c, method + "_stats.json"),
               json{{"provenance", prov},
                    {"method", method},
                    {"converged", r.converged},
                    {"iterations", r.iterations},
                    {"selected_iter", r.selected_iter},
                    {"loss_train", m->loss(r.weights)},
                    {"error_train", m->error(r.weights)},
                    {"loss_test", m->has_test() ? json(m->test_loss(r.weights)) : json(nullptr)},
                    {"error_test", m->has_test() ? json(m->test_error(r.weights)) : json(nullptr)},
                    {"stats", stats_json(stats)}}
                       .dump(1) +
                   "\n");
    std::printf("wrote %s/%s.lcqm with trace and stats files\n", c.output_dir.c_str(), method.c_str());
    return ok;
}

int cmd_quantize(const Overrides& o) {
    if (o.weights.empty()) throw ConfigError("quantize: --weights <text file> is required");
    RunConfig c;
    if (!o.config_path.empty()) c = load_config(o.config_path);
    if (o.seed) c.seed = *o.seed;
    QuantScheme scheme = c.scheme;
    if (!o.scheme.empty()) {
        if (o.scheme.size() != 1) throw ConfigError("quantize: a weight list takes a single scheme");
        scheme = QuantScheme::uniform(LayerScheme::parse(o.scheme.front()));
    }
    if (o.K) scheme = QuantScheme::adaptive(*o.K);
    if (scheme.layers.size() != 1) throw ConfigError("quantize: a weight list takes a single scheme");
    scheme.scope = SchemeScope::per_layer;

    const auto w = parse_weight_list(read_text(o.weights), o.weights);
    const ParamLayout layout({LayerShape{1, static_cast<Eigen::Index>(w.size()), true}});
    Vector flat = Vector::Zero(layout.total());
    std::copy(w.begin(), w.end(), flat.data());
    const Compressor comp(layout, scheme, c.seed);
    const auto params = comp.compress(flat);
    const Vector q = comp.decompress(params, flat);
    const double dist = comp.distortion(flat, params);
    // The weight list carries no biases; the layout's single bias is padding.
    const auto s = compression_stats(static_cast<std::int64_t>(w.size()), 0,
                                     static_cast<std::int64_t>(params.front().codebook.size()), c.bits_per_float);

    json prov = {{"library", "lcq"},
                 {"version", library_version()},
                 {"seed", c.seed},
                 {"input", o.weights},
                 {"scheme", scheme.layers.front().to_spec()}};
    if (!o.config_path.empty()) prov["config"] = c.to_json();
    std::string text;
    for (const auto& line : {std::string("lcq ") + library_version(), "provenance " + prov.dump()})
        text += "# " + line + "\n";
    text += format_weight_list(layout.weights(q, 0));
    if (o.out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        write_text(o.out, text);
    }
    auto& log = o.out.empty() ? std::cerr : std::cout;
    const auto& cb = params.front().codebook;
    log << "weights " << w.size() << "  distortion " << dist << "  codebook";
    for (std::size_t k = 0; k < cb.size(); ++k) log << ' ' << cb.value(k);
    char buf[64];
    std::snprintf(buf, sizeof buf, "  rho x%.1f", s.rho);
    log << buf << "\n";
    return ok;
}

int cmd_sweep(const Overrides& o, int jobs, std::optional<double> max_loss) {
    Overrides oo = o;
    if (oo.task.empty()) oo.task = "mlp_classify";
    const RunConfig c = resolve(oo);
    if (c.task != Task::mlp_classify) throw ConfigError("sweep: task must be mlp_classify");
    auto data = load_classification_data(c);
    std::printf("%s, %d train / %d test\n", data.description.c_str(), static_cast<int>(data.train.n()),
                static_cast<int>(data.test.n()));
    SweepConfig s;
    s.hidden = c.sweep_hidden;
    s.log2k = c.sweep_log2k;
    s.activation = c.activation;
    s.sgd = c.sgd;
    s.reference_epochs = c.reference_epochs;
    s.schedule = c.schedule;
    s.tolerance = c.tolerance;
    s.seed = c.seed;
    s.bits_per_float = c.bits_per_float;
    s.jobs = jobs;
    data.test.split = Split::test;
    const auto cells = run_sweep(data.train, data.test, s);
    const json prov = provenance(c);
    std::string csv = "# " + std::string("lcq ") + library_version() + "\n# provenance " + prov.dump() + "\n";
    csv += sweep_csv(cells);
    write_text(out_path(c, "sweep.csv"), csv);

    std::string sel = "# lcq " + std::string(library_version()) + "\n# provenance " + prov.dump() + "\n";
    sel += "quantile,max_loss,hidden,log2k,size_bits,loss_train\n";
    std::vector<std::pair<std::string, double>> targets;
    for (double q : {0.9, 0.75, 0.5, 0.25, 0.1, 0.0}) targets.emplace_back(std::to_string(q), loss_quantile(cells, q));
    targets.emplace_back(std::to_string(c.sweep_loss_quantile), loss_quantile(cells, c.sweep_loss_quantile));
    if (max_loss) targets.emplace_back("", *max_loss);
    char buf[256];
    for (const auto& [q, L] : targets) {
        const auto i = select_operational_point(cells, L);
        if (i) {
            const auto& x = cells[*i];
            std::snprintf(buf, sizeof buf, "%s,%.17g,%d,%s,%.17g,%.17g\n", q.c_str(), L, x.hidden,
                          x.log2k == 0 ? "inf" : std::to_string(x.log2k).c_str(), x.size_bits, x.loss_train);
        } else {
            std::snprintf(buf, sizeof buf, "%s,%.17g,,,,\n", q.c_str(), L);
        }
        sel += buf;
        if (const auto i2 = select_operational_point(cells, L))
            std::printf("L_max %-12.6g -> H %d, log2 K %s, %.0f bits\n", L, cells[*i2].hidden,
                        cells[*i2].log2k == 0 ? "inf" : std::to_string(cells[*i2].log2k).c_str(), cells[*i2].size_bits);
        else
            std::printf("L_max %-12.6g -> no cell\n", L);
    }
    write_text(out_path(c, "selection.csv"), sel);
    int failed = 0;
    for (const auto& x : cells) failed += x.ok ? 0 : 1;
    std::printf("%zu cells, %d failed; wrote %s/sweep.csv and selection.csv\n", cells.size(), failed,
                c.output_dir.c_str());
    return ok;
}

void report_checkpoint(const std::string& path, json& out) {
    const auto ck = load_checkpoint(path);
    std::printf("%s: %zu layers, %lld parameters\n", path.c_str(), ck.layout.num_layers(),
                static_cast<long long>(ck.layout.total()));
    json layers = json::array();
    bool consistent = true;
    std::int64_t index_bits = 0, entries = 0;
    const int b = ck.meta.contains("provenance") && ck.meta["provenance"].contains("config")
                      ? ck.meta["provenance"]["config"].value("bits_per_float", 32)
                      : 32;
    for (std::size_t l = 0; l < ck.layout.num_layers(); ++l) {
        const auto& s = ck.layout.layer(l);
        const auto w = ck.layout.weights(ck.params, l);
        std::set<double> distinct(w.begin(), w.end());
        json j = {{"rows", s.rows}, {"cols", s.cols}, {"quantizable", s.quantizable}, {"distinct", distinct.size()}};
        std::printf("  layer %zu: %lldx%lld  distinct weights %zu", l, static_cast<long long>(s.rows),
                    static_cast<long long>(s.cols), distinct.size());
        if (const auto& q = ck.quant[l]) {
            const Vector d = Eigen::Map<const Vector>(decompress(*q).data(), static_cast<Eigen::Index>(w.size()));
            const bool same = std::equal(w.begin(), w.end(), d.data());
            consistent &= same;
            index_bits += static_cast<std::int64_t>(w.size()) * ceil_log2(static_cast<std::int64_t>(q->codebook.size()));
            entries += static_cast<std::int64_t>(q->codebook.size());
            j["K"] = q->codebook.size();
            j["codebook"] = q->codebook.values();
            std::printf("  K %zu  codebook", q->codebook.size());
            for (double v : q->codebook.values()) std::printf(" %.6g", v);
        }
        std::printf("\n");
        layers.push_back(j);
    }
    const std::int64_t P1 = ck.layout.quantizable_count(), P0 = ck.layout.unquantized_count();
    json entry = {{"file", path}, {"layers", layers}, {"meta", ck.meta}, {"consistent", consistent}};
    if (entries > 0) {
        const double rho = static_cast<double>((P1 + P0) * b) / static_cast<double>(index_bits + (P0 + entries) * b);
        std::printf("  weights reproduce from codebooks: %s  rho x%.1f\n", consistent ? "yes" : "NO", rho);
        entry["rho"] = rho;
    }
    out.push_back(entry);
}

void report_trace(const std::string& path, json& out) {
    const std::string text = read_text(path);
    Trace t;
    if (fs::path(path).extension() == ".json") {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": " + e.what());
        }
        t = Trace::from_json(j.is_object() ? j.at("rows") : j);
    } else {
        t = Trace::from_csv(text);
    }
    if (t.rows.empty()) throw ParseError(path + ": trace has no rows");
    std::size_t best = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        if (t.rows[i].loss_train < t.rows[best].loss_train) best = i;
    const auto& last = t.rows.back();
    std::printf("%s: %zu rows, final loss %.6g (viol %.3g), best loss %.6g at iteration %d\n", path.c_str(),
                t.rows.size(), last.loss_train, last.constraint_violation, t.rows[best].loss_train,
                t.rows[best].outer_iter);
    out.push_back({{"file", path},
                   {"rows", t.rows.size()},
                   {"final_loss_train", last.loss_train},
                   {"final_violation", last.constraint_violation},
                   {"best_iter", t.rows[best].outer_iter}});
}

int cmd_report(const std::vector<std::string>& files, const std::string& out) {
    json summary = json::array();
    for (const auto& f : files) {
        const auto ext = fs::path(f).extension();
        if (ext == ".lcqm") {
            report_checkpoint(f, summary);
        } else if (ext == ".csv" || ext == ".json") {
            report_trace(f, summary);
        } else {
            throw ConfigError("report: unrecognized file type '" + f + "' (expected .lcqm, .csv or .json)");
        }
    }
    if (!out.empty())
        write_text(out, json{{"lcq", library_version()}, {"reports", summary}}.dump(1) + "\n");
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural network quantization by learning-compression"};
    app.set_version_flag("--version", std::string(library_version()));
    app.require_subcommand(1);
    Overrides o;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", o.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
        s->add_option("--seed", o.seed, "Seed overriding the config");
        s->add_option("--out", o.out, "Output directory");
    };
    auto add_scheme = [&](CLI::App* s) {
        auto* sch = s->add_option("--scheme", o.scheme,
                                  "Scheme per quantizable layer: adaptive:K, binary, binary_scale, ternary, "
                                  "ternary_scale, pow2:C or fixed:v1,v2,...");
        s->add_option("--K", o.K, "Adaptive codebook size")->excludes(sch);
    };
    auto add_schedule = [&](CLI::App* s) {
        s->add_option("--mu0", o.mu0, "Initial penalty");
        s->add_option("--growth", o.growth, "Penalty growth factor");
        s->add_option("--iters", o.iters, "Outer iterations");
        s->add_option("--tolerance", o.tolerance, "Stopping tolerance on max |w - Delta(Theta)|");
    };

    auto* train = app.add_subcommand("train", "Train a reference model and save a checkpoint");
    add_common(train);
    train->add_option("--task", o.task, "Task when no config is given")
        ->check(CLI::IsMember({"regression", "mlp_classify"}));
    train->add_option("--weights", o.weights, "Checkpoint file name inside the output directory");

    std::string method = "lc";
    auto* compress = app.add_subcommand("compress", "Quantize a reference checkpoint");
    add_common(compress);
    add_scheme(compress);
    add_schedule(compress);
    compress->add_option("--method", method, "dc, idc or lc")->check(CLI::IsMember({"dc", "idc", "lc"}));
    compress->add_option("--weights", o.weights, "Reference checkpoint")->required();
    compress->add_option("--task", o.task, "Task when no config is given")
        ->check(CLI::IsMember({"regression", "mlp_classify"}));

    auto* quantize = app.add_subcommand("quantize", "Apply the compression step to a text file of weights");
    quantize->add_option("--config", o.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    quantize->add_option("--seed", o.seed, "Seed for k-means++");
    quantize->add_option("--out", o.out, "Output file (default: stdout)");
    quantize->add_option("--weights", o.weights, "Whitespace-separated weights")->required();
    add_scheme(quantize);

    int jobs = 1;
    std::optional<double> max_loss;
    auto* sweep = app.add_subcommand("sweep", "Loss and size over a grid of hidden units and codebook sizes");
    add_common(sweep);
    add_schedule(sweep);
    sweep->add_option("--jobs", jobs, "Hidden sizes evaluated concurrently")->check(CLI::PositiveNumber);
    sweep->add_option("--max-loss", max_loss, "Also report the operational point for this loss target");

    std::vector<std::string> files;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Summarize checkpoints and trace files");
    report->add_option("files", files, "Checkpoints (.lcqm) and traces (.csv, .json)")->required();
    report->add_option("--out", report_out, "Write a JSON summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config;
    }

    try {
        if (*train) return cmd_train(o);
        if (*compress) return cmd_compress(o, method);
        if (*quantize) return cmd_quantize(o);
        if (*sweep) return cmd_sweep(o, jobs, max_loss);
        if (*report) return cmd_report(files, report_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return io;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return numerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return other;
    }
    return other;
}

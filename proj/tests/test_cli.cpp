#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <set>

#include "lcq/config.hpp"

using namespace lcq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(LCQ_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("lcq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string write_config(const std::string& name, const json& j) const {
        write_text(path(name), j.dump(1));
        return path(name);
    }
    fs::path dir;
};

json small_regression(double sigma = 0.0) {
    return {{"task", "regression"},
            {"seed", 4},
            {"data", {{"n_images", 60}, {"side", 12}, {"noise_sigma", sigma}}},
            {"scheme", {{"layers", {"adaptive:2"}}}},
            {"schedule", {{"max_outer_iters", 6}}}};
}

json small_classifier() {
    return {{"task", "mlp_classify"},
            {"seed", 2},
            {"data",
             {{"source", "synthetic"},
              {"synthetic", {{"classes", 2}, {"d", 6}, {"n", 400}, {"separation", 12.0}}}}},
            {"model", {{"hidden", {5}}}},
            {"scheme", {{"layers", {"adaptive:2"}}}},
            {"schedule", {{"mu0", 1e-3}, {"growth", 1.5}, {"max_outer_iters", 8}}},
            {"sgd", {{"lr", 0.05}, {"momentum", 0.9}, {"batch_size", 32}, {"reference_epochs", 20}}}};
}

}  // namespace

TEST_F(Cli, TrainRegressionWithoutNoiseFitsClosely) {
    const auto cfg = write_config("r.json", small_regression());
    const auto r = run("train --config " + cfg + " --out " + path("o"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto ck = load_checkpoint(path("o/reference.lcqm"));
    const auto m = build_model(load_config(cfg));
    EXPECT_LT(m->loss(ck.params), 0.01 * m->loss(Vector::Zero(ck.params.size())));
    EXPECT_EQ(ck.meta["provenance"]["seed"], 4);
    EXPECT_EQ(ck.meta["provenance"]["version"], library_version());
}

TEST_F(Cli, TrainIsDeterministicGivenSeed) {
    const auto cfg = write_config("c.json", small_classifier());
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("a")).code, 0);
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("b")).code, 0);
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("c") + " --seed 3").code, 0);
    const auto a = read_bytes(path("a/reference.lcqm"));
    const auto b = read_bytes(path("b/reference.lcqm"));
    const auto c = read_bytes(path("c/reference.lcqm"));
    // Output directories are part of the recorded config; compare parameters.
    const auto ca = decode_checkpoint(a), cb = decode_checkpoint(b), cc = decode_checkpoint(c);
    EXPECT_EQ(ca.params, cb.params);
    EXPECT_NE(ca.params, cc.params);
}

TEST_F(Cli, TrainSeparableTwoClassReachesZeroError) {
    const auto cfg = write_config("c.json", small_classifier());
    const auto r = run("train --config " + cfg + " --out " + path("o"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto m = build_model(load_config(cfg));
    EXPECT_EQ(m->error(load_checkpoint(path("o/reference.lcqm")).params), 0.0);
}

TEST_F(Cli, CompressLcWritesCheckpointTraceAndStats) {
    const auto cfg = write_config("c.json", small_classifier());
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("o")).code, 0);
    const auto r = run("compress --method lc --config " + cfg + " --out " + path("o") + " --weights " +
                       path("o/reference.lcqm"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("rho x"), std::string::npos);
    const auto ck = load_checkpoint(path("o/lc.lcqm"));
    for (std::size_t l = 0; l < ck.layout.num_layers(); ++l) {
        const auto w = ck.layout.weights(ck.params, l);
        EXPECT_LE(std::set<double>(w.begin(), w.end()).size(), 2u);
        ASSERT_TRUE(ck.quant[l].has_value());
    }
    const auto stats = json::parse(read_text(path("o/lc_stats.json")));
    EXPECT_EQ(stats["stats"]["K"], 4);
    EXPECT_EQ(stats["provenance"]["config"]["schedule"]["mu0"], 1e-3);

    const auto csv = read_text(path("o/lc_trace.csv"));
    EXPECT_EQ(csv.rfind("# lcq ", 0), 0u);
    const auto from_csv = Trace::from_csv(csv);
    const auto from_json = Trace::from_json(json::parse(read_text(path("o/lc_trace.json")))["rows"]);
    ASSERT_EQ(from_csv.rows.size(), from_json.rows.size());
    for (std::size_t i = 0; i < from_csv.rows.size(); ++i) {
        EXPECT_EQ(from_csv.rows[i].loss_train, from_json.rows[i].loss_train);
        EXPECT_EQ(from_csv.rows[i].mu, from_json.rows[i].mu);
        EXPECT_EQ(from_csv.rows[i].constraint_violation, from_json.rows[i].constraint_violation);
    }
}

TEST_F(Cli, CompressDcCheckpointRoundTripsBitExactly) {
    const auto cfg = write_config("r.json", small_regression(0.05));
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("o")).code, 0);
    ASSERT_EQ(run("compress --method dc --K 4 --config " + cfg + " --out " + path("o") + " --weights " +
                  path("o/reference.lcqm"))
                  .code,
              0);
    const auto bytes = read_bytes(path("o/dc.lcqm"));
    const auto ck = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(ck), bytes);
    const auto d = decompress(*ck.quant[0]);
    const auto w = ck.layout.weights(ck.params, 0);
    EXPECT_TRUE(std::equal(w.begin(), w.end(), d.begin()));
    EXPECT_EQ(ck.quant[0]->codebook.size(), 4u);
}

TEST_F(Cli, IdcWithClosedFormStepIsConstantAfterFirstIteration) {
    const auto cfg = write_config("r.json", small_regression(0.05));
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("o")).code, 0);
    const auto r = run("compress --method idc --iters 5 --config " + cfg + " --out " + path("o") + " --weights " +
                       path("o/reference.lcqm"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto t = Trace::from_csv(read_text(path("o/idc_trace.csv")));
    ASSERT_EQ(t.rows.size(), 6u);
    for (std::size_t i = 2; i < t.rows.size(); ++i) EXPECT_EQ(t.rows[i].loss_train, t.rows[1].loss_train);
}

TEST_F(Cli, LayoutMismatchIsConfigError) {
    const auto cfg = write_config("r.json", small_regression());
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("o")).code, 0);
    auto other = small_regression();
    other["data"]["side"] = 8;
    const auto cfg2 = write_config("r2.json", other);
    const auto r = run("compress --config " + cfg2 + " --out " + path("o") + " --weights " + path("o/reference.lcqm"));
    EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, QuantizeFixedAndAdaptiveSchemes) {
    std::string text = "# weights\n";
    for (int i = 0; i < 200; ++i) text += std::to_string(std::sin(0.37 * i) * 1.3) + "\n";
    write_text(path("w.txt"), text);

    ASSERT_EQ(run("quantize --weights " + path("w.txt") + " --scheme binary --out " + path("b.txt")).code, 0);
    for (double v : parse_weight_list(read_text(path("b.txt")))) EXPECT_TRUE(v == 1.0 || v == -1.0);

    ASSERT_EQ(run("quantize --weights " + path("w.txt") + " --K 4 --out " + path("k.txt")).code, 0);
    const auto k = parse_weight_list(read_text(path("k.txt")));
    EXPECT_EQ(k.size(), 200u);
    EXPECT_LE(std::set<double>(k.begin(), k.end()).size(), 4u);

    ASSERT_EQ(run("quantize --weights " + path("w.txt") + " --scheme pow2:5 --out " + path("p.txt")).code, 0);
    std::set<double> allowed{0.0};
    for (int e = 0; e <= 5; ++e) {
        allowed.insert(std::ldexp(1.0, -e));
        allowed.insert(-std::ldexp(1.0, -e));
    }
    for (double v : parse_weight_list(read_text(path("p.txt")))) EXPECT_TRUE(allowed.count(v)) << v;
    EXPECT_NE(read_text(path("p.txt")).find("\"seed\""), std::string::npos);
}

TEST_F(Cli, QuantizeRejectsMalformedWeights) {
    write_text(path("w.txt"), "1 2 three\n");
    EXPECT_EQ(run("quantize --weights " + path("w.txt") + " --K 2").code, 3);
}

TEST_F(Cli, SweepWritesOneRowPerCell) {
    auto j = small_classifier();
    j["sweep"] = {{"hidden", {2, 3}}, {"log2k", {1, "inf"}}};
    j["sgd"]["reference_epochs"] = 3;
    const auto cfg = write_config("s.json", j);
    const auto r = run("sweep --config " + cfg + " --out " + path("o") + " --jobs 2");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto csv = read_text(path("o/sweep.csv"));
    std::size_t rows = 0;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') ++rows;
    EXPECT_EQ(rows, 5u);  // header and four cells
    EXPECT_TRUE(fs::exists(path("o/selection.csv")));
}

TEST_F(Cli, ReportSummarizesCheckpoint) {
    const auto cfg = write_config("r.json", small_regression(0.05));
    ASSERT_EQ(run("train --config " + cfg + " --out " + path("o")).code, 0);
    ASSERT_EQ(run("compress --method dc --config " + cfg + " --out " + path("o") + " --weights " +
                  path("o/reference.lcqm"))
                  .code,
              0);
    const auto r = run("report " + path("o/dc.lcqm") + " " + path("o/dc_trace.csv") + " --out " + path("rep.json"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("reproduce from codebooks: yes"), std::string::npos);
    const auto j = json::parse(read_text(path("rep.json")));
    EXPECT_EQ(j["reports"].size(), 2u);
    EXPECT_TRUE(j["reports"][0]["consistent"].get<bool>());
}

TEST_F(Cli, ExitCodesDistinguishFailureKinds) {
    write_text(path("bad.json"), R"({"task": "regression", "unknown": 1})");
    EXPECT_EQ(run("train --config " + path("bad.json")).code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("report " + path("missing.lcqm")).code, 3);

    auto j = small_classifier();
    j["model"]["activation"] = "relu";
    j["sgd"]["lr"] = 1e200;
    j["sgd"]["momentum"] = 0.0;
    j["sgd"]["reference_epochs"] = 2;
    const auto cfg = write_config("div.json", j);
    const auto r = run("train --config " + cfg + " --out " + path("o"));
    EXPECT_EQ(r.code, 4) << r.out;
}

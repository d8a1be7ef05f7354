#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "plab/config.hpp"
#include "plab/csv.hpp"
#include "plab/data.hpp"
#include "plab/error.hpp"
#include "plab/runner.hpp"

using namespace plab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
   protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("plab_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(dir / name) << text;
        return dir / name;
    }

    fs::path dir;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json small_config() {
    return json::parse(R"({
        "seed": 3,
        "model": {"kind": "mlp", "depth": 2, "d_model": 8, "input_dim": 4},
        "adapter": {"kind": "propulsion", "sites": "All", "degree": 1},
        "train": {"learning_rate": 0.05, "epochs": 2, "batch_size": 16, "dropout": 0.1},
        "data": {"generator": "blobs", "n": 40, "dim": 4}
    })");
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(PLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndSeedDerivation) {
    auto c = parse_config(small_config());
    EXPECT_EQ(c.model.seed, 3u);
    EXPECT_EQ(c.train.seed, 3u);
    EXPECT_EQ(c.train.optimizer, OptimizerKind::kAdamW);
    EXPECT_EQ(c.precision, Precision::kF64);
    EXPECT_EQ(c.adapter.degree, 1);
}

TEST(Config, RoundTrip) {
    auto c = parse_config(small_config());
    auto again = parse_config(json::parse(normalized_config(c)));
    EXPECT_EQ(c, again);
    EXPECT_EQ(normalized_config(c), normalized_config(again));
    EXPECT_EQ(config_hash(c), config_hash(again));
    EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, HashChangesWithContent) {
    auto j = small_config();
    const auto h = config_hash(parse_config(j));
    j["train"]["learning_rate"] = 0.01;
    EXPECT_NE(config_hash(parse_config(j)), h);
}

TEST(Config, UnknownKeyNamesPath) {
    auto j = small_config();
    j["train"]["lr"] = 0.1;
    try {
        parse_config(j);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos) << e.what();
    }
}

TEST(Config, WrongTypeNamesPath) {
    auto j = small_config();
    j["model"]["depth"] = "two";
    try {
        parse_config(j);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("model.depth"), std::string::npos) << e.what();
    }
}

TEST(Config, TwoDataSources) {
    auto j = small_config();
    j["data"]["path"] = "x.csv";
    EXPECT_THROW(parse_config(j), ConfigError);
    j["data"]["source"] = "file";
    EXPECT_THROW(parse_config(j), ConfigError);
    j["data"].erase("generator");
    EXPECT_NO_THROW(parse_config(j));
}

TEST(Config, RangeChecks) {
    auto j = small_config();
    j["ntk"]["probes"] = 0;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = small_config();
    j["ntk"]["jl"]["eps"] = {1.5};
    EXPECT_THROW(parse_config(j), ConfigError);
    j = small_config();
    j["adapter"]["degree"] = -1;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = small_config();
    j["precision"] = "f16";
    EXPECT_THROW(parse_config(j), ConfigError);
}

TEST_F(TempDir, CsvRoundTrip) {
    write_csv(dir / "t.csv", {"a", "b"}, {{"1", format_number(0.1)}, {"2", format_number(1e-300)}});
    auto t = read_csv(dir / "t.csv");
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(std::stod(t.rows[0][t.column("b")]), 0.1);
    EXPECT_EQ(std::stod(t.rows[1][1]), 1e-300);
    EXPECT_THROW(t.column("c"), DataError);

    Eigen::MatrixXd m(2, 3);
    m << 1, 2.5, -3, 1.0 / 3.0, 0, 7e10;
    write_matrix_csv(dir / "m.csv", m);
    EXPECT_EQ(read_matrix_csv(dir / "m.csv"), m);
}

TEST_F(TempDir, CsvRaggedRowReportsLine) {
    auto p = write("bad.csv", "a,b\n1,2\n3\n");
    try {
        read_csv(p);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST_F(TempDir, LoadTextFixture) {
    auto p = write("three.csv", "label,text\n1,the movie was great\n0,dull and slow\n1,great fun\n");
    auto d = load_csv(p, Task::kClassification, 64, 8);
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0, 1}));
    EXPECT_EQ(d.tokens[0].size(), 4u);
    EXPECT_EQ(d.tokens[0][3], d.tokens[2][0]);  // "great"
}

TEST_F(TempDir, LoadFeatureFixture) {
    auto p = write("reg.csv", "target,f1,f2\n0.5,1,2\n-1.5,3,4\n");
    auto d = load_csv(p, Task::kRegression, 0, 0);
    EXPECT_EQ(d.feature_dim, 2u);
    EXPECT_EQ(d.targets, (std::vector<double>{0.5, -1.5}));
    EXPECT_EQ(d.features[1], (std::vector<double>{3, 4}));
}

TEST_F(TempDir, MalformedRowHasLineNumber) {
    auto p = write("bad.csv", "target,f1,f2\n0.5,1,2\n-1.5,x,4\n");
    try {
        load_csv(p, Task::kRegression, 0, 0);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    auto empty = write("empty.csv", "");
    EXPECT_THROW(load_csv(empty, Task::kRegression, 0, 0), DataError);
}

TEST(Data, BlobsBalanced) {
    auto d = make_blobs(200, 8, 2, 3.0, 7);
    EXPECT_EQ(d.size(), 200u);
    EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), 0u), 100);
    auto again = make_blobs(200, 8, 2, 3.0, 7);
    EXPECT_EQ(d.features, again.features);
}

TEST(Data, HashingDeterministic) {
    const auto a = tokenize("Hello world hello", 1000, 16);
    EXPECT_EQ(a, tokenize("Hello world hello", 1000, 16));
    EXPECT_EQ(a[0], a[2]);
    EXPECT_EQ(tokenize("a b c d e", 50, 3).size(), 3u);
}

TEST(Data, KeywordLabels) {
    auto d = make_keyword(50, 20, 6, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& s = d.tokens[i];
        const bool has = std::find(s.begin(), s.end(), 1u) != s.end();
        EXPECT_EQ(has, d.labels[i] == 1);
        EXPECT_EQ(std::find(s.begin(), s.end(), 0u), s.end());
    }
}

TEST(Data, SplitIsPartition) {
    auto d = make_blobs(50, 3, 2, 2.0, 1);
    auto s = split_dataset(d, 0.2, 9);
    EXPECT_EQ(s.validation.size(), 10u);
    EXPECT_EQ(s.train.size(), 40u);
}

TEST_F(TempDir, TrainWritesArtifacts) {
    auto c = parse_config(small_config());
    auto summary = run_train(c, dir / "run");
    for (const char* f : {"config.lock", "metrics.csv", "adapters.bin", "summary.json"}) {
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    }
    EXPECT_TRUE(summary["base_unchanged"].get<bool>());
    auto metrics = read_csv(dir / "run" / "metrics.csv");
    EXPECT_EQ(metrics.rows.size(), 2u);
    EXPECT_EQ(parse_config(json::parse(slurp(dir / "run" / "config.lock"))), c);
}

TEST_F(TempDir, MinimalOneEpoch) {
    auto j = small_config();
    j["train"]["epochs"] = 1;
    run_train(parse_config(j), dir);
    EXPECT_EQ(read_csv(dir / "metrics.csv").rows.size(), 1u);
}

TEST_F(TempDir, SweepDegreeAxisSorted) {
    auto j = small_config();
    j["sweep"]["degree"] = {100, 1, 15};
    auto summary = run_sweep(parse_config(j), dir, 2);
    auto t = read_csv(dir / "summary.csv");
    ASSERT_EQ(t.rows.size(), 3u);
    const auto col = t.column("degree");
    EXPECT_EQ(t.rows[0][col], "1");
    EXPECT_EQ(t.rows[1][col], "15");
    EXPECT_EQ(t.rows[2][col], "100");
    EXPECT_TRUE(summary.contains("degree_trend"));
}

TEST_F(TempDir, SweepNeedsAnAxis) {
    EXPECT_THROW(run_sweep(parse_config(small_config()), dir, 1), ConfigError);
}

TEST_F(TempDir, PoolingSweepIdenticalAtStepZero) {
    auto j = small_config();
    j["adapter"]["kind"] = "multi_propulsion";
    j["adapter"]["num_vectors"] = 4;
    j["train"]["epochs"] = 1;
    j["train"]["learning_rate"] = 0.0;
    j["sweep"]["pooling"] = {"average"};
    run_sweep(parse_config(j), dir / "multi", 1);
    auto single = small_config();
    single["train"]["epochs"] = 1;
    single["train"]["learning_rate"] = 0.0;
    run_train(parse_config(single), dir / "single");
    auto a = read_csv(dir / "multi" / "run_000" / "metrics.csv");
    auto b = read_csv(dir / "single" / "metrics.csv");
    EXPECT_EQ(a.rows[0][a.column("loss")], b.rows[0][b.column("loss")]);
}

TEST_F(TempDir, BudgetRun) {
    auto j = small_config();
    j["model"] = {{"kind", "transformer"}, {"depth", 12}, {"d_model", 768}, {"d_ff", 768},
                  {"n_heads", 12}, {"vocab_size", 100}, {"max_seq", 8}};
    j["data"] = {{"generator", "keyword"}};
    j["budget"] = {{"methods", {"propulsion", "lora"}}, {"rank", 8}, {"sites", "Attn+MLP"}};
    auto summary = run_budget(parse_config(j), dir);
    const auto p = summary["totals"]["propulsion"].get<std::size_t>();
    const auto l = summary["totals"]["lora"].get<std::size_t>();
    EXPECT_EQ(p, 48u * 768);
    EXPECT_EQ(l, 16u * p);
    EXPECT_TRUE(fs::exists(dir / "budget.csv"));
}

TEST_F(TempDir, NtkRunArtifacts) {
    auto j = small_config();
    j["model"] = {{"kind", "linear"}, {"depth", 1}, {"d_model", 16}, {"input_dim", 4}};
    j["ntk"] = {{"probes", 4}, {"steps", 3}, {"learning_rate", 0.0},
                {"jl", {{"d", {8, 64}}, {"eps", {0.5}}, {"trials", 200}}}};
    auto summary = run_ntk(parse_config(j), dir);
    for (const char* f : {"kernel_F.csv", "kernel_P.csv", "kernel_diff.csv", "drift.csv", "jacobian_0.csv",
                          "jacobian_t.csv", "jacobian_diff.csv", "jl.csv", "summary.json"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    auto drift = read_csv(dir / "drift.csv");
    for (const auto& row : drift.rows) EXPECT_EQ(std::stod(row[drift.column("relative_drift")]), 0.0);
    EXPECT_TRUE(summary["jl"][0]["vacuous"].get<bool>());
    EXPECT_EQ(read_matrix_csv(dir / "kernel_F.csv").rows(), 4);
}

TEST_F(TempDir, BinaryByteIdenticalMetrics) {
    auto cfg = write("c.json", small_config().dump());
    ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "a").string(), dir / "a.log"), 0);
    ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "b").string(), dir / "b.log"), 0);
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
    auto a = parse_config(json::parse(slurp(dir / "a" / "config.lock")));
    auto b = parse_config(json::parse(slurp(dir / "b" / "config.lock")));
    EXPECT_EQ(a.output_dir, (dir / "a").string());
    b.output_dir = a.output_dir;
    EXPECT_EQ(a, b);
}

TEST_F(TempDir, BinaryExitCodes) {
    auto bad = small_config();
    bad["train"]["lr"] = 1;
    auto bad_cfg = write("bad.json", bad.dump());
    EXPECT_EQ(run_cli("train --config " + bad_cfg.string(), dir / "1.log"), 2);
    EXPECT_NE(slurp(dir / "1.log").find("train.lr"), std::string::npos);

    EXPECT_EQ(run_cli("train", dir / "2.log"), 2);
    EXPECT_EQ(run_cli("frobnicate --config x", dir / "3.log"), 2);

    auto missing = small_config();
    missing["data"] = {{"source", "file"}, {"path", (dir / "nope.csv").string()}};
    auto missing_cfg = write("missing.json", missing.dump());
    EXPECT_EQ(run_cli("train --config " + missing_cfg.string() + " --out " + dir.string(), dir / "4.log"), 3);

    auto wide = small_config();
    wide["model"] = {{"kind", "linear"}, {"depth", 1}, {"d_model", 64}, {"input_dim", 4}};
    wide["ntk"] = {{"max_width", 32}};
    auto wide_cfg = write("wide.json", wide.dump());
    EXPECT_EQ(run_cli("ntk --config " + wide_cfg.string() + " --out " + dir.string(), dir / "5.log"), 5);
    EXPECT_NE(slurp(dir / "5.log").find("32"), std::string::npos);
}

TEST_F(TempDir, BinaryDivergenceExitCode) {
    auto j = small_config();
    j["train"]["learning_rate"] = 1e300;
    j["train"]["optimizer"] = "sgd";
    j["train"]["epochs"] = 50;
    auto cfg = write("div.json", j.dump());
    EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + dir.string(), dir / "d.log"), 4);
    EXPECT_NE(slurp(dir / "d.log").find("step"), std::string::npos);
}

TEST_F(TempDir, BinarySeedOverride) {
    auto cfg = write("c.json", small_config().dump());
    ASSERT_EQ(run_cli("train --config " + cfg.string() + " --seed 11 --precision f32 --out " + (dir / "s").string(),
                      dir / "s.log"),
              0);
    auto lock = parse_config(json::parse(slurp(dir / "s" / "config.lock")));
    EXPECT_EQ(lock.seed, 11u);
    EXPECT_EQ(lock.precision, Precision::kF32);
}

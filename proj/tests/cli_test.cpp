#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "simt/cli.hpp"

#include "support.hpp"

using namespace simt;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "simt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

constexpr const char* kTinyConfig = R"([task]
num_pairs = 90
held_out = 20
min_len = 3
max_len = 5
seed = 3

[model]
embed_dim = 8
hidden_dim = 16
num_layers = 1
num_heads = 2
epochs = 2
batch_size = 8
k_candidates = 1, 3

[policy]
head_hidden_dim = 8
epochs = 1
batch_size = 8

[sweep]
lambdas = 0.1, 0.3
ks = 1, 3
)";

}  // namespace

TEST(Config, LoadsSectionsAndLists) {
    const auto dir = simt::testing::temp_dir("cfg");
    simt::testing::write_text(dir / "a.ini",
                              "[task]\nnum_pairs = 50\nheld_out = 10\n[sweep]\nlambdas = 0.1, 0.25\nks = 2,4\n"
                              "r_max = 3\n[divergence]\nmeasure = kl\n[policy]\nloss_kind = mse\n[run]\nworkers = 2\n");
    const auto c = load_config((dir / "a.ini").string());
    EXPECT_EQ(c.task.num_pairs, 50);
    EXPECT_EQ(c.held_out, 10);
    EXPECT_EQ(c.lambdas, (std::vector<double>{0.1, 0.25}));
    EXPECT_EQ(c.ks, (std::vector<int>{2, 4}));
    EXPECT_EQ(c.r_max, 3);
    EXPECT_EQ(c.measure, DivergenceMeasure::Kl);
    EXPECT_EQ(c.policy.loss_kind, LossKind::Mse);
    EXPECT_EQ(c.workers, 2);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, RenderedConfigLoadsBackIdentically) {
    ExperimentConfig c;
    c.lambdas = {0.125, 0.5};
    c.r_max = 2;
    c.measure = DivergenceMeasure::Euclidean;
    const auto dir = simt::testing::temp_dir("cfg_render");
    simt::testing::write_text(dir / "r.ini", render_config(c));
    EXPECT_EQ(render_config(load_config((dir / "r.ini").string())), render_config(c));
}

TEST(Config, Errors) {
    const auto dir = simt::testing::temp_dir("cfg_err");
    EXPECT_THROW(load_config((dir / "missing.ini").string()), ConfigError);
    simt::testing::write_text(dir / "u.ini", "[task]\nnum_paris = 5\n");
    EXPECT_THROW(load_config((dir / "u.ini").string()), ConfigError);
    simt::testing::write_text(dir / "v.ini", "[task]\nnum_pairs = five\n");
    EXPECT_THROW(load_config((dir / "v.ini").string()), ConfigError);
    simt::testing::write_text(dir / "l.ini", "[sweep]\nlambdas = 0.1, x\n");
    EXPECT_THROW(load_config((dir / "l.ini").string()), ConfigError);
    EXPECT_THROW(parse_r_max("0"), ConfigError);
    EXPECT_EQ(parse_r_max("none"), std::nullopt);

    ExperimentConfig c;
    c.lambdas = {0.1, 0.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.held_out = c.task.num_pairs;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"evaluate"}).code, 1);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ZeroPairsIsAConfigError) {
    const auto dir = simt::testing::temp_dir("cli_zero");
    simt::testing::write_text(dir / "z.ini", "[task]\nnum_pairs = 0\nheld_out = 0\n");
    const auto r = run({"--config", (dir / "z.ini").string(), "--out", (dir / "out").string(), "gen-data"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("num_pairs"), std::string::npos);
}

TEST(Cli, MissingCorpusFailsBeforeTraining) {
    const auto dir = simt::testing::temp_dir("cli_missing");
    simt::testing::write_text(dir / "m.ini", "[paths]\nsource = " + (dir / "nope.src").string() +
                                                 "\ntarget = " + (dir / "nope.tgt").string() + "\n");
    const auto r = run({"--config", (dir / "m.ini").string(), "--out", (dir / "out").string(), "train-mt"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("missing source corpus"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "out" / "models" / "mt_multipath.json"));
}

TEST(Cli, MissingPrerequisitesAreDataErrors) {
    const auto dir = simt::testing::temp_dir("cli_prereq");
    EXPECT_EQ(run({"--out", dir.string(), "train-mt"}).code, 2);
    EXPECT_EQ(run({"--out", dir.string(), "--r-max", "zero", "gen-data"}).code, 1);
}

TEST(Cli, GenDataIsDeterministicAndMatchesGolden) {
    const auto a = simt::testing::temp_dir("cli_gen_a");
    const auto b = simt::testing::temp_dir("cli_gen_b");
    ASSERT_EQ(run({"--out", a.string(), "--seed", "42", "gen-data"}).code, 0);
    ASSERT_EQ(run({"--out", b.string(), "--seed", "42", "gen-data"}).code, 0);
    const std::vector<std::pair<std::string, std::string>> golden = {
        {"train.src", "87cf5dda969835f8"}, {"train.tgt", "bed45ec675c6dccc"}, {"train.align", "5053efcbfb7a2bed"},
        {"test.src", "d6eb1a204ceb2a33"},   {"test.tgt", "777e89e9986e382f"},   {"test.align", "bb5b862a69ed13f2"},
        {"vocab.txt", "0ca1ea8c449da4da"}};
    for (const auto& [file, hash] : golden) {
        const auto pa = (a / "data" / file).string();
        EXPECT_EQ(file_hash(pa), file_hash((b / "data" / file).string())) << file;
        EXPECT_EQ(file_hash(pa), hash) << file;
    }
    EXPECT_EQ(read_lines((a / "data" / "train.src").string()).size(), 1800u);
    EXPECT_EQ(read_lines((a / "data" / "test.src").string()).size(), 200u);

    auto outputs = [](const fs::path& root) {
        const auto j = nlohmann::json::parse(simt::testing::read_text(root / "manifests" / "gen-data.json"));
        std::vector<std::string> hashes;
        for (const auto& o : j["outputs"]) hashes.push_back(o["hash"].get<std::string>());
        return std::make_pair(j, hashes);
    };
    const auto [ja, ha] = outputs(a);
    const auto [jb, hb] = outputs(b);
    EXPECT_EQ(ha, hb);
    EXPECT_EQ(ha.size(), 7u);
    EXPECT_EQ(ja["config_hash"], jb["config_hash"]);
    EXPECT_EQ(ja["version"], kVersion);
    EXPECT_EQ(ja["command"], "gen-data");
}

TEST(Cli, SeedChangesTheCorpus) {
    const auto a = simt::testing::temp_dir("cli_seed_a");
    const auto b = simt::testing::temp_dir("cli_seed_b");
    ASSERT_EQ(run({"--out", a.string(), "--seed", "1", "gen-data"}).code, 0);
    ASSERT_EQ(run({"--out", b.string(), "--seed", "2", "gen-data"}).code, 0);
    EXPECT_NE(file_hash((a / "data" / "train.src").string()), file_hash((b / "data" / "train.src").string()));
}

TEST(Cli, PipelineRunsEndToEnd) {
    const auto dir = simt::testing::temp_dir("cli_pipeline");
    simt::testing::write_text(dir / "tiny.ini", kTinyConfig);
    const std::string cfg = (dir / "tiny.ini").string();
    const auto out = (dir / "out");
    auto step = [&](std::vector<std::string> args) {
        args.insert(args.begin(), {"--config", cfg, "--out", out.string(), "--workers", "2"});
        const auto r = run(args);
        EXPECT_EQ(r.code, 0) << r.err;
        return r;
    };
    step({"gen-data"});
    step({"train-mt", "--objective", "multipath"});
    const auto t = step({"train-mt", "--objective", "full"});
    EXPECT_NE(t.out.find("held-out wait-3 NLL"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "models" / "mt_full.loss.tsv"));
    EXPECT_EQ(read_lines((out / "models" / "mt_full.loss.tsv").string()).size(), 2u);

    step({"gen-divergence", "--model", "oracle"});
    for (const auto& m : read_matrices((out / "divergence" / "test.matrix").string()))
        for (int tt = 1; tt <= m.T; ++tt) {
            for (int j = 1; j <= m.N; ++j) {
                ASSERT_GE(m.at(tt, j), 0.0);
                ASSERT_LE(m.at(tt, j), 1.0);
            }
            ASSERT_LE(std::abs(m.at(tt, m.N)), 1e-6);
        }
    step({"gen-divergence"});
    step({"train-policy"});
    EXPECT_TRUE(fs::exists(out / "models" / "policy.json"));

    const auto sw = step({"sweep", "--policy", "waitk"});
    EXPECT_NE(sw.out.find("waitk_k3"), std::string::npos);
    const auto curve = read_curve((out / "curves" / "waitk.bleu.tsv").string());
    ASSERT_EQ(curve.size(), 2u);
    EXPECT_EQ(curve[0].count, 20);
    EXPECT_LE(curve[0].latency, curve[1].latency);
    EXPECT_EQ(read_curve((out / "curves" / "waitk.nll.tsv").string()).size(), 2u);
    EXPECT_EQ(read_lines((out / "curves" / "waitk.latency_table.tsv").string()).front(), "k\tAL");

    step({"sweep", "--policy", "oracle", "--r-max", "3"});
    step({"sweep", "--policy", "learned", "--lambda", "0.2"});
    EXPECT_EQ(read_curve((out / "curves" / "learned.nll.tsv").string()).size(), 1u);
    step({"simulate", "--policy", "waitk", "--k", "2"});
    const auto log = (out / "sim" / "waitk_k2.log").string();
    EXPECT_EQ(read_simulation_log(log).size(), 20u);

    const auto ev = step({"evaluate", "--log", log});
    const auto report = nlohmann::json::parse(ev.out);
    EXPECT_EQ(report["runs"][0]["sentences"], 20);
    EXPECT_TRUE(report.contains("anticipation_rate"));
    step({"curve", "--log", log, "--log", (out / "sim" / "waitk_k1.log").string(), "--name", "mine"});
    EXPECT_EQ(read_curve((out / "curves" / "mine.tsv").string()).size(), 2u);

    for (const char* m : {"gen-data", "train-mt", "gen-divergence", "train-policy", "sweep_waitk", "sweep_oracle",
                          "sweep_learned", "simulate_waitk", "evaluate", "curve"})
        EXPECT_TRUE(fs::exists(out / "manifests" / (std::string(m) + ".json"))) << m;

    // worker count does not change any output
    const auto out1 = dir / "out1";
    ASSERT_EQ(run({"--config", cfg, "--out", out1.string(), "gen-data"}).code, 0);
    fs::copy(out / "models", out1 / "models");
    ASSERT_EQ(run({"--config", cfg, "--out", out1.string(), "--workers", "1", "sweep", "--policy", "waitk"}).code, 0);
    EXPECT_EQ(file_hash((out1 / "sim" / "waitk_k3.log").string()), file_hash((out / "sim" / "waitk_k3.log").string()));

    EXPECT_EQ(run({"--config", cfg, "--out", out.string(), "sweep", "--policy", "bogus"}).code, 1);
    EXPECT_EQ(run({"--config", cfg, "--out", out.string(), "--measure", "euclidean", "train-policy"}).code, 1);
}

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "trajgen/config.hpp"
#include "trajgen/pipeline.hpp"

using namespace trajgen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("trajgen_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

RunConfig tiny_run_config() {
    RunConfig c;
    c.seed = 12;
    c.env.num_channels = 4;
    c.env.total_power_options = {6.0, 30.0};
    c.intents = {{1, 0.0, 10.0, "low"}, {3, 20.0, 30.0, "medium"}};
    c.expert_count_per_intent = 80;
    c.gdm.hidden = 16;
    c.gdm.heads = 2;
    c.gdm.head_dim = 4;
    c.gdm.wni_dim = 8;
    c.gdm.time_dim = 8;
    c.gdm.train_steps = 6;
    c.gdm.batch = 16;
    c.gdm.generate_per_intent = 30;
    c.bcq.batch = 20;
    c.bcq.iterations = 4;
    c.bcq.hidden = 12;
    c.ddpg.steps = 8;
    c.ddpg.batch = 4;
    c.ddpg.hidden = 12;
    c.eval.steps = 5;
    return c;
}

}  // namespace

TEST(Config, DefaultsMatchSimulationTable) {
    const RunConfig c;
    EXPECT_EQ(c.env.num_channels, 16u);
    EXPECT_EQ(c.env.total_power_options, (std::vector<double>{6, 12, 18, 24, 30}));
    EXPECT_EQ(c.intents.size(), 5u);
    EXPECT_EQ(c.gdm.time_steps, 5u);
    EXPECT_DOUBLE_EQ(c.gdm.beta_lo, 1e-4);
    EXPECT_DOUBLE_EQ(c.gdm.beta_hi, 0.02);
    EXPECT_EQ(c.gdm.hidden, 64u);
    EXPECT_EQ(c.gdm.heads, 4u);
    EXPECT_EQ(c.gdm.head_dim, 8u);
    EXPECT_EQ(c.gdm.wni_dim, 16u);
    EXPECT_EQ(c.gdm.time_dim, 16u);
    EXPECT_EQ(c.gdm.layers, 4u);
    EXPECT_EQ(c.gdm.batch, 64u);
    EXPECT_DOUBLE_EQ(c.bcq.gamma, 0.1);
    EXPECT_DOUBLE_EQ(c.bcq.lambda, 0.75);
    EXPECT_DOUBLE_EQ(c.bcq.max_perturb, 0.05);
    EXPECT_EQ(c.bcq.batch, 100u);
    EXPECT_DOUBLE_EQ(c.bcq.soft_update, 0.1);
    EXPECT_EQ(c.bcq.hidden, 32u);
    EXPECT_DOUBLE_EQ(c.ddpg.soft_update, 0.005);
}

TEST(Config, RoundTripAndOverride) {
    RunConfig c = tiny_run_config();
    const json j = to_json(c);
    const RunConfig back = config_from_json(j);
    EXPECT_EQ(config_hash(back), config_hash(c));
    // Partial override keeps everything else at defaults.
    const RunConfig partial = config_from_json(json{{"seed", 99}, {"gdm", {{"hidden", 48}}}});
    EXPECT_EQ(partial.seed, 99u);
    EXPECT_EQ(partial.gdm.hidden, 48u);
    EXPECT_EQ(partial.gdm.heads, 4u);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(config_from_json(json{{"sede", 1}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"gdm", {{"hiden", 32}}}}), ConfigError);
}

TEST(Config, HashChangesWithContent) {
    RunConfig a = tiny_run_config();
    RunConfig b = a;
    b.seed += 1;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Persistence, BkbRoundTripIsLossless) {
    TempDir dir("bkb");
    const auto intents = default_intents();
    EnvConfig env;
    const auto ds = collect_expert(intents, env, 40, 3);
    auto built = build_bkb(ds);
    built.bkb.dataset_hash = "feedbeef";
    const std::string path = dir.str() + "/bkb.json";
    save_bkb(path, built.bkb, "cfh", 3);
    const Bkb back = load_bkb(path);
    for (std::size_t e = 0; e < 4; ++e) {
        EXPECT_DOUBLE_EQ(back.mean[e], built.bkb.mean[e]);
        EXPECT_DOUBLE_EQ(back.stddev[e], built.bkb.stddev[e]);
    }
    ASSERT_EQ(back.intent_ids.size(), built.bkb.intent_ids.size());
    for (std::size_t i = 0; i < back.intent_ids.size(); ++i)
        for (std::size_t e = 0; e < 4; ++e) {
            EXPECT_DOUBLE_EQ(back.bounds[i][e].lo, built.bkb.bounds[i][e].lo);
            EXPECT_DOUBLE_EQ(back.bounds[i][e].hi, built.bkb.bounds[i][e].hi);
        }
    EXPECT_EQ(back.dataset_hash, "feedbeef");
}

TEST(Persistence, CheckpointRoundTripPreservesForward) {
    TempDir dir("ckpt");
    Rng rng(5);
    Mlp net({6, 10, 3}, {Activation::Relu, Activation::Identity});
    net.init(rng);
    Vec probe(6);
    for (double& v : probe) v = rng.gauss();
    const Vec before = net.forward(probe);

    std::vector<ParamView> params;
    net.collect_params("net", params);
    const std::string path = dir.str() + "/net.json";
    save_checkpoint(path, params, {42, "cfg", 7});

    Mlp other({6, 10, 3}, {Activation::Relu, Activation::Identity});
    std::vector<ParamView> other_params;
    other.collect_params("net", other_params);
    const CheckpointMeta meta = load_checkpoint(path, other_params);
    EXPECT_EQ(meta.seed, 42u);
    EXPECT_EQ(meta.config_hash, "cfg");
    EXPECT_EQ(meta.step_count, 7u);
    const Vec after = other.forward(probe);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_DOUBLE_EQ(before[i], after[i]);
}

TEST(Persistence, DatasetRoundTripExact) {
    TempDir dir("ds");
    const auto intents = default_intents();
    EnvConfig env;
    const auto ds = collect_expert(intents, env, 10, 8);
    const std::string path = dir.str() + "/data.jsonl";
    save_dataset(path, ds);
    const DatasetFile back = load_dataset(path);
    ASSERT_EQ(back.trajectories.size(), ds.size());
    EXPECT_TRUE(back.header.is_null());
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t m = 0; m < ds[i].s.size(); ++m) {
            EXPECT_DOUBLE_EQ(back.trajectories[i].s[m], ds[i].s[m]);
            EXPECT_DOUBLE_EQ(back.trajectories[i].a[m], ds[i].a[m]);
            EXPECT_DOUBLE_EQ(back.trajectories[i].r[m], ds[i].r[m]);
            EXPECT_DOUBLE_EQ(back.trajectories[i].s_next[m], ds[i].s_next[m]);
        }
}

TEST(Persistence, GeneratedHeaderSurvives) {
    TempDir dir("gen");
    std::vector<Trajectory> ds(2);
    for (auto& t : ds) {
        t.intent_id = 4;
        t.s = t.a = t.r = t.s_next = Vec(3, 1.0);
    }
    const std::string path = dir.str() + "/gen.jsonl";
    save_dataset(path, ds, json{{"generated", true}, {"intent", 4}, {"seed", 9}});
    const DatasetFile back = load_dataset(path);
    EXPECT_EQ(back.trajectories.size(), 2u);
    ASSERT_FALSE(back.header.is_null());
    EXPECT_EQ(back.header.at("intent").get<int>(), 4);
}

TEST(Persistence, TruncatedFileIsFormatErrorNotCrash) {
    TempDir dir("trunc");
    const std::string path = dir.str() + "/bad.json";
    write_file(path, "{\"schema\": \"trajgen/bkb/v1\", \"mean\": {\"s\": 1.");
    EXPECT_THROW(load_bkb(path), FormatError);
    const std::string jsonl = dir.str() + "/bad.jsonl";
    write_file(jsonl, "{\"intent\": 1, \"s\": [1.0, tru");
    EXPECT_THROW(load_dataset(jsonl), FormatError);
}

TEST(Persistence, WrongSchemaVersionRejected) {
    TempDir dir("schema");
    const std::string path = dir.str() + "/bkb.json";
    write_file(path, json{{"schema", "trajgen/bkb/v999"}}.dump());
    EXPECT_THROW(load_bkb(path), FormatError);
}

TEST(Pipeline, GenerateWithoutTrainedModelsIsStagingError) {
    TempDir dir("stage");
    const RunConfig c = tiny_run_config();
    try {
        run_pipeline(c, {"generate"}, dir.str());
        FAIL() << "expected StagingError";
    } catch (const StagingError& e) {
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
}

TEST(Pipeline, UnknownStageRejected) {
    TempDir dir("badstage");
    EXPECT_THROW(run_pipeline(tiny_run_config(), {"trian-gdm"}, dir.str()), ConfigError);
}

TEST(Pipeline, FullRunIsDeterministicAndCountsRows) {
    TempDir da("runa"), db("runb");
    const RunConfig c = tiny_run_config();
    const std::vector<std::string> all = {"expert", "train-gdm", "generate", "train-offline",
                                          "evaluate"};
    run_pipeline(c, all, da.str());
    run_pipeline(c, all, db.str());

    const std::string ma = read_file(da.str() + "/metrics.csv");
    const std::string mb = read_file(db.str() + "/metrics.csv");
    EXPECT_EQ(ma, mb);

    // 4 schemes x 2 intents x 2 powers x 5 steps + header.
    std::size_t lines = 0;
    for (char ch : ma)
        if (ch == '\n') ++lines;
    EXPECT_EQ(lines, 4u * 2u * 2u * 5u + 1u);

    // Re-running one stage in place leaves artifacts byte-identical.
    const std::string bkb_before = read_file(da.str() + "/bkb.json");
    run_pipeline(c, {"expert"}, da.str());
    EXPECT_EQ(read_file(da.str() + "/bkb.json"), bkb_before);
}

TEST(Pipeline, SummaryMeansMatchCsvColumnAverages) {
    TempDir dir("sum");
    const RunConfig c = tiny_run_config();
    run_pipeline(c, {"expert", "train-gdm", "generate", "train-offline", "evaluate"}, dir.str());
    const json summary = load_json(dir.str() + "/summary.json");

    // Recompute means from the CSV.
    std::istringstream csv(read_file(dir.str() + "/metrics.csv"));
    std::string line;
    std::getline(csv, line);  // header
    std::map<std::string, std::pair<double, double>> acc;  // key -> (sum, n)
    while (std::getline(csv, line)) {
        std::istringstream row(line);
        std::string scheme, intent, power, step, se, seed;
        std::getline(row, scheme, ',');
        std::getline(row, intent, ',');
        std::getline(row, power, ',');
        std::getline(row, step, ',');
        std::getline(row, se, ',');
        std::getline(row, seed, ',');
        auto& slot = acc[scheme + "|" + intent + "|" + power];
        slot.first += std::stod(se);
        slot.second += 1.0;
    }
    for (const auto& cell : summary.at("cells")) {
        const std::string key = cell.at("scheme").get<std::string>() + "|" +
                                std::to_string(cell.at("intent_id").get<int>()) + "|" +
                                format_double(cell.at("total_power").get<double>());
        ASSERT_TRUE(acc.count(key)) << key;
        const double csv_mean = acc[key].first / acc[key].second;
        EXPECT_NEAR(cell.at("mean").get<double>(), csv_mean, 1e-12);
    }
}

TEST(Pipeline, MismatchedConfigInSameDirectoryRejected) {
    TempDir dir("mismatch");
    RunConfig c = tiny_run_config();
    run_pipeline(c, {"expert"}, dir.str());
    c.seed += 1;
    EXPECT_THROW(run_pipeline(c, {"expert"}, dir.str()), StagingError);
}

TEST(Pipeline, TamperedBkbIsProvenanceError) {
    TempDir dir("tamper");
    RunConfig c = tiny_run_config();
    run_pipeline(c, {"expert", "train-gdm"}, dir.str());
    // Rewrite the bkb with different contents after the gdm manifest recorded its hash.
    Bkb bkb = load_bkb(dir.str() + "/bkb.json");
    bkb.mean[0] += 1.0;
    save_bkb(dir.str() + "/bkb.json", bkb, "other", 1);
    EXPECT_THROW(run_pipeline(c, {"generate"}, dir.str()), ProvenanceError);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trajgen/baselines.hpp"
#include "trajgen/config.hpp"
#include "trajgen/gdm.hpp"
#include "trajgen/offline_rl.hpp"
#include "trajgen/parallel.hpp"
#include "trajgen/serialize.hpp"
#include "trajgen/wni.hpp"

namespace trajgen {

struct ArtifactPaths {
    std::string out;

    std::string run_manifest() const { return out + "/manifest.json"; }
    std::string expert_dataset() const { return out + "/expert_dataset.jsonl"; }
    std::string bkb() const { return out + "/bkb.json"; }
    std::string gdm_dir() const { return out + "/gdm"; }
    std::string gdm_manifest() const { return gdm_dir() + "/manifest.json"; }
    std::string gdm_model(std::size_t e) const {
        return gdm_dir() + "/model_" + element_name(kElementTypes[e]) + ".json";
    }
    std::string gdm_losses() const { return gdm_dir() + "/training_losses.csv"; }
    std::string generated(int intent) const {
        return out + "/generated/intent_" + std::to_string(intent) + ".jsonl";
    }
    std::string policy_dir(int intent) const {
        return out + "/policies/bcq_intent_" + std::to_string(intent);
    }
    std::string policy_manifest(int intent) const { return policy_dir(intent) + "/manifest.json"; }
    std::string policy_net(int intent, const std::string& net) const {
        return policy_dir(intent) + "/" + net + ".json";
    }
    std::string baseline_series(int intent, double power) const {
        return out + "/baselines/ddpg_intent_" + std::to_string(intent) + "_power_" +
               std::to_string(static_cast<int>(power)) + ".csv";
    }
    std::string metrics() const { return out + "/metrics.csv"; }
    std::string summary() const { return out + "/summary.json"; }
};

inline void require_artifact(const std::string& path) {
    if (!std::filesystem::exists(path)) throw StagingError("missing upstream artifact: " + path);
}

// ---------------------------------------------------------------------------
// Shared builders

inline std::map<int, WniFeature> build_wni_features(const RunConfig& config) {
    EmbeddingTable table;
    table.seed = config.gdm.embed_seed;
    table.dim = config.gdm.wni_dim;
    std::map<int, WniFeature> out;
    for (const auto& spec : config.intents)
        out[spec.intent_id] = encode_intent(intent_tuples(spec, config.env), table);
    return out;
}

inline GdmModelSet build_gdm(const RunConfig& config) {
    GdmConfig g;
    g.target_dim = config.env.num_channels;
    g.time_dim = config.gdm.time_dim;
    g.hidden = config.gdm.hidden;
    g.heads = config.gdm.heads;
    g.head_dim = config.gdm.head_dim;
    g.layers = config.gdm.layers;
    g.wni_cols = 2 * config.gdm.wni_dim;
    g.batch = config.gdm.batch;
    g.lr = config.gdm.lr;
    g.train_steps = config.gdm.train_steps;
    const NoiseSchedule sched =
        NoiseSchedule::linear(config.gdm.time_steps, config.gdm.beta_lo, config.gdm.beta_hi);
    return GdmModelSet(g, sched, derive_seed(config.seed, 0x67646dULL));
}

// ---------------------------------------------------------------------------
// Run manifest: records config provenance and artifact hashes per stage.

inline void update_run_manifest(const RunConfig& config, const ArtifactPaths& paths,
                                const std::vector<std::string>& artifact_files) {
    const std::string chash = config_hash(config);
    json manifest;
    if (std::filesystem::exists(paths.run_manifest())) {
        manifest = load_json(paths.run_manifest());
        require_schema(manifest, "trajgen/run/v1", paths.run_manifest());
        if (manifest.value("config_hash", std::string()) != chash)
            throw StagingError("output directory " + paths.out +
                               " holds artifacts from a different config (hash mismatch)");
    } else {
        manifest["schema"] = "trajgen/run/v1";
        manifest["config"] = to_json(config);
        manifest["config_hash"] = chash;
        manifest["seed"] = config.seed;
        manifest["artifacts"] = json::object();
    }
    for (const auto& f : artifact_files) {
        const std::string rel = std::filesystem::relative(f, paths.out).string();
        manifest["artifacts"][rel] = hash_file(f);
    }
    save_json(paths.run_manifest(), manifest);
}

// ---------------------------------------------------------------------------
// Stages

inline void stage_expert(const RunConfig& config, const ArtifactPaths& paths) {
    const auto dataset = collect_expert(config.intents, config.env, config.expert_count_per_intent,
                                        derive_seed(config.seed, 0x455850ULL));
    save_dataset(paths.expert_dataset(), dataset);
    auto built = build_bkb(dataset);
    built.bkb.dataset_hash = hash_file(paths.expert_dataset());
    save_bkb(paths.bkb(), built.bkb, config_hash(config), config.seed);
    update_run_manifest(config, paths, {paths.expert_dataset(), paths.bkb()});
}

inline void stage_train_gdm(const RunConfig& config, const ArtifactPaths& paths) {
    require_artifact(paths.expert_dataset());
    require_artifact(paths.bkb());
    const Bkb bkb = load_bkb(paths.bkb());
    if (!bkb.dataset_hash.empty() && bkb.dataset_hash != hash_file(paths.expert_dataset()))
        throw ProvenanceError("expert dataset does not match the hash recorded in " + paths.bkb());

    const auto raw = load_dataset(paths.expert_dataset()).trajectories;
    std::vector<Trajectory> normalized;
    normalized.reserve(raw.size());
    for (const auto& t : raw) {
        Trajectory n;
        n.intent_id = t.intent_id;
        n.s = normalize(t.s, ElementType::S, bkb);
        n.a = normalize(t.a, ElementType::A, bkb);
        n.r = normalize(t.r, ElementType::R, bkb);
        n.s_next = normalize(t.s_next, ElementType::SNext, bkb);
        normalized.push_back(std::move(n));
    }

    GdmModelSet models = build_gdm(config);
    const auto wni = build_wni_features(config);
    Rng rng(derive_seed(config.seed, 0x74726eULL));
    std::ostringstream losses;
    losses << "iteration,loss_s,loss_a,loss_r,loss_s_next\n";
    for (std::size_t it = 0; it < config.gdm.train_steps; ++it) {
        const auto l = gdm_train_step(models, normalized, wni, rng);
        losses << it << ',' << format_double(l[0]) << ',' << format_double(l[1]) << ','
               << format_double(l[2]) << ',' << format_double(l[3]) << "\n";
    }

    const CheckpointMeta meta{config.seed, config_hash(config), models.train_iterations};
    std::vector<std::string> files;
    for (std::size_t e = 0; e < 4; ++e) {
        const auto params = models.nets[e].params();
        save_checkpoint(paths.gdm_model(e), params, meta);
        files.push_back(paths.gdm_model(e));
    }
    write_file(paths.gdm_losses(), losses.str());
    files.push_back(paths.gdm_losses());

    json manifest;
    manifest["schema"] = "trajgen/gdm-manifest/v1";
    manifest["schedule"] = {{"time_steps", config.gdm.time_steps},
                            {"beta_lo", config.gdm.beta_lo},
                            {"beta_hi", config.gdm.beta_hi}};
    manifest["wni_dim"] = config.gdm.wni_dim;
    manifest["element_dims"] = config.env.num_channels;
    manifest["bkb_hash"] = hash_file(paths.bkb());
    manifest["config_hash"] = config_hash(config);
    manifest["seed"] = config.seed;
    json model_hashes = json::object();
    for (std::size_t e = 0; e < 4; ++e)
        model_hashes[element_name(kElementTypes[e])] = hash_file(paths.gdm_model(e));
    manifest["models"] = std::move(model_hashes);
    save_json(paths.gdm_manifest(), manifest);
    files.push_back(paths.gdm_manifest());
    update_run_manifest(config, paths, files);
}

inline GdmModelSet load_gdm(const RunConfig& config, const ArtifactPaths& paths) {
    require_artifact(paths.gdm_manifest());
    const json manifest = load_json(paths.gdm_manifest());
    require_schema(manifest, "trajgen/gdm-manifest/v1", paths.gdm_manifest());
    require_artifact(paths.bkb());
    if (manifest.at("bkb_hash").get<std::string>() != hash_file(paths.bkb()))
        throw ProvenanceError("bkb.json does not match the hash recorded in " + paths.gdm_manifest());
    GdmModelSet models = build_gdm(config);
    for (std::size_t e = 0; e < 4; ++e) {
        require_artifact(paths.gdm_model(e));
        auto params = models.nets[e].params();
        load_checkpoint(paths.gdm_model(e), params);
    }
    return models;
}

inline void stage_generate(const RunConfig& config, const ArtifactPaths& paths,
                           int only_intent = 0) {
    const GdmModelSet models = load_gdm(config, paths);
    const Bkb bkb = load_bkb(paths.bkb());
    const auto wni = build_wni_features(config);
    const std::string ckpt_hash = hash_file(paths.gdm_manifest());

    std::vector<std::string> files;
    for (const auto& spec : config.intents) {
        if (only_intent != 0 && spec.intent_id != only_intent) continue;
        const auto gen = generate_trajectories(
            models, wni.at(spec.intent_id), spec.intent_id, bkb, config.gdm.generate_per_intent,
            derive_seed(config.seed, 0x67656eULL, static_cast<std::uint64_t>(spec.intent_id)),
            ckpt_hash);
        json header = {{"generated", true},
                       {"intent", spec.intent_id},
                       {"seed", gen.meta.seed},
                       {"checkpoint_hash", gen.meta.checkpoint_hash},
                       {"config_hash", config_hash(config)}};
        save_dataset(paths.generated(spec.intent_id), gen.trajectories, header);
        files.push_back(paths.generated(spec.intent_id));
    }
    update_run_manifest(config, paths, files);
}

inline const std::array<const char*, 5> kPolicyNets = {"vae_encoder", "vae_decoder", "perturb", "q1",
                                                       "q2"};

inline std::vector<ParamView> policy_net_params(BcqLearner& learner, const std::string& net) {
    std::vector<ParamView> out;
    if (net == "vae_encoder")
        learner.vae_encoder().collect_params(net, out);
    else if (net == "vae_decoder")
        learner.vae_decoder().collect_params(net, out);
    else if (net == "perturb")
        learner.perturb_net().collect_params(net, out);
    else if (net == "q1")
        learner.q1_net().collect_params(net, out);
    else if (net == "q2")
        learner.q2_net().collect_params(net, out);
    else
        throw LookupError("unknown policy network '" + net + "'");
    return out;
}

inline void save_policy(const ArtifactPaths& paths, BcqLearner& learner, int intent,
                        const RunConfig& config, const std::string& generated_hash,
                        std::vector<std::string>& files) {
    const CheckpointMeta meta{config.seed, config_hash(config), learner.iteration()};
    for (const char* net : kPolicyNets) {
        const auto params = policy_net_params(learner, net);
        save_checkpoint(paths.policy_net(intent, net), params, meta);
        files.push_back(paths.policy_net(intent, net));
    }
    json manifest;
    manifest["schema"] = "trajgen/policy-manifest/v1";
    manifest["intent"] = intent;
    manifest["networks"] = kPolicyNets;
    manifest["whitening"] = {{"s_mean", learner.s_mean()},   {"s_std", learner.s_std()},
                             {"a_mean", learner.a_mean()},   {"a_std", learner.a_std()},
                             {"r_mean", learner.r_mean()},   {"r_std", learner.r_std()}};
    manifest["generated_hash"] = generated_hash;
    manifest["config_hash"] = config_hash(config);
    manifest["seed"] = config.seed;
    save_json(paths.policy_manifest(intent), manifest);
    files.push_back(paths.policy_manifest(intent));
}

inline BcqLearner load_policy(const RunConfig& config, const ArtifactPaths& paths, int intent) {
    require_artifact(paths.policy_manifest(intent));
    const json manifest = load_json(paths.policy_manifest(intent));
    require_schema(manifest, "trajgen/policy-manifest/v1", paths.policy_manifest(intent));
    BcqLearner learner(config.bcq, config.env.num_channels, config.env.num_channels,
                       derive_seed(config.seed, 0x706f6cULL, static_cast<std::uint64_t>(intent)));
    for (const char* net : kPolicyNets) {
        require_artifact(paths.policy_net(intent, net));
        auto params = policy_net_params(learner, net);
        load_checkpoint(paths.policy_net(intent, net), params);
    }
    const json& w = manifest.at("whitening");
    learner.set_whitening(w.at("s_mean").get<Vec>(), w.at("s_std").get<Vec>(),
                          w.at("a_mean").get<Vec>(), w.at("a_std").get<Vec>(),
                          w.at("r_mean").get<double>(), w.at("r_std").get<double>());
    // Targets resume as copies of the online nets.
    learner.soft_update_all(1.0);
    return learner;
}

inline void stage_train_offline(const RunConfig& config, const ArtifactPaths& paths,
                                int only_intent = 0) {
    std::vector<std::string> files;
    for (const auto& spec : config.intents) {
        if (only_intent != 0 && spec.intent_id != only_intent) continue;
        require_artifact(paths.generated(spec.intent_id));
        const auto ds = load_dataset(paths.generated(spec.intent_id));
        BcqLearner learner =
            train_bcq(ds.trajectories, config.bcq, config.env.num_channels, config.env.num_channels,
                      derive_seed(config.seed, 0x62637154ULL,
                                  static_cast<std::uint64_t>(spec.intent_id)));
        save_policy(paths, learner, spec.intent_id, config,
                    hash_file(paths.generated(spec.intent_id)), files);
    }
    update_run_manifest(config, paths, files);
}

// ---------------------------------------------------------------------------
// Evaluation

struct CellKey {
    std::string scheme;
    int intent = 0;
    double power = 0.0;
    bool operator<(const CellKey& o) const {
        if (scheme != o.scheme) return scheme < o.scheme;
        if (intent != o.intent) return intent < o.intent;
        return power < o.power;
    }
};

inline void stage_evaluate(const RunConfig& config, const ArtifactPaths& paths) {
    std::vector<MetricsRow> rows;
    std::map<CellKey, EvalSummary> cells;

    for (const auto& spec : config.intents) {
        BcqLearner bcq = load_policy(config, paths, spec.intent_id);
        for (std::size_t pi = 0; pi < config.env.total_power_options.size(); ++pi) {
            const double power = config.env.total_power_options[pi];
            const std::uint64_t state_seed =
                derive_seed(config.seed, 0x6576616cULL, static_cast<std::uint64_t>(spec.intent_id), pi);

            DdpgConfig dc;
            dc.hidden = config.ddpg.hidden;
            dc.batch = config.ddpg.batch;
            dc.lr_actor = config.ddpg.lr_actor;
            dc.lr_critic = config.ddpg.lr_critic;
            dc.soft_update = config.ddpg.soft_update;
            dc.gamma = config.ddpg.gamma;
            DdpgLearner ddpg(dc, config.env.num_channels, power,
                             derive_seed(config.seed, 0x646470ULL,
                                         static_cast<std::uint64_t>(spec.intent_id), pi));
            ddpg.train(spec, config.env, config.ddpg.steps,
                       derive_seed(config.seed, 0x64647054ULL,
                                   static_cast<std::uint64_t>(spec.intent_id), pi));

            auto bcq_rng = std::make_shared<Rng>(derive_seed(
                config.seed, 0x626371ULL, static_cast<std::uint64_t>(spec.intent_id), pi));
            const std::size_t n_cand = config.bcq.n_candidates;
            const double n0 = config.env.noise_power;
            std::map<std::string, PolicyFn> schemes = {
                {"uniform",
                 [](const EnvState& st, double p) { return uniform_alloc(st.gains.size(), p); }},
                {"oracle", [n0](const EnvState& st, double p) { return waterfill(st.gains, p, n0); }},
                {"bcq_generated",
                 [&bcq, bcq_rng, n_cand](const EnvState& st, double p) {
                     return bcq.act(st.gains, n_cand, p, *bcq_rng);
                 }},
                {"ddpg", [&ddpg](const EnvState& st, double) { return ddpg.act(st.gains); }},
            };
            for (const auto& [name, policy] : schemes) {
                const Vec series = evaluate_policy_series(policy, spec, config.env, power,
                                                          config.eval.episodes, config.eval.steps,
                                                          state_seed);
                for (std::size_t st = 0; st < series.size(); ++st)
                    rows.push_back({name, spec.intent_id, power, st, series[st], config.seed});
                EvalSummary s;
                s.samples = series.size();
                s.mean_se = mean(series);
                s.std_se = stddev(series, s.mean_se);
                cells[{name, spec.intent_id, power}] = s;
            }
        }
    }

    write_file(paths.metrics(), metrics_csv(rows));

    json summary;
    summary["schema"] = "trajgen/summary/v1";
    summary["config_hash"] = config_hash(config);
    summary["seed"] = config.seed;
    json cell_list = json::array();
    for (const auto& [key, s] : cells)
        cell_list.push_back({{"scheme", key.scheme},
                             {"intent_id", key.intent},
                             {"total_power", key.power},
                             {"mean", s.mean_se},
                             {"std", s.std_se}});
    summary["cells"] = std::move(cell_list);
    json deltas = json::array();
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"bcq_generated", "ddpg"},     {"bcq_generated", "uniform"}, {"oracle", "bcq_generated"},
        {"oracle", "uniform"},         {"oracle", "ddpg"},           {"ddpg", "uniform"},
    };
    for (const auto& spec : config.intents) {
        for (double power : config.env.total_power_options) {
            for (const auto& [a, b] : pairs) {
                const double da = cells.at({a, spec.intent_id, power}).mean_se;
                const double db = cells.at({b, spec.intent_id, power}).mean_se;
                deltas.push_back({{"intent_id", spec.intent_id},
                                  {"total_power", power},
                                  {"pair", a + "-" + b},
                                  {"delta", da - db}});
            }
        }
    }
    summary["deltas"] = std::move(deltas);
    save_json(paths.summary(), summary);
    update_run_manifest(config, paths, {paths.metrics(), paths.summary()});
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& pipeline_stage_order() {
    static const std::vector<std::string> order = {"expert", "train-gdm", "generate", "train-offline",
                                                   "evaluate"};
    return order;
}

inline void run_stage(const std::string& stage, const RunConfig& config, const ArtifactPaths& paths) {
    if (stage == "expert")
        stage_expert(config, paths);
    else if (stage == "train-gdm")
        stage_train_gdm(config, paths);
    else if (stage == "generate")
        stage_generate(config, paths);
    else if (stage == "train-offline")
        stage_train_offline(config, paths);
    else if (stage == "evaluate")
        stage_evaluate(config, paths);
    else
        throw ConfigError("unknown pipeline stage '" + stage + "'");
}

/// Runs the requested stages in canonical order. Each stage checks its own
/// upstream artifacts, so requesting a later stage without its inputs fails
/// with a staging error naming the missing file.
inline void run_pipeline(const RunConfig& config, const std::vector<std::string>& stages,
                         const std::string& out_dir) {
    ArtifactPaths paths{out_dir};
    std::set<std::string> requested(stages.begin(), stages.end());
    for (const auto& s : stages)
        if (std::find(pipeline_stage_order().begin(), pipeline_stage_order().end(), s) ==
            pipeline_stage_order().end())
            throw ConfigError("unknown pipeline stage '" + s + "'");
    for (const auto& stage : pipeline_stage_order())
        if (requested.count(stage)) run_stage(stage, config, paths);
}

}  // namespace trajgen

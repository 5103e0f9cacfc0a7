#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajgen/env.hpp"
#include "trajgen/errors.hpp"
#include "trajgen/offline_rl.hpp"
#include "trajgen/serialize.hpp"

namespace trajgen {

struct GdmSettings {
    std::size_t time_steps = 5;  // T
    double beta_lo = 1e-4;
    double beta_hi = 0.02;
    std::size_t hidden = 64;
    std::size_t heads = 4;
    std::size_t head_dim = 8;
    std::size_t wni_dim = 16;   // embedding width; attention keys see 2x this
    std::size_t time_dim = 16;
    std::size_t layers = 4;
    double lr = 2e-4;
    std::size_t train_steps = 2000;  // M1
    std::size_t batch = 64;          // F1
    std::size_t generate_per_intent = 1600;  // L
    std::uint64_t embed_seed = 9001;
};

struct DdpgSettings {
    std::size_t steps = 2000;
    std::size_t hidden = 64;
    std::size_t batch = 64;
    double lr_actor = 2e-4;
    double lr_critic = 1e-4;
    double soft_update = 0.005;
    double gamma = 0.1;
};

struct EvalSettings {
    std::size_t episodes = 1;
    std::size_t steps = 200;
};

struct RunConfig {
    std::uint64_t seed = 1;
    EnvConfig env;
    std::vector<IntentSpec> intents = default_intents();
    std::size_t expert_count_per_intent = 10000;
    GdmSettings gdm;
    BcqConfig bcq;
    DdpgSettings ddpg;
    EvalSettings eval;
};

inline json to_json(const RunConfig& c) {
    json intents = json::array();
    for (const auto& s : c.intents)
        intents.push_back({{"intent_id", s.intent_id},
                           {"gain_low", s.gain_low},
                           {"gain_high", s.gain_high},
                           {"label", s.label}});
    return json{
        {"seed", c.seed},
        {"env",
         {{"num_channels", c.env.num_channels},
          {"noise_power", c.env.noise_power},
          {"total_power_options", c.env.total_power_options},
          {"episode_length", c.env.episode_length},
          {"intents", intents}}},
        {"expert", {{"count_per_intent", c.expert_count_per_intent}}},
        {"gdm",
         {{"time_steps", c.gdm.time_steps},
          {"beta_lo", c.gdm.beta_lo},
          {"beta_hi", c.gdm.beta_hi},
          {"hidden", c.gdm.hidden},
          {"heads", c.gdm.heads},
          {"head_dim", c.gdm.head_dim},
          {"wni_dim", c.gdm.wni_dim},
          {"time_dim", c.gdm.time_dim},
          {"layers", c.gdm.layers},
          {"lr", c.gdm.lr},
          {"train_steps", c.gdm.train_steps},
          {"batch", c.gdm.batch},
          {"generate_per_intent", c.gdm.generate_per_intent},
          {"embed_seed", c.gdm.embed_seed}}},
        {"bcq",
         {{"gamma", c.bcq.gamma},
          {"lambda", c.bcq.lambda},
          {"max_perturb", c.bcq.max_perturb},
          {"batch", c.bcq.batch},
          {"n_candidates", c.bcq.n_candidates},
          {"iterations", c.bcq.iterations},
          {"soft_update", c.bcq.soft_update},
          {"hidden", c.bcq.hidden},
          {"latent_dim", c.bcq.latent_dim},
          {"lr_policy", c.bcq.lr_policy},
          {"lr_q", c.bcq.lr_q},
          {"train_power_budget", c.bcq.train_power_budget}}},
        {"ddpg",
         {{"steps", c.ddpg.steps},
          {"hidden", c.ddpg.hidden},
          {"batch", c.ddpg.batch},
          {"lr_actor", c.ddpg.lr_actor},
          {"lr_critic", c.ddpg.lr_critic},
          {"soft_update", c.ddpg.soft_update},
          {"gamma", c.ddpg.gamma}}},
        {"eval", {{"episodes", c.eval.episodes}, {"steps", c.eval.steps}}},
    };
}

// Every field individually overridable; unknown keys rejected so typos fail
// loudly instead of silently running defaults.
inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    auto get = [](const json& obj, const char* key, auto& into) {
        if (obj.contains(key)) into = obj.at(key).template get<std::decay_t<decltype(into)>>();
    };
    auto check_keys = [](const json& obj, std::vector<std::string> allowed, const std::string& where) {
        for (auto& [key, _] : obj.items()) {
            bool ok = false;
            for (const auto& a : allowed) ok = ok || a == key;
            if (!ok) throw ConfigError("unknown config key '" + key + "' in " + where);
        }
    };
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, {"seed", "env", "expert", "gdm", "bcq", "ddpg", "eval"}, "config root");
    get(j, "seed", c.seed);
    if (j.contains("env")) {
        const json& e = j.at("env");
        check_keys(e, {"num_channels", "noise_power", "total_power_options", "episode_length", "intents"},
                   "env");
        get(e, "num_channels", c.env.num_channels);
        get(e, "noise_power", c.env.noise_power);
        get(e, "total_power_options", c.env.total_power_options);
        get(e, "episode_length", c.env.episode_length);
        if (e.contains("intents")) {
            c.intents.clear();
            for (const auto& it : e.at("intents")) {
                IntentSpec s;
                s.intent_id = it.at("intent_id").get<int>();
                s.gain_low = it.at("gain_low").get<double>();
                s.gain_high = it.at("gain_high").get<double>();
                s.label = it.value("label", std::string());
                if (!(s.gain_low >= 0.0 && s.gain_low < s.gain_high))
                    throw ConfigError("intent " + std::to_string(s.intent_id) + ": need 0 <= low < high");
                c.intents.push_back(std::move(s));
            }
            if (c.intents.empty()) throw ConfigError("config: intents list is empty");
        }
    }
    if (j.contains("expert")) {
        check_keys(j.at("expert"), {"count_per_intent"}, "expert");
        get(j.at("expert"), "count_per_intent", c.expert_count_per_intent);
    }
    if (j.contains("gdm")) {
        const json& g = j.at("gdm");
        check_keys(g,
                   {"time_steps", "beta_lo", "beta_hi", "hidden", "heads", "head_dim", "wni_dim",
                    "time_dim", "layers", "lr", "train_steps", "batch", "generate_per_intent",
                    "embed_seed"},
                   "gdm");
        get(g, "time_steps", c.gdm.time_steps);
        get(g, "beta_lo", c.gdm.beta_lo);
        get(g, "beta_hi", c.gdm.beta_hi);
        get(g, "hidden", c.gdm.hidden);
        get(g, "heads", c.gdm.heads);
        get(g, "head_dim", c.gdm.head_dim);
        get(g, "wni_dim", c.gdm.wni_dim);
        get(g, "time_dim", c.gdm.time_dim);
        get(g, "layers", c.gdm.layers);
        get(g, "lr", c.gdm.lr);
        get(g, "train_steps", c.gdm.train_steps);
        get(g, "batch", c.gdm.batch);
        get(g, "generate_per_intent", c.gdm.generate_per_intent);
        get(g, "embed_seed", c.gdm.embed_seed);
    }
    if (j.contains("bcq")) {
        const json& b = j.at("bcq");
        check_keys(b,
                   {"gamma", "lambda", "max_perturb", "batch", "n_candidates", "iterations",
                    "soft_update", "hidden", "latent_dim", "lr_policy", "lr_q", "train_power_budget"},
                   "bcq");
        get(b, "gamma", c.bcq.gamma);
        get(b, "lambda", c.bcq.lambda);
        get(b, "max_perturb", c.bcq.max_perturb);
        get(b, "batch", c.bcq.batch);
        get(b, "n_candidates", c.bcq.n_candidates);
        get(b, "iterations", c.bcq.iterations);
        get(b, "soft_update", c.bcq.soft_update);
        get(b, "hidden", c.bcq.hidden);
        get(b, "latent_dim", c.bcq.latent_dim);
        get(b, "lr_policy", c.bcq.lr_policy);
        get(b, "lr_q", c.bcq.lr_q);
        get(b, "train_power_budget", c.bcq.train_power_budget);
        if (!(c.bcq.gamma >= 0.0 && c.bcq.gamma < 1.0)) throw ConfigError("bcq.gamma must be in [0,1)");
        if (!(c.bcq.lambda >= 0.0 && c.bcq.lambda <= 1.0))
            throw ConfigError("bcq.lambda must be in [0,1]");
        if (c.bcq.n_candidates < 1) throw ConfigError("bcq.n_candidates must be >= 1");
    }
    if (j.contains("ddpg")) {
        const json& d = j.at("ddpg");
        check_keys(d, {"steps", "hidden", "batch", "lr_actor", "lr_critic", "soft_update", "gamma"},
                   "ddpg");
        get(d, "steps", c.ddpg.steps);
        get(d, "hidden", c.ddpg.hidden);
        get(d, "batch", c.ddpg.batch);
        get(d, "lr_actor", c.ddpg.lr_actor);
        get(d, "lr_critic", c.ddpg.lr_critic);
        get(d, "soft_update", c.ddpg.soft_update);
        get(d, "gamma", c.ddpg.gamma);
    }
    if (j.contains("eval")) {
        check_keys(j.at("eval"), {"episodes", "steps"}, "eval");
        get(j.at("eval"), "episodes", c.eval.episodes);
        get(j.at("eval"), "steps", c.eval.steps);
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    json j = load_json(path);
    return config_from_json(j);
}

inline std::string config_hash(const RunConfig& c) { return hash_string(to_json(c).dump()); }

}  // namespace trajgen

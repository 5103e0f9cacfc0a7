// Command-line driver for the intent-guided trajectory generation pipeline:
// expert collection, diffusion training, trajectory synthesis, offline policy
// training, baselines, and paired evaluation.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajgen/config.hpp"
#include "trajgen/pipeline.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"WNI-guided optimization trajectory generation for multi-channel power allocation"};
    app.fallthrough();

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int intent = 0;
    double power = 0.0;
    std::string stages_csv = "expert,train-gdm,generate,train-offline,evaluate";

    app.add_option("--config", config_path, "Path to a run-config JSON file");
    app.add_option("--out", out_dir, "Artifact directory")->capture_default_str();
    app.add_option("--seed", seed, "Override the config seed")->each([&](const std::string&) {
        seed_given = true;
    });
    app.add_option("--intent", intent, "Restrict to one intent id (generate/train-offline/train-baseline)");
    app.add_option("--power", power, "Total power in watts (train-baseline)");

    auto* cmd_expert = app.add_subcommand("expert-collect", "Collect the water-filling expert dataset and build the BKB");
    auto* cmd_gdm = app.add_subcommand("train-gdm", "Train the four noise-prediction networks");
    auto* cmd_gen = app.add_subcommand("generate", "Synthesize trajectories for each intent");
    auto* cmd_off = app.add_subcommand("train-offline", "Train BCQ policies on generated trajectories");
    auto* cmd_base = app.add_subcommand("train-baseline", "Train the DDPG baseline for one (intent, power) cell");
    auto* cmd_eval = app.add_subcommand("evaluate", "Paired evaluation of all schemes; writes metrics.csv");
    auto* cmd_pipe = app.add_subcommand("pipeline", "Run a stage subset in order");
    cmd_pipe->add_option("--stages", stages_csv, "Comma-separated subset of expert,train-gdm,generate,train-offline,evaluate")
        ->capture_default_str();
    app.require_subcommand(1);

    CLI11_PARSE(app, argc, argv);

    try {
        trajgen::RunConfig config;
        if (!config_path.empty()) config = trajgen::load_config(config_path);
        if (seed_given) config.seed = seed;
        trajgen::ArtifactPaths paths{out_dir};

        if (cmd_expert->parsed()) {
            trajgen::stage_expert(config, paths);
        } else if (cmd_gdm->parsed()) {
            trajgen::stage_train_gdm(config, paths);
        } else if (cmd_gen->parsed()) {
            trajgen::stage_generate(config, paths, intent);
        } else if (cmd_off->parsed()) {
            trajgen::stage_train_offline(config, paths, intent);
        } else if (cmd_base->parsed()) {
            if (intent == 0 || power <= 0.0)
                throw trajgen::ConfigError("train-baseline needs --intent and --power");
            const auto& spec = trajgen::find_intent(config.intents, intent);
            trajgen::DdpgConfig dc;
            dc.hidden = config.ddpg.hidden;
            dc.batch = config.ddpg.batch;
            dc.lr_actor = config.ddpg.lr_actor;
            dc.lr_critic = config.ddpg.lr_critic;
            dc.soft_update = config.ddpg.soft_update;
            dc.gamma = config.ddpg.gamma;
            trajgen::DdpgLearner learner(
                dc, config.env.num_channels, power,
                trajgen::derive_seed(config.seed, 0x646470ULL, static_cast<std::uint64_t>(intent), 99));
            const trajgen::Vec series = learner.train(
                spec, config.env, config.ddpg.steps,
                trajgen::derive_seed(config.seed, 0x64647054ULL, static_cast<std::uint64_t>(intent), 99));
            std::ostringstream csv;
            csv << "step,spectral_efficiency\n";
            for (std::size_t i = 0; i < series.size(); ++i)
                csv << i << ',' << trajgen::format_double(series[i]) << "\n";
            trajgen::write_file(paths.baseline_series(intent, power), csv.str());
            std::cout << "wrote " << paths.baseline_series(intent, power) << "\n";
        } else if (cmd_eval->parsed()) {
            trajgen::stage_evaluate(config, paths);
        } else if (cmd_pipe->parsed()) {
            trajgen::run_pipeline(config, split_csv(stages_csv), out_dir);
        }
        return 0;
    } catch (const trajgen::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const trajgen::StagingError& e) {
        std::cerr << "staging error: " << e.what() << "\n";
        return 3;
    } catch (const trajgen::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trajgen/errors.hpp"
#include "trajgen/rng.hpp"
#include "trajgen/tensor.hpp"

namespace trajgen {

/// One network-intent scenario: channel gains are drawn from (gain_low, gain_high).
struct IntentSpec {
    int intent_id = 0;
    double gain_low = 0.0;
    double gain_high = 0.0;
    std::string label;
};

/// The five experiment intents partition (0, 50) into bands of width 10.
inline std::vector<IntentSpec> default_intents() {
    return {
        {1, 0.0, 10.0, "low channel gain scenario"},
        {2, 10.0, 20.0, "lower channel gain scenario"},
        {3, 20.0, 30.0, "medium channel gain scenario"},
        {4, 30.0, 40.0, "high channel gain scenario"},
        {5, 40.0, 50.0, "very high channel gain scenario"},
    };
}

inline const IntentSpec& find_intent(const std::vector<IntentSpec>& specs, int intent_id) {
    for (const auto& s : specs)
        if (s.intent_id == intent_id) return s;
    throw LookupError("unknown intent id " + std::to_string(intent_id));
}

struct EnvConfig {
    std::size_t num_channels = 16;
    double noise_power = 1.0;
    std::vector<double> total_power_options = {6.0, 12.0, 18.0, 24.0, 30.0};
    std::size_t episode_length = 200;
};

struct PathLossParams {
    double c0_db = 30.0;        // loss at the reference distance, dB
    double d0_m = 1.0;          // reference distance, meters
    double exponent = 2.0;      // path-loss exponent
    double distance_m = 1.0;    // link distance, meters
    double gt_db = 0.0;         // transmit antenna gain, dB
    double gr_db = 0.0;         // receive antenna gain, dB
};

struct EnvState {
    Vec gains;
    int intent_id = 0;
};

/// Linear channel gain 10^((Gt + Gr - L(d))/10) with L(d) = C0 (d/D0)^(-exponent), in dB.
inline double path_loss_gain(const PathLossParams& p) {
    if (p.distance_m <= 0.0) throw DomainError("path_loss_gain: distance must be positive");
    if (p.d0_m <= 0.0) throw DomainError("path_loss_gain: reference distance must be positive");
    const double loss_db = p.c0_db * std::pow(p.distance_m / p.d0_m, -p.exponent);
    return std::pow(10.0, (p.gt_db + p.gr_db - loss_db) / 10.0);
}

/// Draws i.i.d. uniform gains inside the intent band (open at the low end).
inline EnvState sample_gains(const IntentSpec& spec, const EnvConfig& config, Rng& rng) {
    EnvState st;
    st.intent_id = spec.intent_id;
    st.gains.resize(config.num_channels);
    for (double& g : st.gains) {
        do {
            g = rng.uniform(spec.gain_low, spec.gain_high);
        } while (g <= spec.gain_low);
    }
    return st;
}

/// Total spectral efficiency sum_m log2(1 + g_m p_m / n0), bits/s/Hz.
inline double spectral_efficiency(const Vec& gains, const Vec& powers, double n0) {
    if (gains.size() != powers.size())
        throw ConfigError("spectral_efficiency: gains and powers differ in length");
    double total = 0.0;
    for (std::size_t m = 0; m < gains.size(); ++m) {
        if (powers[m] < 0.0)
            throw DomainError("spectral_efficiency: negative power on channel " + std::to_string(m));
        total += std::log2(1.0 + gains[m] * powers[m] / n0);
    }
    return total;
}

struct StepResult {
    Vec reward;     // per-channel rate
    EnvState next;  // gains resampled from the same intent
};

/// Checks constraint feasibility (p >= 0, sum p <= P for the largest configured
/// budget unless a budget is passed), emits the per-channel rate vector, and
/// resamples gains from the same intent.
inline StepResult env_step(const EnvState& state, const Vec& action, const IntentSpec& spec,
                           const EnvConfig& config, Rng& rng, double total_power = -1.0) {
    if (spec.intent_id != state.intent_id)
        throw ConfigError("env_step: state intent " + std::to_string(state.intent_id) +
                          " does not match spec intent " + std::to_string(spec.intent_id));
    if (action.size() != state.gains.size())
        throw ConfigError("env_step: action length " + std::to_string(action.size()) +
                          " does not match channel count " + std::to_string(state.gains.size()));
    double sum = 0.0;
    for (std::size_t m = 0; m < action.size(); ++m) {
        if (action[m] < 0.0)
            throw FeasibilityError("env_step: negative power " + std::to_string(action[m]) +
                                   " on channel " + std::to_string(m));
        sum += action[m];
    }
    double budget = total_power;
    if (budget < 0.0) {
        budget = 0.0;
        for (double p : config.total_power_options) budget = std::max(budget, p);
    }
    if (sum > budget * (1.0 + 1e-12) + 1e-12)
        throw FeasibilityError("env_step: total power " + std::to_string(sum) +
                               " exceeds budget " + std::to_string(budget));

    StepResult res;
    res.reward.resize(action.size());
    for (std::size_t m = 0; m < action.size(); ++m)
        res.reward[m] = std::log2(1.0 + state.gains[m] * action[m] / config.noise_power);
    res.next = sample_gains(spec, config, rng);
    return res;
}

}  // namespace trajgen

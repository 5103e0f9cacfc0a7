#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trajgen/env.hpp"
#include "trajgen/errors.hpp"
#include "trajgen/expert.hpp"
#include "trajgen/nn.hpp"
#include "trajgen/offline_rl.hpp"
#include "trajgen/rng.hpp"

namespace trajgen {

inline Vec uniform_alloc(std::size_t num_channels, double total_power) {
    if (total_power <= 0.0) throw DomainError("uniform_alloc: total power must be positive");
    return Vec(num_channels, total_power / static_cast<double>(num_channels));
}

struct DdpgConfig {
    std::size_t hidden = 64;
    std::size_t batch = 64;
    double lr_actor = 2e-4;
    double lr_critic = 1e-4;
    double soft_update = 0.005;
    double gamma = 0.1;
    std::size_t replay_capacity = 100000;
    double noise_std_frac = 0.1;   // initial exploration std as a fraction of P/M
    double noise_floor_frac = 0.1; // linear decay target relative to the initial std
};

/// Deterministic-policy online learner. Actor emits per-channel powers via a
/// tanh head scaled to [0, P]; every executed action is feasibility-projected.
class DdpgLearner {
  public:
    DdpgLearner(const DdpgConfig& cfg, std::size_t state_dim, double total_power, std::uint64_t seed)
        : config_(cfg), state_dim_(state_dim), power_(total_power) {
        using A = Activation;
        const std::size_t h = cfg.hidden;
        actor_ = Mlp({state_dim_, h, h, state_dim_}, {A::Relu, A::Relu, A::Tanh});
        critic_ = Mlp({2 * state_dim_, h, h, 1}, {A::Relu, A::Relu, A::Identity});
        Rng rng(derive_seed(seed, 0x44445047ULL));
        actor_.init(rng);
        critic_.init(rng);
        actor_target_ = actor_;
        critic_target_ = critic_;
        adam_actor_ = AdamState(AdamConfig{cfg.lr_actor, 0.9, 0.999, 1e-8});
        adam_critic_ = AdamState(AdamConfig{cfg.lr_critic, 0.9, 0.999, 1e-8});
    }

    double power() const { return power_; }

    Vec act(const Vec& gains) const {
        const Vec raw = actor_.forward(scale_state(gains));
        Vec a(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) a[i] = 0.5 * (raw[i] + 1.0) * power_;
        return project_feasible(a, power_);
    }

    /// Standard loop: explore with decayed Gaussian noise, store transitions,
    /// update actor and critic each step once the buffer covers a batch.
    /// Returns the per-step total spectral efficiency.
    Vec train(const IntentSpec& spec, const EnvConfig& env_config, std::size_t steps,
              std::uint64_t seed) {
        if (steps < 1) throw ConfigError("ddpg: need at least one step");
        Vec series;
        series.reserve(steps);
        Rng env_rng(derive_seed(seed, 0x444447ULL, 1));
        Rng train_rng(derive_seed(seed, 0x444447ULL, 2));
        EnvState state = sample_gains(spec, env_config, env_rng);
        const double m = static_cast<double>(state_dim_);
        const double noise0 = config_.noise_std_frac * power_ / m;

        for (std::size_t step = 0; step < steps; ++step) {
            const double frac = static_cast<double>(step) / static_cast<double>(steps);
            const double noise_std = noise0 * (1.0 - (1.0 - config_.noise_floor_frac) * frac);
            Vec a = act(state.gains);
            for (double& x : a) x += noise_std * train_rng.gauss();
            a = project_feasible(a, power_);

            StepResult res = env_step(state, a, spec, env_config, env_rng, power_);
            double r = 0.0;
            for (double x : res.reward) r += x;
            series.push_back(r);
            push_transition({state.gains, a, r, res.next.gains});
            state = std::move(res.next);

            if (replay_.size() >= config_.batch) update(train_rng, step);
        }
        return series;
    }

  private:
    struct Transition {
        Vec s, a;
        double r;
        Vec s_next;
    };

    Vec scale_state(const Vec& gains) const {
        Vec s(gains.size());
        for (std::size_t i = 0; i < gains.size(); ++i) s[i] = gains[i] / 50.0;
        return s;
    }
    Vec scale_action(const Vec& a) const {
        Vec out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / power_;
        return out;
    }

    void push_transition(Transition t) {
        if (replay_.size() < config_.replay_capacity) {
            replay_.push_back(std::move(t));
        } else {
            replay_[replay_head_] = std::move(t);
            replay_head_ = (replay_head_ + 1) % config_.replay_capacity;
        }
    }

    double critic_value(const Mlp& critic, const Vec& s, const Vec& a, MlpCache* cache = nullptr) const {
        Vec in = scale_state(s);
        const Vec sa = scale_action(a);
        in.insert(in.end(), sa.begin(), sa.end());
        return critic.forward(in, cache)[0];
    }

    void update(Rng& rng, std::size_t step) {
        const std::size_t b = config_.batch;
        const double inv_b = 1.0 / static_cast<double>(b);
        if (!reward_stats_frozen_) {
            // Freeze the reward affine from the warmup buffer so critic
            // targets stay O(1); deterministic and fixed afterwards.
            double m = 0.0;
            for (const auto& t : replay_) m += t.r;
            m /= static_cast<double>(replay_.size());
            double v = 0.0;
            for (const auto& t : replay_) v += (t.r - m) * (t.r - m);
            r_mean_ = m;
            r_std_ = std::sqrt(std::max(v / static_cast<double>(replay_.size()), 1e-12));
            reward_stats_frozen_ = true;
        }
        std::vector<const Transition*> batch(b);
        for (auto& p : batch) p = &replay_[rng.next_below(replay_.size())];

        double critic_loss = 0.0;
        for (const Transition* t : batch) {
            const Vec raw_next = actor_target_.forward(scale_state(t->s_next));
            Vec a_next(raw_next.size());
            for (std::size_t i = 0; i < raw_next.size(); ++i)
                a_next[i] = 0.5 * (raw_next[i] + 1.0) * power_;
            a_next = project_feasible(a_next, power_);
            const double y = (t->r - r_mean_) / r_std_ +
                             config_.gamma * critic_value(critic_target_, t->s_next, a_next);

            MlpCache cache;
            const double q = critic_value(critic_, t->s, t->a, &cache);
            const double d = q - y;
            critic_loss += d * d;
            critic_.backward(cache, Vec{2.0 * d * inv_b});
        }
        if (!std::isfinite(critic_loss))
            throw NumericalError("ddpg critic diverged at step " + std::to_string(step));
        auto cp = collect(critic_, "critic");
        adam_step(cp, adam_critic_);

        for (const Transition* t : batch) {
            MlpCache actor_cache;
            const Vec raw = actor_.forward(scale_state(t->s), &actor_cache);
            Vec a(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) a[i] = 0.5 * (raw[i] + 1.0) * power_;

            MlpCache critic_cache;
            critic_value(critic_, t->s, a, &critic_cache);
            const Vec din = critic_.backward(critic_cache, Vec{-inv_b}, /*accumulate=*/false);
            // critic sees a/P = 0.5*(tanh_out + 1), so d(input)/d(tanh_out) = 0.5
            Vec draw(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) draw[i] = 0.5 * din[state_dim_ + i];
            actor_.backward(actor_cache, draw);
        }
        auto ap = collect(actor_, "actor");
        adam_step(ap, adam_actor_);

        soft_update(actor_target_, actor_, config_.soft_update);
        soft_update(critic_target_, critic_, config_.soft_update);
    }

    static std::vector<ParamView> collect(Mlp& net, const std::string& name) {
        std::vector<ParamView> out;
        net.collect_params(name, out);
        return out;
    }

    DdpgConfig config_;
    std::size_t state_dim_;
    double power_;
    Mlp actor_, actor_target_, critic_, critic_target_;
    AdamState adam_actor_{}, adam_critic_{};
    std::vector<Transition> replay_;
    std::size_t replay_head_ = 0;
    bool reward_stats_frozen_ = false;
    double r_mean_ = 0.0;
    double r_std_ = 1.0;
};

// ---------------------------------------------------------------------------
// Paired evaluation

using PolicyFn = std::function<Vec(const EnvState&, double total_power)>;

struct EvalSummary {
    double mean_se = 0.0;
    double std_se = 0.0;
    std::size_t samples = 0;
};

/// Per-step total spectral efficiency of a policy over a seeded state stream.
/// States depend only on (state_seed, episode, step), so different schemes
/// evaluated with the same seed see identical channel sequences.
inline Vec evaluate_policy_series(const PolicyFn& policy, const IntentSpec& spec,
                                  const EnvConfig& config, double total_power, std::size_t episodes,
                                  std::size_t steps, std::uint64_t state_seed) {
    if (episodes < 1) throw ConfigError("evaluate_policy: need at least one episode");
    Vec series(steps, 0.0);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        for (std::size_t st = 0; st < steps; ++st) {
            Rng rng(derive_seed(state_seed, 0x5354415445ULL, ep, st));
            const EnvState state = sample_gains(spec, config, rng);
            const Vec action = policy(state, total_power);
            series[st] += spectral_efficiency(state.gains, action, config.noise_power);
        }
    }
    for (double& x : series) x /= static_cast<double>(episodes);
    return series;
}

inline EvalSummary evaluate_policy(const PolicyFn& policy, const IntentSpec& spec,
                                   const EnvConfig& config, double total_power, std::size_t episodes,
                                   std::size_t steps, std::uint64_t state_seed) {
    const Vec series =
        evaluate_policy_series(policy, spec, config, total_power, episodes, steps, state_seed);
    EvalSummary s;
    s.samples = series.size();
    s.mean_se = mean(series);
    s.std_se = stddev(series, s.mean_se);
    return s;
}

}  // namespace trajgen

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "trajgen/env.hpp"
#include "trajgen/errors.hpp"
#include "trajgen/expert.hpp"
#include "trajgen/nn.hpp"
#include "trajgen/rng.hpp"

namespace trajgen {

/// Clamp negatives to zero; rescale if the total exceeds the budget. The
/// result satisfies p >= 0 and sum(p) <= P exactly.
inline Vec project_feasible(const Vec& action, double total_power) {
    if (total_power <= 0.0) throw DomainError("project_feasible: total power must be positive");
    Vec p(action.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        p[i] = std::max(0.0, action[i]);
        sum += p[i];
    }
    if (sum > total_power) {
        const double scale = total_power / sum;
        for (double& x : p) x *= scale;
    }
    return p;
}

/// Target-value blend for one candidate set: per candidate
/// lambda*min(Q1,Q2) + (1-lambda)*max(Q1,Q2); the target takes the best
/// candidate: y = r + gamma * max_k blend_k.
inline double bcq_target_value(double reward, const std::vector<std::pair<double, double>>& twin_values,
                               double gamma, double lambda) {
    if (twin_values.empty()) throw ConfigError("bcq_target_value: need at least one candidate");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [q1, q2] : twin_values) {
        const double blend = lambda * std::min(q1, q2) + (1.0 - lambda) * std::max(q1, q2);
        best = std::max(best, blend);
    }
    return reward + gamma * best;
}

/// Closed-form KL( N(mu, diag sigma^2) || N(0, I) ).
inline double gaussian_kl_to_standard(const Vec& mu, const Vec& sigma) {
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        kl += 0.5 * (mu[i] * mu[i] + sigma[i] * sigma[i] - std::log(sigma[i] * sigma[i]) - 1.0);
    return kl;
}

struct BcqConfig {
    double gamma = 0.1;
    double lambda = 0.75;
    double max_perturb = 0.05;  // Phi
    std::size_t batch = 100;    // F2
    std::size_t n_candidates = 10;
    std::size_t iterations = 1500;  // M2
    double soft_update = 0.1;
    std::size_t hidden = 32;
    std::size_t latent_dim = 0;  // 0 -> 2 * action_dim
    double lr_policy = 2e-4;
    double lr_q = 1e-4;
    double train_power_budget = 30.0;  // projection budget during offline training
};

struct BcqDiagnostics {
    double q_loss = 0.0;
    double vae_reconstruction = 0.0;
    double vae_kl = 0.0;
    double perturb_objective = 0.0;
};

inline void soft_update(Mlp& target, const Mlp& online, double rate) {
    for (std::size_t li = 0; li < online.layers.size(); ++li) {
        for (std::size_t i = 0; i < online.layers[li].weight.size(); ++i)
            target.layers[li].weight.data[i] =
                rate * online.layers[li].weight.data[i] + (1.0 - rate) * target.layers[li].weight.data[i];
        for (std::size_t i = 0; i < online.layers[li].bias.size(); ++i)
            target.layers[li].bias[i] =
                rate * online.layers[li].bias[i] + (1.0 - rate) * target.layers[li].bias[i];
    }
}

/// Batch-constrained Q-learning over generated trajectories: VAE action
/// prior, bounded perturbation net, twin Q with soft-updated targets.
/// State/action inputs are whitened with statistics of the training set.
class BcqLearner {
  public:
    BcqLearner(const BcqConfig& cfg, std::size_t state_dim, std::size_t action_dim,
               std::uint64_t seed)
        : config_(cfg),
          state_dim_(state_dim),
          action_dim_(action_dim),
          latent_(cfg.latent_dim ? cfg.latent_dim : 2 * action_dim) {
        const std::size_t h = cfg.hidden;
        const std::size_t sa = state_dim_ + action_dim_;
        using A = Activation;
        vae_encoder_ = Mlp({sa, h, h, 2 * latent_}, {A::Relu, A::Relu, A::Identity});
        vae_decoder_ = Mlp({state_dim_ + latent_, h, h, action_dim_}, {A::Relu, A::Relu, A::Identity});
        perturb_ = Mlp({sa, h, h, action_dim_}, {A::Relu, A::Relu, A::Tanh});
        q1_ = Mlp({sa, h, h, 1}, {A::Relu, A::Relu, A::Identity});
        q2_ = Mlp({sa, h, h, 1}, {A::Relu, A::Relu, A::Identity});

        Rng rng(derive_seed(seed, 0x424351ULL));
        vae_encoder_.init(rng);
        vae_decoder_.init(rng);
        perturb_.init(rng);
        q1_.init(rng);
        q2_.init(rng);
        perturb_target_ = perturb_;
        q1_target_ = q1_;
        q2_target_ = q2_;

        adam_vae_ = AdamState(AdamConfig{cfg.lr_policy, 0.9, 0.999, 1e-8});
        adam_perturb_ = AdamState(AdamConfig{cfg.lr_policy, 0.9, 0.999, 1e-8});
        adam_q1_ = AdamState(AdamConfig{cfg.lr_q, 0.9, 0.999, 1e-8});
        adam_q2_ = AdamState(AdamConfig{cfg.lr_q, 0.9, 0.999, 1e-8});

        s_mean_.assign(state_dim_, 0.0);
        s_std_.assign(state_dim_, 1.0);
        a_mean_.assign(action_dim_, 0.0);
        a_std_.assign(action_dim_, 1.0);
    }

    const BcqConfig& config() const { return config_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::uint64_t iteration() const { return iteration_; }

    /// Pooled scalar whitening per element, plus the scalar-return affine;
    /// computed once from the training set. Q values live in return-whitened
    /// units, which leaves every argmax decision unchanged but keeps targets
    /// O(1) regardless of the spectral-efficiency scale.
    void fit_whitening(const std::vector<Trajectory>& data) {
        double sm = 0.0, am = 0.0, n = 0.0;
        for (const auto& t : data)
            for (std::size_t i = 0; i < t.s.size(); ++i) {
                sm += t.s[i];
                am += t.a[i];
                n += 1.0;
            }
        sm /= n;
        am /= n;
        double sv = 0.0, av = 0.0;
        for (const auto& t : data)
            for (std::size_t i = 0; i < t.s.size(); ++i) {
                sv += (t.s[i] - sm) * (t.s[i] - sm);
                av += (t.a[i] - am) * (t.a[i] - am);
            }
        const double ss = std::sqrt(std::max(sv / n, 1e-12));
        const double as = std::sqrt(std::max(av / n, 1e-12));
        s_mean_.assign(state_dim_, sm);
        s_std_.assign(state_dim_, ss);
        a_mean_.assign(action_dim_, am);
        a_std_.assign(action_dim_, as);

        double rm = 0.0;
        for (const auto& t : data) {
            double r = 0.0;
            for (double x : t.r) r += x;
            rm += r;
        }
        rm /= static_cast<double>(data.size());
        double rv = 0.0;
        for (const auto& t : data) {
            double r = 0.0;
            for (double x : t.r) r += x;
            rv += (r - rm) * (r - rm);
        }
        r_mean_ = rm;
        r_std_ = std::sqrt(std::max(rv / static_cast<double>(data.size()), 1e-12));
    }

    void set_whitening(const Vec& s_mean, const Vec& s_std, const Vec& a_mean, const Vec& a_std,
                       double r_mean, double r_std) {
        s_mean_ = s_mean;
        s_std_ = s_std;
        a_mean_ = a_mean;
        a_std_ = a_std;
        r_mean_ = r_mean;
        r_std_ = r_std;
    }

    Vec whiten_state(const Vec& s) const {
        Vec out(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - s_mean_[i]) / s_std_[i];
        return out;
    }
    Vec whiten_action(const Vec& a) const {
        Vec out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - a_mean_[i]) / a_std_[i];
        return out;
    }

    /// n decoder samples, perturbed and projected feasible.
    std::vector<Vec> candidate_actions(const Vec& state, std::size_t n, double total_power, Rng& rng,
                                       bool use_target_perturb = false) const {
        const Vec ws = whiten_state(state);
        std::vector<Vec> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            Vec z(latent_);
            for (double& v : z) v = std::clamp(rng.gauss(), -0.5, 0.5);
            Vec dec_in = ws;
            dec_in.insert(dec_in.end(), z.begin(), z.end());
            Vec a = vae_decoder_.forward(dec_in);
            Vec pert_in = ws;
            const Vec wa = whiten_action(a);
            pert_in.insert(pert_in.end(), wa.begin(), wa.end());
            const Mlp& pnet = use_target_perturb ? perturb_target_ : perturb_;
            const Vec xi = pnet.forward(pert_in);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += config_.max_perturb * xi[i];
            out.push_back(project_feasible(a, total_power));
        }
        return out;
    }

    double q_value(const Mlp& q, const Vec& state, const Vec& action) const {
        Vec in = whiten_state(state);
        const Vec wa = whiten_action(action);
        in.insert(in.end(), wa.begin(), wa.end());
        return q.forward(in)[0];
    }

    /// One gradient step of the VAE on (s, a) pairs; returns the loss parts.
    std::pair<double, double> vae_update(const std::vector<const Trajectory*>& batch, Rng& rng) {
        if (batch.empty()) throw ConfigError("vae_update: empty batch");
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double recon_total = 0.0, kl_total = 0.0;
        for (const Trajectory* t : batch) {
            const Vec ws = whiten_state(t->s);
            const Vec wa = whiten_action(t->a);
            Vec enc_in = ws;
            enc_in.insert(enc_in.end(), wa.begin(), wa.end());
            MlpCache enc_cache;
            const Vec enc_out = vae_encoder_.forward(enc_in, &enc_cache);

            Vec mu(latent_), logstd(latent_), sigma(latent_);
            std::vector<bool> clamped(latent_);
            for (std::size_t i = 0; i < latent_; ++i) {
                mu[i] = enc_out[i];
                const double raw = enc_out[latent_ + i];
                logstd[i] = std::clamp(raw, -4.0, 4.0);
                clamped[i] = raw < -4.0 || raw > 4.0;
                sigma[i] = std::exp(logstd[i]);
            }
            Vec eps_z(latent_), z(latent_);
            for (std::size_t i = 0; i < latent_; ++i) {
                eps_z[i] = rng.gauss();
                z[i] = mu[i] + sigma[i] * eps_z[i];
            }
            Vec dec_in = ws;
            dec_in.insert(dec_in.end(), z.begin(), z.end());
            MlpCache dec_cache;
            const Vec a_rec = vae_decoder_.forward(dec_in, &dec_cache);

            double recon = 0.0;
            Vec drec(action_dim_);
            for (std::size_t i = 0; i < action_dim_; ++i) {
                const double d = a_rec[i] - t->a[i];
                recon += d * d;
                drec[i] = 2.0 * d * inv_b;
            }
            recon_total += recon;
            kl_total += gaussian_kl_to_standard(mu, sigma);

            const Vec ddec_in = vae_decoder_.backward(dec_cache, drec);
            Vec denc(2 * latent_, 0.0);
            for (std::size_t i = 0; i < latent_; ++i) {
                const double dz = ddec_in[state_dim_ + i];
                denc[i] = dz + mu[i] * inv_b;  // reconstruction + KL paths into mu
                if (!clamped[i])
                    denc[latent_ + i] =
                        dz * sigma[i] * eps_z[i] + (sigma[i] * sigma[i] - 1.0) * inv_b;
            }
            vae_encoder_.backward(enc_cache, denc);
        }
        auto params = vae_params();
        adam_step(params, adam_vae_);
        const double b = static_cast<double>(batch.size());
        return {recon_total / b, kl_total / b};
    }

    /// Target value for one transition, using target Q nets and the target
    /// perturbation net on next-state candidates. The scalar reward enters in
    /// whitened units.
    double bcq_target(double reward, const Vec& next_state, Rng& rng) const {
        const auto cands =
            candidate_actions(next_state, config_.n_candidates, config_.train_power_budget, rng,
                              /*use_target_perturb=*/true);
        std::vector<std::pair<double, double>> twins;
        twins.reserve(cands.size());
        for (const auto& c : cands)
            twins.emplace_back(q_value(q1_target_, next_state, c), q_value(q2_target_, next_state, c));
        return bcq_target_value((reward - r_mean_) / r_std_, twins, config_.gamma, config_.lambda);
    }

    /// One full training iteration on a prepared batch. Order: VAE step,
    /// targets from next-state candidates, twin-Q regression, perturbation
    /// ascent (decoder and Q frozen), soft target updates.
    BcqDiagnostics train_on_batch(const std::vector<const Trajectory*>& batch, Rng& rng) {
        BcqDiagnostics diag;
        auto [recon, kl] = vae_update(batch, rng);
        diag.vae_reconstruction = recon;
        diag.vae_kl = kl;

        const double inv_b = 1.0 / static_cast<double>(batch.size());

        // Twin-Q regression toward the clipped double-Q target.
        Vec targets(batch.size());
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            double r_scalar = 0.0;
            for (double x : batch[bi]->r) r_scalar += x;
            targets[bi] = bcq_target(r_scalar, batch[bi]->s_next, rng);
        }
        double q_loss = 0.0;
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            const Trajectory* t = batch[bi];
            Vec in = whiten_state(t->s);
            const Vec wa = whiten_action(t->a);
            in.insert(in.end(), wa.begin(), wa.end());
            for (Mlp* q : {&q1_, &q2_}) {
                MlpCache cache;
                const double pred = q->forward(in, &cache)[0];
                const double d = pred - targets[bi];
                q_loss += d * d;
                q->backward(cache, Vec{2.0 * d * inv_b});
            }
        }
        diag.q_loss = q_loss * inv_b;
        auto p1 = collect(q1_, "q1");
        adam_step(p1, adam_q1_);
        auto p2 = collect(q2_, "q2");
        adam_step(p2, adam_q2_);

        // Perturbation ascent through frozen decoder and Q1.
        double objective = 0.0;
        for (const Trajectory* t : batch) {
            const Vec ws = whiten_state(t->s);
            Vec z(latent_);
            for (double& v : z) v = std::clamp(rng.gauss(), -0.5, 0.5);
            Vec dec_in = ws;
            dec_in.insert(dec_in.end(), z.begin(), z.end());
            const Vec a_dec = vae_decoder_.forward(dec_in);

            Vec pert_in = ws;
            const Vec wdec = whiten_action(a_dec);
            pert_in.insert(pert_in.end(), wdec.begin(), wdec.end());
            MlpCache pert_cache;
            const Vec xi = perturb_.forward(pert_in, &pert_cache);
            Vec a_p(action_dim_);
            for (std::size_t i = 0; i < action_dim_; ++i)
                a_p[i] = a_dec[i] + config_.max_perturb * xi[i];

            Vec qin = ws;
            const Vec wap = whiten_action(a_p);
            qin.insert(qin.end(), wap.begin(), wap.end());
            MlpCache q_cache;
            const double qv = q1_.forward(qin, &q_cache)[0];
            objective += qv;

            const Vec dqin = q1_.backward(q_cache, Vec{-inv_b}, /*accumulate=*/false);
            Vec dxi(action_dim_);
            for (std::size_t i = 0; i < action_dim_; ++i)
                dxi[i] = dqin[state_dim_ + i] / a_std_[i] * config_.max_perturb;
            perturb_.backward(pert_cache, dxi);
        }
        diag.perturb_objective = objective * inv_b;
        auto pp = collect(perturb_, "perturb");
        adam_step(pp, adam_perturb_);

        soft_update(q1_target_, q1_, config_.soft_update);
        soft_update(q2_target_, q2_, config_.soft_update);
        soft_update(perturb_target_, perturb_, config_.soft_update);

        iteration_ += 1;
        if (!std::isfinite(diag.q_loss) || !std::isfinite(diag.vae_reconstruction) ||
            !std::isfinite(diag.vae_kl) || !std::isfinite(diag.perturb_objective))
            throw NumericalError("bcq training diverged at iteration " + std::to_string(iteration_));
        return diag;
    }

    BcqDiagnostics train_iter(const std::vector<Trajectory>& data, Rng& rng) {
        if (data.size() < config_.batch)
            throw ConfigError("bcq: dataset holds " + std::to_string(data.size()) +
                              " trajectories, need at least " + std::to_string(config_.batch));
        std::vector<const Trajectory*> batch(config_.batch);
        for (auto& p : batch) p = &data[rng.next_below(data.size())];
        return train_on_batch(batch, rng);
    }

    /// Greedy action: best-of-n candidates under online Q1, feasible by
    /// construction.
    Vec act(const Vec& state, std::size_t n, double total_power, Rng& rng) const {
        const auto cands = candidate_actions(state, n, total_power, rng);
        std::size_t best = 0;
        double best_q = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cands.size(); ++k) {
            const double q = q_value(q1_, state, cands[k]);
            if (q > best_q) {
                best_q = q;
                best = k;
            }
        }
        return cands[best];
    }

    // Direct access for checkpointing and tests.
    Mlp& vae_encoder() { return vae_encoder_; }
    Mlp& vae_decoder() { return vae_decoder_; }
    Mlp& perturb_net() { return perturb_; }
    Mlp& perturb_target_net() { return perturb_target_; }
    Mlp& q1_net() { return q1_; }
    Mlp& q2_net() { return q2_; }
    Mlp& q1_target_net() { return q1_target_; }
    Mlp& q2_target_net() { return q2_target_; }
    const Vec& s_mean() const { return s_mean_; }
    const Vec& s_std() const { return s_std_; }
    const Vec& a_mean() const { return a_mean_; }
    const Vec& a_std() const { return a_std_; }
    double r_mean() const { return r_mean_; }
    double r_std() const { return r_std_; }

    void soft_update_all(double rate) {
        soft_update(q1_target_, q1_, rate);
        soft_update(q2_target_, q2_, rate);
        soft_update(perturb_target_, perturb_, rate);
    }

  private:
    std::vector<ParamView> vae_params() {
        std::vector<ParamView> out;
        vae_encoder_.collect_params("vae_encoder", out);
        vae_decoder_.collect_params("vae_decoder", out);
        return out;
    }
    static std::vector<ParamView> collect(Mlp& net, const std::string& name) {
        std::vector<ParamView> out;
        net.collect_params(name, out);
        return out;
    }

    BcqConfig config_;
    std::size_t state_dim_, action_dim_, latent_;
    Vec s_mean_, s_std_, a_mean_, a_std_;
    double r_mean_ = 0.0;
    double r_std_ = 1.0;
    Mlp vae_encoder_, vae_decoder_;
    Mlp perturb_, perturb_target_;
    Mlp q1_, q2_, q1_target_, q2_target_;
    AdamState adam_vae_{}, adam_perturb_{}, adam_q1_{}, adam_q2_{};
    std::uint64_t iteration_ = 0;
};

/// Trains a policy purely from generated trajectories.
inline BcqLearner train_bcq(const std::vector<Trajectory>& generated, const BcqConfig& config,
                            std::size_t state_dim, std::size_t action_dim, std::uint64_t seed) {
    if (generated.size() < config.batch)
        throw ConfigError("train_bcq: dataset holds " + std::to_string(generated.size()) +
                          " trajectories, need at least " + std::to_string(config.batch));
    BcqLearner learner(config, state_dim, action_dim, seed);
    learner.fit_whitening(generated);
    Rng rng(derive_seed(seed, 0x4243515452ULL));
    for (std::size_t it = 0; it < config.iterations; ++it) learner.train_iter(generated, rng);
    return learner;
}

/// Rolls the policy in a live environment, mixing real transitions 50/50 with
/// generated data, one training iteration per environment step. Returns the
/// per-step spectral-efficiency series.
inline Vec fine_tune(BcqLearner& learner, const std::vector<Trajectory>& generated,
                     const IntentSpec& spec, const EnvConfig& env_config, double total_power,
                     std::size_t steps, std::uint64_t seed) {
    Vec series;
    if (steps == 0) return series;
    series.reserve(steps);
    std::vector<Trajectory> buffer;
    buffer.reserve(steps);
    Rng env_rng(derive_seed(seed, 0x4654ULL, 1));
    Rng train_rng(derive_seed(seed, 0x4654ULL, 2));
    EnvState state = sample_gains(spec, env_config, env_rng);
    const std::size_t batch = learner.config().batch;
    const std::size_t half = batch / 2;

    for (std::size_t step = 0; step < steps; ++step) {
        const Vec action = learner.act(state.gains, learner.config().n_candidates, total_power, train_rng);
        StepResult res = env_step(state, action, spec, env_config, env_rng, total_power);
        double se = 0.0;
        for (double x : res.reward) se += x;
        series.push_back(se);

        Trajectory t;
        t.intent_id = spec.intent_id;
        t.s = state.gains;
        t.a = action;
        t.r = res.reward;
        t.s_next = res.next.gains;
        buffer.push_back(std::move(t));
        state = std::move(res.next);

        std::vector<const Trajectory*> mixed(batch);
        for (std::size_t i = 0; i < half; ++i)
            mixed[i] = &buffer[train_rng.next_below(buffer.size())];
        for (std::size_t i = half; i < batch; ++i)
            mixed[i] = &generated[train_rng.next_below(generated.size())];
        learner.train_on_batch(mixed, train_rng);
    }
    return series;
}

}  // namespace trajgen

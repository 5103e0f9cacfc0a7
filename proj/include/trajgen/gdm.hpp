#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajgen/errors.hpp"
#include "trajgen/expert.hpp"
#include "trajgen/nn.hpp"
#include "trajgen/rng.hpp"
#include "trajgen/wni.hpp"

namespace trajgen {

// ---------------------------------------------------------------------------
// Noise schedule

struct NoiseSchedule {
    std::size_t steps = 0;  // T; beta[t-1] etc. hold the value for step t
    Vec beta, alpha, alpha_bar;

    static NoiseSchedule linear(std::size_t T, double beta_lo, double beta_hi) {
        if (T < 1) throw ConfigError("noise schedule: need at least one step");
        if (!(beta_lo > 0.0 && beta_hi < 1.0 && beta_lo <= beta_hi))
            throw ConfigError("noise schedule: betas must satisfy 0 < lo <= hi < 1");
        NoiseSchedule s;
        s.steps = T;
        s.beta.resize(T);
        s.alpha.resize(T);
        s.alpha_bar.resize(T);
        double prod = 1.0;
        for (std::size_t i = 0; i < T; ++i) {
            s.beta[i] = (T == 1) ? beta_lo
                                 : beta_lo + (beta_hi - beta_lo) * static_cast<double>(i) /
                                                 static_cast<double>(T - 1);
            s.alpha[i] = 1.0 - s.beta[i];
            prod *= s.alpha[i];
            s.alpha_bar[i] = prod;
        }
        return s;
    }
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Vec forward_diffuse(const Vec& x0, int t, const Vec& eps, const NoiseSchedule& schedule) {
    if (t < 1 || static_cast<std::size_t>(t) > schedule.steps)
        throw DomainError("forward_diffuse: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(schedule.steps) + "]");
    if (eps.size() != x0.size()) throw ConfigError("forward_diffuse: noise shape mismatch");
    const double ab = schedule.alpha_bar[t - 1];
    const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
    Vec x(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) x[i] = ca * x0[i] + cb * eps[i];
    return x;
}

// ---------------------------------------------------------------------------
// AMLP noise predictor: dense input head, cross-attention against the WNI
// feature rows fused residually into the first hidden state, dense stack,
// linear output head.

struct AmlpCache {
    Vec input;
    Vec h1_pre, h1, h1_fused;
    MhaCache mha;
    std::vector<Vec> mid_pre, mid_post;
};

struct AmlpNet {
    std::size_t target_dim = 0;
    std::size_t cond_arity = 0;  // number of earlier trajectory elements fed in
    std::size_t time_dim = 16;
    std::size_t hidden = 64;

    DenseLayer input_head;
    MultiHeadAttention attn;
    std::vector<DenseLayer> mid;  // hidden x hidden, ReLU
    DenseLayer output_head;

    AmlpNet() = default;
    AmlpNet(std::size_t target, std::size_t arity, std::size_t time_d, std::size_t hidden_d,
            std::size_t heads, std::size_t head_dim, std::size_t wni_cols, std::size_t total_layers)
        : target_dim(target), cond_arity(arity), time_dim(time_d), hidden(hidden_d) {
        if (total_layers < 3) throw ConfigError("amlp: need at least 3 layers");
        const std::size_t in_dim = target_dim + time_dim + cond_arity * target_dim;
        input_head = DenseLayer(hidden, in_dim);
        attn = MultiHeadAttention(heads, head_dim, hidden, wni_cols, hidden);
        for (std::size_t i = 0; i + 2 < total_layers; ++i) mid.emplace_back(hidden, hidden);
        output_head = DenseLayer(target_dim, hidden);
    }

    void init(Rng& rng) {
        input_head.init(rng, /*feeds_relu=*/true);
        attn.init(rng);
        for (auto& m : mid) m.init(rng, /*feeds_relu=*/true);
        output_head.init(rng, /*feeds_relu=*/false);
    }

    Vec predict(const Vec& x_t, int t, const WniFeature& wni, const std::vector<const Vec*>& cond,
                AmlpCache* cache = nullptr) const {
        if (cond.size() != cond_arity)
            throw ConfigError("amlp: expected " + std::to_string(cond_arity) +
                              " conditioning elements, got " + std::to_string(cond.size()));
        const Vec temb = time_embed(t, time_dim);
        std::vector<const Vec*> parts = {&x_t, &temb};
        for (const Vec* c : cond) parts.push_back(c);
        Vec in = concat(parts);

        Vec h1_pre = input_head.forward(in);
        Vec h1(h1_pre.size());
        for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = apply_activation(Activation::Relu, h1_pre[i]);

        Tensor2 query(1, hidden);
        std::copy(h1.begin(), h1.end(), query.row(0));
        MhaCache mha_cache;
        Tensor2 att = attn.forward(query, wni.matrix, cache ? &mha_cache : nullptr);
        Vec fused(hidden);
        for (std::size_t i = 0; i < hidden; ++i) fused[i] = h1[i] + att(0, i);

        std::vector<Vec> mid_pre, mid_post;
        Vec h = fused;
        for (const auto& layer : mid) {
            Vec pre = layer.forward(h);
            Vec post(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i)
                post[i] = apply_activation(Activation::Relu, pre[i]);
            if (cache) {
                mid_pre.push_back(pre);
                mid_post.push_back(post);
            }
            h = std::move(post);
        }
        Vec out = output_head.forward(h);
        if (!all_finite(out)) throw NumericalError("amlp: non-finite prediction");

        if (cache) {
            cache->input = std::move(in);
            cache->h1_pre = std::move(h1_pre);
            cache->h1 = std::move(h1);
            cache->mha = std::move(mha_cache);
            cache->h1_fused = std::move(fused);
            cache->mid_pre = std::move(mid_pre);
            cache->mid_post = std::move(mid_post);
        }
        return out;
    }

    /// Accumulates gradients; returns gradient w.r.t. the concatenated input.
    Vec backward(const AmlpCache& cache, const Vec& out_grad) {
        const Vec& last = cache.mid_post.empty() ? cache.h1_fused : cache.mid_post.back();
        Vec g = output_head.backward(last, out_grad);
        for (std::size_t li = mid.size(); li-- > 0;) {
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] *= activation_grad(Activation::Relu, cache.mid_pre[li][i], cache.mid_post[li][i]);
            const Vec& in = (li == 0) ? cache.h1_fused : cache.mid_post[li - 1];
            g = mid[li].backward(in, g);
        }
        // g is now d(h1_fused); the residual adds it to h1 directly, the
        // attention path contributes through the query projection.
        Tensor2 datt(1, hidden);
        std::copy(g.begin(), g.end(), datt.row(0));
        auto [dquery, dkv] = attn.backward(cache.mha, datt);
        (void)dkv;  // WNI embeddings are frozen
        Vec dh1 = g;
        for (std::size_t i = 0; i < hidden; ++i) dh1[i] += dquery(0, i);
        for (std::size_t i = 0; i < hidden; ++i)
            dh1[i] *= activation_grad(Activation::Relu, cache.h1_pre[i], cache.h1[i]);
        return input_head.backward(cache.input, dh1);
    }

    void zero_grad() {
        input_head.zero_grad();
        attn.zero_grad();
        for (auto& m : mid) m.zero_grad();
        output_head.zero_grad();
    }

    void collect_params(const std::string& prefix, std::vector<ParamView>& out) {
        input_head.collect_params(prefix + ".input", out);
        attn.collect_params(prefix + ".attn", out);
        for (std::size_t i = 0; i < mid.size(); ++i)
            mid[i].collect_params(prefix + ".mid" + std::to_string(i), out);
        output_head.collect_params(prefix + ".output", out);
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> out;
        collect_params("model", out);
        return out;
    }
};

/// amlp_predict: forward pass of one noise predictor (no caching).
inline Vec amlp_predict(const AmlpNet& net, const Vec& x_t, int t, const WniFeature& wni,
                        const std::vector<const Vec*>& cond) {
    return net.predict(x_t, t, wni, cond);
}

// ---------------------------------------------------------------------------
// Model set: four chained predictors sharing one schedule.

struct GdmConfig {
    std::size_t target_dim = 16;
    std::size_t time_dim = 16;
    std::size_t hidden = 64;
    std::size_t heads = 4;
    std::size_t head_dim = 8;
    std::size_t layers = 4;
    std::size_t wni_cols = 32;  // 2 * embedding dim
    std::size_t batch = 64;
    double lr = 2e-3;
    std::size_t warmup_steps = 150;  // linear ramp to lr
    std::size_t train_steps = 2000;
};

struct GdmModelSet {
    GdmConfig config;
    NoiseSchedule schedule;
    std::array<AmlpNet, 4> nets;  // order: s, a, r, s_next with arity 0..3
    std::array<AdamState, 4> adam;
    std::uint64_t train_iterations = 0;

    GdmModelSet(const GdmConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed)
        : config(cfg), schedule(sched) {
        for (std::size_t e = 0; e < 4; ++e) {
            nets[e] = AmlpNet(cfg.target_dim, e, cfg.time_dim, cfg.hidden, cfg.heads, cfg.head_dim,
                              cfg.wni_cols, cfg.layers);
            Rng rng(derive_seed(seed, 0x474d4dULL, e));
            nets[e].init(rng);
            adam[e] = AdamState(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
        }
    }
};

/// Conditioning elements for net `e` from a normalized trajectory: the chain
/// is s -> a(s) -> r(s,a) -> s'(s,a,r).
inline std::vector<const Vec*> conditioning_for(const Trajectory& t, std::size_t e) {
    std::vector<const Vec*> cond;
    if (e >= 1) cond.push_back(&t.s);
    if (e >= 2) cond.push_back(&t.a);
    if (e >= 3) cond.push_back(&t.r);
    return cond;
}

/// One training iteration over a minibatch of normalized trajectories: for
/// each element model, sample per-item step and noise, diffuse, predict,
/// accumulate the MSE gradient, then take one Adam step per model. Returns the
/// per-element mean losses.
inline std::array<double, 4> gdm_train_step(GdmModelSet& models,
                                            const std::vector<Trajectory>& normalized,
                                            const std::map<int, WniFeature>& wni_by_intent,
                                            Rng& rng) {
    const std::size_t batch = std::min<std::size_t>(models.config.batch, normalized.size());
    if (batch == 0) throw ConfigError("gdm_train_step: empty dataset");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.next_below(normalized.size()));

    std::array<double, 4> losses{};
    const std::size_t M = models.config.target_dim;
    for (std::size_t e = 0; e < 4; ++e) {
        AmlpNet& net = models.nets[e];
        double loss = 0.0;
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const Trajectory& traj = normalized[idx[bi]];
            auto wni_it = wni_by_intent.find(traj.intent_id);
            if (wni_it == wni_by_intent.end())
                throw LookupError("gdm_train_step: no WNI feature for intent " +
                                  std::to_string(traj.intent_id));
            const Vec& x0 = element_of(traj, kElementTypes[e]);
            const int t = 1 + static_cast<int>(rng.next_below(models.schedule.steps));
            Vec eps(M);
            for (double& z : eps) z = rng.gauss();
            const Vec x_t = forward_diffuse(x0, t, eps, models.schedule);
            AmlpCache cache;
            const Vec eps_hat = net.predict(x_t, t, wni_it->second, conditioning_for(traj, e), &cache);
            loss += mse(eps, eps_hat);
            Vec grad(M);
            const double scale = 2.0 / (static_cast<double>(M) * static_cast<double>(batch));
            for (std::size_t i = 0; i < M; ++i) grad[i] = scale * (eps_hat[i] - eps[i]);
            net.backward(cache, grad);
        }
        loss /= static_cast<double>(batch);
        if (!std::isfinite(loss))
            throw NumericalError("gdm training diverged for element '" +
                                 std::string(element_name(kElementTypes[e])) + "' at iteration " +
                                 std::to_string(models.train_iterations));
        losses[e] = loss;
        auto params = net.params();
        adam_step(params, models.adam[e]);
    }
    models.train_iterations += 1;
    return losses;
}

// ---------------------------------------------------------------------------
// Reverse sampling

/// One clipped reverse-diffusion step:
/// x_{t-1} = clip((x_t - (1-a_t)/sqrt(1-abar_t) eps_hat)/sqrt(a_t) + sigma_t z, lo, hi)
/// with z ~ N(0, I) for t > 1 and z = 0 at t = 1; sigma_t = sqrt(beta_t).
inline Vec reverse_step_clipped(const AmlpNet& net, const Vec& x_t, int t, const WniFeature& wni,
                                const std::vector<const Vec*>& cond, const NoiseSchedule& schedule,
                                double bound_lo, double bound_hi, Rng& rng) {
    if (t < 1 || static_cast<std::size_t>(t) > schedule.steps)
        throw DomainError("reverse_step: step " + std::to_string(t) + " outside schedule");
    if (!(bound_lo < bound_hi))
        throw ConfigError("reverse_step: clip bounds are inverted (" + std::to_string(bound_lo) +
                          " >= " + std::to_string(bound_hi) + ")");
    const Vec eps_hat = net.predict(x_t, t, wni, cond);
    const double a = schedule.alpha[t - 1];
    const double ab = schedule.alpha_bar[t - 1];
    const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
    const double sigma = std::sqrt(schedule.beta[t - 1]);
    Vec out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        double v = (x_t[i] - coef * eps_hat[i]) / std::sqrt(a);
        if (t > 1) v += sigma * rng.gauss();
        out[i] = std::clamp(v, bound_lo, bound_hi);
    }
    return out;
}

struct GenerationMeta {
    int intent_id = 0;
    std::uint64_t seed = 0;
    std::string checkpoint_hash;
};

struct GeneratedDataset {
    std::vector<Trajectory> trajectories;  // raw units
    GenerationMeta meta;
};

/// Full reverse chain of one element from a standard-normal start.
inline Vec sample_element(const AmlpNet& net, const WniFeature& wni,
                          const std::vector<const Vec*>& cond, const NoiseSchedule& schedule,
                          const Bkb::Range& bounds, std::size_t dim, Rng& rng) {
    Vec x(dim);
    for (double& v : x) v = rng.gauss();
    for (int t = static_cast<int>(schedule.steps); t >= 1; --t)
        x = reverse_step_clipped(net, x, t, wni, cond, schedule, bounds.lo, bounds.hi, rng);
    return x;
}

/// Synthesizes `count` trajectories for a target intent: s first, then a, r
/// and s' each conditioned on the previously generated elements. Values are
/// clipped in normalized space at every step and in raw space after
/// denormalization.
inline GeneratedDataset generate_trajectories(const GdmModelSet& models, const WniFeature& wni,
                                              int target_intent_id, const Bkb& bkb,
                                              std::size_t count, std::uint64_t seed,
                                              const std::string& checkpoint_hash = "") {
    const auto& bounds = bkb.bounds_for(target_intent_id);
    GeneratedDataset out;
    out.meta = {target_intent_id, seed, checkpoint_hash};
    out.trajectories.reserve(count);
    const std::size_t M = models.config.target_dim;

    for (std::size_t j = 0; j < count; ++j) {
        Rng rng(derive_seed(seed, 0x47454eULL, static_cast<std::uint64_t>(target_intent_id), j));
        Trajectory n;
        n.intent_id = target_intent_id;
        n.s = sample_element(models.nets[0], wni, {}, models.schedule, bounds[0], M, rng);
        n.a = sample_element(models.nets[1], wni, {&n.s}, models.schedule, bounds[1], M, rng);
        n.r = sample_element(models.nets[2], wni, {&n.s, &n.a}, models.schedule, bounds[2], M, rng);
        n.s_next =
            sample_element(models.nets[3], wni, {&n.s, &n.a, &n.r}, models.schedule, bounds[3], M, rng);

        Trajectory raw;
        raw.intent_id = target_intent_id;
        for (std::size_t e = 0; e < 4; ++e) {
            const ElementType et = kElementTypes[e];
            Vec v = denormalize(element_of(n, et), et, bkb);
            const double lo = bkb.denormalize_value(bounds[e].lo, et);
            const double hi = bkb.denormalize_value(bounds[e].hi, et);
            for (double& x : v) x = std::clamp(x, lo, hi);
            element_of(raw, et) = std::move(v);
        }
        out.trajectories.push_back(std::move(raw));
    }
    return out;
}

/// Fraction of generated values inside the intent's raw-unit bounds, per
/// (intent, element).
inline std::map<int, std::array<double, 4>> distribution_accuracy(
    const std::vector<Trajectory>& generated, const Bkb& bkb) {
    std::map<int, std::array<double, 4>> inside;
    std::map<int, std::array<double, 4>> total;
    for (const auto& t : generated) {
        const auto& bounds = bkb.bounds_for(t.intent_id);
        auto& in = inside[t.intent_id];
        auto& tot = total[t.intent_id];
        for (std::size_t e = 0; e < 4; ++e) {
            const ElementType et = kElementTypes[e];
            const double lo = bkb.denormalize_value(bounds[e].lo, et);
            const double hi = bkb.denormalize_value(bounds[e].hi, et);
            for (double x : element_of(t, et)) {
                tot[e] += 1.0;
                if (x >= lo && x <= hi) in[e] += 1.0;
            }
        }
    }
    std::map<int, std::array<double, 4>> frac;
    for (auto& [intent, tot] : total) {
        std::array<double, 4> f{};
        for (std::size_t e = 0; e < 4; ++e) f[e] = tot[e] > 0.0 ? inside[intent][e] / tot[e] : 1.0;
        frac[intent] = f;
    }
    return frac;
}

}  // namespace trajgen

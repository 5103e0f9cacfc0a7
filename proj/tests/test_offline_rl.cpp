#include <gtest/gtest.h>

#include <cmath>

#include "trajgen/expert.hpp"
#include "trajgen/offline_rl.hpp"

using namespace trajgen;

namespace {

std::vector<Trajectory> synthetic_dataset(std::size_t count, std::size_t m, std::uint64_t seed) {
    const auto intents = default_intents();
    EnvConfig config;
    config.num_channels = m;
    return collect_expert({intents[2]}, config, count, seed);
}

BcqConfig small_config() {
    BcqConfig c;
    c.batch = 32;
    c.iterations = 40;
    c.hidden = 24;
    return c;
}

}  // namespace

TEST(ProjectFeasible, FeasibleInputUnchanged) {
    const Vec a = {0.5, 0.25, 0.0, 1.0};
    const Vec p = project_feasible(a, 6.0);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(p[i], a[i]);
}

TEST(ProjectFeasible, UniformRescaleWhenDoubleBudget) {
    const Vec a(8, 1.0);  // sums to 8 with P = 4
    const Vec p = project_feasible(a, 4.0);
    for (double x : p) EXPECT_NEAR(x, 0.5, 1e-12);
}

TEST(ProjectFeasible, ClampThenRescaleHandCase) {
    // [-1, 3] with P = 2: clamp to [0, 3], then rescale 3 -> 2.
    const Vec p = project_feasible({-1.0, 3.0}, 2.0);
    EXPECT_DOUBLE_EQ(p[0], 0.0);
    EXPECT_NEAR(p[1], 2.0, 1e-12);
}

TEST(ProjectFeasible, OutputAlwaysSatisfiesConstraints) {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        Vec a(16);
        for (double& x : a) x = rng.uniform(-3.0, 3.0);
        const double P = rng.uniform(0.5, 30.0);
        const Vec p = project_feasible(a, P);
        double sum = 0.0;
        for (double x : p) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_LE(sum, P * (1.0 + 1e-12));
    }
}

TEST(KlClosedForm, StandardNormalGivesZero) {
    EXPECT_NEAR(gaussian_kl_to_standard({0.0}, {1.0}), 0.0, 1e-12);
}

TEST(KlClosedForm, UnitMeanGivesHalf) {
    EXPECT_NEAR(gaussian_kl_to_standard({1.0}, {1.0}), 0.5, 1e-12);
}

TEST(KlClosedForm, MatchesMonteCarloWithinTwoPercent) {
    // MC estimate of E_q[log q - log p] with q = N(mu, sigma^2), p = N(0,1).
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const double mu = rng.uniform(-1.5, 1.5);
        const double sigma = rng.uniform(0.5, 2.0);
        const double closed = gaussian_kl_to_standard({mu}, {sigma});
        double acc = 0.0;
        const std::size_t n = 100000;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = mu + sigma * rng.gauss();
            const double logq = -0.5 * std::log(2.0 * M_PI * sigma * sigma) -
                                0.5 * (x - mu) * (x - mu) / (sigma * sigma);
            const double logp = -0.5 * std::log(2.0 * M_PI) - 0.5 * x * x;
            acc += logq - logp;
        }
        const double mc = acc / static_cast<double>(n);
        EXPECT_NEAR(mc, closed, std::max(0.02 * std::abs(closed), 0.02));
    }
}

TEST(BcqTarget, HandComputedBlend) {
    // r=1, gamma=0.1, lambda=0.75, twins (2,4) and (3,3): blends 2.5 and 3 -> y = 1.3.
    const double y = bcq_target_value(1.0, {{2.0, 4.0}, {3.0, 3.0}}, 0.1, 0.75);
    EXPECT_NEAR(y, 1.3, 1e-12);
}

TEST(BcqTarget, EqualTwinsReduceToPlainTarget) {
    const double y = bcq_target_value(2.0, {{5.0, 5.0}}, 0.1, 0.75);
    EXPECT_NEAR(y, 2.5, 1e-12);
}

TEST(BcqTarget, ZeroDiscountIgnoresCandidates) {
    const double y = bcq_target_value(7.0, {{100.0, -100.0}, {3.0, 2.0}}, 0.0, 0.75);
    EXPECT_DOUBLE_EQ(y, 7.0);
}

TEST(BcqTarget, LambdaLimitsAreMinAndMaxTwin) {
    const std::vector<std::pair<double, double>> twins = {{2.0, 4.0}};
    EXPECT_NEAR(bcq_target_value(0.0, twins, 1.0, 1.0), 2.0, 1e-12);  // pure min
    EXPECT_NEAR(bcq_target_value(0.0, twins, 1.0, 0.0), 4.0, 1e-12);  // pure max
}

TEST(VaeUpdate, OverfitsTinyBatch) {
    const auto data = synthetic_dataset(4, 8, 11);
    BcqConfig cfg = small_config();
    cfg.lr_policy = 1e-3;
    BcqLearner learner(cfg, 8, 8, 3);
    learner.fit_whitening(data);
    std::vector<const Trajectory*> batch;
    for (const auto& t : data) batch.push_back(&t);
    Rng rng(4);
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 200; ++it) {
        const auto [recon, kl] = learner.vae_update(batch, rng);
        if (it == 0) first = recon;
        last = recon;
    }
    EXPECT_LT(last, 0.1 * first);
}

TEST(Candidates, SingleCandidateAndFeasibility) {
    const auto data = synthetic_dataset(50, 8, 12);
    BcqLearner learner(small_config(), 8, 8, 5);
    learner.fit_whitening(data);
    Rng rng(6);
    const auto one = learner.candidate_actions(data[0].s, 1, 6.0, rng);
    ASSERT_EQ(one.size(), 1u);
    for (int trial = 0; trial < 50; ++trial) {
        const auto cands = learner.candidate_actions(data[trial % data.size()].s, 10, 6.0, rng);
        for (const auto& c : cands) {
            double sum = 0.0;
            for (double x : c) {
                EXPECT_GE(x, 0.0);
                sum += x;
            }
            EXPECT_LE(sum, 6.0 * (1.0 + 1e-12));
        }
    }
}

TEST(Candidates, ZeroedPerturbationEqualsDecoderOutput) {
    const auto data = synthetic_dataset(50, 8, 13);
    BcqConfig cfg = small_config();
    BcqLearner learner(cfg, 8, 8, 7);
    learner.fit_whitening(data);
    for (auto& layer : learner.perturb_net().layers) {
        layer.weight.fill(0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    // With zero perturbation the candidate equals the projected decoder sample.
    Rng ra(88), rb(88);
    const auto with_pert = learner.candidate_actions(data[0].s, 5, 30.0, ra);
    // Manual decoder pass using the same latent stream.
    const Vec ws = learner.whiten_state(data[0].s);
    for (std::size_t k = 0; k < 5; ++k) {
        Vec z(learner.config().latent_dim ? learner.config().latent_dim : 16);
        for (double& v : z) v = std::clamp(rb.gauss(), -0.5, 0.5);
        Vec dec_in = ws;
        dec_in.insert(dec_in.end(), z.begin(), z.end());
        const Vec a = project_feasible(learner.vae_decoder().forward(dec_in), 30.0);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(with_pert[k][i], a[i], 1e-12);
    }
}

TEST(Perturbation, BoundedByPhiOnRandomProbes) {
    const auto data = synthetic_dataset(50, 8, 14);
    BcqConfig cfg = small_config();
    BcqLearner learner(cfg, 8, 8, 9);
    learner.fit_whitening(data);
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        Vec in(16);
        for (double& v : in) v = rng.gauss() * 2.0;
        const Vec xi = learner.perturb_net().forward(in);
        for (double x : xi) EXPECT_LE(std::abs(cfg.max_perturb * x), cfg.max_perturb + 1e-15);
    }
}

TEST(SoftUpdate, FullRateCopiesAndZeroRateFreezes) {
    Rng rng(15);
    Mlp online({4, 6, 2}, {Activation::Relu, Activation::Identity});
    Mlp target({4, 6, 2}, {Activation::Relu, Activation::Identity});
    online.init(rng);
    target.init(rng);
    Mlp frozen = target;
    soft_update(target, online, 0.0);
    for (std::size_t li = 0; li < target.layers.size(); ++li)
        for (std::size_t i = 0; i < target.layers[li].weight.size(); ++i)
            EXPECT_DOUBLE_EQ(target.layers[li].weight.data[i], frozen.layers[li].weight.data[i]);
    soft_update(target, online, 1.0);
    for (std::size_t li = 0; li < target.layers.size(); ++li)
        for (std::size_t i = 0; i < target.layers[li].weight.size(); ++i)
            EXPECT_DOUBLE_EQ(target.layers[li].weight.data[i], online.layers[li].weight.data[i]);
}

TEST(TrainBcq, DatasetTooSmallThrows) {
    const auto data = synthetic_dataset(10, 8, 16);
    BcqConfig cfg = small_config();  // batch 32 > 10
    EXPECT_THROW(train_bcq(data, cfg, 8, 8, 1), ConfigError);
}

TEST(TrainBcq, ZeroIterationsStillActsFeasibly) {
    const auto data = synthetic_dataset(64, 8, 17);
    BcqConfig cfg = small_config();
    cfg.iterations = 0;
    BcqLearner learner = train_bcq(data, cfg, 8, 8, 2);
    Rng rng(3);
    const Vec a = learner.act(data[0].s, 10, 6.0, rng);
    double sum = 0.0;
    for (double x : a) {
        EXPECT_GE(x, 0.0);
        sum += x;
    }
    EXPECT_LE(sum, 6.0 * (1.0 + 1e-12));
}

TEST(TrainBcq, DeterministicGivenSeed) {
    const auto data = synthetic_dataset(64, 6, 18);
    BcqConfig cfg = small_config();
    cfg.iterations = 10;
    BcqLearner a = train_bcq(data, cfg, 6, 6, 77);
    BcqLearner b = train_bcq(data, cfg, 6, 6, 77);
    const auto& wa = a.q1_net().layers[0].weight.data;
    const auto& wb = b.q1_net().layers[0].weight.data;
    for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_DOUBLE_EQ(wa[i], wb[i]);
    Rng ra(5), rb(5);
    const Vec act_a = a.act(data[0].s, 10, 12.0, ra);
    const Vec act_b = b.act(data[0].s, 10, 12.0, rb);
    for (std::size_t i = 0; i < act_a.size(); ++i) EXPECT_DOUBLE_EQ(act_a[i], act_b[i]);
}

TEST(PolicyAct, ReturnsOneOfTheCandidates) {
    const auto data = synthetic_dataset(64, 6, 19);
    BcqConfig cfg = small_config();
    cfg.iterations = 5;
    BcqLearner learner = train_bcq(data, cfg, 6, 6, 4);
    Rng ra(21), rb(21);
    const auto cands = learner.candidate_actions(data[0].s, 10, 6.0, ra);
    const Vec chosen = learner.act(data[0].s, 10, 6.0, rb);
    bool found = false;
    for (const auto& c : cands) {
        bool same = true;
        for (std::size_t i = 0; i < c.size(); ++i) same = same && std::abs(c[i] - chosen[i]) < 1e-12;
        found = found || same;
    }
    EXPECT_TRUE(found);
}

TEST(PolicyAct, ArgmaxInvariantUnderQShift) {
    // Adding a constant to every Q output must not change the selection:
    // shift the final bias of Q1 and compare.
    const auto data = synthetic_dataset(64, 6, 20);
    BcqConfig cfg = small_config();
    cfg.iterations = 5;
    BcqLearner learner = train_bcq(data, cfg, 6, 6, 8);
    Rng ra(31), rb(31);
    const Vec before = learner.act(data[1].s, 10, 12.0, ra);
    learner.q1_net().layers.back().bias[0] += 123.0;
    const Vec after = learner.act(data[1].s, 10, 12.0, rb);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_DOUBLE_EQ(before[i], after[i]);
}

TEST(TrainIter, QLossTrendsDownOnFixedData) {
    // 200-iteration moving average at iteration 2000 under half of the average
    // at iteration 200.
    const auto data = synthetic_dataset(300, 8, 22);
    BcqConfig cfg = small_config();
    BcqLearner learner(cfg, 8, 8, 23);
    learner.fit_whitening(data);
    Rng rng(24);
    double early = 0.0, late = 0.0;
    const int total = 2000;
    for (int it = 1; it <= total; ++it) {
        const auto d = learner.train_iter(data, rng);
        if (it <= 200) early += d.q_loss;
        if (it > total - 200) late += d.q_loss;
    }
    EXPECT_LT(late / 200.0, 0.5 * (early / 200.0));
}

TEST(FineTune, ZeroStepsIsNoOp) {
    const auto data = synthetic_dataset(64, 8, 25);
    BcqConfig cfg = small_config();
    cfg.iterations = 3;
    BcqLearner learner = train_bcq(data, cfg, 8, 8, 26);
    const auto before = learner.q1_net().layers[0].weight.data;
    EnvConfig env;
    env.num_channels = 8;
    const auto intents = default_intents();
    const Vec series = fine_tune(learner, data, intents[2], env, 12.0, 0, 1);
    EXPECT_TRUE(series.empty());
    const auto& after = learner.q1_net().layers[0].weight.data;
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_DOUBLE_EQ(before[i], after[i]);
}

TEST(FineTune, SeriesBoundedByOracleOnSameStates) {
    const auto data = synthetic_dataset(128, 8, 27);
    BcqConfig cfg = small_config();
    cfg.iterations = 20;
    BcqLearner learner = train_bcq(data, cfg, 8, 8, 28);
    EnvConfig env;
    env.num_channels = 8;
    const auto intents = default_intents();
    const Vec series = fine_tune(learner, data, intents[2], env, 12.0, 30, 2);
    ASSERT_EQ(series.size(), 30u);
    // The environment stream is independent of the actions, so the visited
    // states can be replayed and the water-filling optimum computed for each.
    Rng env_rng(derive_seed(2, 0x4654ULL, 1));
    EnvState st = sample_gains(intents[2], env, env_rng);
    for (double se : series) {
        EXPECT_GE(se, 0.0);
        const Vec best = waterfill(st.gains, 12.0, env.noise_power);
        EXPECT_LE(se, spectral_efficiency(st.gains, best, env.noise_power) + 1e-9);
        st = sample_gains(intents[2], env, env_rng);
    }
}

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajgen/errors.hpp"
#include "trajgen/rng.hpp"
#include "trajgen/tensor.hpp"

namespace trajgen {

enum class Activation { Identity, Relu, Tanh };

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        default: return x;
    }
}

inline double activation_grad(Activation a, double pre, double post) {
    switch (a) {
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - post * post;
        default: return 1.0;
    }
}

/// Numerically stable softmax over a contiguous row; the result sums to 1.
inline void softmax_inplace(double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= sum;
}

/// Mutable view onto one named parameter tensor and its gradient.
struct ParamView {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t size = 0;
    std::size_t rows = 0;  // vectors are rows x 1
    std::size_t cols = 1;
};

// ---------------------------------------------------------------------------
// Dense layer

struct DenseLayer {
    Tensor2 weight;       // out x in
    Tensor2 weight_grad;  // same shape
    Vec bias;
    Vec bias_grad;

    DenseLayer() = default;
    DenseLayer(std::size_t out, std::size_t in)
        : weight(out, in), weight_grad(out, in), bias(out, 0.0), bias_grad(out, 0.0) {}

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }

    // He-style bound for layers feeding a ReLU, Xavier otherwise; the sampled
    // weights are rescaled to their design second moment so the forward gain
    // does not depend on draw luck at these small widths. See ledger.
    void init(Rng& rng, bool feeds_relu) {
        const double fan_in = static_cast<double>(weight.cols);
        const double fan_out = static_cast<double>(weight.rows);
        const double limit =
            feeds_relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        double ms = 0.0;
        for (double& w : weight.data) {
            w = rng.uniform(-limit, limit);
            ms += w * w;
        }
        ms /= static_cast<double>(weight.size());
        const double scale = (ms > 0.0) ? std::sqrt(limit * limit / 3.0 / ms) : 1.0;
        for (double& w : weight.data) w *= scale;
        std::fill(bias.begin(), bias.end(), 0.0);
    }

    Vec forward(const Vec& x) const {
        Vec y = matvec(weight, x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i];
        return y;
    }

    // Accumulates parameter gradients and returns the input gradient.
    Vec backward(const Vec& x, const Vec& out_grad, bool accumulate = true) {
        if (accumulate) {
            add_outer(weight_grad, out_grad, x);
            for (std::size_t i = 0; i < bias_grad.size(); ++i) bias_grad[i] += out_grad[i];
        }
        return matvec_transposed(weight, out_grad);
    }

    void zero_grad() {
        weight_grad.fill(0.0);
        std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
    }

    void collect_params(const std::string& prefix, std::vector<ParamView>& out) {
        out.push_back({prefix + ".weight", weight.data.data(), weight_grad.data.data(), weight.size(),
                       weight.rows, weight.cols});
        out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.size(), bias.size(), 1});
    }
};

// ---------------------------------------------------------------------------
// Multi-layer perceptron

struct MlpCache {
    Vec input;
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer
};

struct Mlp {
    std::vector<DenseLayer> layers;
    std::vector<Activation> activations;  // one per layer

    Mlp() = default;

    /// widths = {in, h1, ..., out}; acts has widths.size()-1 entries.
    Mlp(const std::vector<std::size_t>& widths, const std::vector<Activation>& acts) {
        if (widths.size() < 2 || acts.size() != widths.size() - 1)
            throw ConfigError("mlp: widths/activations mismatch");
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            layers.emplace_back(widths[i + 1], widths[i]);
            activations.push_back(acts[i]);
        }
    }

    void init(Rng& rng) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].init(rng, activations[i] == Activation::Relu);
    }

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }

    Vec forward(const Vec& x, MlpCache* cache = nullptr) const {
        if (cache) {
            cache->input = x;
            cache->pre.assign(layers.size(), {});
            cache->post.assign(layers.size(), {});
        }
        Vec h = x;
        for (std::size_t li = 0; li < layers.size(); ++li) {
            Vec pre = layers[li].forward(h);
            Vec post(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i)
                post[i] = apply_activation(activations[li], pre[i]);
            if (!all_finite(post))
                throw NumericalError("mlp: non-finite activation in layer " + std::to_string(li));
            if (cache) {
                cache->pre[li] = pre;
                cache->post[li] = post;
            }
            h = std::move(post);
        }
        return h;
    }

    // Accumulates parameter gradients (unless accumulate=false) and returns
    // the gradient with respect to the input.
    Vec backward(const MlpCache& cache, const Vec& out_grad, bool accumulate = true) {
        Vec g = out_grad;
        for (std::size_t li = layers.size(); li-- > 0;) {
            const Vec& pre = cache.pre[li];
            const Vec& post = cache.post[li];
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] *= activation_grad(activations[li], pre[i], post[i]);
            const Vec& in = (li == 0) ? cache.input : cache.post[li - 1];
            g = layers[li].backward(in, g, accumulate);
        }
        return g;
    }

    void zero_grad() {
        for (auto& l : layers) l.zero_grad();
    }

    void collect_params(const std::string& prefix, std::vector<ParamView>& out) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].collect_params(prefix + ".layer" + std::to_string(i), out);
    }
};

// ---------------------------------------------------------------------------
// Multi-head cross-attention
//
// Per head: q_i = Wq x_i, k_j = Wk u_j, v_j = Wv u_j,
//           att_i = softmax(q_i K^T / sqrt(d)) V;
// heads are concatenated and projected by Wo. No biases.

struct MhaCache {
    Tensor2 query, keyval;
    std::vector<Tensor2> q, k, v, weights;  // per head
    Tensor2 concat;
};

struct MultiHeadAttention {
    std::size_t heads = 0, head_dim = 0;
    std::vector<Tensor2> wq, wk, wv;        // head_dim x query_dim / kv_dim
    std::vector<Tensor2> wq_grad, wk_grad, wv_grad;
    Tensor2 wo, wo_grad;                    // out_dim x heads*head_dim

    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t n_heads, std::size_t d_head, std::size_t query_dim,
                       std::size_t kv_dim, std::size_t out_dim)
        : heads(n_heads), head_dim(d_head) {
        for (std::size_t h = 0; h < heads; ++h) {
            wq.emplace_back(head_dim, query_dim);
            wk.emplace_back(head_dim, kv_dim);
            wv.emplace_back(head_dim, kv_dim);
            wq_grad.emplace_back(head_dim, query_dim);
            wk_grad.emplace_back(head_dim, kv_dim);
            wv_grad.emplace_back(head_dim, kv_dim);
        }
        wo = Tensor2(out_dim, heads * head_dim);
        wo_grad = Tensor2(out_dim, heads * head_dim);
    }

    std::size_t query_dim() const { return wq.empty() ? 0 : wq[0].cols; }
    std::size_t kv_dim() const { return wk.empty() ? 0 : wk[0].cols; }
    std::size_t out_dim() const { return wo.rows; }

    void init(Rng& rng) {
        auto xavier = [&rng](Tensor2& t) {
            const double limit = std::sqrt(6.0 / (static_cast<double>(t.rows) + static_cast<double>(t.cols)));
            double ms = 0.0;
            for (double& w : t.data) {
                w = rng.uniform(-limit, limit);
                ms += w * w;
            }
            ms /= static_cast<double>(t.data.size());
            const double scale = (ms > 0.0) ? std::sqrt(limit * limit / 3.0 / ms) : 1.0;
            for (double& w : t.data) w *= scale;
        };
        for (std::size_t h = 0; h < heads; ++h) {
            xavier(wq[h]);
            xavier(wk[h]);
            xavier(wv[h]);
        }
        xavier(wo);
    }

    Tensor2 forward(const Tensor2& query_seq, const Tensor2& keyval_seq, MhaCache* cache = nullptr) const {
        if (query_seq.cols != query_dim())
            throw ConfigError("attention: query width " + std::to_string(query_seq.cols) +
                              " does not match projection input width " + std::to_string(query_dim()));
        if (keyval_seq.cols != kv_dim())
            throw ConfigError("attention: key/value width " + std::to_string(keyval_seq.cols) +
                              " does not match projection input width " + std::to_string(kv_dim()));
        const std::size_t nq = query_seq.rows, nk = keyval_seq.rows;
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

        Tensor2 concat_all(nq, heads * head_dim);
        std::vector<Tensor2> qh, kh, vh, wh;
        for (std::size_t h = 0; h < heads; ++h) {
            Tensor2 q(nq, head_dim), k(nk, head_dim), v(nk, head_dim), w(nq, nk);
            for (std::size_t i = 0; i < nq; ++i) {
                Vec qi = matvec(wq[h], Vec(query_seq.row(i), query_seq.row(i) + query_seq.cols));
                std::copy(qi.begin(), qi.end(), q.row(i));
            }
            for (std::size_t j = 0; j < nk; ++j) {
                Vec row(keyval_seq.row(j), keyval_seq.row(j) + keyval_seq.cols);
                Vec kj = matvec(wk[h], row);
                Vec vj = matvec(wv[h], row);
                std::copy(kj.begin(), kj.end(), k.row(j));
                std::copy(vj.begin(), vj.end(), v.row(j));
            }
            for (std::size_t i = 0; i < nq; ++i) {
                for (std::size_t j = 0; j < nk; ++j) {
                    double s = 0.0;
                    for (std::size_t d = 0; d < head_dim; ++d) s += q(i, d) * k(j, d);
                    w(i, j) = s * inv_sqrt_d;
                }
                softmax_inplace(w.row(i), nk);
                double* out = concat_all.row(i) + h * head_dim;
                for (std::size_t j = 0; j < nk; ++j) {
                    const double wij = w(i, j);
                    for (std::size_t d = 0; d < head_dim; ++d) out[d] += wij * v(j, d);
                }
            }
            if (cache) {
                qh.push_back(std::move(q));
                kh.push_back(std::move(k));
                vh.push_back(std::move(v));
                wh.push_back(std::move(w));
            }
        }

        Tensor2 out(nq, out_dim());
        for (std::size_t i = 0; i < nq; ++i) {
            Vec o = matvec(wo, Vec(concat_all.row(i), concat_all.row(i) + concat_all.cols));
            std::copy(o.begin(), o.end(), out.row(i));
        }
        if (cache) {
            cache->query = query_seq;
            cache->keyval = keyval_seq;
            cache->q = std::move(qh);
            cache->k = std::move(kh);
            cache->v = std::move(vh);
            cache->weights = std::move(wh);
            cache->concat = std::move(concat_all);
        }
        return out;
    }

    /// Returns (d query_seq, d keyval_seq); accumulates projection gradients.
    std::pair<Tensor2, Tensor2> backward(const MhaCache& cache, const Tensor2& out_grad) {
        const std::size_t nq = cache.query.rows, nk = cache.keyval.rows;
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));
        Tensor2 dquery(nq, cache.query.cols), dkeyval(nk, cache.keyval.cols);
        Tensor2 dconcat(nq, heads * head_dim);

        for (std::size_t i = 0; i < nq; ++i) {
            const Vec gi(out_grad.row(i), out_grad.row(i) + out_grad.cols);
            const Vec ci(cache.concat.row(i), cache.concat.row(i) + cache.concat.cols);
            add_outer(wo_grad, gi, ci);
            Vec dc = matvec_transposed(wo, gi);
            std::copy(dc.begin(), dc.end(), dconcat.row(i));
        }

        for (std::size_t h = 0; h < heads; ++h) {
            const Tensor2& q = cache.q[h];
            const Tensor2& k = cache.k[h];
            const Tensor2& v = cache.v[h];
            const Tensor2& w = cache.weights[h];
            Tensor2 dq(nq, head_dim), dk(nk, head_dim), dv(nk, head_dim);

            for (std::size_t i = 0; i < nq; ++i) {
                const double* datt = dconcat.row(i) + h * head_dim;
                // dw_ij = datt . v_j ; dv_j += w_ij * datt
                Vec dw(nk, 0.0);
                for (std::size_t j = 0; j < nk; ++j) {
                    double s = 0.0;
                    const double wij = w(i, j);
                    for (std::size_t d = 0; d < head_dim; ++d) {
                        s += datt[d] * v(j, d);
                        dv(j, d) += wij * datt[d];
                    }
                    dw[j] = s;
                }
                // softmax backward, then fold in the 1/sqrt(d) score scale
                double inner = 0.0;
                for (std::size_t j = 0; j < nk; ++j) inner += dw[j] * w(i, j);
                for (std::size_t j = 0; j < nk; ++j) {
                    const double ds = w(i, j) * (dw[j] - inner) * inv_sqrt_d;
                    for (std::size_t d = 0; d < head_dim; ++d) {
                        dq(i, d) += ds * k(j, d);
                        dk(j, d) += ds * q(i, d);
                    }
                }
            }

            for (std::size_t i = 0; i < nq; ++i) {
                const Vec dqi(dq.row(i), dq.row(i) + head_dim);
                const Vec xi(cache.query.row(i), cache.query.row(i) + cache.query.cols);
                add_outer(wq_grad[h], dqi, xi);
                Vec dx = matvec_transposed(wq[h], dqi);
                for (std::size_t c = 0; c < dquery.cols; ++c) dquery(i, c) += dx[c];
            }
            for (std::size_t j = 0; j < nk; ++j) {
                const Vec dkj(dk.row(j), dk.row(j) + head_dim);
                const Vec dvj(dv.row(j), dv.row(j) + head_dim);
                const Vec uj(cache.keyval.row(j), cache.keyval.row(j) + cache.keyval.cols);
                add_outer(wk_grad[h], dkj, uj);
                add_outer(wv_grad[h], dvj, uj);
                Vec du_k = matvec_transposed(wk[h], dkj);
                Vec du_v = matvec_transposed(wv[h], dvj);
                for (std::size_t c = 0; c < dkeyval.cols; ++c) dkeyval(j, c) += du_k[c] + du_v[c];
            }
        }
        return {std::move(dquery), std::move(dkeyval)};
    }

    void zero_grad() {
        for (std::size_t h = 0; h < heads; ++h) {
            wq_grad[h].fill(0.0);
            wk_grad[h].fill(0.0);
            wv_grad[h].fill(0.0);
        }
        wo_grad.fill(0.0);
    }

    void collect_params(const std::string& prefix, std::vector<ParamView>& out) {
        for (std::size_t h = 0; h < heads; ++h) {
            const std::string hp = prefix + ".head" + std::to_string(h);
            out.push_back({hp + ".wq", wq[h].data.data(), wq_grad[h].data.data(), wq[h].size(),
                           wq[h].rows, wq[h].cols});
            out.push_back({hp + ".wk", wk[h].data.data(), wk_grad[h].data.data(), wk[h].size(),
                           wk[h].rows, wk[h].cols});
            out.push_back({hp + ".wv", wv[h].data.data(), wv_grad[h].data.data(), wv[h].size(),
                           wv[h].rows, wv[h].cols});
        }
        out.push_back({prefix + ".wo", wo.data.data(), wo_grad.data.data(), wo.size(), wo.rows, wo.cols});
    }
};

/// mha_forward: one-shot convenience wrapper over MultiHeadAttention::forward.
inline Tensor2 mha_forward(const Tensor2& query_seq, const Tensor2& keyval_seq,
                           const MultiHeadAttention& layer, MhaCache* cache = nullptr) {
    return layer.forward(query_seq, keyval_seq, cache);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second-moment accumulators for one parameter set. Allocated lazily on
/// the first step; afterwards the parameter layout must not change.
struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<Vec> m, v;

    explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One Adam update over `params`; zeroes gradients and bumps the step counter.
inline void adam_step(std::vector<ParamView>& params, AdamState& state) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size, 0.0);
            state.v.emplace_back(p.size, 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw ConfigError("adam_step: state tracks " + std::to_string(state.m.size()) +
                          " tensors but got " + std::to_string(params.size()));
    state.step_count += 1;
    const double b1 = state.config.beta1, b2 = state.config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamView& p = params[pi];
        if (state.m[pi].size() != p.size)
            throw ConfigError("adam_step: tensor " + p.name + " changed size");
        for (std::size_t i = 0; i < p.size; ++i) {
            const double g = p.grad[i];
            state.m[pi][i] = b1 * state.m[pi][i] + (1.0 - b1) * g;
            state.v[pi][i] = b2 * state.v[pi][i] + (1.0 - b2) * g * g;
            const double mhat = state.m[pi][i] / bc1;
            const double vhat = state.v[pi][i] / bc2;
            p.value[i] -= state.config.learning_rate * mhat / (std::sqrt(vhat) + state.config.epsilon);
            p.grad[i] = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------

/// Sinusoidal embedding of a diffusion step index: alternating sin/cos over
/// geometrically spaced frequencies. Deterministic.
inline Vec time_embed(int t, std::size_t dim) {
    if (dim % 2 != 0) throw ConfigError("time_embed: dimension must be even, got " + std::to_string(dim));
    if (t < 0) throw DomainError("time_embed: negative step index " + std::to_string(t));
    Vec out(dim);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        const double angle = static_cast<double>(t) * freq;
        out[2 * i] = std::sin(angle);
        out[2 * i + 1] = std::cos(angle);
    }
    return out;
}

inline double mse(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

}  // namespace trajgen

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajgen/env.hpp"
#include "trajgen/errors.hpp"
#include "trajgen/rng.hpp"
#include "trajgen/tensor.hpp"

namespace trajgen {

/// One MDP transition of per-channel vectors, tagged with its intent.
struct Trajectory {
    int intent_id = 0;
    Vec s;       // channel gains
    Vec a;       // allocated powers
    Vec r;       // per-channel rates
    Vec s_next;  // next channel gains
};

enum class ElementType { S = 0, A = 1, R = 2, SNext = 3 };

inline constexpr std::array<ElementType, 4> kElementTypes = {ElementType::S, ElementType::A,
                                                             ElementType::R, ElementType::SNext};

inline const char* element_name(ElementType e) {
    switch (e) {
        case ElementType::S: return "s";
        case ElementType::A: return "a";
        case ElementType::R: return "r";
        case ElementType::SNext: return "s_next";
    }
    return "?";
}

inline ElementType element_from_name(const std::string& n) {
    if (n == "s") return ElementType::S;
    if (n == "a") return ElementType::A;
    if (n == "r") return ElementType::R;
    if (n == "s_next") return ElementType::SNext;
    throw LookupError("unknown trajectory element type '" + n + "'");
}

inline const Vec& element_of(const Trajectory& t, ElementType e) {
    switch (e) {
        case ElementType::S: return t.s;
        case ElementType::A: return t.a;
        case ElementType::R: return t.r;
        default: return t.s_next;
    }
}

inline Vec& element_of(Trajectory& t, ElementType e) {
    switch (e) {
        case ElementType::S: return t.s;
        case ElementType::A: return t.a;
        case ElementType::R: return t.r;
        default: return t.s_next;
    }
}

// ---------------------------------------------------------------------------
// Water-filling

/// Optimal power allocation p_m = max(0, mu - n0/g_m) with the water level mu
/// found by bisection so that sum(p) = P. Gains must be strictly positive.
inline Vec waterfill(const Vec& gains, double total_power, double n0) {
    if (total_power <= 0.0) throw DomainError("waterfill: total power must be positive");
    for (std::size_t m = 0; m < gains.size(); ++m)
        if (gains[m] <= 0.0)
            throw DomainError("waterfill: channel " + std::to_string(m) + " gain " +
                              std::to_string(gains[m]) + " is not positive");
    Vec inv(gains.size());
    double lo = n0 / gains[0], hi = n0 / gains[0];
    for (std::size_t m = 0; m < gains.size(); ++m) {
        inv[m] = n0 / gains[m];
        lo = std::min(lo, inv[m]);
        hi = std::max(hi, inv[m]);
    }
    hi += total_power;

    auto allocated = [&](double mu) {
        double sum = 0.0;
        for (double im : inv) sum += std::max(0.0, mu - im);
        return sum;
    };
    for (int it = 0; it < 100; ++it) {
        const double mu = 0.5 * (lo + hi);
        if (allocated(mu) > total_power)
            hi = mu;
        else
            lo = mu;
    }
    const double mu = 0.5 * (lo + hi);
    Vec p(gains.size());
    for (std::size_t m = 0; m < gains.size(); ++m) p[m] = std::max(0.0, mu - inv[m]);
    return p;
}

// ---------------------------------------------------------------------------
// Expert collection

/// Collects `count_per_intent` water-filling transitions per intent. Each
/// trajectory's total power is drawn uniformly from the configured options.
/// Deterministic given the seed and independent of worker scheduling: every
/// trajectory derives its own RNG stream from (seed, intent, index).
inline std::vector<Trajectory> collect_expert(const std::vector<IntentSpec>& specs,
                                              const EnvConfig& config, std::size_t count_per_intent,
                                              std::uint64_t seed) {
    if (count_per_intent < 1) throw ConfigError("collect_expert: count_per_intent must be >= 1");
    std::vector<Trajectory> out;
    out.reserve(specs.size() * count_per_intent);
    for (const auto& spec : specs) {
        for (std::size_t j = 0; j < count_per_intent; ++j) {
            Rng rng(derive_seed(seed, 0x45585052ULL, static_cast<std::uint64_t>(spec.intent_id), j));
            EnvState st = sample_gains(spec, config, rng);
            const std::size_t pick = static_cast<std::size_t>(rng.next_below(config.total_power_options.size()));
            const double power = config.total_power_options[pick];
            Trajectory t;
            t.intent_id = spec.intent_id;
            t.s = st.gains;
            t.a = waterfill(st.gains, power, config.noise_power);
            StepResult step = env_step(st, t.a, spec, config, rng, power);
            t.r = std::move(step.reward);
            t.s_next = std::move(step.next.gains);
            out.push_back(std::move(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Background knowledge base

/// Global per-element z-score moments plus per-intent, per-element bounds in
/// normalized units. Bounds are the empirical min/max of the normalized expert
/// data, so containment of that data is exact by construction.
struct Bkb {
    std::array<double, 4> mean{};
    std::array<double, 4> stddev{};
    struct Range {
        double lo = 0.0, hi = 0.0;
    };
    // bounds[intent_id][element]
    std::vector<int> intent_ids;
    std::vector<std::array<Range, 4>> bounds;
    std::string dataset_hash;
    std::size_t trajectory_count = 0;

    const std::array<Range, 4>& bounds_for(int intent_id) const {
        for (std::size_t i = 0; i < intent_ids.size(); ++i)
            if (intent_ids[i] == intent_id) return bounds[i];
        throw LookupError("bkb: no bounds stored for intent " + std::to_string(intent_id));
    }

    double normalize_value(double x, ElementType e) const {
        return (x - mean[static_cast<std::size_t>(e)]) / stddev[static_cast<std::size_t>(e)];
    }
    double denormalize_value(double x, ElementType e) const {
        return x * stddev[static_cast<std::size_t>(e)] + mean[static_cast<std::size_t>(e)];
    }
};

/// x * std + mean, elementwise.
inline Vec denormalize(const Vec& values, ElementType element, const Bkb& bkb) {
    Vec out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = bkb.denormalize_value(values[i], element);
    return out;
}

inline Vec normalize(const Vec& values, ElementType element, const Bkb& bkb) {
    Vec out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = bkb.normalize_value(values[i], element);
    return out;
}

struct BkbBuildResult {
    std::vector<Trajectory> normalized;
    Bkb bkb;
};

/// Z-scores every element type with pooled global moments and records
/// per-intent empirical bounds of the normalized values.
inline BkbBuildResult build_bkb(const std::vector<Trajectory>& dataset) {
    if (dataset.empty()) throw DegenerateDataError("build_bkb: empty dataset");

    Bkb bkb;
    bkb.trajectory_count = dataset.size();
    for (std::size_t ei = 0; ei < 4; ++ei) {
        const ElementType e = kElementTypes[ei];
        double sum = 0.0, count = 0.0;
        for (const auto& t : dataset)
            for (double x : element_of(t, e)) {
                sum += x;
                count += 1.0;
            }
        const double m = sum / count;
        double var = 0.0;
        for (const auto& t : dataset)
            for (double x : element_of(t, e)) var += (x - m) * (x - m);
        var /= count;
        if (var <= 0.0)
            throw DegenerateDataError(std::string("build_bkb: element '") + element_name(e) +
                                      "' has zero variance");
        bkb.mean[ei] = m;
        bkb.stddev[ei] = std::sqrt(var);
    }

    BkbBuildResult res;
    res.normalized.reserve(dataset.size());
    for (const auto& t : dataset) {
        Trajectory n;
        n.intent_id = t.intent_id;
        n.s = normalize(t.s, ElementType::S, bkb);
        n.a = normalize(t.a, ElementType::A, bkb);
        n.r = normalize(t.r, ElementType::R, bkb);
        n.s_next = normalize(t.s_next, ElementType::SNext, bkb);
        res.normalized.push_back(std::move(n));
    }

    for (const auto& t : res.normalized) {
        std::size_t slot = bkb.intent_ids.size();
        for (std::size_t i = 0; i < bkb.intent_ids.size(); ++i)
            if (bkb.intent_ids[i] == t.intent_id) slot = i;
        if (slot == bkb.intent_ids.size()) {
            bkb.intent_ids.push_back(t.intent_id);
            std::array<Bkb::Range, 4> fresh;
            for (std::size_t ei = 0; ei < 4; ++ei) {
                const Vec& v = element_of(t, kElementTypes[ei]);
                fresh[ei].lo = fresh[ei].hi = v[0];
            }
            bkb.bounds.push_back(fresh);
        }
        auto& b = bkb.bounds[slot];
        for (std::size_t ei = 0; ei < 4; ++ei) {
            for (double x : element_of(t, kElementTypes[ei])) {
                b[ei].lo = std::min(b[ei].lo, x);
                b[ei].hi = std::max(b[ei].hi, x);
            }
        }
    }
    for (const auto& b : bkb.bounds)
        for (const auto& range : b)
            if (!(range.lo < range.hi))
                throw DegenerateDataError("build_bkb: degenerate bounds (lo >= hi)");

    res.bkb = std::move(bkb);
    return res;
}

}  // namespace trajgen

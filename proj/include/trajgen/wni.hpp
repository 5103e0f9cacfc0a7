#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "trajgen/env.hpp"
#include "trajgen/errors.hpp"
#include "trajgen/rng.hpp"
#include "trajgen/tensor.hpp"

namespace trajgen {

/// Entity-attribute-value description of one aspect of a target scenario.
struct EavTuple {
    std::string entity;
    std::string attribute;
    std::string value;
};

inline const std::set<std::string>& default_attribute_vocabulary() {
    static const std::set<std::string> vocab = {
        "channel gain bucket", "user scale", "noise", "transmission power set",
        "interference", "los loss", "los probability", "nlos loss", "nlos probability",
        "transmission power",
    };
    return vocab;
}

/// Frozen token embedding: every token maps deterministically to a unit-norm
/// vector derived from (seed, token). No learned parameters.
struct EmbeddingTable {
    std::uint64_t seed = 0;
    std::size_t dim = 16;
    std::set<std::string> vocabulary = default_attribute_vocabulary();

    Vec embed(const std::string& token) const {
        std::uint64_t h = 1469598103934665603ULL ^ seed;
        for (unsigned char c : token) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        Rng rng(derive_seed(seed, h));
        Vec v(dim);
        double norm2 = 0.0;
        for (double& x : v) {
            x = rng.gauss();
            norm2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : v) x *= inv;
        return v;
    }
};

/// The conditioning feature matrix: one row per attribute,
/// [embed(attribute) || embed(value)], rows in lexicographic attribute order.
struct WniFeature {
    Tensor2 matrix;  // n_attributes x 2*dim

    Vec flatten() const { return matrix.data; }
};

inline WniFeature encode_intent(std::vector<EavTuple> tuples, const EmbeddingTable& table) {
    if (tuples.empty()) throw ConfigError("encode_intent: need at least one tuple");
    for (const auto& t : tuples) {
        if (t.entity.empty() || t.attribute.empty() || t.value.empty())
            throw ConfigError("encode_intent: empty token in tuple");
        if (t.entity != tuples.front().entity)
            throw ConfigError("encode_intent: mixed entities '" + tuples.front().entity + "' and '" +
                              t.entity + "'");
        if (!table.vocabulary.count(t.attribute))
            throw LookupError("encode_intent: attribute '" + t.attribute + "' not in vocabulary");
    }
    std::sort(tuples.begin(), tuples.end(),
              [](const EavTuple& a, const EavTuple& b) { return a.attribute < b.attribute; });

    WniFeature f;
    f.matrix = Tensor2(tuples.size(), 2 * table.dim);
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        const Vec ha = table.embed(tuples[i].attribute);
        const Vec hv = table.embed(tuples[i].value);
        std::copy(ha.begin(), ha.end(), f.matrix.row(i));
        std::copy(hv.begin(), hv.end(), f.matrix.row(i) + table.dim);
    }
    return f;
}

/// Canonical tuple set for an experiment intent: only the gain bucket differs
/// between the five scenarios.
inline std::vector<EavTuple> intent_tuples(const IntentSpec& spec, const EnvConfig& config) {
    auto fmt = [](double x) {
        std::string s = std::to_string(x);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    std::string bucket = "[" + fmt(spec.gain_low) + "," + fmt(spec.gain_high) + ")";
    std::string powers = "{";
    for (std::size_t i = 0; i < config.total_power_options.size(); ++i) {
        if (i) powers += ",";
        powers += fmt(config.total_power_options[i]);
    }
    powers += "}";
    return {
        {"BS", "channel gain bucket", bucket},
        {"BS", "user scale", std::to_string(config.num_channels)},
        {"BS", "noise", fmt(config.noise_power)},
        {"BS", "transmission power set", powers},
    };
}

}  // namespace trajgen

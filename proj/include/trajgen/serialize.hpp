#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajgen/errors.hpp"
#include "trajgen/expert.hpp"
#include "trajgen/nn.hpp"

namespace trajgen {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Hashing (FNV-1a 64, adequate for provenance chaining)

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string hash_string(const std::string& bytes) { return hash_hex(fnv1a64(bytes)); }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StagingError("missing artifact: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string hash_file(const std::string& path) { return hash_string(read_file(path)); }

inline void write_file(const std::string& path, const std::string& contents) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StagingError("cannot write artifact: " + path);
    out << contents;
}

// ---------------------------------------------------------------------------
// JSON documents

inline json load_json(const std::string& path) {
    const std::string text = read_file(path);
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw FormatError("artifact is not valid JSON: " + path);
    return j;
}

inline void save_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline void require_schema(const json& j, const std::string& expected, const std::string& path) {
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
        throw FormatError("artifact lacks a schema tag: " + path);
    if (j["schema"].get<std::string>() != expected)
        throw FormatError("artifact " + path + " has schema '" + j["schema"].get<std::string>() +
                          "', expected '" + expected + "'");
}

// ---------------------------------------------------------------------------
// Checkpoints: parameter name -> {rows, cols, data}, plus a metadata block.

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::uint64_t step_count = 0;
};

inline void save_checkpoint(const std::string& path, const std::vector<ParamView>& params,
                            const CheckpointMeta& meta) {
    json doc;
    doc["schema"] = "trajgen/checkpoint/v1";
    json p = json::object();
    for (const auto& pv : params) {
        json t;
        t["rows"] = pv.rows;
        t["cols"] = pv.cols;
        t["data"] = std::vector<double>(pv.value, pv.value + pv.size);
        p[pv.name] = std::move(t);
    }
    doc["params"] = std::move(p);
    doc["meta"] = {{"seed", meta.seed}, {"config_hash", meta.config_hash}, {"step_count", meta.step_count}};
    save_json(path, doc);
}

inline CheckpointMeta load_checkpoint(const std::string& path, std::vector<ParamView>& params) {
    json doc = load_json(path);
    require_schema(doc, "trajgen/checkpoint/v1", path);
    if (!doc.contains("params") || !doc.contains("meta"))
        throw FormatError("checkpoint " + path + " lacks params/meta");
    const json& p = doc["params"];
    for (auto& pv : params) {
        if (!p.contains(pv.name))
            throw FormatError("checkpoint " + path + " lacks parameter '" + pv.name + "'");
        const json& t = p[pv.name];
        if (t["rows"].get<std::size_t>() != pv.rows || t["cols"].get<std::size_t>() != pv.cols)
            throw FormatError("checkpoint " + path + " parameter '" + pv.name + "' has shape " +
                              std::to_string(t["rows"].get<std::size_t>()) + "x" +
                              std::to_string(t["cols"].get<std::size_t>()) + ", expected " +
                              std::to_string(pv.rows) + "x" + std::to_string(pv.cols));
        const auto& data = t["data"];
        if (data.size() != pv.size)
            throw FormatError("checkpoint " + path + " parameter '" + pv.name + "' has wrong length");
        for (std::size_t i = 0; i < pv.size; ++i) pv.value[i] = data[i].get<double>();
    }
    CheckpointMeta meta;
    meta.seed = doc["meta"].value("seed", 0ULL);
    meta.config_hash = doc["meta"].value("config_hash", std::string());
    meta.step_count = doc["meta"].value("step_count", 0ULL);
    return meta;
}

// ---------------------------------------------------------------------------
// Datasets: JSON Lines, one trajectory per line. Generated sets carry a
// leading metadata line {"generated": true, ...}.

inline json trajectory_to_json(const Trajectory& t) {
    return json{{"intent", t.intent_id}, {"s", t.s}, {"a", t.a}, {"r", t.r}, {"s_next", t.s_next}};
}

inline Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.intent_id = j.at("intent").get<int>();
    t.s = j.at("s").get<Vec>();
    t.a = j.at("a").get<Vec>();
    t.r = j.at("r").get<Vec>();
    t.s_next = j.at("s_next").get<Vec>();
    return t;
}

inline void save_dataset(const std::string& path, const std::vector<Trajectory>& data,
                         const json& header = json()) {
    std::ostringstream out;
    if (!header.is_null()) out << header.dump() << "\n";
    for (const auto& t : data) out << trajectory_to_json(t).dump() << "\n";
    write_file(path, out.str());
}

struct DatasetFile {
    std::vector<Trajectory> trajectories;
    json header;  // null for plain expert files
};

inline DatasetFile load_dataset(const std::string& path) {
    const std::string text = read_file(path);
    DatasetFile out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError("dataset " + path + " has a corrupt line");
        if (first && j.is_object() && j.contains("generated")) {
            out.header = std::move(j);
            first = false;
            continue;
        }
        first = false;
        if (!j.contains("intent") || !j.contains("s"))
            throw FormatError("dataset " + path + " has a malformed record");
        out.trajectories.push_back(trajectory_from_json(j));
    }
    return out;
}

// ---------------------------------------------------------------------------
// BKB

inline void save_bkb(const std::string& path, const Bkb& bkb, const std::string& config_hash,
                     std::uint64_t seed) {
    json doc;
    doc["schema"] = "trajgen/bkb/v1";
    json mean, sd;
    for (std::size_t e = 0; e < 4; ++e) {
        mean[element_name(kElementTypes[e])] = bkb.mean[e];
        sd[element_name(kElementTypes[e])] = bkb.stddev[e];
    }
    doc["mean"] = std::move(mean);
    doc["std"] = std::move(sd);
    json bounds = json::object();
    for (std::size_t i = 0; i < bkb.intent_ids.size(); ++i) {
        json b;
        for (std::size_t e = 0; e < 4; ++e)
            b[element_name(kElementTypes[e])] = {bkb.bounds[i][e].lo, bkb.bounds[i][e].hi};
        bounds["intent_" + std::to_string(bkb.intent_ids[i])] = std::move(b);
    }
    doc["bounds"] = std::move(bounds);
    doc["meta"] = {{"dataset_hash", bkb.dataset_hash},
                   {"count", bkb.trajectory_count},
                   {"config_hash", config_hash},
                   {"seed", seed}};
    save_json(path, doc);
}

inline Bkb load_bkb(const std::string& path) {
    json doc = load_json(path);
    require_schema(doc, "trajgen/bkb/v1", path);
    Bkb bkb;
    for (std::size_t e = 0; e < 4; ++e) {
        const char* n = element_name(kElementTypes[e]);
        bkb.mean[e] = doc.at("mean").at(n).get<double>();
        bkb.stddev[e] = doc.at("std").at(n).get<double>();
    }
    for (auto& [key, value] : doc.at("bounds").items()) {
        if (key.rfind("intent_", 0) != 0) throw FormatError("bkb " + path + ": bad bounds key " + key);
        bkb.intent_ids.push_back(std::stoi(key.substr(7)));
        std::array<Bkb::Range, 4> b;
        for (std::size_t e = 0; e < 4; ++e) {
            const auto& r = value.at(element_name(kElementTypes[e]));
            b[e].lo = r.at(0).get<double>();
            b[e].hi = r.at(1).get<double>();
        }
        bkb.bounds.push_back(b);
    }
    bkb.dataset_hash = doc.at("meta").value("dataset_hash", std::string());
    bkb.trajectory_count = doc.at("meta").value("count", 0ULL);
    return bkb;
}

// ---------------------------------------------------------------------------
// Metrics CSV

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

struct MetricsRow {
    std::string scheme;
    int intent_id = 0;
    double total_power = 0.0;
    std::size_t step = 0;
    double spectral_efficiency = 0.0;
    std::uint64_t seed = 0;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "scheme,intent_id,total_power,step,spectral_efficiency,seed\n";
    for (const auto& r : rows)
        out << r.scheme << ',' << r.intent_id << ',' << format_double(r.total_power) << ',' << r.step
            << ',' << format_double(r.spectral_efficiency) << ',' << r.seed << "\n";
    return out.str();
}

}  // namespace trajgen

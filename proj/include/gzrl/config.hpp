// JSON run configuration (fixed key set, unknown keys are a hard error), run
// manifests, and the JSON-lines metrics stream.
#pragma once

#include <cstdint>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gzrl/common.hpp"
#include "gzrl/losses.hpp"
#include "gzrl/metrics.hpp"
#include "gzrl/serialize.hpp"
#include "gzrl/synthetic_env.hpp"
#include "gzrl/trainer.hpp"

namespace gzrl {

using Json = nlohmann::ordered_json;

// Everything one experiment needs: environment, policy dims, training
// hyperparameters, and the dataset size. The JSON snapshot of this struct is
// sufficient to reproduce any run byte-exactly.
struct RunConfig {
    EnvConfig env;
    int embed_dim = 32;
    int hidden_dim = 64;
    int layers = 1;
    std::size_t episodes = 1000; // dataset size for gen-data
    TrainConfig train;

    PolicyConfig policy_config() const { return env.policy_config(embed_dim, hidden_dim, layers); }

    void validate() const {
        env.validate();
        train.validate();
        policy_config().validate();
        if (episodes < 1) throw InvalidInputError("RunConfig: episodes must be >= 1");
    }
};

inline Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.train.seed;
    j["grid"] = c.env.patch_grid;
    j["image_size"] = c.env.image_size;
    j["views"] = c.env.views;
    j["objects"] = c.env.objects;
    j["window"] = c.env.window;
    j["horizon"] = c.env.horizon;
    j["action_dim"] = c.env.action_dim;
    j["blob_sigma"] = c.env.blob_sigma_patches;
    j["gaze_floor"] = c.env.gaze_floor;
    j["embed_dim"] = c.embed_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["layers"] = c.layers;
    j["episodes"] = c.episodes;
    j["lambda"] = c.train.lambda;
    j["sigma"] = c.train.sigma;
    j["variant"] = variant_to_string(c.train.variant);
    j["attention_source"] = attention_source_to_string(c.train.source);
    j["batch"] = c.train.batch;
    j["steps"] = c.train.steps;
    j["eval_interval"] = c.train.eval_interval;
    j["eval_episodes"] = c.train.eval_episodes;
    j["lr"] = c.train.lr;
    j["beta1"] = c.train.beta1;
    j["beta2"] = c.train.beta2;
    j["eps"] = c.train.eps;
    return j;
}

inline RunConfig run_config_from_json(const Json& j) {
    static const std::set<std::string> known = {
        "seed",       "grid",     "image_size", "views",        "objects",
        "window",     "horizon",  "action_dim", "blob_sigma",   "gaze_floor",
        "embed_dim",  "hidden_dim", "layers",   "episodes",     "lambda",
        "sigma",      "variant",  "attention_source", "batch",  "steps",
        "eval_interval", "eval_episodes", "lr", "beta1",        "beta2",
        "eps"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw InvalidInputError("config: unknown key '" + it.key() + "'");
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.train.seed);
    get("grid", c.env.patch_grid);
    get("image_size", c.env.image_size);
    get("views", c.env.views);
    get("objects", c.env.objects);
    get("window", c.env.window);
    get("horizon", c.env.horizon);
    get("action_dim", c.env.action_dim);
    get("blob_sigma", c.env.blob_sigma_patches);
    get("gaze_floor", c.env.gaze_floor);
    get("embed_dim", c.embed_dim);
    get("hidden_dim", c.hidden_dim);
    get("layers", c.layers);
    get("episodes", c.episodes);
    get("lambda", c.train.lambda);
    get("sigma", c.train.sigma);
    if (j.contains("variant")) c.train.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("attention_source"))
        c.train.source = attention_source_from_string(j.at("attention_source").get<std::string>());
    get("batch", c.train.batch);
    get("steps", c.train.steps);
    get("eval_interval", c.train.eval_interval);
    get("eval_episodes", c.train.eval_episodes);
    get("lr", c.train.lr);
    get("beta1", c.train.beta1);
    get("beta2", c.train.beta2);
    get("eps", c.train.eps);
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    Json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError("config parse error in " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

// ---- metrics stream (JSON lines, stable key order, no wall time) ----------

inline std::string metrics_record_to_jsonl(const MetricsRecord& r) {
    Json j;
    j["step"] = r.step;
    j["action_loss"] = r.loss.action_loss;
    j["gaze_loss"] = r.loss.gaze_loss;
    j["total"] = r.loss.total;
    j["lambda"] = r.loss.lambda;
    j["success"] = r.success;
    j["overlap@1"] = r.overlap1;
    j["overlap@5"] = r.overlap5;
    j["overlap@10"] = r.overlap10;
    return j.dump();
}

inline MetricsRecord metrics_record_from_json(const Json& j) {
    MetricsRecord r;
    r.step = j.at("step").get<long>();
    r.loss.action_loss = j.at("action_loss").get<double>();
    r.loss.gaze_loss = j.at("gaze_loss").get<double>();
    r.loss.total = j.at("total").get<double>();
    r.loss.lambda = j.at("lambda").get<double>();
    r.success = j.at("success").get<double>();
    r.overlap1 = j.at("overlap@1").get<double>();
    r.overlap5 = j.at("overlap@5").get<double>();
    r.overlap10 = j.at("overlap@10").get<double>();
    return r;
}

inline MetricsStream load_metrics_stream(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open metrics: " + path);
    MetricsStream out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(metrics_record_from_json(Json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("metrics parse error in " + path + ": " + e.what());
        }
    }
    return out;
}

// ---- run manifest ----------------------------------------------------------

inline std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Written beside every command's artifacts. The config snapshot alone
// reproduces the run byte-exactly; timestamps are informational only.
struct RunManifest {
    std::string command_line;
    RunConfig config;
    std::vector<std::pair<std::string, std::string>> artifacts; // name -> path
    std::string started_at;
    std::string finished_at;
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
    Json j;
    j["tool_version"] = kVersion;
    j["command_line"] = m.command_line;
    j["config"] = run_config_to_json(m.config);
    j["seed"] = m.config.train.seed;
    Json arts;
    for (const auto& [name, p] : m.artifacts) arts[name] = p;
    j["artifacts"] = arts;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    write_text_file(path, j.dump(2) + "\n");
}

// Dataset header rendered as JSON (the `manifest` subcommand).
inline Json dataset_header_json(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    BinReader r(is);
    char magic[sizeof(kDatasetMagic) - 1];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
        throw IoError("bad dataset magic at offset 0");
    const std::uint32_t version = r.u32();
    const EnvConfig cfg = read_env_config(r);
    const std::uint64_t seed = r.u64();
    const std::uint64_t count = r.u64();
    Json j;
    j["magic"] = std::string(kDatasetMagic);
    j["version"] = version;
    j["grid"] = cfg.patch_grid;
    j["image_size"] = cfg.image_size;
    j["views"] = cfg.views;
    j["objects"] = cfg.objects;
    j["window"] = cfg.window;
    j["horizon"] = cfg.horizon;
    j["action_dim"] = cfg.action_dim;
    j["proprio_dim"] = cfg.proprio_dim;
    j["blob_sigma"] = cfg.blob_sigma_patches;
    j["gaze_floor"] = cfg.gaze_floor;
    j["seed"] = seed;
    j["episodes"] = count;
    j["file_size"] = dataset_file_size(cfg, count);
    return j;
}

} // namespace gzrl

#include "train/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sdr::train {

namespace {

using nlohmann::json;

json parse_object(const std::string& text, const char* what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(std::string(what) + ": top level must be an object");
    return j;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
        }
    }
}

void check_version(const json& obj, const char* what) {
    if (!obj.contains("version")) throw ConfigError(std::string(what) + ": missing \"version\"");
    if (!obj["version"].is_number_integer() || obj["version"].get<int>() != 1) {
        throw ConfigError(std::string(what) + ": unsupported version");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for \"") + key + "\"");
    }
}

model::SPBConfig parse_spb(const json& obj) {
    check_keys(obj, {"channels", "blocks", "kt", "strides"}, "spb");
    model::SPBConfig cfg;
    cfg.channels = get_or(obj, "channels", cfg.channels);
    cfg.blocks = get_or(obj, "blocks", cfg.blocks);
    cfg.kt = get_or(obj, "kt", cfg.kt);
    if (obj.contains("strides")) {
        cfg.strides = obj["strides"].get<std::vector<int>>();
    } else {
        cfg.strides.assign(static_cast<std::size_t>(cfg.blocks), 1);
    }
    return cfg;
}

model::TransformerConfig parse_transformer(const json& obj) {
    check_keys(obj, {"d_model", "heads", "blocks", "mlp_ratio", "use_positional"}, "transformer");
    model::TransformerConfig cfg;
    cfg.d_model = get_or(obj, "d_model", cfg.d_model);
    cfg.heads = get_or(obj, "heads", cfg.heads);
    cfg.blocks = get_or(obj, "blocks", cfg.blocks);
    cfg.mlp_ratio = get_or(obj, "mlp_ratio", cfg.mlp_ratio);
    cfg.use_positional = get_or(obj, "use_positional", cfg.use_positional);
    return cfg;
}

TrainConfig parse_train_object(const json& j, bool require_version) {
    if (require_version) check_version(j, "train config");
    check_keys(j,
               {"version", "seed", "epochs", "batch_size", "lr", "weights", "tau", "n_branches",
                "spb", "transformer", "tpa", "trfi", "arch", "eval_every", "eval_train", "data"},
               "train config");
    TrainConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.epochs = get_or(j, "epochs", cfg.epochs);
    cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
    cfg.lr = get_or(j, "lr", cfg.lr);
    cfg.tau = get_or(j, "tau", cfg.tau);
    cfg.eval_every = get_or(j, "eval_every", cfg.eval_every);
    cfg.eval_train = get_or(j, "eval_train", cfg.eval_train);
    if (j.contains("weights")) {
        const json& w = j["weights"];
        check_keys(w, {"alpha", "beta", "gamma"}, "weights");
        cfg.weights.alpha = get_or(w, "alpha", cfg.weights.alpha);
        cfg.weights.beta = get_or(w, "beta", cfg.weights.beta);
        cfg.weights.gamma = get_or(w, "gamma", cfg.weights.gamma);
    }
    cfg.model.n_branches = get_or(j, "n_branches", cfg.model.n_branches);
    if (j.contains("spb")) cfg.model.spb = parse_spb(j["spb"]);
    if (j.contains("transformer")) cfg.model.transformer = parse_transformer(j["transformer"]);
    cfg.tpa_enabled = get_or(j, "tpa", cfg.tpa_enabled);
    cfg.model.use_trfi = get_or(j, "trfi", cfg.model.use_trfi);
    const std::string arch = get_or<std::string>(j, "arch", "temporal");
    if (arch == "temporal") {
        cfg.model.arch = model::BackboneArch::Temporal;
    } else if (arch == "spatial3x3") {
        cfg.model.arch = model::BackboneArch::Spatial3x3;
    } else {
        throw ConfigError("arch must be \"temporal\" or \"spatial3x3\"");
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, {"train_subdir", "test_subdir"}, "data");
        cfg.data.train_subdir = get_or<std::string>(d, "train_subdir", cfg.data.train_subdir);
        cfg.data.test_subdir = get_or<std::string>(d, "test_subdir", cfg.data.test_subdir);
    }
    return cfg;
}

} // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    return parse_train_object(parse_object(json_text, "train config"), true);
}

clipgen::DatasetSpec parse_dataset_config(const std::string& json_text) {
    const json j = parse_object(json_text, "dataset config");
    check_version(j, "dataset config");
    check_keys(j, {"version", "seed", "t", "c", "h", "w", "noise_floor", "kind", "strength", "cells"},
               "dataset config");
    clipgen::DatasetSpec spec;
    spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
    spec.t = get_or(j, "t", spec.t);
    spec.c = get_or(j, "c", spec.c);
    spec.h = get_or(j, "h", spec.h);
    spec.w = get_or(j, "w", spec.w);
    spec.noise_floor = get_or(j, "noise_floor", spec.noise_floor);
    spec.kind = clipgen::fake_kind_from_name(get_or<std::string>(j, "kind", "position_jitter"));
    spec.strength = get_or(j, "strength", spec.strength);
    if (!j.contains("cells") || !j["cells"].is_array() || j["cells"].empty()) {
        throw ConfigError("dataset config: \"cells\" must be a nonempty array");
    }
    for (const json& cj : j["cells"]) {
        check_keys(cj, {"label", "style", "count"}, "dataset cell");
        clipgen::DatasetCell cell;
        const std::string label = get_or<std::string>(cj, "label", "");
        if (label == "real") {
            cell.label = 0;
        } else if (label == "fake") {
            cell.label = 1;
        } else {
            throw ConfigError("dataset cell: label must be \"real\" or \"fake\"");
        }
        cell.style = get_or(cj, "style", 0);
        cell.count = get_or(cj, "count", 0);
        spec.cells.push_back(cell);
    }
    if (spec.t < 2) throw ConfigError("dataset config: t must be >= 2");
    return spec;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    const json j = parse_object(json_text, "experiment config");
    check_version(j, "experiment config");
    check_keys(j, {"version", "seeds", "train", "protocol"}, "experiment config");
    ExperimentConfig cfg;
    if (j.contains("seeds")) {
        cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ConfigError("experiment config: seeds must be nonempty");
    }
    if (j.contains("train")) cfg.base = parse_train_object(j["train"], false);
    if (j.contains("protocol")) {
        const json& p = j["protocol"];
        check_keys(p,
                   {"t", "c", "h", "w", "noise_floor", "kind", "strength", "style_a", "style_b",
                    "train_per_cell", "test_per_cell"},
                   "protocol");
        ProtocolSpec& ps = cfg.protocol;
        ps.t = get_or(p, "t", ps.t);
        ps.c = get_or(p, "c", ps.c);
        ps.h = get_or(p, "h", ps.h);
        ps.w = get_or(p, "w", ps.w);
        ps.noise_floor = get_or(p, "noise_floor", ps.noise_floor);
        ps.kind = clipgen::fake_kind_from_name(get_or<std::string>(p, "kind", "position_jitter"));
        ps.strength = get_or(p, "strength", ps.strength);
        ps.style_a = get_or(p, "style_a", ps.style_a);
        ps.style_b = get_or(p, "style_b", ps.style_b);
        ps.train_per_cell = get_or(p, "train_per_cell", ps.train_per_cell);
        ps.test_per_cell = get_or(p, "test_per_cell", ps.test_per_cell);
        if (ps.style_a == ps.style_b) throw ConfigError("protocol: styles must differ");
        if (ps.train_per_cell < 1 || ps.test_per_cell < 1) {
            throw ConfigError("protocol: per-cell counts must be >= 1");
        }
    }
    return cfg;
}

GradCheckSettings parse_gradcheck_config(const std::string& json_text) {
    const json j = parse_object(json_text, "gradcheck config");
    check_version(j, "gradcheck config");
    check_keys(j, {"version", "seed", "h", "tol", "t", "hw", "channels", "n_branches", "batch"},
               "gradcheck config");
    GradCheckSettings s;
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    s.h = get_or(j, "h", s.h);
    s.tol = get_or(j, "tol", s.tol);
    s.t = get_or(j, "t", s.t);
    s.hw = get_or(j, "hw", s.hw);
    s.channels = get_or(j, "channels", s.channels);
    s.n_branches = get_or(j, "n_branches", s.n_branches);
    s.batch = get_or(j, "batch", s.batch);
    if (s.batch < 2 || s.batch % 2 != 0) throw ConfigError("gradcheck config: batch must be even");
    return s;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace sdr::train

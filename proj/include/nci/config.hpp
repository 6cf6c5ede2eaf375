#pragma once

// Config files are JSON. Parsing is strict: every key is checked against the
// schema and anything unrecognized is rejected with its full field path, so a
// typo like "dataset.domains[0].leak_foo" fails loudly instead of silently
// falling back to a default. Parsed structs are echoed back out as JSON so a
// run directory always records the fully resolved configuration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nci/divergence.hpp"
#include "nci/experiments.hpp"
#include "nci/synth.hpp"
#include "nci/train.hpp"

namespace nci {

using json = nlohmann::json;

namespace detail {

inline std::string type_word(const json& j) {
    if (j.is_object()) return "an object";
    if (j.is_array()) return "an array";
    if (j.is_string()) return "a string";
    if (j.is_boolean()) return "a boolean";
    if (j.is_number()) return "a number";
    if (j.is_null()) return "null";
    return "an unsupported value";
}

// Cursor over one JSON object. Getters record the field path of whatever
// they reject; finish() flags keys the schema never asked about.
class ObjectView {
public:
    ObjectView(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(path_ + ": expected an object, got " + type_word(j));
    }

    const std::string& path() const { return path_; }
    std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const char* key) const { return j_.contains(key); }

    const json* maybe(const char* key) {
        seen_.push_back(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& require(const char* key) {
        const json* v = maybe(key);
        if (!v) throw ConfigError(child(key) + ": required key is missing");
        return *v;
    }

    double number(const char* key, double fallback) {
        const json* v = maybe(key);
        return v ? as_number(*v, child(key)) : fallback;
    }

    double number_required(const char* key) { return as_number(require(key), child(key)); }

    std::uint64_t uint64(const char* key, std::uint64_t fallback) {
        const json* v = maybe(key);
        return v ? as_uint(*v, child(key)) : fallback;
    }

    std::size_t count(const char* key, std::size_t fallback) {
        return static_cast<std::size_t>(uint64(key, fallback));
    }

    std::string text(const char* key, const std::string& fallback) {
        const json* v = maybe(key);
        return v ? as_text(*v, child(key)) : fallback;
    }

    std::string text_required(const char* key) { return as_text(require(key), child(key)); }

    // Every key the schema knows must have been touched via maybe()/require()
    // by now; anything left over is a typo or an unsupported option.
    void finish() const {
        for (const auto& item : j_.items()) {
            bool known = false;
            for (const std::string& s : seen_)
                if (s == item.key()) { known = true; break; }
            if (!known) throw ConfigError((path_.empty() ? item.key() : path_ + "." + item.key()) + ": unknown key");
        }
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path + ": expected a number, got " + type_word(v));
        return v.get<double>();
    }

    static std::uint64_t as_uint(const json& v, const std::string& path) {
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()))
            throw ConfigError(path + ": expected a non-negative integer, got " + type_word(v));
        return v.get<std::uint64_t>();
    }

    static std::string as_text(const json& v, const std::string& path) {
        if (!v.is_string()) throw ConfigError(path + ": expected a string, got " + type_word(v));
        return v.get<std::string>();
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

inline const json& as_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array, got " + type_word(v));
    return v;
}

}  // namespace detail

inline json load_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root: expected an object");
    return j;
}

inline DomainSpec parse_domain_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    DomainSpec d;
    d.name = v.text_required("name");
    d.concept_noise = v.number("concept_noise", d.concept_noise);
    d.label_leak = v.number("label_leak", d.label_leak);
    d.block_dim = v.count("block_dim", d.block_dim);
    d.block_noise = v.number("block_noise", d.block_noise);
    d.unique_fraction = v.number("unique_fraction", d.unique_fraction);
    d.shared_drop_fraction = v.number("shared_drop_fraction", d.shared_drop_fraction);
    v.finish();
    return d;
}

inline DatasetConfig parse_dataset_config(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    DatasetConfig cfg;
    cfg.seed = v.uint64("seed", cfg.seed);
    cfg.concept_dim = v.count("concept_dim", cfg.concept_dim);
    cfg.num_classes = v.count("num_classes", cfg.num_classes);
    cfg.num_supports = v.count("num_supports", cfg.num_supports);
    cfg.shared_fraction = v.number("shared_fraction", cfg.shared_fraction);
    cfg.unique_fraction = v.number("unique_fraction", cfg.unique_fraction);
    cfg.samples_per_domain = v.count("samples_per_domain", cfg.samples_per_domain);
    const json& doms = detail::as_array(v.require("domains"), v.child("domains"));
    cfg.domains.clear();
    for (std::size_t i = 0; i < doms.size(); ++i)
        cfg.domains.push_back(parse_domain_spec(doms[i], v.child("domains") + "[" + std::to_string(i) + "]"));
    v.finish();
    return cfg;
}

inline TrainConfig parse_train_config(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    TrainConfig cfg;
    if (const json* o = v.maybe("objective")) {
        try {
            cfg.objective = objective_from_name(detail::ObjectView::as_text(*o, v.child("objective")));
        } catch (const ConfigError& e) {
            throw ConfigError(v.child("objective") + ": " + e.what());
        }
    }
    cfg.target_domain = v.text("target_domain", cfg.target_domain);
    cfg.seed = v.uint64("seed", cfg.seed);
    cfg.epochs = v.count("epochs", cfg.epochs);
    cfg.batch_size = v.count("batch_size", cfg.batch_size);
    cfg.lr = v.number("lr", cfg.lr);
    if (const json* o = v.maybe("optimizer")) {
        const std::string s = detail::ObjectView::as_text(*o, v.child("optimizer"));
        if (s == "sgd") cfg.optimizer = OptKind::sgd;
        else if (s == "adam") cfg.optimizer = OptKind::adam;
        else throw ConfigError(v.child("optimizer") + ": expected sgd|adam, got '" + s + "'");
    }
    cfg.lambda_adv = v.number("lambda_adv", cfg.lambda_adv);
    cfg.disc_steps = v.count("disc_steps", cfg.disc_steps);
    cfg.repr_dim = v.count("repr_dim", cfg.repr_dim);
    cfg.encoder_hidden = v.count("encoder_hidden", cfg.encoder_hidden);
    cfg.disc_hidden = v.count("disc_hidden", cfg.disc_hidden);
    cfg.train_quota_per_domain = v.count("train_quota_per_domain", cfg.train_quota_per_domain);
    if (const json* o = v.maybe("train_domains")) {
        const json& arr = detail::as_array(*o, v.child("train_domains"));
        for (std::size_t i = 0; i < arr.size(); ++i)
            cfg.train_domains.push_back(detail::ObjectView::as_text(
                arr[i], v.child("train_domains") + "[" + std::to_string(i) + "]"));
    }
    v.finish();
    return cfg;
}

struct EvalSpec {
    std::string checkpoint;
    std::string domain;
    bool eval_split = true;
};

inline EvalSpec parse_eval_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    EvalSpec spec;
    spec.checkpoint = v.text_required("checkpoint");
    spec.domain = v.text_required("domain");
    const std::string split = v.text("split", "eval");
    if (split == "eval") spec.eval_split = true;
    else if (split == "train") spec.eval_split = false;
    else throw ConfigError(v.child("split") + ": expected train|eval, got '" + split + "'");
    v.finish();
    return spec;
}

struct HdivSpec {
    std::string source;
    std::string target;
    std::string checkpoint;  // empty = raw feature space; fixed mode needs its discriminator
};

inline HdivSpec parse_hdiv_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    HdivSpec spec;
    spec.source = v.text_required("source");
    spec.target = v.text_required("target");
    spec.checkpoint = v.text("checkpoint", "");
    v.finish();
    return spec;
}

struct BoundsSpec {
    BoundInputs bound;
    std::size_t family_size = 0;  // Haussler block is optional
    double haussler_delta = 0.05;
    double haussler_epsilon = 0.0;
    bool has_haussler = false;
};

inline BoundsSpec parse_bounds_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    BoundsSpec spec;
    spec.bound.r_s = v.number_required("source_risk");
    spec.bound.n = v.count("sample_size", 0);
    if (!v.has("sample_size")) throw ConfigError(v.child("sample_size") + ": required key is missing");
    spec.bound.d = v.count("vc_dim", spec.bound.d);
    spec.bound.delta = v.number("delta", spec.bound.delta);
    spec.bound.beta = v.number("adaptability", spec.bound.beta);
    spec.bound.d_hat = v.number("d_hat", spec.bound.d_hat);
    if (const json* h = v.maybe("haussler")) {
        detail::ObjectView hv(*h, v.child("haussler"));
        spec.has_haussler = true;
        spec.family_size = hv.count("family_size", 0);
        if (!hv.has("family_size")) throw ConfigError(hv.child("family_size") + ": required key is missing");
        spec.haussler_delta = hv.number("delta", spec.haussler_delta);
        spec.haussler_epsilon = hv.number_required("epsilon");
        hv.finish();
    }
    v.finish();
    return spec;
}

inline SweepSpec parse_sweep_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    SweepSpec spec;
    spec.base = parse_dataset_config(v.require("base"), v.child("base"));
    spec.complementary_source = v.text_required("complementary_source");
    if (const json* g = v.maybe("grid")) {
        const json& arr = detail::as_array(*g, v.child("grid"));
        spec.grid.clear();
        for (std::size_t i = 0; i < arr.size(); ++i)
            spec.grid.push_back(detail::ObjectView::as_number(arr[i], v.child("grid") + "[" + std::to_string(i) + "]"));
    }
    if (const json* s = v.maybe("seeds")) {
        const json& arr = detail::as_array(*s, v.child("seeds"));
        spec.seeds.clear();
        for (std::size_t i = 0; i < arr.size(); ++i)
            spec.seeds.push_back(detail::ObjectView::as_uint(arr[i], v.child("seeds") + "[" + std::to_string(i) + "]"));
    }
    if (const json* o = v.maybe("objectives")) {
        const json& arr = detail::as_array(*o, v.child("objectives"));
        spec.objectives.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string p = v.child("objectives") + "[" + std::to_string(i) + "]";
            try {
                spec.objectives.push_back(objective_from_name(detail::ObjectView::as_text(arr[i], p)));
            } catch (const ConfigError& e) {
                throw ConfigError(p + ": " + e.what());
            }
        }
    }
    v.finish();
    return spec;
}

struct AlgebraSpec {
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
};

inline AlgebraSpec parse_algebra_spec(const json& j, const std::string& path) {
    detail::ObjectView v(j, path);
    AlgebraSpec spec;
    spec.trials = v.count("trials", spec.trials);
    spec.seed = v.uint64("seed", spec.seed);
    v.finish();
    return spec;
}

// Echo side: structs back to JSON with every default materialized.

inline json domain_spec_to_json(const DomainSpec& d) {
    json j;
    j["name"] = d.name;
    j["concept_noise"] = d.concept_noise;
    j["label_leak"] = d.label_leak;
    j["block_dim"] = d.block_dim;
    j["block_noise"] = d.block_noise;
    j["unique_fraction"] = d.unique_fraction;
    j["shared_drop_fraction"] = d.shared_drop_fraction;
    return j;
}

inline json dataset_config_to_json(const DatasetConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["concept_dim"] = cfg.concept_dim;
    j["num_classes"] = cfg.num_classes;
    j["num_supports"] = cfg.num_supports;
    j["shared_fraction"] = cfg.shared_fraction;
    j["unique_fraction"] = cfg.unique_fraction;
    j["samples_per_domain"] = cfg.samples_per_domain;
    j["domains"] = json::array();
    for (const DomainSpec& d : cfg.domains) j["domains"].push_back(domain_spec_to_json(d));
    return j;
}

inline json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["objective"] = objective_name(cfg.objective);
    j["target_domain"] = cfg.target_domain;
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["optimizer"] = cfg.optimizer == OptKind::adam ? "adam" : "sgd";
    j["lambda_adv"] = cfg.lambda_adv;
    j["disc_steps"] = cfg.disc_steps;
    j["repr_dim"] = cfg.repr_dim;
    j["encoder_hidden"] = cfg.encoder_hidden;
    j["disc_hidden"] = cfg.disc_hidden;
    j["train_quota_per_domain"] = cfg.train_quota_per_domain;
    j["train_domains"] = cfg.train_domains;
    return j;
}

inline json sweep_spec_to_json(const SweepSpec& spec) {
    json j;
    j["base"] = dataset_config_to_json(spec.base);
    j["complementary_source"] = spec.complementary_source;
    j["grid"] = spec.grid;
    j["seeds"] = spec.seeds;
    j["objectives"] = json::array();
    for (Objective o : spec.objectives) j["objectives"].push_back(objective_name(o));
    return j;
}

inline json bounds_spec_to_json(const BoundsSpec& spec) {
    json j;
    j["source_risk"] = spec.bound.r_s;
    j["sample_size"] = spec.bound.n;
    j["vc_dim"] = spec.bound.d;
    j["delta"] = spec.bound.delta;
    j["adaptability"] = spec.bound.beta;
    j["d_hat"] = spec.bound.d_hat;
    if (spec.has_haussler) {
        j["haussler"]["family_size"] = spec.family_size;
        j["haussler"]["delta"] = spec.haussler_delta;
        j["haussler"]["epsilon"] = spec.haussler_epsilon;
    }
    return j;
}

inline void write_config_echo(const std::filesystem::path& out_dir, const json& resolved) {
    std::ofstream os(out_dir / "config_echo.json");
    if (!os) throw Error("cannot write config echo in " + out_dir.string());
    os << resolved.dump(2) << "\n";
}

}  // namespace nci

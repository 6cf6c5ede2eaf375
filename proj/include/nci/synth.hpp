#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nci/common.hpp"
#include "nci/model.hpp"
#include "nci/tensor.hpp"

namespace nci {

// One observation domain. Asymmetry knobs:
//   concept_noise  - additive N(0,1) noise scale on the shared concept block
//   label_leak     - scale of the label one-hot projected into the own block
//   block_noise    - additive noise scale on the own block
// unique_fraction < 0 inherits the dataset-level default. shared_drop_fraction
// withholds that fraction of N_sup shared supports from this domain's pool
// (the support-replacement hook used by the complementarity sweep).
struct DomainSpec {
    std::string name;
    double concept_noise = 0.0;
    double label_leak = 0.0;
    std::size_t block_dim = 4;
    double block_noise = 0.0;
    double unique_fraction = -1.0;
    double shared_drop_fraction = 0.0;
};

struct DatasetConfig {
    std::uint64_t seed = 0;
    std::size_t concept_dim = 8;
    std::size_t num_classes = 4;
    std::size_t num_supports = 1000;
    std::vector<DomainSpec> domains;
    double shared_fraction = 1.0;   // rho: nominal shared share of the support universe
    double unique_fraction = 0.0;   // u: per-domain unique share unless overridden
    std::size_t samples_per_domain = 1000;
};

struct Sample {
    std::int64_t support_id = 0;
    int domain = 0;
    int label = 0;
    std::vector<double> features;
};

struct Dataset {
    DatasetConfig config;
    std::size_t feature_dim = 0;
    std::vector<std::size_t> block_offset;        // per-domain own-block start
    std::vector<std::vector<Sample>> by_domain;   // generation order within each domain
    std::size_t shared_count = 0;                 // supports in the shared pool
    std::vector<std::size_t> unique_count;        // per-domain unique supports
    std::vector<std::vector<std::int64_t>> pool;  // per-domain support pool, ascending
    std::vector<std::string> warnings;

    int domain_index(const std::string& name) const {
        for (std::size_t d = 0; d < config.domains.size(); ++d)
            if (config.domains[d].name == name) return static_cast<int>(d);
        throw ConfigError("dataset has no domain named '" + name + "'");
    }

    std::size_t num_domains() const { return config.domains.size(); }

    std::size_t total_samples() const {
        std::size_t n = 0;
        for (const auto& v : by_domain) n += v.size();
        return n;
    }
};

// Deterministic global train/eval split: a support id is held out everywhere
// or nowhere, so no rendering of an evaluation concept leaks into training.
inline bool is_eval_support(std::int64_t support_id) {
    static const std::uint64_t salt = fnv1a("nci/eval-split");
    return splitmix64(static_cast<std::uint64_t>(support_id) ^ salt) % 5 == 4;
}

inline double domain_unique_fraction(const DatasetConfig& cfg, std::size_t d) {
    const double u = cfg.domains[d].unique_fraction;
    return u < 0.0 ? cfg.unique_fraction : u;
}

inline void validate_dataset_config(const DatasetConfig& cfg) {
    if (cfg.domains.empty()) throw ConfigError("dataset.domains: need at least one domain");
    if (cfg.concept_dim == 0) throw ConfigError("dataset.concept_dim: must be >= 1");
    if (cfg.num_classes < 2) throw ConfigError("dataset.num_classes: must be >= 2");
    if (cfg.num_supports == 0) throw ConfigError("dataset.num_supports: must be >= 1");
    if (cfg.samples_per_domain == 0) throw ConfigError("dataset.samples_per_domain: must be >= 1");
    if (cfg.shared_fraction < 0.0 || cfg.shared_fraction > 1.0)
        throw ConfigError("dataset.shared_fraction: must lie in [0,1]");
    if (cfg.unique_fraction < 0.0 || cfg.unique_fraction > 1.0)
        throw ConfigError("dataset.unique_fraction: must lie in [0,1]");
    double total_unique = 0.0;
    std::size_t droppers = 0;
    for (std::size_t d = 0; d < cfg.domains.size(); ++d) {
        const DomainSpec& ds = cfg.domains[d];
        const std::string at = "dataset.domains[" + std::to_string(d) + "]";
        if (ds.name.empty()) throw ConfigError(at + ".name: empty");
        for (std::size_t e = 0; e < d; ++e)
            if (cfg.domains[e].name == ds.name) throw ConfigError(at + ".name: duplicate '" + ds.name + "'");
        if (ds.concept_noise < 0.0) throw ConfigError(at + ".concept_noise: must be >= 0");
        if (ds.label_leak < 0.0) throw ConfigError(at + ".label_leak: must be >= 0");
        if (ds.block_noise < 0.0) throw ConfigError(at + ".block_noise: must be >= 0");
        if (ds.block_dim == 0) throw ConfigError(at + ".block_dim: must be >= 1");
        if (ds.shared_drop_fraction < 0.0 || ds.shared_drop_fraction > 1.0)
            throw ConfigError(at + ".shared_drop_fraction: must lie in [0,1]");
        if (ds.shared_drop_fraction > 0.0) ++droppers;
        total_unique += domain_unique_fraction(cfg, d);
    }
    if (cfg.shared_fraction + total_unique > 1.0 + 1e-9)
        throw ConfigError("dataset: shared_fraction + sum of unique fractions exceeds 1");
    if (droppers > 1)
        throw ConfigError("dataset: at most one domain may set shared_drop_fraction");
    if (droppers == 1 && cfg.domains.size() < 2)
        throw ConfigError("dataset: shared_drop_fraction requires a second domain to cover dropped supports");
}

namespace detail {

inline std::vector<double> normal_vec(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

}  // namespace detail

// Support accounting and block layout without rendering any samples. Each
// domain gets floor(u_d * N_sup) unique supports; everything left over is the
// shared pool, so |shared| / N_sup equals shared_fraction exactly whenever the
// fractions sum to 1 and the products are integral. Every support id lands in
// at least one domain's pool.
inline Dataset dataset_shape(const DatasetConfig& cfg) {
    validate_dataset_config(cfg);
    Dataset ds;
    ds.config = cfg;
    const std::size_t D = cfg.domains.size();
    const std::size_t N = cfg.num_supports;
    const std::size_t C = cfg.num_classes;

    ds.unique_count.resize(D);
    std::size_t total_unique = 0;
    for (std::size_t d = 0; d < D; ++d) {
        ds.unique_count[d] = static_cast<std::size_t>(domain_unique_fraction(cfg, d) * static_cast<double>(N));
        total_unique += ds.unique_count[d];
    }
    if (total_unique > N) throw ConfigError("dataset: unique support demand exceeds num_supports");
    ds.shared_count = N - total_unique;

    // Support pools: shared ids first, then each domain's unique range.
    ds.pool.resize(D);
    std::size_t next_unique = ds.shared_count;
    for (std::size_t d = 0; d < D; ++d) {
        const std::size_t drop =
            static_cast<std::size_t>(cfg.domains[d].shared_drop_fraction * static_cast<double>(N));
        if (drop > ds.shared_count)
            throw ConfigError("dataset.domains[" + std::to_string(d) +
                              "].shared_drop_fraction: drops more than the shared pool holds");
        const std::size_t kept = ds.shared_count - drop;
        for (std::size_t s = 0; s < kept; ++s) ds.pool[d].push_back(static_cast<std::int64_t>(s));
        for (std::size_t s = 0; s < ds.unique_count[d]; ++s)
            ds.pool[d].push_back(static_cast<std::int64_t>(next_unique + s));
        next_unique += ds.unique_count[d];
        if (ds.pool[d].empty())
            throw ConfigError("dataset.domains[" + std::to_string(d) + "]: empty support pool");
    }

    ds.block_offset.resize(D);
    std::size_t off = cfg.concept_dim;
    for (std::size_t d = 0; d < D; ++d) {
        ds.block_offset[d] = off;
        off += cfg.domains[d].block_dim;
    }
    ds.feature_dim = off;

    if (static_cast<double>(C) > std::pow(2.0, static_cast<double>(cfg.concept_dim)))
        ds.warnings.push_back("num_classes exceeds 2^concept_dim; concepts may not separate all classes");
    ds.by_domain.resize(D);
    return ds;
}

inline Dataset generate(const DatasetConfig& cfg) {
    Dataset ds = dataset_shape(cfg);
    const std::size_t D = cfg.domains.size();
    const std::size_t N = cfg.num_supports;
    const std::size_t C = cfg.num_classes;

    // Fixed random linear scorer defines the label of each support's clean concept.
    std::mt19937_64 scorer_rng(derive_seed(cfg.seed, "scorer"));
    const std::vector<double> W = detail::normal_vec(scorer_rng, C * cfg.concept_dim);

    std::vector<std::vector<double>> concepts(N);
    std::vector<int> labels(N);
    for (std::size_t s = 0; s < N; ++s) {
        std::mt19937_64 rng(derive_seed(cfg.seed, "concept", s));
        concepts[s] = detail::normal_vec(rng, cfg.concept_dim);
        int best = 0;
        double best_score = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double score = 0.0;
            for (std::size_t k = 0; k < cfg.concept_dim; ++k)
                score += W[c * cfg.concept_dim + k] * concepts[s][k];
            if (c == 0 || score > best_score) {
                best = static_cast<int>(c);
                best_score = score;
            }
        }
        labels[s] = best;
    }

    // Per-domain leak projection: row `label` of M_d, scaled by label_leak.
    std::vector<std::vector<double>> leak(D);
    for (std::size_t d = 0; d < D; ++d) {
        std::mt19937_64 rng(derive_seed(cfg.seed, "leak", d));
        leak[d] = detail::normal_vec(rng, C * cfg.domains[d].block_dim);
    }

    for (std::size_t d = 0; d < D; ++d) {
        const DomainSpec& spec = cfg.domains[d];
        const std::size_t bd = spec.block_dim;
        ds.by_domain[d].reserve(cfg.samples_per_domain);
        for (std::size_t j = 0; j < cfg.samples_per_domain; ++j) {
            const std::int64_t sid = ds.pool[d][j % ds.pool[d].size()];
            std::mt19937_64 rng(derive_seed(cfg.seed, "noise", (static_cast<std::uint64_t>(d) << 40) + j));
            Sample x;
            x.support_id = sid;
            x.domain = static_cast<int>(d);
            x.label = labels[static_cast<std::size_t>(sid)];
            x.features.assign(ds.feature_dim, 0.0);
            const std::vector<double> cn = detail::normal_vec(rng, cfg.concept_dim);
            const std::vector<double> bn = detail::normal_vec(rng, bd);
            const std::vector<double>& c = concepts[static_cast<std::size_t>(sid)];
            for (std::size_t k = 0; k < cfg.concept_dim; ++k)
                x.features[k] = c[k] + spec.concept_noise * cn[k];
            const double* mrow = &leak[d][static_cast<std::size_t>(x.label) * bd];
            for (std::size_t k = 0; k < bd; ++k)
                x.features[ds.block_offset[d] + k] = spec.label_leak * mrow[k] + spec.block_noise * bn[k];
            ds.by_domain[d].push_back(std::move(x));
        }
    }
    return ds;
}

struct OrthogonalityReport {
    bool ok = true;
    std::string detail;
};

// Exact check of the block-disjointness invariant: outside the concept block
// and the sample's own domain block every coordinate is exactly 0.0, hence
// every cross-domain block dot product is exactly zero.
inline OrthogonalityReport verify_orthogonality(const Dataset& ds) {
    OrthogonalityReport rep;
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        const std::size_t lo = ds.block_offset[d];
        const std::size_t hi = lo + ds.config.domains[d].block_dim;
        for (std::size_t i = 0; i < ds.by_domain[d].size(); ++i) {
            const Sample& x = ds.by_domain[d][i];
            for (std::size_t k = ds.config.concept_dim; k < ds.feature_dim; ++k) {
                if (k >= lo && k < hi) continue;
                if (x.features[k] != 0.0) {
                    rep.ok = false;
                    rep.detail = "domain " + ds.config.domains[d].name + " sample " + std::to_string(i) +
                                 " has nonzero coordinate f" + std::to_string(k) + " outside its block";
                    return rep;
                }
            }
        }
    }
    return rep;
}

// Feature matrix + labels for a list of samples.
inline Tensor feature_matrix(const std::vector<const Sample*>& xs, std::size_t dim) {
    Tensor X({xs.size(), dim});
    for (std::size_t i = 0; i < xs.size(); ++i)
        std::copy(xs[i]->features.begin(), xs[i]->features.end(), &X.data[i * dim]);
    return X;
}

inline std::vector<const Sample*> domain_split(const Dataset& ds, int domain, bool eval_split) {
    std::vector<const Sample*> out;
    for (const Sample& x : ds.by_domain[static_cast<std::size_t>(domain)])
        if (is_eval_support(x.support_id) == eval_split) out.push_back(&x);
    return out;
}

// How much label information a domain's rendering carries, measured as the
// held-out accuracy of a small classifier trained on that domain alone.
// Proxy for the mutual information I(phi(x); y) ranking between domains.
inline double probe_label_information(const Dataset& ds, int domain,
                                      const ClassifierOptions& opts = {}) {
    if (domain < 0 || static_cast<std::size_t>(domain) >= ds.num_domains())
        throw ConfigError("probe: domain index out of range");
    const auto& samples = ds.by_domain[static_cast<std::size_t>(domain)];
    if (samples.size() < 50 * ds.config.num_classes)
        throw ValueError("probe: need at least 50 samples per class on average, have " +
                         std::to_string(samples.size()) + " for " + std::to_string(ds.config.num_classes) +
                         " classes");
    const std::vector<const Sample*> train = domain_split(ds, domain, false);
    const std::vector<const Sample*> eval = domain_split(ds, domain, true);
    if (train.empty() || eval.empty()) throw ValueError("probe: degenerate train/eval split");
    Tensor Xtr = feature_matrix(train, ds.feature_dim);
    std::vector<int> ytr(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) ytr[i] = train[i]->label;
    const std::uint64_t seed = derive_seed(ds.config.seed, "probe", static_cast<std::uint64_t>(domain));
    const ModelParams probe = fit_classifier(Xtr, ytr, ds.config.num_classes, opts, seed);
    Tensor Xev = feature_matrix(eval, ds.feature_dim);
    std::vector<int> yev(eval.size());
    for (std::size_t i = 0; i < eval.size(); ++i) yev[i] = eval[i]->label;
    return classifier_accuracy(probe, Xev, yev);
}

// k specs on the line between two domains; endpoints are the inputs verbatim.
inline std::vector<DomainSpec> interpolate_domains(const DomainSpec& a, const DomainSpec& b, std::size_t k) {
    if (k < 2) throw ConfigError("interpolate_domains: k must be >= 2");
    if (a.block_dim != b.block_dim)
        throw ConfigError("interpolate_domains: block_dim mismatch (" + std::to_string(a.block_dim) + " vs " +
                          std::to_string(b.block_dim) + ")");
    std::vector<DomainSpec> out;
    for (std::size_t i = 0; i < k; ++i) {
        if (i == 0) {
            out.push_back(a);
            continue;
        }
        if (i == k - 1) {
            out.push_back(b);
            continue;
        }
        const double t = static_cast<double>(i) / static_cast<double>(k - 1);
        DomainSpec m;
        m.name = a.name + "." + std::to_string(i) + "." + b.name;
        m.concept_noise = (1.0 - t) * a.concept_noise + t * b.concept_noise;
        m.label_leak = (1.0 - t) * a.label_leak + t * b.label_leak;
        m.block_noise = (1.0 - t) * a.block_noise + t * b.block_noise;
        m.block_dim = a.block_dim;
        out.push_back(std::move(m));
    }
    return out;
}

// ---- CSV + metadata sidecar ---------------------------------------------------

inline std::string dataset_csv_text(const Dataset& ds) {
    std::ostringstream os;
    os << "support_id,domain,label";
    for (std::size_t k = 0; k < ds.feature_dim; ++k) os << ",f" << k;
    os << "\n";
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        // generation order within a domain walks the ascending pool round-robin,
        // so a stable sort by support id keeps renderings of one support adjacent
        std::vector<const Sample*> rows;
        for (const Sample& x : ds.by_domain[d]) rows.push_back(&x);
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Sample* a, const Sample* b) { return a->support_id < b->support_id; });
        for (const Sample* x : rows) {
            os << x->support_id << "," << ds.config.domains[d].name << "," << x->label;
            for (double v : x->features) os << "," << format_g9(v);
            os << "\n";
        }
    }
    return os.str();
}

inline std::string dataset_meta_text(const DatasetConfig& cfg) {
    std::ostringstream os;
    os << "format = nci-dataset v1\n";
    os << "seed = " << cfg.seed << "\n";
    os << "concept_dim = " << cfg.concept_dim << "\n";
    os << "num_classes = " << cfg.num_classes << "\n";
    os << "num_supports = " << cfg.num_supports << "\n";
    os << "shared_fraction = " << format_g17(cfg.shared_fraction) << "\n";
    os << "unique_fraction = " << format_g17(cfg.unique_fraction) << "\n";
    os << "samples_per_domain = " << cfg.samples_per_domain << "\n";
    os << "num_domains = " << cfg.domains.size() << "\n";
    for (std::size_t d = 0; d < cfg.domains.size(); ++d) {
        const DomainSpec& s = cfg.domains[d];
        const std::string p = "domains." + std::to_string(d) + ".";
        os << p << "name = " << s.name << "\n";
        os << p << "concept_noise = " << format_g17(s.concept_noise) << "\n";
        os << p << "label_leak = " << format_g17(s.label_leak) << "\n";
        os << p << "block_dim = " << s.block_dim << "\n";
        os << p << "block_noise = " << format_g17(s.block_noise) << "\n";
        os << p << "unique_fraction = " << format_g17(s.unique_fraction) << "\n";
        os << p << "shared_drop_fraction = " << format_g17(s.shared_drop_fraction) << "\n";
    }
    return os.str();
}

inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw ValueError("cannot open for writing: " + path.string());
        os << dataset_csv_text(ds);
    }
    std::ofstream ms(path.string() + ".meta", std::ios::binary);
    if (!ms) throw ValueError("cannot open for writing: " + path.string() + ".meta");
    ms << dataset_meta_text(ds.config);
}

namespace detail {

inline std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValueError("cannot open: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.find(" = ");
        if (pos == std::string::npos) throw ValueError("malformed metadata line: '" + line + "'");
        kv[line.substr(0, pos)] = line.substr(pos + 3);
    }
    return kv;
}

inline const std::string& kv_get(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ValueError("metadata missing key '" + key + "'");
    return it->second;
}

}  // namespace detail

inline DatasetConfig load_dataset_meta(const std::filesystem::path& meta_path) {
    const auto kv = detail::parse_kv_file(meta_path);
    if (detail::kv_get(kv, "format") != "nci-dataset v1")
        throw ValueError("unsupported dataset metadata format");
    DatasetConfig cfg;
    cfg.seed = std::stoull(detail::kv_get(kv, "seed"));
    cfg.concept_dim = std::stoul(detail::kv_get(kv, "concept_dim"));
    cfg.num_classes = std::stoul(detail::kv_get(kv, "num_classes"));
    cfg.num_supports = std::stoul(detail::kv_get(kv, "num_supports"));
    cfg.shared_fraction = std::stod(detail::kv_get(kv, "shared_fraction"));
    cfg.unique_fraction = std::stod(detail::kv_get(kv, "unique_fraction"));
    cfg.samples_per_domain = std::stoul(detail::kv_get(kv, "samples_per_domain"));
    const std::size_t D = std::stoul(detail::kv_get(kv, "num_domains"));
    for (std::size_t d = 0; d < D; ++d) {
        const std::string p = "domains." + std::to_string(d) + ".";
        DomainSpec s;
        s.name = detail::kv_get(kv, p + "name");
        s.concept_noise = std::stod(detail::kv_get(kv, p + "concept_noise"));
        s.label_leak = std::stod(detail::kv_get(kv, p + "label_leak"));
        s.block_dim = std::stoul(detail::kv_get(kv, p + "block_dim"));
        s.block_noise = std::stod(detail::kv_get(kv, p + "block_noise"));
        s.unique_fraction = std::stod(detail::kv_get(kv, p + "unique_fraction"));
        s.shared_drop_fraction = std::stod(detail::kv_get(kv, p + "shared_drop_fraction"));
        cfg.domains.push_back(std::move(s));
    }
    return cfg;
}

// Loads a dataset written by write_dataset_csv. Pool/offset bookkeeping is
// reconstructed from the sidecar config; rows come from the CSV itself.
inline Dataset load_dataset_csv(const std::filesystem::path& path) {
    const DatasetConfig cfg = load_dataset_meta(path.string() + ".meta");
    Dataset ds = dataset_shape(cfg);  // rebuilds pools, offsets, warnings deterministically

    std::ifstream is(path);
    if (!is) throw ValueError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("support_id,domain,label", 0) != 0)
        throw ValueError("dataset csv: bad header");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        Sample x;
        if (!std::getline(ls, field, ',')) throw ValueError("dataset csv: truncated line " + std::to_string(lineno));
        x.support_id = std::stoll(field);
        if (!std::getline(ls, field, ',')) throw ValueError("dataset csv: truncated line " + std::to_string(lineno));
        x.domain = ds.domain_index(field);
        if (!std::getline(ls, field, ',')) throw ValueError("dataset csv: truncated line " + std::to_string(lineno));
        x.label = std::stoi(field);
        x.features.reserve(ds.feature_dim);
        while (std::getline(ls, field, ',')) x.features.push_back(std::stod(field));
        if (x.features.size() != ds.feature_dim)
            throw ValueError("dataset csv: line " + std::to_string(lineno) + " has " +
                             std::to_string(x.features.size()) + " features, expected " +
                             std::to_string(ds.feature_dim));
        ds.by_domain[static_cast<std::size_t>(x.domain)].push_back(std::move(x));
    }
    return ds;
}

}  // namespace nci

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "nci/common.hpp"
#include "nci/model.hpp"
#include "nci/synth.hpp"
#include "nci/tape.hpp"

namespace nci {

// Training objectives. Domain labels are 1 for the target domain, 0 for every
// source; with several sources they all share label 0.
//   erm          - task cross-entropy only
//   commutative  - task + lambda * (maximize discriminator loss on all samples)
//   conditional  - commutative, with the class one-hot joined to the
//                  discriminator input
//   nci          - task + lambda * (-(1-y) log eta): only source samples are
//                  pushed across the domain boundary, target samples are exempt
enum class Objective { erm, commutative, conditional, nci };

inline const char* objective_name(Objective o) {
    switch (o) {
        case Objective::erm: return "erm";
        case Objective::commutative: return "commutative";
        case Objective::conditional: return "conditional";
        case Objective::nci: return "nci";
    }
    return "?";
}

inline Objective objective_from_name(const std::string& s) {
    if (s == "erm") return Objective::erm;
    if (s == "commutative") return Objective::commutative;
    if (s == "conditional") return Objective::conditional;
    if (s == "nci") return Objective::nci;
    throw ConfigError("unknown objective '" + s + "' (expected erm|commutative|conditional|nci)");
}

// Scalar loss forms, exposed for direct value checks.
inline double discriminator_loss(double p, double y) {
    const double pc = clamp_prob(p);
    return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

// Zero for target samples (y = 1) by construction: the (1 - y) factor is an
// exact multiplicative mask, not a numerical cancellation.
inline double nci_encoder_loss(double p, double y) {
    return -(1.0 - y) * std::log(clamp_prob(p));
}

struct TrainConfig {
    Objective objective = Objective::erm;
    std::string target_domain;
    std::uint64_t seed = 0;
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double lr = 0.01;
    OptKind optimizer = OptKind::adam;
    double lambda_adv = 1.0;
    std::size_t disc_steps = 1;  // discriminator updates per encoder update
    std::size_t repr_dim = 16;
    std::size_t encoder_hidden = 32;
    std::size_t disc_hidden = 16;
    std::size_t train_quota_per_domain = 0;  // 0 = whole train split; >0 = exact per-domain budget
    std::vector<std::string> train_domains;  // empty = all dataset domains
};

struct EpochLog {
    std::size_t epoch = 0;
    double task_loss = 0.0;
    double adv_loss = 0.0;
    double disc_loss = 0.0;
    double train_acc = 0.0;
};

struct EvalResult {
    double accuracy = 0.0;
    double risk = 0.0;  // mean cross-entropy
};

struct TrainedModel {
    ModelParams encoder;
    ModelParams head;
    ModelParams discriminator;
    TrainConfig config;
    std::vector<std::size_t> train_counts;  // per training domain, in training order
    std::vector<EpochLog> curve;
    EvalResult final_eval;
};

struct RiskReport {
    double cross_entropy = 0.0;
    double zero_one = 0.0;
};

// Mean cross-entropy (log-sum-exp form) and 0/1 error of head(encoder(x)).
// A mean over a concatenation of lists is by construction the sample-weighted
// mean of the per-list risks.
inline RiskReport empirical_risk(const ModelParams& encoder, const ModelParams& head,
                                 const std::vector<const Sample*>& samples) {
    if (samples.empty()) throw ValueError("empirical_risk: empty sample list");
    const std::size_t dim = samples.front()->features.size();
    Tensor X = feature_matrix(samples, dim);
    const Tensor logits = forward(head, forward(encoder, X));
    const std::size_t C = logits.shape[1];
    RiskReport r;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double* z = &logits.data[i * C];
        const int y = samples[i]->label;
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw ValueError("empirical_risk: label out of range");
        double m = z[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += std::exp(z[c] - m);
        r.cross_entropy += (m + std::log(s)) - z[y];
        if (argmax_row(logits, i) != y) r.zero_one += 1.0;
    }
    r.cross_entropy /= static_cast<double>(samples.size());
    r.zero_one /= static_cast<double>(samples.size());
    return r;
}

inline EvalResult evaluate_split(const TrainedModel& model, const Dataset& ds, const std::string& domain,
                                 bool eval_split) {
    const int d = ds.domain_index(domain);
    const std::vector<const Sample*> xs = domain_split(ds, d, eval_split);
    if (xs.empty()) throw ValueError("evaluate: no samples in the requested split of '" + domain + "'");
    const RiskReport r = empirical_risk(model.encoder, model.head, xs);
    return {1.0 - r.zero_one, r.cross_entropy};
}

// Held-out metrics on the named domain (deterministic support-hash split).
inline EvalResult evaluate(const TrainedModel& model, const Dataset& ds, const std::string& domain) {
    return evaluate_split(model, ds, domain, true);
}

namespace detail {

struct TrainItem {
    const Sample* sample;
    double domain_label;  // 1 = target
};

inline std::string curve_dump(const std::vector<EpochLog>& curve) {
    std::ostringstream os;
    os << "; last epochs:";
    const std::size_t from = curve.size() > 5 ? curve.size() - 5 : 0;
    for (std::size_t i = from; i < curve.size(); ++i)
        os << " [" << curve[i].epoch << "] task=" << format_g9(curve[i].task_loss)
           << " adv=" << format_g9(curve[i].adv_loss) << " disc=" << format_g9(curve[i].disc_loss);
    return os.str();
}

}  // namespace detail

// Adversarial training by explicit alternation: disc_steps discriminator
// updates on the frozen encoder, then one encoder+head update with the
// discriminator frozen. No gradient reversal. lambda_adv = 0 skips the
// adversarial term entirely, so the encoder/head trajectory is bit-identical
// to objective=erm under the same seed.
inline TrainedModel train(const Dataset& ds, const TrainConfig& cfg) {
    if (cfg.target_domain.empty()) throw ConfigError("train.target_domain: required");
    if (cfg.epochs == 0) throw ConfigError("train.epochs: must be >= 1");
    if (cfg.batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (cfg.lambda_adv < 0.0) throw ConfigError("train.lambda_adv: must be >= 0");
    if (cfg.disc_steps == 0) throw ConfigError("train.disc_steps: must be >= 1");
    const int target = ds.domain_index(cfg.target_domain);

    std::vector<int> train_domains;
    if (cfg.train_domains.empty()) {
        for (std::size_t d = 0; d < ds.num_domains(); ++d) train_domains.push_back(static_cast<int>(d));
    } else {
        for (const std::string& n : cfg.train_domains) train_domains.push_back(ds.domain_index(n));
    }
    const bool adversarial = cfg.objective != Objective::erm;
    if (adversarial) {
        bool has_target = false;
        for (int d : train_domains) has_target |= (d == target);
        if (!has_target)
            throw ConfigError("train.target_domain: '" + cfg.target_domain + "' not among the training domains");
        if (train_domains.size() < 2)
            throw ConfigError("train: adversarial objectives need at least two domains");
    }

    // Per-domain training pool: train split, cut or cycled to the exact quota
    // when a constant budget is requested. The quota subset is keyed on
    // (domain, support, render) rather than drawn from a shuffle of the split:
    // generation order correlates with support identity, so a prefix would
    // silently exclude late-pool supports, and a plain shuffle would re-deal
    // the whole subset whenever the pool composition shifts by one support.
    // Stable keys keep the selection identical wherever the pools agree.
    std::vector<detail::TrainItem> items;
    std::vector<std::size_t> train_counts;
    for (int d : train_domains) {
        const std::vector<const Sample*> split = domain_split(ds, d, false);
        if (split.empty()) throw ValueError("train: domain '" + ds.config.domains[d].name + "' has no train split");
        const std::size_t want = cfg.train_quota_per_domain == 0 ? split.size() : cfg.train_quota_per_domain;
        std::vector<std::size_t> pick(split.size());
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        if (want < split.size()) {
            std::vector<std::uint64_t> key(split.size());
            std::unordered_map<std::int64_t, std::uint64_t> seen;
            for (std::size_t i = 0; i < split.size(); ++i) {
                const std::uint64_t render = seen[split[i]->support_id]++;
                const std::uint64_t tag = (static_cast<std::uint64_t>(d) << 52) + (render << 44) +
                                          static_cast<std::uint64_t>(split[i]->support_id);
                key[i] = derive_seed(cfg.seed, "quota", tag);
            }
            std::stable_sort(pick.begin(), pick.end(),
                             [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
        }
        for (std::size_t i = 0; i < want; ++i)
            items.push_back({split[pick[i % split.size()]], d == target ? 1.0 : 0.0});
        train_counts.push_back(want);
    }

    const std::size_t C = ds.config.num_classes;
    {
        std::vector<std::size_t> per_class(C, 0);
        for (const auto& it : items) per_class[static_cast<std::size_t>(it.sample->label)]++;
        const std::size_t need = cfg.batch_size / C;
        for (std::size_t c = 0; c < C; ++c)
            if (per_class[c] > 0 && per_class[c] < need)
                throw ConfigError("train: class " + std::to_string(c) + " has only " +
                                  std::to_string(per_class[c]) + " samples (need >= batch_size/num_classes = " +
                                  std::to_string(need) + ")");
    }

    TrainedModel model;
    model.config = cfg;
    model.train_counts = train_counts;
    const std::size_t D_in = ds.feature_dim;
    model.encoder = make_mlp("encoder", {D_in, cfg.encoder_hidden, cfg.repr_dim},
                             {Activation::relu, Activation::tanh_fn}, derive_seed(cfg.seed, "init/encoder"));
    model.head = make_mlp("head", {cfg.repr_dim, C}, {Activation::linear}, derive_seed(cfg.seed, "init/head"));
    const std::size_t disc_in = cfg.repr_dim + (cfg.objective == Objective::conditional ? C : 0);
    model.discriminator = make_mlp("discriminator", {disc_in, cfg.disc_hidden, 1},
                                   {Activation::relu, Activation::linear}, derive_seed(cfg.seed, "init/disc"));

    OptimizerState opt_model, opt_disc;
    {
        std::vector<const Tensor*> mp = param_cptrs(model.encoder);
        for (const Tensor* p : param_cptrs(model.head)) mp.push_back(p);
        opt_model.init({cfg.optimizer, cfg.lr}, mp);
        opt_disc.init({cfg.optimizer, cfg.lr}, param_cptrs(model.discriminator));
    }

    const std::size_t N = items.size();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle", epoch));
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog log;
        log.epoch = epoch;
        std::size_t hits = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, N - start);
            Tensor xb({bsz, D_in});
            std::vector<int> yb(bsz);
            std::vector<double> db(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const detail::TrainItem& it = items[order[start + i]];
                std::copy(it.sample->features.begin(), it.sample->features.end(), &xb.data[i * D_in]);
                yb[i] = it.sample->label;
                db[i] = it.domain_label;
            }
            Tensor onehot({bsz, C});
            if (cfg.objective == Objective::conditional)
                for (std::size_t i = 0; i < bsz; ++i) onehot.data[i * C + static_cast<std::size_t>(yb[i])] = 1.0;

            const auto disc_input = [&](Tape& t, int reps) {
                return cfg.objective == Objective::conditional ? t.concat_cols(reps, t.leaf(onehot)) : reps;
            };

            try {
                if (adversarial) {
                    for (std::size_t k = 0; k < cfg.disc_steps; ++k) {
                        Tape t;
                        const int x = t.leaf(xb);
                        const int reps = tape_forward(t, model.encoder, x);
                        std::vector<int> dpids;
                        const int logit = tape_forward(t, model.discriminator, disc_input(t, reps), &dpids);
                        const int prob = t.sigmoid_fn(logit);
                        const int loss = t.bce(prob, db);
                        t.backward(loss);
                        std::vector<const Tensor*> grads;
                        for (int id : dpids) grads.push_back(&t.grad(id));
                        opt_disc.step(param_ptrs(model.discriminator), grads, "discriminator");
                        if (k + 1 == cfg.disc_steps) log.disc_loss += t.value(loss).data[0];
                    }
                }

                Tape t;
                std::vector<int> pids;
                const int x = t.leaf(xb);
                const int reps = tape_forward(t, model.encoder, x, &pids);
                const int logits = tape_forward(t, model.head, reps, &pids);
                const int task = t.softmax_xent(logits, yb);
                int total = task;
                if (adversarial && cfg.lambda_adv != 0.0) {
                    int adv = -1;
                    const int logit = tape_forward(t, model.discriminator, disc_input(t, reps));
                    const int prob = t.sigmoid_fn(logit);
                    if (cfg.objective == Objective::nci) {
                        // -(1/B) sum (1 - y) log eta: exact zero contribution
                        // (value and gradient) from target samples.
                        Tensor mask({bsz, 1});
                        for (std::size_t i = 0; i < bsz; ++i) mask.data[i] = 1.0 - db[i];
                        const int masked = t.mul(t.log_fn(prob), t.leaf(mask));
                        adv = t.scale(t.sum(masked), -1.0 / static_cast<double>(bsz));
                    } else {
                        adv = t.scale(t.bce(prob, db), -1.0);
                    }
                    total = t.add(task, t.scale(adv, cfg.lambda_adv));
                    log.adv_loss += t.value(adv).data[0];
                }
                if (!std::isfinite(t.value(total).data[0]))
                    throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch));
                t.backward(total);
                std::vector<const Tensor*> grads;
                for (int id : pids) grads.push_back(&t.grad(id));
                std::vector<Tensor*> mp = param_ptrs(model.encoder);
                for (Tensor* p : param_ptrs(model.head)) mp.push_back(p);
                opt_model.step(mp, grads, "encoder+head");

                log.task_loss += t.value(task).data[0];
                const Tensor& lv = t.value(logits);
                for (std::size_t i = 0; i < bsz; ++i)
                    if (argmax_row(lv, i) == yb[i]) ++hits;
            } catch (const TrainingDiverged& e) {
                throw TrainingDiverged(std::string(e.what()) + detail::curve_dump(model.curve));
            }
            ++batches;
        }
        log.task_loss /= static_cast<double>(batches);
        log.adv_loss /= static_cast<double>(batches);
        log.disc_loss /= static_cast<double>(batches);
        log.train_acc = static_cast<double>(hits) / static_cast<double>(N);
        model.curve.push_back(log);
    }

    model.final_eval = evaluate(model, ds, cfg.target_domain);
    return model;
}

// Per-sample adversarial gradient of the encoder parameters. Used to assert
// the NCI target exemption: for a target sample the returned tensors are all
// exactly zero.
inline std::vector<Tensor> adversarial_encoder_gradients(const TrainedModel& model, const Sample& sample,
                                                         double domain_label) {
    Tape t;
    Tensor x({1, sample.features.size()}, sample.features);
    std::vector<int> pids;
    const int reps = tape_forward(t, model.encoder, t.leaf(std::move(x)), &pids);
    int din = reps;
    if (model.config.objective == Objective::conditional) {
        Tensor onehot({1, model.head.output_dim()});
        onehot.data[static_cast<std::size_t>(sample.label)] = 1.0;
        din = t.concat_cols(reps, t.leaf(onehot));
    }
    const int prob = t.sigmoid_fn(tape_forward(t, model.discriminator, din));
    int adv;
    if (model.config.objective == Objective::nci) {
        Tensor mask({1, 1}, {1.0 - domain_label});
        adv = t.scale(t.sum(t.mul(t.log_fn(prob), t.leaf(mask))), -1.0);
    } else {
        adv = t.scale(t.bce(prob, {domain_label}), -1.0);
    }
    t.backward(adv);
    std::vector<Tensor> out;
    for (int id : pids) out.push_back(t.grad(id));
    return out;
}

inline void write_curves_csv(const TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValueError("cannot open for writing: " + path.string());
    os << "epoch,task_loss,adv_loss,disc_loss,train_acc\n";
    for (const EpochLog& e : model.curve)
        os << e.epoch << "," << format_g9(e.task_loss) << "," << format_g9(e.adv_loss) << ","
           << format_g9(e.disc_loss) << "," << format_g9(e.train_acc) << "\n";
}

inline std::string train_config_hash(const TrainConfig& cfg, const DatasetConfig& dcfg) {
    std::ostringstream os;
    os << objective_name(cfg.objective) << "|" << cfg.target_domain << "|" << cfg.seed << "|" << cfg.epochs
       << "|" << cfg.batch_size << "|" << format_g17(cfg.lr) << "|" << (cfg.optimizer == OptKind::adam)
       << "|" << format_g17(cfg.lambda_adv) << "|" << cfg.disc_steps << "|" << cfg.repr_dim << "|"
       << cfg.encoder_hidden << "|" << cfg.disc_hidden << "|" << cfg.train_quota_per_domain;
    for (const std::string& d : cfg.train_domains) os << "|" << d;
    os << "#" << dataset_meta_text(dcfg);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

inline void save_trained_model(const TrainedModel& model, const std::filesystem::path& path,
                               const DatasetConfig& dcfg) {
    save_checkpoint(path, {&model.encoder, &model.head, &model.discriminator},
                    train_config_hash(model.config, dcfg));
}

}  // namespace nci

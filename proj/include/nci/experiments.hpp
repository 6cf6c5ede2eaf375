#pragma once

// Scripted studies: complementarity sweep, asymmetry discovery, risk
// ordering, and the fixed two-objective benchmark. Every study reduces to a
// flat list of cells, each fully determined by (spec, seed), so reports are
// reproducible byte for byte and cells can run on any number of threads.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nci/common.hpp"
#include "nci/divergence.hpp"
#include "nci/synth.hpp"
#include "nci/train.hpp"

namespace nci {

struct StudyCell {
    std::string study;
    std::string label;  // objective or variant name
    double fraction = std::numeric_limits<double>::quiet_NaN();  // sweep x coordinate
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double risk = 0.0;
    double d_hat = std::numeric_limits<double>::quiet_NaN();
    std::size_t train_total = 0;
};

struct StudyAggregate {
    std::string label;
    double fraction = std::numeric_limits<double>::quiet_NaN();
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::size_t count = 0;
};

struct StudyReport {
    std::string kind;
    std::vector<StudyCell> cells;
    std::vector<std::pair<std::string, std::string>> verdicts;
    std::vector<std::string> notes;
    std::string config_echo;
};

namespace detail {

// Runs fn(0..n-1) on up to `jobs` threads. Results land in caller-owned
// slots indexed by cell, so aggregation order never depends on scheduling;
// the lowest-indexed failure is rethrown after all threads join.
inline void parallel_cells(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs == 0) jobs = 1;
    jobs = std::min(jobs, n == 0 ? std::size_t(1) : n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

inline std::string echo_domain(const DomainSpec& d) {
    std::ostringstream os;
    os << "domain " << d.name << " concept_noise=" << format_g9(d.concept_noise)
       << " label_leak=" << format_g9(d.label_leak) << " block_dim=" << d.block_dim
       << " block_noise=" << format_g9(d.block_noise) << " unique_fraction=" << format_g9(d.unique_fraction)
       << " shared_drop_fraction=" << format_g9(d.shared_drop_fraction);
    return os.str();
}

inline std::string echo_dataset(const DatasetConfig& c) {
    std::ostringstream os;
    os << "dataset seed=" << c.seed << " concept_dim=" << c.concept_dim << " num_classes=" << c.num_classes
       << " num_supports=" << c.num_supports << " samples_per_domain=" << c.samples_per_domain
       << " shared_fraction=" << format_g9(c.shared_fraction)
       << " unique_fraction=" << format_g9(c.unique_fraction) << "\n";
    for (const DomainSpec& d : c.domains) os << echo_domain(d) << "\n";
    return os.str();
}

inline std::string echo_train(const TrainConfig& t) {
    std::ostringstream os;
    os << "train objective=" << objective_name(t.objective) << " target=" << t.target_domain
       << " epochs=" << t.epochs << " batch_size=" << t.batch_size << " lr=" << format_g9(t.lr)
       << " lambda_adv=" << format_g9(t.lambda_adv) << " disc_steps=" << t.disc_steps
       << " repr_dim=" << t.repr_dim << " encoder_hidden=" << t.encoder_hidden
       << " disc_hidden=" << t.disc_hidden << " quota=" << t.train_quota_per_domain << "\n";
    return os.str();
}

inline std::size_t total_trained(const TrainedModel& m) {
    std::size_t n = 0;
    for (std::size_t c : m.train_counts) n += c;
    return n;
}

}  // namespace detail

// Mean and standard deviation of cell accuracy per (label, fraction) group,
// in first-appearance order. Pure function of the cell list.
inline std::vector<StudyAggregate> aggregate_cells(const std::vector<StudyCell>& cells) {
    std::vector<StudyAggregate> out;
    const auto same_group = [](const StudyAggregate& a, const StudyCell& c) {
        const bool both_nan = std::isnan(a.fraction) && std::isnan(c.fraction);
        return a.label == c.label && (both_nan || a.fraction == c.fraction);
    };
    for (const StudyCell& c : cells) {
        StudyAggregate* slot = nullptr;
        for (StudyAggregate& a : out)
            if (same_group(a, c)) {
                slot = &a;
                break;
            }
        if (!slot) {
            out.push_back({c.label, c.fraction, 0.0, 0.0, 0});
            slot = &out.back();
        }
        slot->mean_accuracy += c.accuracy;  // holds the sum until the final pass
        slot->std_accuracy += c.accuracy * c.accuracy;
        slot->count += 1;
    }
    for (StudyAggregate& a : out) {
        const double n = static_cast<double>(a.count);
        const double mean = a.mean_accuracy / n;
        const double var = std::max(0.0, a.std_accuracy / n - mean * mean);
        a.mean_accuracy = mean;
        a.std_accuracy = std::sqrt(var);
    }
    return out;
}

struct SweepSpec {
    DatasetConfig base;               // the all-shared universe; num_supports is the target pool size
    std::string complementary_source; // domain that trades shared supports for unique ones
    std::vector<double> grid = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<Objective> objectives = {Objective::nci};
    TrainConfig train;                // objective and seed are overridden per cell
};

// Support-replacement protocol. At fraction f the complementary source
// drops round(f * N0) shared supports and gains the same number of unique
// ones, so its pool size and the target's pool (the original N0 shared
// supports, ids [0, N0)) stay fixed across the whole grid; only the source's
// composition moves. The universe grows to N0 + U supports and the training
// budget is pinned exactly by the per-domain quota.
inline DatasetConfig sweep_point_config(const SweepSpec& spec, double fraction, std::uint64_t seed) {
    const std::size_t n0 = spec.base.num_supports;
    const auto replaced = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n0)));
    DatasetConfig cfg = spec.base;
    cfg.seed = seed;
    cfg.num_supports = n0 + replaced;
    cfg.shared_fraction = 0.0;
    bool found = false;
    for (DomainSpec& d : cfg.domains) {
        if (d.name != spec.complementary_source) continue;
        found = true;
        // (U + 0.5) / N floors back to exactly U supports
        const double exact = (static_cast<double>(replaced) + 0.5) / static_cast<double>(cfg.num_supports);
        d.unique_fraction = exact;
        d.shared_drop_fraction = exact;
    }
    if (!found)
        throw ConfigError("sweep.complementary_source: no domain named '" + spec.complementary_source + "'");
    return cfg;
}

inline StudyReport complementarity_sweep(const SweepSpec& spec, std::size_t jobs = 1) {
    if (spec.grid.empty()) throw ConfigError("sweep.grid: must not be empty");
    for (double f : spec.grid)
        if (!(f > 0.0 && f < 1.0)) throw ConfigError("sweep.grid: fractions must lie in (0,1)");
    if (spec.seeds.empty()) throw ConfigError("sweep.seeds: must not be empty");
    if (spec.objectives.empty()) throw ConfigError("sweep.objectives: must not be empty");
    if (spec.train.train_quota_per_domain == 0)
        throw ConfigError("sweep.train.train_quota_per_domain: the constant-budget protocol needs a quota");
    if (spec.train.target_domain == spec.complementary_source)
        throw ConfigError("sweep.complementary_source: must differ from the training target");
    bool known = false;
    for (const DomainSpec& d : spec.base.domains) known = known || d.name == spec.complementary_source;
    if (!known)
        throw ConfigError("sweep.complementary_source: no domain named '" + spec.complementary_source + "'");

    StudyReport report;
    report.kind = "complementarity_sweep";
    {
        std::ostringstream echo;
        echo << "study complementarity_sweep\n" << detail::echo_dataset(spec.base);
        echo << "complementary_source " << spec.complementary_source << "\n";
        echo << "grid";
        for (double f : spec.grid) echo << ' ' << format_g9(f);
        echo << "\nseeds";
        for (std::uint64_t s : spec.seeds) echo << ' ' << s;
        echo << "\nobjectives";
        for (Objective o : spec.objectives) echo << ' ' << objective_name(o);
        echo << "\n" << detail::echo_train(spec.train);
        report.config_echo = echo.str();
    }

    struct Task {
        double fraction;
        std::uint64_t seed;
        Objective objective;
    };
    std::vector<Task> tasks;
    for (double f : spec.grid) {
        try {
            validate_dataset_config(sweep_point_config(spec, f, spec.seeds.front()));
        } catch (const ConfigError& e) {
            report.notes.push_back("skipped fraction " + format_g9(f) + ": " + e.what());
            continue;
        }
        for (std::uint64_t s : spec.seeds)
            for (Objective o : spec.objectives) tasks.push_back({f, s, o});
    }

    std::vector<StudyCell> cells(tasks.size());
    detail::parallel_cells(tasks.size(), jobs, [&](std::size_t i) {
        const Task& t = tasks[i];
        const Dataset ds = generate(sweep_point_config(spec, t.fraction, t.seed));
        TrainConfig tc = spec.train;
        tc.objective = t.objective;
        tc.seed = t.seed;
        const TrainedModel model = train(ds, tc);
        DiscriminatorConfig dc;
        dc.seed = derive_seed(t.seed, "sweep/disc");
        const DivergenceReport div =
            trained_h_divergence(model.encoder, ds, spec.complementary_source, tc.target_domain, dc);
        StudyCell& cell = cells[i];
        cell.study = report.kind;
        cell.label = objective_name(t.objective);
        cell.fraction = t.fraction;
        cell.seed = t.seed;
        cell.accuracy = model.final_eval.accuracy;
        cell.risk = model.final_eval.risk;
        cell.d_hat = div.d_hat;
        cell.train_total = detail::total_trained(model);
    });
    report.cells = std::move(cells);

    // verdicts are recomputable from the cells alone
    bool budget_ok = true;
    for (const StudyCell& c : report.cells)
        if (c.train_total != report.cells.front().train_total) budget_ok = false;
    report.verdicts.emplace_back("constant_budget", report.cells.empty() ? "EMPTY"
                                 : budget_ok ? "PASS " + std::to_string(report.cells.front().train_total)
                                             : "FAIL");

    for (Objective o : spec.objectives) {
        const std::string label = objective_name(o);
        std::vector<double> fractions, means;
        for (const StudyAggregate& a : aggregate_cells(report.cells))
            if (a.label == label) {
                fractions.push_back(a.fraction);
                means.push_back(a.mean_accuracy);
            }
        if (fractions.empty()) continue;
        if (fractions.size() >= 3)
            report.verdicts.emplace_back("spearman_" + label, format_g9(spearman_rho(fractions, means)));
        // per-seed comparison of the grid endpoints
        const double lo = *std::min_element(fractions.begin(), fractions.end());
        const double hi = *std::max_element(fractions.begin(), fractions.end());
        std::size_t wins = 0, total = 0;
        for (std::uint64_t s : spec.seeds) {
            double acc_lo = std::numeric_limits<double>::quiet_NaN(), acc_hi = acc_lo;
            for (const StudyCell& c : report.cells) {
                if (c.label != label || c.seed != s) continue;
                if (c.fraction == lo) acc_lo = c.accuracy;
                if (c.fraction == hi) acc_hi = c.accuracy;
            }
            if (std::isnan(acc_lo) || std::isnan(acc_hi)) continue;
            ++total;
            if (acc_hi >= acc_lo) ++wins;
        }
        report.verdicts.emplace_back("endpoint_gain_" + label,
                                     std::to_string(wins) + "/" + std::to_string(total));
    }
    return report;
}

struct AsymmetryReport {
    std::vector<std::pair<std::string, double>> ranked;  // (domain, standalone accuracy), best first
    std::string recommended;
};

// Standalone single-domain training accuracy ranks the domains; the best one
// is the recommended NCI target. Ties break lexicographically by name, so
// the outcome is independent of the input ordering.
inline AsymmetryReport discover_asymmetry(const Dataset& ds, const TrainConfig& tmpl) {
    if (ds.num_domains() < 2) throw ConfigError("discover_asymmetry: need at least 2 domains");
    AsymmetryReport rep;
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        const std::string& name = ds.config.domains[d].name;
        TrainConfig tc = tmpl;
        tc.objective = Objective::erm;
        tc.target_domain = name;
        tc.train_domains = {name};
        const TrainedModel m = train(ds, tc);
        rep.ranked.emplace_back(name, m.final_eval.accuracy);
    }
    std::sort(rep.ranked.begin(), rep.ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    rep.recommended = rep.ranked.front().first;
    return rep;
}

inline std::string asymmetry_report_text(const AsymmetryReport& r) {
    std::ostringstream os;
    os << "recommended " << r.recommended << "\n";
    for (const auto& [name, acc] : r.ranked) os << "standalone " << name << " " << format_g9(acc) << "\n";
    return os.str();
}

struct RiskOrderingSpec {
    DatasetConfig base;   // exactly two endpoint domains; domains[1] is interpolated toward domains[0]
    std::string target;   // one of the endpoint names
    std::size_t k = 5;    // interpolated domain count
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    TrainConfig train;    // seed/objective/train_domains overridden per variant
};

// Four estimates of the target risk per seed: pooled ERM over the k-domain
// grid (optimal-on-average proxy), NCI toward the target, target-only ERM,
// and a concept-block-only probe (shared-semantics risk proxy).
inline StudyReport risk_ordering_study(const RiskOrderingSpec& spec, std::size_t jobs = 1) {
    if (spec.base.domains.size() != 2)
        throw ConfigError("risk_ordering.base: needs exactly two endpoint domains");
    if (spec.k < 3) throw ConfigError("risk_ordering.k: need at least 3 interpolated domains");
    if (spec.seeds.empty()) throw ConfigError("risk_ordering.seeds: must not be empty");
    if (spec.target != spec.base.domains[0].name && spec.target != spec.base.domains[1].name)
        throw ConfigError("risk_ordering.target: must name one of the endpoint domains");

    DatasetConfig grid_cfg = spec.base;
    grid_cfg.domains = interpolate_domains(spec.base.domains[0], spec.base.domains[1], spec.k);

    StudyReport report;
    report.kind = "risk_ordering";
    {
        std::ostringstream echo;
        echo << "study risk_ordering\n" << detail::echo_dataset(grid_cfg);
        echo << "target " << spec.target << "\nk " << spec.k << "\nseeds";
        for (std::uint64_t s : spec.seeds) echo << ' ' << s;
        echo << "\n" << detail::echo_train(spec.train);
        report.config_echo = echo.str();
    }

    static const char* kVariants[] = {"pooled_erm", "nci", "target_only", "concept_probe"};
    std::vector<StudyCell> cells(spec.seeds.size() * 4);
    detail::parallel_cells(spec.seeds.size(), jobs, [&](std::size_t si) {
        const std::uint64_t seed = spec.seeds[si];
        DatasetConfig cfg = grid_cfg;
        cfg.seed = seed;
        const Dataset ds = generate(cfg);
        const int target_idx = ds.domain_index(spec.target);

        const auto run = [&](Objective obj, const std::vector<std::string>& train_domains) {
            TrainConfig tc = spec.train;
            tc.objective = obj;
            tc.seed = seed;
            tc.target_domain = spec.target;
            tc.train_domains = train_domains;
            return train(ds, tc);
        };
        std::vector<std::string> all_names;
        for (const DomainSpec& d : cfg.domains) all_names.push_back(d.name);

        const TrainedModel pooled = run(Objective::erm, all_names);
        const TrainedModel nci_model = run(Objective::nci, all_names);
        const TrainedModel target_only = run(Objective::erm, {spec.target});

        // concept-block probe: a frozen column-selection encoder plus a
        // classifier fitted on the target train split
        ModelParams slice;
        slice.name = "concept_slice";
        {
            Layer l;
            l.W = Tensor({ds.feature_dim, ds.config.concept_dim});
            for (std::size_t c = 0; c < ds.config.concept_dim; ++c) l.W.data[c * ds.config.concept_dim + c] = 1.0;
            l.b = Tensor({ds.config.concept_dim});
            l.act = Activation::linear;
            slice.layers.push_back(std::move(l));
        }
        const std::vector<const Sample*> tr = domain_split(ds, target_idx, false);
        const std::vector<const Sample*> ev = domain_split(ds, target_idx, true);
        Tensor Xtr = forward(slice, feature_matrix(tr, ds.feature_dim));
        std::vector<int> ytr(tr.size());
        for (std::size_t i = 0; i < tr.size(); ++i) ytr[i] = tr[i]->label;
        ClassifierOptions popts;
        popts.epochs = spec.train.epochs;
        const ModelParams probe_head =
            fit_classifier(Xtr, ytr, ds.config.num_classes, popts, derive_seed(seed, "risk/probe"));
        const RiskReport probe_risk = empirical_risk(slice, probe_head, ev);

        const auto fill = [&](std::size_t slot, const char* label, double acc, double risk,
                              std::size_t trained) {
            StudyCell& cell = cells[si * 4 + slot];
            cell.study = report.kind;
            cell.label = label;
            cell.seed = seed;
            cell.accuracy = acc;
            cell.risk = risk;
            cell.train_total = trained;
        };
        fill(0, kVariants[0], pooled.final_eval.accuracy, pooled.final_eval.risk,
             detail::total_trained(pooled));
        fill(1, kVariants[1], nci_model.final_eval.accuracy, nci_model.final_eval.risk,
             detail::total_trained(nci_model));
        fill(2, kVariants[2], target_only.final_eval.accuracy, target_only.final_eval.risk,
             detail::total_trained(target_only));
        fill(3, kVariants[3], 1.0 - probe_risk.zero_one, probe_risk.cross_entropy, tr.size());
    });
    report.cells = std::move(cells);

    const auto risk_of = [&](const char* label, std::uint64_t seed) {
        for (const StudyCell& c : report.cells)
            if (c.label == label && c.seed == seed) return c.risk;
        throw ContractError("risk_ordering: missing cell");
    };
    std::size_t t_le = 0, nci_le = 0;
    double gap_sum = 0.0;
    for (std::uint64_t s : spec.seeds) {
        if (risk_of("target_only", s) <= risk_of("pooled_erm", s)) ++t_le;
        if (risk_of("nci", s) <= risk_of("pooled_erm", s)) ++nci_le;
    }
    for (const StudyCell& c : report.cells)
        if (c.label == "target_only")
            gap_sum += c.accuracy;
    for (const StudyCell& c : report.cells)
        if (c.label == "pooled_erm") gap_sum -= c.accuracy;
    const std::string n = std::to_string(spec.seeds.size());
    report.verdicts.emplace_back("target_only_le_pooled", std::to_string(t_le) + "/" + n);
    report.verdicts.emplace_back("nci_le_pooled", std::to_string(nci_le) + "/" + n);
    report.verdicts.emplace_back(
        "gap_points_mean", format_g9(100.0 * gap_sum / static_cast<double>(spec.seeds.size())));
    return report;
}

struct BenchmarkSpec {
    DatasetConfig base;
    std::string divergence_source;  // source side of the d_hat pair
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<Objective> objectives = {Objective::nci, Objective::commutative};
    TrainConfig train;
};

// Fixed asymmetric benchmark: every (seed, objective) pair trains on the
// seed's dataset and reports target accuracy plus the trained divergence of
// the frozen encoder.
inline StudyReport objective_benchmark(const BenchmarkSpec& spec, std::size_t jobs = 1) {
    if (spec.seeds.empty()) throw ConfigError("benchmark.seeds: must not be empty");
    if (spec.objectives.empty()) throw ConfigError("benchmark.objectives: must not be empty");
    StudyReport report;
    report.kind = "objective_benchmark";
    {
        std::ostringstream echo;
        echo << "study objective_benchmark\n" << detail::echo_dataset(spec.base);
        echo << "divergence_source " << spec.divergence_source << "\nseeds";
        for (std::uint64_t s : spec.seeds) echo << ' ' << s;
        echo << "\nobjectives";
        for (Objective o : spec.objectives) echo << ' ' << objective_name(o);
        echo << "\n" << detail::echo_train(spec.train);
        report.config_echo = echo.str();
    }

    const std::size_t m = spec.objectives.size();
    std::vector<StudyCell> cells(spec.seeds.size() * m);
    detail::parallel_cells(spec.seeds.size(), jobs, [&](std::size_t si) {
        const std::uint64_t seed = spec.seeds[si];
        DatasetConfig cfg = spec.base;
        cfg.seed = seed;
        const Dataset ds = generate(cfg);
        for (std::size_t oi = 0; oi < m; ++oi) {
            TrainConfig tc = spec.train;
            tc.objective = spec.objectives[oi];
            tc.seed = seed;
            const TrainedModel model = train(ds, tc);
            DiscriminatorConfig dc;
            dc.seed = derive_seed(seed, "benchmark/disc", oi);
            const DivergenceReport div =
                trained_h_divergence(model.encoder, ds, spec.divergence_source, tc.target_domain, dc);
            StudyCell& cell = cells[si * m + oi];
            cell.study = report.kind;
            cell.label = objective_name(spec.objectives[oi]);
            cell.seed = seed;
            cell.accuracy = model.final_eval.accuracy;
            cell.risk = model.final_eval.risk;
            cell.d_hat = div.d_hat;
            cell.train_total = detail::total_trained(model);
        }
    });
    report.cells = std::move(cells);

    const auto cell_of = [&](const std::string& label, std::uint64_t seed) -> const StudyCell& {
        for (const StudyCell& c : report.cells)
            if (c.label == label && c.seed == seed) return c;
        throw ContractError("benchmark: missing cell");
    };
    if (m >= 2) {
        const std::string a = objective_name(spec.objectives[0]);
        const std::string b = objective_name(spec.objectives[1]);
        double mean_gap = 0.0;
        std::size_t acc_wins = 0, div_wins = 0;
        for (std::uint64_t s : spec.seeds) {
            const StudyCell& ca = cell_of(a, s);
            const StudyCell& cb = cell_of(b, s);
            mean_gap += ca.accuracy - cb.accuracy;
            if (ca.accuracy > cb.accuracy) ++acc_wins;
            if (ca.d_hat < cb.d_hat) ++div_wins;
        }
        mean_gap = 100.0 * mean_gap / static_cast<double>(spec.seeds.size());
        const std::string n = std::to_string(spec.seeds.size());
        report.verdicts.emplace_back("mean_gap_points_" + a + "_minus_" + b, format_g9(mean_gap));
        report.verdicts.emplace_back("accuracy_wins_" + a, std::to_string(acc_wins) + "/" + n);
        report.verdicts.emplace_back("divergence_wins_" + a, std::to_string(div_wins) + "/" + n);
    }
    return report;
}

// ---- rendering ----

namespace detail {

inline void write_file_or_throw(const std::filesystem::path& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    os << body;
    if (!os) throw Error("short write to '" + path.string() + "'");
}

inline std::string svg_color(std::size_t i) {
    static const char* kPalette[] = {"#1f6f8b", "#c0532e", "#3a7d44", "#7a4b94", "#8a7a1e", "#555555"};
    return kPalette[i % 6];
}

}  // namespace detail

inline std::string cells_csv_text(const StudyReport& r) {
    std::ostringstream os;
    os << "study,label,fraction,seed,accuracy,risk,d_hat,train_total\n";
    for (const StudyCell& c : r.cells)
        os << c.study << ',' << c.label << ',' << format_g9(c.fraction) << ',' << c.seed << ','
           << format_g9(c.accuracy) << ',' << format_g9(c.risk) << ',' << format_g9(c.d_hat) << ','
           << c.train_total << "\n";
    return os.str();
}

inline std::string summary_text(const StudyReport& r) {
    std::ostringstream os;
    os << "kind " << r.kind << "\n";
    os << "cells " << r.cells.size() << "\n";
    for (const auto& [k, v] : r.verdicts) os << "verdict " << k << " " << v << "\n";
    for (const std::string& n : r.notes) os << "note " << n << "\n";
    return os.str();
}

// Accuracy curves, one path per label, with a mean +- std band. The x axis
// is the sweep fraction when present, seed order otherwise.
inline std::string curve_svg_text(const StudyReport& r) {
    const double W = 640.0, H = 400.0, ml = 60.0, mr = 20.0, mt = 20.0, mb = 40.0;
    std::vector<StudyAggregate> aggs = aggregate_cells(r.cells);
    const bool has_fraction = !aggs.empty() && !std::isnan(aggs.front().fraction);

    std::vector<std::string> labels;
    for (const StudyAggregate& a : aggs)
        if (std::find(labels.begin(), labels.end(), a.label) == labels.end()) labels.push_back(a.label);

    double xmin = 0.0, xmax = 1.0;
    if (has_fraction) {
        xmin = std::numeric_limits<double>::infinity();
        xmax = -xmin;
        for (const StudyAggregate& a : aggs) {
            xmin = std::min(xmin, a.fraction);
            xmax = std::max(xmax, a.fraction);
        }
        if (xmin == xmax) {
            xmin -= 0.5;
            xmax += 0.5;
        }
    }
    const auto xpos = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto ypos = [&](double acc) { return H - mb - std::clamp(acc, 0.0, 1.0) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr) << "\" y2=\"" << (H - mb)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (H - mb)
       << "\" stroke=\"black\"/>\n";

    for (std::size_t li = 0; li < labels.size(); ++li) {
        std::vector<const StudyAggregate*> pts;
        for (const StudyAggregate& a : aggs)
            if (a.label == labels[li]) pts.push_back(&a);
        if (pts.empty()) continue;
        const std::string color = detail::svg_color(li);

        std::ostringstream band, path;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double x = has_fraction ? xpos(pts[i]->fraction) : xpos(static_cast<double>(i) /
                                                                          std::max<std::size_t>(1, pts.size() - 1));
            band << (i ? " " : "") << format_f6(x) << ','
                 << format_f6(ypos(pts[i]->mean_accuracy + pts[i]->std_accuracy));
        }
        for (std::size_t ri = pts.size(); ri-- > 0;) {
            const double x = has_fraction ? xpos(pts[ri]->fraction) : xpos(static_cast<double>(ri) /
                                                                           std::max<std::size_t>(1, pts.size() - 1));
            band << ' ' << format_f6(x) << ',' << format_f6(ypos(pts[ri]->mean_accuracy - pts[ri]->std_accuracy));
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double x = has_fraction ? xpos(pts[i]->fraction) : xpos(static_cast<double>(i) /
                                                                          std::max<std::size_t>(1, pts.size() - 1));
            path << (i ? " L " : "M ") << format_f6(x) << ' ' << format_f6(ypos(pts[i]->mean_accuracy));
        }
        os << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << (ml + 10.0) << "\" y=\"" << (mt + 16.0 * static_cast<double>(li + 1))
           << "\" fill=\"" << color << "\" font-size=\"12\">" << labels[li] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// cells.csv, summary.txt, curve.svg, config_echo. Byte-deterministic given
// the report.
inline void render_report(const StudyReport& r, const std::filesystem::path& out_dir) {
    if (r.cells.empty()) throw ValueError("render_report: empty report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create '" + out_dir.string() + "': " + ec.message());
    detail::write_file_or_throw(out_dir / "cells.csv", cells_csv_text(r));
    detail::write_file_or_throw(out_dir / "summary.txt", summary_text(r));
    detail::write_file_or_throw(out_dir / "curve.svg", curve_svg_text(r));
    detail::write_file_or_throw(out_dir / "config_echo", r.config_echo);
}

}  // namespace nci

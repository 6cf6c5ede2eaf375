#pragma once

// Command line front end. Nine subcommands over the library, one run
// directory per invocation. Conventions: diagnostics go to stderr, data goes
// to files and stdout, and the fully resolved configuration is echoed into
// the run directory as config_echo.json. Exit codes: 0 success, 1 invalid
// config or a failed run, 2 usage errors.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nci/algebra.hpp"
#include "nci/config.hpp"
#include "nci/divergence.hpp"
#include "nci/experiments.hpp"
#include "nci/selftest.hpp"
#include "nci/synth.hpp"
#include "nci/train.hpp"

namespace nci {

namespace cli_detail {

struct Options {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::size_t jobs = 1;
    std::string mode = "min";
    std::string objective;
    std::string target;
};

inline std::filesystem::path ensure_out_dir(const std::string& out) {
    const std::filesystem::path dir(out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + out + "': " + ec.message());
    return dir;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << text;
}

// Top-level view over a config file. One file may carry sections for several
// subcommands; each command parses the sections it reads and finish() waves
// the rest of the known vocabulary through, so only genuine top-level typos
// fail. Keys inside a parsed section stay strict.
struct ConfigRoot {
    json root;
    detail::ObjectView view;

    explicit ConfigRoot(const std::string& path) : root(load_json_file(path)), view(root, "") {}

    void finish() {
        for (const char* s : {"dataset", "train", "eval", "hdiv", "bounds", "sweep", "algebra"})
            view.maybe(s);
        view.finish();
    }
};

inline int cmd_gen(const Options& o) {
    ConfigRoot c(o.config);
    DatasetConfig cfg = parse_dataset_config(c.view.require("dataset"), "dataset");
    c.finish();
    if (o.has_seed) cfg.seed = o.seed;

    const auto dir = ensure_out_dir(o.out);
    const Dataset ds = generate(cfg);
    write_dataset_csv(ds, dir / "dataset.csv");

    json echo;
    echo["subcommand"] = "gen";
    echo["dataset"] = dataset_config_to_json(cfg);
    write_config_echo(dir, echo);
    std::cout << "rows " << dataset_csv_text(ds).size() << " bytes, domains " << ds.num_domains()
              << ", feature_dim " << ds.feature_dim << "\n";
    return 0;
}

inline std::string train_metrics_text(const TrainedModel& m) {
    std::ostringstream os;
    os << "objective " << objective_name(m.config.objective) << "\n";
    os << "target_domain " << m.config.target_domain << "\n";
    os << "final_accuracy " << format_g17(m.final_eval.accuracy) << "\n";
    os << "final_risk " << format_g17(m.final_eval.risk) << "\n";
    os << "train_counts";
    for (std::size_t n : m.train_counts) os << " " << n;
    os << "\n";
    return os.str();
}

inline int cmd_train(const Options& o) {
    ConfigRoot c(o.config);
    DatasetConfig dcfg = parse_dataset_config(c.view.require("dataset"), "dataset");
    TrainConfig tcfg = parse_train_config(c.view.require("train"), "train");
    c.finish();
    if (o.has_seed) {
        dcfg.seed = o.seed;
        tcfg.seed = o.seed;
    }
    if (!o.objective.empty()) tcfg.objective = objective_from_name(o.objective);
    if (!o.target.empty()) tcfg.target_domain = o.target;

    const auto dir = ensure_out_dir(o.out);
    const Dataset ds = generate(dcfg);
    const TrainedModel m = train(ds, tcfg);
    save_trained_model(m, dir / "model.ckpt", dcfg);
    write_curves_csv(m, dir / "curves.csv");
    const std::string metrics = train_metrics_text(m);
    write_text_file(dir / "metrics.txt", metrics);

    json echo;
    echo["subcommand"] = "train";
    echo["dataset"] = dataset_config_to_json(dcfg);
    echo["train"] = train_config_to_json(tcfg);
    write_config_echo(dir, echo);
    std::cout << metrics;
    return 0;
}

inline int cmd_eval(const Options& o) {
    ConfigRoot c(o.config);
    DatasetConfig dcfg = parse_dataset_config(c.view.require("dataset"), "dataset");
    const EvalSpec spec = parse_eval_spec(c.view.require("eval"), "eval");
    c.finish();
    if (o.has_seed) dcfg.seed = o.seed;

    const auto dir = ensure_out_dir(o.out);
    const Dataset ds = generate(dcfg);
    const Checkpoint ck = load_checkpoint(spec.checkpoint);
    TrainedModel tm;
    tm.encoder = ck.model("encoder");
    tm.head = ck.model("head");
    const EvalResult r = evaluate_split(tm, ds, spec.domain, spec.eval_split);

    std::ostringstream os;
    os << "domain " << spec.domain << "\n";
    os << "split " << (spec.eval_split ? "eval" : "train") << "\n";
    os << "accuracy " << format_g17(r.accuracy) << "\n";
    os << "risk " << format_g17(r.risk) << "\n";
    os << "checkpoint_config_hash " << ck.config_hash << "\n";
    write_text_file(dir / "metrics.txt", os.str());

    json echo;
    echo["subcommand"] = "eval";
    echo["dataset"] = dataset_config_to_json(dcfg);
    echo["eval"]["checkpoint"] = spec.checkpoint;
    echo["eval"]["domain"] = spec.domain;
    echo["eval"]["split"] = spec.eval_split ? "eval" : "train";
    write_config_echo(dir, echo);
    std::cout << os.str();
    return 0;
}

inline int cmd_hdiv(const Options& o) {
    ConfigRoot c(o.config);
    DatasetConfig dcfg = parse_dataset_config(c.view.require("dataset"), "dataset");
    const HdivSpec spec = parse_hdiv_spec(c.view.require("hdiv"), "hdiv");
    c.finish();
    if (o.has_seed) dcfg.seed = o.seed;

    const auto dir = ensure_out_dir(o.out);
    const Dataset ds = generate(dcfg);
    const auto eval_matrix = [&](const std::string& name) {
        const auto xs = domain_split(ds, ds.domain_index(name), true);
        if (xs.empty()) throw ValueError("hdiv: no eval samples in domain '" + name + "'");
        return feature_matrix(xs, ds.feature_dim);
    };
    Tensor A = eval_matrix(spec.source);
    Tensor B = eval_matrix(spec.target);

    Checkpoint ck;
    if (!spec.checkpoint.empty()) {
        ck = load_checkpoint(spec.checkpoint);
        A = forward(ck.model("encoder"), A);
        B = forward(ck.model("encoder"), B);
    }

    DivergenceReport rep;
    if (o.mode == "min") {
        rep = exact_h_divergence(A, B, make_midpoint_stump_family(A, B));
    } else {
        if (spec.checkpoint.empty())
            throw ConfigError("hdiv.checkpoint: required for --mode fixed (supplies the discriminator)");
        const ModelParams& disc = ck.model("discriminator");
        rep = evaluate_fixed_discriminator(A, B, [&disc](const double* x, std::size_t d) {
            Tensor row({1, d});
            std::copy(x, x + d, row.data.begin());
            return forward(disc, row).data[0] > 0.0 ? 1 : 0;
        });
    }

    const std::string text = divergence_report_text(rep);
    const std::string encoder_label = spec.checkpoint.empty() ? "raw" : "checkpoint";
    write_text_file(dir / "report.txt", text);
    write_text_file(dir / "report.csv", divergence_csv_header() + "\n" +
                                            divergence_csv_row(encoder_label, spec.source, spec.target, rep) +
                                            "\n");

    json echo;
    echo["subcommand"] = "hdiv";
    echo["mode"] = o.mode;
    echo["dataset"] = dataset_config_to_json(dcfg);
    echo["hdiv"]["source"] = spec.source;
    echo["hdiv"]["target"] = spec.target;
    echo["hdiv"]["checkpoint"] = spec.checkpoint;
    write_config_echo(dir, echo);
    std::cout << text;
    return 0;
}

inline int cmd_bounds(const Options& o) {
    ConfigRoot c(o.config);
    const BoundsSpec spec = parse_bounds_spec(c.view.require("bounds"), "bounds");
    c.finish();

    const auto dir = ensure_out_dir(o.out);
    const BoundTerms t = target_risk_bound_terms(spec.bound);
    std::ostringstream os;
    os << "source_risk " << format_g17(t.r_s) << "\n";
    os << "vc_term " << format_g17(t.vc_term) << "\n";
    os << "estimation_term " << format_g17(t.est_term) << "\n";
    os << "adaptability " << format_g17(t.beta) << "\n";
    os << "d_hat " << format_g17(t.d_hat) << "\n";
    os << "bound_total " << format_g17(t.total) << "\n";
    if (spec.has_haussler) {
        const std::size_t m = haussler_m(spec.family_size, spec.haussler_delta, spec.haussler_epsilon);
        os << "haussler_m " << m << "\n";
        os << "haussler_eps_at_m " << format_g17(haussler_eps(spec.family_size, spec.haussler_delta, m))
           << "\n";
    }
    write_text_file(dir / "bounds.txt", os.str());

    json echo;
    echo["subcommand"] = "bounds";
    echo["bounds"] = bounds_spec_to_json(spec);
    write_config_echo(dir, echo);
    std::cout << os.str();
    return 0;
}

inline int cmd_sweep(const Options& o) {
    ConfigRoot c(o.config);
    SweepSpec spec = parse_sweep_spec(c.view.require("sweep"), "sweep");
    spec.train = parse_train_config(c.view.require("train"), "train");
    c.finish();
    if (o.has_seed) spec.seeds = {o.seed};
    if (!o.target.empty()) spec.train.target_domain = o.target;

    const auto dir = ensure_out_dir(o.out);
    const StudyReport rep = complementarity_sweep(spec, o.jobs);
    render_report(rep, dir);

    json echo;
    echo["subcommand"] = "sweep";
    echo["sweep"] = sweep_spec_to_json(spec);
    echo["train"] = train_config_to_json(spec.train);
    write_config_echo(dir, echo);
    std::cout << summary_text(rep);
    return 0;
}

inline int cmd_discover(const Options& o) {
    ConfigRoot c(o.config);
    DatasetConfig dcfg = parse_dataset_config(c.view.require("dataset"), "dataset");
    TrainConfig tmpl = parse_train_config(c.view.require("train"), "train");
    c.finish();
    if (o.has_seed) {
        dcfg.seed = o.seed;
        tmpl.seed = o.seed;
    }

    const auto dir = ensure_out_dir(o.out);
    const Dataset ds = generate(dcfg);
    const AsymmetryReport rep = discover_asymmetry(ds, tmpl);
    const std::string text = asymmetry_report_text(rep);
    write_text_file(dir / "asymmetry.txt", text);

    json echo;
    echo["subcommand"] = "discover";
    echo["dataset"] = dataset_config_to_json(dcfg);
    echo["train"] = train_config_to_json(tmpl);
    write_config_echo(dir, echo);
    std::cout << text;
    return 0;
}

inline int cmd_algebra_check(const Options& o) {
    AlgebraSpec spec;
    json echo;
    echo["subcommand"] = "algebra-check";
    if (!o.config.empty()) {
        ConfigRoot c(o.config);
        if (const json* a = c.view.maybe("algebra")) spec = parse_algebra_spec(*a, "algebra");
        c.finish();
    }
    if (o.has_seed) spec.seed = o.seed;
    echo["algebra"]["trials"] = spec.trials;
    echo["algebra"]["seed"] = spec.seed;

    const auto dir = ensure_out_dir(o.out);
    const std::set<std::string> concepts = {"c1", "c2"};
    const std::vector<SymbolicDomain> universe = {
        concept_only(concepts),
        make_symbolic_domain("s", concepts, {"s1", "s2"}),
        make_symbolic_domain("t", concepts, {"t1"}),
        make_symbolic_domain("u", concepts, {"u1"}),
        make_symbolic_domain("v", concepts, {"v1", "v2"}),
    };

    const SemigroupReport commutative = check_semigroup(OperatorKind::commutative, universe, spec.trials, spec.seed);
    const SemigroupReport right = check_semigroup(OperatorKind::right_invariant, universe, spec.trials, spec.seed);
    const DistributivityReport inv_dist =
        check_distributivity(SymbolicEncoder::invariant(universe), universe[1], universe[2]);
    const DistributivityReport sens_dist =
        check_distributivity(SymbolicEncoder::domain_sensitive(universe), universe[1], universe[2]);

    std::vector<SymbolicSample> sources, targets;
    for (int i = 0; i < 3; ++i)
        sources.push_back({"c^" + std::to_string(i), "d_s^" + std::to_string(i), "s"});
    for (int i = 0; i < 2; ++i)
        targets.push_back({"c^" + std::to_string(3 + i), "d_t^" + std::to_string(i), "t"});
    const std::vector<SymbolicSample> fused = sample_fusion(sources, targets);

    std::ostringstream os;
    os << "commutative operator:\n" << semigroup_report_text(OperatorKind::commutative, commutative) << "\n";
    os << "right-invariant operator:\n" << semigroup_report_text(OperatorKind::right_invariant, right) << "\n";
    os << "distributivity, invariant encoder: " << (inv_dist.holds ? "holds" : "fails") << " lhs "
       << inv_dist.lhs << " rhs " << inv_dist.rhs << "\n";
    os << "distributivity, sensitive encoder: " << (sens_dist.holds ? "holds" : "fails") << " lhs "
       << sens_dist.lhs << " rhs " << sens_dist.rhs << "\n";
    os << "sample fusion: " << sources.size() << " source + " << targets.size() << " target -> "
       << fused.size() << " effective target samples\n";
    for (const SymbolicSample& x : fused)
        os << "  [" << x.concept_part << "|" << x.domain_part << "] in " << x.domain << "\n";
    const std::string text = os.str();
    write_text_file(dir / "algebra_report.txt", text);
    write_config_echo(dir, echo);
    std::cout << text;

    // The expected algebra: the commutative operator satisfies every axiom,
    // the right-invariant one is a non-commutative semigroup, the invariant
    // encoder distributes and the sensitive one does not.
    const bool expected = commutative.all_ok() && right.closure_ok && right.associativity_ok &&
                          !right.commutativity_ok && inv_dist.holds && !sens_dist.holds;
    if (!expected) {
        std::cerr << "algebra-check: expected axiom pattern does not hold\n";
        return 1;
    }
    return 0;
}

inline int cmd_selftest(const Options& o) {
    const auto dir = ensure_out_dir(o.out);
    const AcceptanceOutcome outcome = run_selftest(dir, o.jobs);
    std::cout << acceptance_text(outcome);

    json echo;
    echo["subcommand"] = "selftest";
    write_config_echo(dir, echo);

    if (!outcome.all_pass()) {
        std::ostringstream os;
        for (const std::string& name : outcome.failing_names()) os << " " << name;
        std::cerr << "selftest failed:" << os.str() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    using cli_detail::Options;
    Options o;

    CLI::App app{"desk-scale laboratory for non-commutative invariance in domain adaptation"};
    app.require_subcommand(1);

    const auto common = [&o](CLI::App* sub, bool config_required, bool with_seed) {
        if (config_required)
            sub->add_option("--config", o.config, "JSON config file")->required();
        else
            sub->add_option("--config", o.config, "JSON config file (optional)");
        sub->add_option("--out", o.out, "run directory for artifacts and the config echo")->required();
        if (with_seed)
            sub->add_option("--seed", o.seed, "override every seed in the config")
                ->each([&o](const std::string&) { o.has_seed = true; });
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a dataset (dataset.csv + dataset.csv.meta)");
    common(gen, true, true);
    CLI::App* trn = app.add_subcommand("train", "train an encoder/head pair and checkpoint it");
    common(trn, true, true);
    trn->add_option("--objective", o.objective, "override the training objective (erm|commutative|conditional|nci)");
    trn->add_option("--target", o.target, "override the target domain");
    CLI::App* evl = app.add_subcommand("eval", "evaluate a checkpoint on one domain split");
    common(evl, true, true);
    CLI::App* hdv = app.add_subcommand("hdiv", "empirical H-divergence between two domains");
    common(hdv, true, true);
    hdv->add_option("--mode", o.mode, "min = exact family minimum, fixed = checkpointed discriminator")
        ->check(CLI::IsMember({"min", "fixed"}));
    CLI::App* bnd = app.add_subcommand("bounds", "target-risk bound and sample-complexity calculator");
    common(bnd, true, false);
    CLI::App* swp = app.add_subcommand("sweep", "complementarity sweep (cells.csv, summary, curve.svg)");
    common(swp, true, true);
    swp->add_option("--jobs", o.jobs, "concurrent sweep cells")->check(CLI::PositiveNumber);
    swp->add_option("--target", o.target, "override the target domain");
    CLI::App* dsc = app.add_subcommand("discover", "rank domains by standalone accuracy, recommend a target");
    common(dsc, true, true);
    CLI::App* alg = app.add_subcommand("algebra-check", "verify the operator algebra on a symbolic universe");
    common(alg, false, true);
    CLI::App* slf = app.add_subcommand("selftest", "run the full acceptance gate twice and compare");
    slf->add_option("--out", o.out, "run directory for both passes")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << "usage: nci <gen|train|eval|hdiv|bounds|sweep|discover|algebra-check|selftest> "
                     "[--config FILE] [--out DIR] [--seed N] [options]\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cli_detail::cmd_gen(o);
        if (trn->parsed()) return cli_detail::cmd_train(o);
        if (evl->parsed()) return cli_detail::cmd_eval(o);
        if (hdv->parsed()) return cli_detail::cmd_hdiv(o);
        if (bnd->parsed()) return cli_detail::cmd_bounds(o);
        if (swp->parsed()) return cli_detail::cmd_sweep(o);
        if (dsc->parsed()) return cli_detail::cmd_discover(o);
        if (alg->parsed()) return cli_detail::cmd_algebra_check(o);
        if (slf->parsed()) return cli_detail::cmd_selftest(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand dispatched\n";
    return 2;
}

}  // namespace nci

// End-to-end tests of the command line tool. Every case shells out to the
// real binary, so argument parsing, exit codes, stream separation, and the
// artifact layout are all exercised exactly as a user sees them.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nci/divergence.hpp"

namespace fs = std::filesystem;

namespace {

struct ProcResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("nci_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ProcResult run_tool(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fresh_dir("proc_" + std::to_string(counter++));
    const fs::path out_file = dir / "stdout";
    const fs::path err_file = dir / "stderr";
    const std::string cmd = std::string(NCI_CLI_BINARY) + " " + args + " > " + out_file.string() +
                            " 2> " + err_file.string();
    const int raw = std::system(cmd.c_str());
    ProcResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

const char* k_dataset_json = R"({
    "seed": 5,
    "concept_dim": 5,
    "num_classes": 3,
    "num_supports": 120,
    "samples_per_domain": 150,
    "domains": [
      {"name": "src", "concept_noise": 0.8, "block_dim": 3, "block_noise": 0.2},
      {"name": "tgt", "label_leak": 1.2, "block_dim": 3, "block_noise": 0.1}
    ]
  })";

fs::path write_gen_config(const fs::path& dir) {
    const fs::path p = dir / "gen.json";
    write_file(p, std::string("{\n  \"dataset\": ") + k_dataset_json + "\n}\n");
    return p;
}

fs::path write_train_config(const fs::path& dir) {
    const fs::path p = dir / "train.json";
    write_file(p, std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "train": {
    "objective": "nci",
    "target_domain": "tgt",
    "seed": 5,
    "epochs": 4,
    "batch_size": 32,
    "train_quota_per_domain": 80
  }
})");
    return p;
}

}  // namespace

TEST_CASE("help exits 0 and names every subcommand") {
    const ProcResult r = run_tool("--help");
    CHECK(r.code == 0);
    for (const char* name :
         {"gen", "train", "eval", "hdiv", "bounds", "sweep", "discover", "algebra-check", "selftest"})
        CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("unknown subcommand exits 2 with usage on stderr") {
    const ProcResult r = run_tool("fribble");
    CHECK(r.code == 2);
    CHECK(r.out.empty());
    CHECK(r.err.find("usage: nci") != std::string::npos);
}

TEST_CASE("missing required flag exits 2") {
    const ProcResult r = run_tool("gen --out /tmp/nci_cli_nowhere");
    CHECK(r.code == 2);
    CHECK(r.err.find("--config") != std::string::npos);
}

TEST_CASE("gen is byte-deterministic and honors the seed override") {
    const fs::path dir = fresh_dir("gen");
    const fs::path cfg = write_gen_config(dir);
    const std::string base = "gen --config " + cfg.string() + " --out " + (dir / "a").string();
    REQUIRE(run_tool(base).code == 0);
    REQUIRE(run_tool("gen --config " + cfg.string() + " --out " + (dir / "b").string()).code == 0);

    CHECK(slurp(dir / "a" / "dataset.csv") == slurp(dir / "b" / "dataset.csv"));
    CHECK(slurp(dir / "a" / "dataset.csv.meta") == slurp(dir / "b" / "dataset.csv.meta"));
    CHECK(slurp(dir / "a" / "config_echo.json") == slurp(dir / "b" / "config_echo.json"));

    REQUIRE(run_tool("gen --config " + cfg.string() + " --out " + (dir / "c").string() + " --seed 99").code == 0);
    CHECK(slurp(dir / "a" / "dataset.csv") != slurp(dir / "c" / "dataset.csv"));
    const auto echo = nlohmann::json::parse(slurp(dir / "c" / "config_echo.json"));
    CHECK(echo["dataset"]["seed"].get<std::uint64_t>() == 99);
}

TEST_CASE("unknown config keys fail with the full field path") {
    const fs::path dir = fresh_dir("badkey");
    write_file(dir / "bad.json", R"({
  "dataset": {
    "domains": [{"name": "src", "leak_foo": 1.0}]
  }
})");
    const ProcResult r = run_tool("gen --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("dataset.domains[0].leak_foo: unknown key") != std::string::npos);
}

TEST_CASE("one config file can carry sections for several subcommands") {
    const fs::path dir = fresh_dir("shared");
    write_file(dir / "all.json", std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "train": {"objective": "erm", "target_domain": "tgt", "epochs": 2, "batch_size": 32},
  "hdiv": {"source": "src", "target": "tgt"},
  "bounds": {"source_risk": 0.1, "sample_size": 1000, "vc_dim": 5, "delta": 0.05,
             "adaptability": 0.1, "d_hat": 0.2}
})");
    const std::string cfg = (dir / "all.json").string();
    CHECK(run_tool("gen --config " + cfg + " --out " + (dir / "g").string()).code == 0);
    CHECK(run_tool("bounds --config " + cfg + " --out " + (dir / "b").string()).code == 0);
    CHECK(run_tool("hdiv --config " + cfg + " --out " + (dir / "h").string()).code == 0);

    // sibling sections pass, top-level typos still fail
    write_file(dir / "typo.json", std::string("{\n  \"dataset\": ") + k_dataset_json + ",\n  \"sweeps\": {}\n}");
    const ProcResult r = run_tool("gen --config " + (dir / "typo.json").string() + " --out " + (dir / "t").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("sweeps: unknown key") != std::string::npos);
}

TEST_CASE("semantic config errors exit 1 with the offending field") {
    const fs::path dir = fresh_dir("semantic");
    write_file(dir / "t.json", std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "train": {"objective": "nci", "epochs": 2}
})");
    const ProcResult r = run_tool("train --config " + (dir / "t.json").string() + " --out " + (dir / "o").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("train.target_domain") != std::string::npos);
}

TEST_CASE("bounds reproduces the pinned sample-complexity example") {
    const fs::path dir = fresh_dir("bounds");
    write_file(dir / "b.json", R"({
  "bounds": {
    "source_risk": 0.12,
    "sample_size": 5000,
    "vc_dim": 7,
    "delta": 0.05,
    "adaptability": 0.1,
    "d_hat": 0.25,
    "haussler": {"family_size": 20, "delta": 0.05, "epsilon": 0.05}
  }
})");
    const ProcResult r = run_tool("bounds --config " + (dir / "b.json").string() + " --out " + (dir / "o").string());
    REQUIRE(r.code == 0);
    CHECK(r.out.find("haussler_m 120\n") != std::string::npos);

    // stdout mirrors the file, and the total matches the library calculator
    CHECK(r.out == slurp(dir / "o" / "bounds.txt"));
    nci::BoundInputs in;
    in.r_s = 0.12;
    in.n = 5000;
    in.d = 7;
    in.delta = 0.05;
    in.beta = 0.1;
    in.d_hat = 0.25;
    const std::string want = "bound_total " + nci::format_g17(nci::target_risk_bound(in)) + "\n";
    CHECK(r.out.find(want) != std::string::npos);
}

TEST_CASE("train writes checkpoint, curves, metrics, and an echo with overrides applied") {
    const fs::path dir = fresh_dir("train");
    const fs::path cfg = write_train_config(dir);
    const ProcResult r = run_tool("train --config " + cfg.string() + " --out " + (dir / "o").string() +
                                  " --seed 11 --objective erm");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "o" / "model.ckpt"));
    CHECK(fs::exists(dir / "o" / "curves.csv"));
    CHECK(r.out == slurp(dir / "o" / "metrics.txt"));
    CHECK(r.out.find("objective erm\n") != std::string::npos);

    // --seed replaces every seed in the config
    const auto echo = nlohmann::json::parse(slurp(dir / "o" / "config_echo.json"));
    CHECK(echo["dataset"]["seed"].get<std::uint64_t>() == 11);
    CHECK(echo["train"]["seed"].get<std::uint64_t>() == 11);
    CHECK(echo["train"]["objective"].get<std::string>() == "erm");
}

TEST_CASE("eval reproduces the training-time final evaluation") {
    const fs::path dir = fresh_dir("eval");
    const fs::path cfg = write_train_config(dir);
    REQUIRE(run_tool("train --config " + cfg.string() + " --out " + (dir / "t").string()).code == 0);
    const std::string metrics = slurp(dir / "t" / "metrics.txt");

    write_file(dir / "e.json", std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "eval": {"checkpoint": ")" + (dir / "t" / "model.ckpt").string() + R"(", "domain": "tgt"}
})");
    const ProcResult r = run_tool("eval --config " + (dir / "e.json").string() + " --out " + (dir / "o").string());
    REQUIRE(r.code == 0);

    const auto line_of = [](const std::string& text, const std::string& key) {
        const auto pos = text.find(key);
        REQUIRE(pos != std::string::npos);
        return text.substr(pos, text.find('\n', pos) - pos);
    };
    CHECK(line_of(r.out, "accuracy ") == line_of(metrics, "final_accuracy ").substr(6));
    CHECK(line_of(r.out, "risk ") == line_of(metrics, "final_risk ").substr(6));
}

TEST_CASE("hdiv runs both modes and rejects fixed mode without a discriminator") {
    const fs::path dir = fresh_dir("hdiv");
    const fs::path cfg = write_train_config(dir);
    REQUIRE(run_tool("train --config " + cfg.string() + " --out " + (dir / "t").string()).code == 0);

    const std::string raw_cfg = std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "hdiv": {"source": "src", "target": "tgt"}
})";
    write_file(dir / "raw.json", raw_cfg);
    write_file(dir / "ck.json", std::string("{\n  \"dataset\": ") + k_dataset_json + R"(,
  "hdiv": {"source": "src", "target": "tgt", "checkpoint": ")" + (dir / "t" / "model.ckpt").string() + R"("}
})");

    const ProcResult min_raw = run_tool("hdiv --config " + (dir / "raw.json").string() + " --out " +
                                        (dir / "m").string() + " --mode min");
    REQUIRE(min_raw.code == 0);
    CHECK(min_raw.out.find("mode min_over_family") != std::string::npos);
    CHECK(fs::exists(dir / "m" / "report.csv"));
    CHECK(slurp(dir / "m" / "report.csv").rfind(nci::divergence_csv_header(), 0) == 0);

    const ProcResult fixed_ck = run_tool("hdiv --config " + (dir / "ck.json").string() + " --out " +
                                         (dir / "f").string() + " --mode fixed");
    REQUIRE(fixed_ck.code == 0);
    CHECK(fixed_ck.out.find("mode fixed_discriminator") != std::string::npos);

    const ProcResult fixed_raw = run_tool("hdiv --config " + (dir / "raw.json").string() + " --out " +
                                          (dir / "fr").string() + " --mode fixed");
    CHECK(fixed_raw.code == 1);
    CHECK(fixed_raw.err.find("hdiv.checkpoint") != std::string::npos);

    const ProcResult bad_mode = run_tool("hdiv --config " + (dir / "raw.json").string() + " --out " +
                                         (dir / "bm").string() + " --mode trained");
    CHECK(bad_mode.code == 2);
}

TEST_CASE("discover ranks domains and writes the report") {
    const fs::path dir = fresh_dir("discover");
    const fs::path cfg = write_train_config(dir);
    const ProcResult r = run_tool("discover --config " + cfg.string() + " --out " + (dir / "o").string());
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("recommended ", 0) == 0);
    CHECK(r.out == slurp(dir / "o" / "asymmetry.txt"));
}

TEST_CASE("algebra-check passes by default and is deterministic") {
    const fs::path dir = fresh_dir("algebra");
    const ProcResult a = run_tool("algebra-check --out " + (dir / "a").string());
    REQUIRE(a.code == 0);
    CHECK(a.out.find("commutativity PASS") != std::string::npos);
    CHECK(a.out.find("counterexample") != std::string::npos);  // right-invariant witness
    CHECK(a.out.find("effective target samples") != std::string::npos);

    const ProcResult b = run_tool("algebra-check --out " + (dir / "b").string());
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a" / "algebra_report.txt") == slurp(dir / "b" / "algebra_report.txt"));
}

TEST_CASE("sweep on a toy grid writes the full report set") {
    const fs::path dir = fresh_dir("sweep");
    write_file(dir / "s.json", R"({
  "sweep": {
    "base": {
      "seed": 1,
      "concept_dim": 4,
      "num_classes": 3,
      "num_supports": 120,
      "samples_per_domain": 150,
      "domains": [
        {"name": "src", "concept_noise": 0.6, "block_dim": 3},
        {"name": "tgt", "label_leak": 1.0, "block_dim": 3}
      ]
    },
    "complementary_source": "src",
    "grid": [0.1, 0.5],
    "seeds": [1, 2]
  },
  "train": {
    "objective": "nci",
    "target_domain": "tgt",
    "epochs": 3,
    "batch_size": 32,
    "train_quota_per_domain": 60
  }
})");
    const ProcResult r = run_tool("sweep --config " + (dir / "s.json").string() + " --out " +
                                  (dir / "o").string() + " --jobs 2");
    REQUIRE(r.code == 0);
    for (const char* f : {"cells.csv", "summary.txt", "curve.svg", "config_echo", "config_echo.json"})
        CHECK(fs::exists(dir / "o" / f));
    CHECK(slurp(dir / "o" / "cells.csv").rfind("study,label,fraction,seed,accuracy,risk,d_hat,train_total", 0) == 0);
    CHECK(r.out.find("constant_budget PASS") != std::string::npos);
}

TEST_CASE("every run directory contains the resolved config echo") {
    const fs::path dir = fresh_dir("echo");
    const fs::path cfg = write_gen_config(dir);
    REQUIRE(run_tool("gen --config " + cfg.string() + " --out " + (dir / "o").string()).code == 0);
    const auto echo = nlohmann::json::parse(slurp(dir / "o" / "config_echo.json"));
    CHECK(echo["subcommand"].get<std::string>() == "gen");
    // defaults are materialized, not just copied through
    CHECK(echo["dataset"]["shared_fraction"].get<double>() == 1.0);
    CHECK(echo["dataset"]["domains"][0]["shared_drop_fraction"].get<double>() == 0.0);
}

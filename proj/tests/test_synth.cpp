#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "nci/synth.hpp"

using namespace nci;

namespace {

DatasetConfig pair_config(std::uint64_t seed, DomainSpec src, DomainSpec tgt) {
    DatasetConfig c;
    c.seed = seed;
    c.concept_dim = 8;
    c.num_classes = 4;
    c.num_supports = 800;
    c.samples_per_domain = 800;
    c.shared_fraction = 1.0;
    c.unique_fraction = 0.0;
    c.domains = {std::move(src), std::move(tgt)};
    return c;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

ClassifierOptions quick_probe() {
    ClassifierOptions o;
    o.epochs = 30;
    return o;
}

}  // namespace

TEST_CASE("full sharing puts every support in every domain") {
    DatasetConfig cfg = pair_config(7, {.name = "a"}, {.name = "b"});
    cfg.num_supports = 200;
    cfg.samples_per_domain = 400;
    const Dataset ds = generate(cfg);
    CHECK(ds.shared_count == 200);
    for (std::size_t d = 0; d < 2; ++d) {
        REQUIRE(ds.pool[d].size() == 200);
        for (std::size_t s = 0; s < 200; ++s) CHECK(ds.pool[d][s] == static_cast<std::int64_t>(s));
        CHECK(ds.by_domain[d].size() == 400);  // each support rendered exactly twice
    }
}

TEST_CASE("support accounting uses floor with the remainder folded into the shared pool") {
    DatasetConfig cfg = pair_config(3, {.name = "a"}, {.name = "b"});
    cfg.num_supports = 1000;
    cfg.shared_fraction = 0.7;
    cfg.unique_fraction = 0.15;
    Dataset ds = generate(cfg);
    CHECK(ds.unique_count == std::vector<std::size_t>{150, 150});
    CHECK(ds.shared_count == 700);
    CHECK(static_cast<double>(ds.shared_count) / 1000.0 == 0.7);  // exact when fractions are exact

    cfg.num_supports = 997;
    ds = generate(cfg);
    CHECK(ds.unique_count == std::vector<std::size_t>{149, 149});  // floor(149.55)
    CHECK(ds.shared_count == 997 - 298);                           // remainder joins the shared pool
    CHECK(ds.shared_count >= static_cast<std::size_t>(0.7 * 997));
}

TEST_CASE("per-domain unique override and shared drop shape the pools") {
    DatasetConfig cfg = pair_config(11, {.name = "src", .unique_fraction = 0.3},
                                    {.name = "tgt", .unique_fraction = 0.0});
    cfg.num_supports = 1000;
    cfg.shared_fraction = 0.7;
    const Dataset ds = generate(cfg);
    CHECK(ds.shared_count == 700);
    CHECK(ds.unique_count == std::vector<std::size_t>{300, 0});
    CHECK(ds.pool[0].size() == 1000);
    CHECK(ds.pool[1].size() == 700);

    // every support id appears in at least one pool
    std::set<std::int64_t> seen(ds.pool[0].begin(), ds.pool[0].end());
    seen.insert(ds.pool[1].begin(), ds.pool[1].end());
    CHECK(seen.size() == 1000);

    DatasetConfig drop_cfg = pair_config(11, {.name = "src", .unique_fraction = 0.2, .shared_drop_fraction = 0.2},
                                         {.name = "tgt", .unique_fraction = 0.0});
    drop_cfg.num_supports = 1000;
    drop_cfg.shared_fraction = 0.8;
    const Dataset dd = generate(drop_cfg);
    CHECK(dd.shared_count == 800);
    CHECK(dd.pool[0].size() == 600 + 200);  // kept shared + unique
    CHECK(dd.pool[1].size() == 800);
    std::set<std::int64_t> seen2(dd.pool[0].begin(), dd.pool[0].end());
    seen2.insert(dd.pool[1].begin(), dd.pool[1].end());
    CHECK(seen2.size() == 1000);
}

TEST_CASE("config validation rejects bad fields with a path") {
    DatasetConfig cfg = pair_config(1, {.name = "a"}, {.name = "b"});
    cfg.shared_fraction = 0.8;
    cfg.unique_fraction = 0.15;
    CHECK_THROWS_AS(generate(cfg), ConfigError);

    DatasetConfig dup = pair_config(1, {.name = "a"}, {.name = "a"});
    CHECK_THROWS_WITH(generate(dup), Catch::Matchers::ContainsSubstring("dataset.domains[1].name"));

    DatasetConfig badc = pair_config(1, {.name = "a"}, {.name = "b"});
    badc.num_classes = 1;
    CHECK_THROWS_WITH(generate(badc), Catch::Matchers::ContainsSubstring("num_classes"));

    DatasetConfig negn = pair_config(1, {.name = "a", .concept_noise = -0.5}, {.name = "b"});
    CHECK_THROWS_WITH(generate(negn), Catch::Matchers::ContainsSubstring("dataset.domains[0].concept_noise"));
}

TEST_CASE("block orthogonality holds exactly and violations are reported") {
    DatasetConfig cfg = pair_config(5, {.name = "a", .concept_noise = 0.5, .label_leak = 1.0, .block_noise = 0.3},
                                    {.name = "b", .label_leak = 2.0, .block_noise = 0.2});
    cfg.domains.push_back({.name = "c", .concept_noise = 1.0, .label_leak = 0.5, .block_dim = 3, .block_noise = 0.4});
    cfg.num_supports = 300;
    cfg.samples_per_domain = 300;
    Dataset ds = generate(cfg);
    CHECK(verify_orthogonality(ds).ok);

    // explicit cross-domain block dot products, exact zeros
    for (std::size_t da = 0; da < 3; ++da)
        for (std::size_t db = da + 1; db < 3; ++db)
            for (std::size_t i = 0; i < 20; ++i) {
                const Sample& xa = ds.by_domain[da][i * 7];
                const Sample& xb = ds.by_domain[db][i * 5];
                double dot = 0.0;
                for (std::size_t k = ds.config.concept_dim; k < ds.feature_dim; ++k)
                    dot += xa.features[k] * xb.features[k];
                CHECK(dot == 0.0);
            }

    ds.by_domain[0][4].features[ds.block_offset[1]] = 1e-9;  // poke another domain's block
    const OrthogonalityReport rep = verify_orthogonality(ds);
    CHECK_FALSE(rep.ok);
    CHECK(rep.detail.find("domain a") != std::string::npos);
}

TEST_CASE("labels are a function of the support, identical across domains") {
    DatasetConfig cfg = pair_config(13, {.name = "a", .concept_noise = 1.0}, {.name = "b", .label_leak = 1.0});
    const Dataset ds = generate(cfg);
    std::map<std::int64_t, int> label_of;
    for (const Sample& x : ds.by_domain[0]) label_of[x.support_id] = x.label;
    for (const Sample& x : ds.by_domain[1]) {
        REQUIRE(label_of.count(x.support_id) == 1);
        CHECK(label_of[x.support_id] == x.label);
    }
}

TEST_CASE("generation is deterministic and CSV writing is byte-stable") {
    DatasetConfig cfg = pair_config(21, {.name = "a", .concept_noise = 0.7, .label_leak = 0.4, .block_noise = 0.2},
                                    {.name = "b", .label_leak = 1.2, .block_noise = 0.1});
    cfg.num_supports = 150;
    cfg.samples_per_domain = 200;
    const Dataset d1 = generate(cfg);
    const Dataset d2 = generate(cfg);
    for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t i = 0; i < d1.by_domain[d].size(); ++i)
            CHECK(d1.by_domain[d][i].features == d2.by_domain[d][i].features);
    CHECK(dataset_csv_text(d1) == dataset_csv_text(d2));

    // different seed, different bytes
    cfg.seed = 22;
    CHECK(dataset_csv_text(generate(cfg)) != dataset_csv_text(d1));
}

TEST_CASE("CSV round trip preserves rows and re-writes identically") {
    DatasetConfig cfg = pair_config(31, {.name = "a", .concept_noise = 0.9, .label_leak = 0.3, .block_noise = 0.25},
                                    {.name = "b", .label_leak = 1.5, .block_noise = 0.15});
    cfg.num_supports = 120;
    cfg.samples_per_domain = 150;
    const Dataset ds = generate(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "nci_test_csv";
    std::filesystem::create_directories(dir);
    const auto path = dir / "ds.csv";
    write_dataset_csv(ds, path);

    const Dataset back = load_dataset_csv(path);
    REQUIRE(back.num_domains() == 2);
    REQUIRE(back.by_domain[0].size() == ds.by_domain[0].size());
    CHECK(back.feature_dim == ds.feature_dim);
    // rows are sorted by (domain, support_id); compare against a sorted copy
    std::vector<const Sample*> orig;
    for (const Sample& x : ds.by_domain[0]) orig.push_back(&x);
    std::stable_sort(orig.begin(), orig.end(),
                     [](const Sample* a, const Sample* b) { return a->support_id < b->support_id; });
    for (std::size_t i = 0; i < orig.size(); ++i) {
        const Sample& got = back.by_domain[0][i];
        CHECK(got.support_id == orig[i]->support_id);
        CHECK(got.label == orig[i]->label);
        for (std::size_t k = 0; k < ds.feature_dim; ++k)
            CHECK_THAT(got.features[k], Catch::Matchers::WithinRel(orig[i]->features[k], 1e-8) ||
                                            Catch::Matchers::WithinAbs(0.0, 1e-12));
    }

    const auto path2 = dir / "ds2.csv";
    write_dataset_csv(back, path2);
    CHECK(read_file(path) == read_file(path2));  // 9-digit floats re-print identically
    CHECK(read_file(path.string() + ".meta") == read_file(path2.string() + ".meta"));
}

TEST_CASE("probe is at chance when labels carry no information") {
    DatasetConfig cfg = pair_config(41, {.name = "a", .concept_noise = 0.2, .label_leak = 1.0, .block_noise = 0.2},
                                    {.name = "b"});
    Dataset ds = generate(cfg);
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> lab(0, 3);
    for (Sample& x : ds.by_domain[0]) x.label = lab(rng);  // sever features from labels
    const double acc = probe_label_information(ds, 0, quick_probe());
    CHECK(std::fabs(acc - 0.25) <= 0.05);
}

TEST_CASE("probe saturates on a clean, fully leaked domain") {
    DatasetConfig cfg = pair_config(43, {.name = "a", .label_leak = 2.0}, {.name = "b"});
    const Dataset ds = generate(cfg);
    CHECK(probe_label_information(ds, 0, quick_probe()) >= 0.98);
}

TEST_CASE("probe rejects undersized domains") {
    DatasetConfig cfg = pair_config(44, {.name = "a"}, {.name = "b"});
    cfg.num_supports = 100;
    cfg.samples_per_domain = 150;  // < 50 per class for 4 classes
    const Dataset ds = generate(cfg);
    CHECK_THROWS_AS(probe_label_information(ds, 0), ValueError);
}

TEST_CASE("asymmetric benchmark: target probe beats source probe on every seed") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        DatasetConfig cfg = pair_config(seed, {.name = "src", .concept_noise = 1.5, .label_leak = 0.0},
                                        {.name = "tgt", .concept_noise = 0.0, .label_leak = 2.0, .block_noise = 0.1});
        const Dataset ds = generate(cfg);
        const double src = probe_label_information(ds, 0, quick_probe());
        const double tgt = probe_label_information(ds, 1, quick_probe());
        INFO("seed " << seed << " src=" << src << " tgt=" << tgt);
        CHECK(tgt > src);
    }
}

TEST_CASE("identically specified domains probe within two points of each other") {
    double gap = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        DatasetConfig cfg = pair_config(seed * 17, {.name = "a", .concept_noise = 0.5, .block_noise = 0.2},
                                        {.name = "b", .concept_noise = 0.5, .block_noise = 0.2});
        const Dataset ds = generate(cfg);
        gap += probe_label_information(ds, 0, quick_probe()) - probe_label_information(ds, 1, quick_probe());
    }
    CHECK(std::fabs(gap / 5.0) <= 0.02);
}

TEST_CASE("probe accuracy is monotone in the asymmetry knobs") {
    const std::vector<double> grid = {0.0, 0.5, 1.0, 1.5, 2.0};
    SECTION("non-increasing in concept noise") {
        std::vector<double> acc;
        for (double sigma : grid) {
            double mean = 0.0;
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                DatasetConfig cfg = pair_config(seed * 7 + 101,
                                                {.name = "a", .concept_noise = sigma, .block_noise = 0.25},
                                                {.name = "b"});
                cfg.num_supports = 600;
                cfg.samples_per_domain = 600;
                mean += probe_label_information(generate(cfg), 0, quick_probe());
            }
            acc.push_back(mean / 5.0);
        }
        INFO("accuracy vs concept_noise: " << acc[0] << " " << acc[1] << " " << acc[2] << " " << acc[3] << " "
                                           << acc[4]);
        CHECK(spearman_rho(grid, acc) <= -0.8);
    }
    SECTION("non-decreasing in label leak") {
        std::vector<double> acc;
        for (double leak : grid) {
            double mean = 0.0;
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                DatasetConfig cfg = pair_config(seed * 13 + 501,
                                                {.name = "a", .concept_noise = 1.2, .label_leak = leak,
                                                 .block_noise = 0.3},
                                                {.name = "b"});
                cfg.num_supports = 600;
                cfg.samples_per_domain = 600;
                mean += probe_label_information(generate(cfg), 0, quick_probe());
            }
            acc.push_back(mean / 5.0);
        }
        INFO("accuracy vs label_leak: " << acc[0] << " " << acc[1] << " " << acc[2] << " " << acc[3] << " "
                                        << acc[4]);
        CHECK(spearman_rho(grid, acc) >= 0.8);
    }
}

TEST_CASE("interpolate_domains endpoints, midpoint and validation") {
    DomainSpec a{.name = "src", .concept_noise = 1.5, .label_leak = 0.0, .block_dim = 4, .block_noise = 0.4};
    DomainSpec b{.name = "tgt", .concept_noise = 0.0, .label_leak = 2.0, .block_dim = 4, .block_noise = 0.0};

    const auto two = interpolate_domains(a, b, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].name == "src");
    CHECK(two[0].concept_noise == a.concept_noise);
    CHECK(two[1].name == "tgt");
    CHECK(two[1].label_leak == b.label_leak);

    const auto three = interpolate_domains(a, b, 3);
    REQUIRE(three.size() == 3);
    CHECK(three[1].concept_noise == 0.75);
    CHECK(three[1].label_leak == 1.0);
    CHECK(three[1].block_noise == 0.2);

    CHECK_THROWS_AS(interpolate_domains(a, b, 1), ConfigError);
    DomainSpec c = b;
    c.block_dim = 6;
    CHECK_THROWS_AS(interpolate_domains(a, c, 3), ConfigError);
}

TEST_CASE("probe accuracy decreases along a leak-decreasing interpolation path") {
    DomainSpec hi{.name = "hi", .concept_noise = 1.0, .label_leak = 2.0, .block_noise = 0.2};
    DomainSpec lo{.name = "lo", .concept_noise = 1.0, .label_leak = 0.0, .block_noise = 0.2};
    const auto path = interpolate_domains(hi, lo, 4);
    std::vector<double> idx, acc;
    for (std::size_t i = 0; i < path.size(); ++i) {
        idx.push_back(static_cast<double>(i));
        double mean = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            DatasetConfig cfg;
            cfg.seed = seed * 19 + 7;
            cfg.concept_dim = 8;
            cfg.num_classes = 4;
            cfg.num_supports = 600;
            cfg.samples_per_domain = 600;
            cfg.domains = {path[i]};
            mean += probe_label_information(generate(cfg), 0, quick_probe());
        }
        acc.push_back(mean / 5.0);
    }
    INFO("accuracy along path: " << acc[0] << " " << acc[1] << " " << acc[2] << " " << acc[3]);
    CHECK(spearman_rho(idx, acc) <= 0.0);
}

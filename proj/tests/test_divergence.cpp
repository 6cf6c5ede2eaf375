#include <catch2/catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "nci/divergence.hpp"

using namespace nci;
using quad = boost::multiprecision::cpp_bin_float_quad;

namespace {

Tensor column(std::initializer_list<double> xs) {
    Tensor t({xs.size(), 1});
    std::copy(xs.begin(), xs.end(), t.data.begin());
    return t;
}

Tensor random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t({n, d});
    for (double& v : t.data) v = u(rng);
    return t;
}

// formula re-evaluated in quad precision, term order independent of the
// production code
quad quad_bound(const BoundInputs& in) {
    const quad n = in.n, d = in.d, delta = in.delta;
    const quad e = boost::multiprecision::exp(quad(1));
    const quad log4d = boost::multiprecision::log(quad(4) / delta);
    const quad vc = boost::multiprecision::sqrt((quad(4) / n) *
                                                (d * boost::multiprecision::log(quad(2) * e * n / d) + log4d));
    const quad est =
        quad(4) * boost::multiprecision::sqrt((quad(1) / n) *
                                              (d * boost::multiprecision::log(quad(2) * n / d) + log4d));
    return quad(in.r_s) + vc + quad(in.d_hat) + est + quad(in.beta);
}

}  // namespace

TEST_CASE("six-stump family on {-1,-1} vs {+1,+1}: every bracket matches hand enumeration") {
    const Tensor S = column({-1.0, -1.0});
    const Tensor T = column({+1.0, +1.0});
    const HypothesisFamily fam = make_stump_family({0}, {-2.0, 0.0, 2.0});
    REQUIRE(fam.stumps.size() == 6);
    REQUIRE(fam.flip_closed);

    // construction order: thresholds -2, 0, 2, polarity + then - each.
    // bracket = frac(S classified 0) + frac(T classified 1):
    //   (-2,+): S->1,T->1 : 0+1   (-2,-): S->0,T->0 : 1+0
    //   ( 0,+): S->0,T->1 : 1+1   ( 0,-): S->1,T->0 : 0+0
    //   ( 2,+): S->0,T->0 : 1+0   ( 2,-): S->1,T->1 : 0+1
    const double expected[6] = {1.0, 1.0, 2.0, 0.0, 1.0, 1.0};
    for (std::size_t i = 0; i < 6; ++i) CHECK(stump_bracket(S, T, fam.stumps[i]) == expected[i]);

    const DivergenceReport r = exact_h_divergence(S, T, fam);
    CHECK(r.d_hat == 2.0);
    CHECK(r.epsilon == 0.0);
    CHECK(r.mode == DivergenceMode::min_over_family);
    CHECK(r.n_source == 2);
    CHECK(r.n_target == 2);
    CHECK_FALSE(r.warning);
}

TEST_CASE("collapsed representations give exactly zero, swap-separable exactly two") {
    const Tensor both = random_matrix(40, 3, 101);
    const HypothesisFamily fam_same = make_midpoint_stump_family(both, both);
    CHECK(exact_h_divergence(both, both, fam_same).d_hat == 0.0);

    const Tensor S = random_matrix(30, 2, 7, 0.0, 1.0);
    const Tensor T = random_matrix(25, 2, 8, 2.0, 3.0);
    const HypothesisFamily fam = make_midpoint_stump_family(S, T);
    const DivergenceReport r = exact_h_divergence(S, T, fam);
    CHECK(r.d_hat == 2.0);
    CHECK(r.epsilon == 0.0);
}

TEST_CASE("zero divergence exactly characterizes identical multisets") {
    const Tensor S = random_matrix(24, 2, 55);
    Tensor permuted({24, 2});
    std::vector<std::size_t> order(24);
    for (std::size_t i = 0; i < 24; ++i) order[i] = (i * 7) % 24;  // 7 coprime to 24
    for (std::size_t i = 0; i < 24; ++i) {
        permuted.data[i * 2] = S.data[order[i] * 2];
        permuted.data[i * 2 + 1] = S.data[order[i] * 2 + 1];
    }
    CHECK(exact_h_divergence(S, permuted, make_midpoint_stump_family(S, permuted)).d_hat == 0.0);

    Tensor tweaked = S;
    tweaked.data[5] += 0.25;
    const DivergenceReport r = exact_h_divergence(S, tweaked, make_midpoint_stump_family(S, tweaked));
    CHECK(r.d_hat > 0.0);
}

TEST_CASE("enlarging the family never decreases d_hat") {
    std::mt19937_64 rng(909);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor S = random_matrix(20, 1, rng());
        const Tensor T = random_matrix(20, 1, rng());
        const HypothesisFamily small = make_stump_family({0}, {-1.0, 0.0, 1.0});
        const HypothesisFamily big = make_stump_family({0}, {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5});
        CHECK(exact_h_divergence(S, T, big).d_hat >= exact_h_divergence(S, T, small).d_hat);
    }
}

TEST_CASE("flip-closed family keeps the bracket minimum at most one") {
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 30; ++trial) {
        const Tensor S = random_matrix(15, 2, rng());
        const Tensor T = random_matrix(17, 2, rng());
        const DivergenceReport r = exact_h_divergence(S, T, make_midpoint_stump_family(S, T));
        CHECK(r.epsilon <= 1.0);
        CHECK(r.d_hat >= 0.0);
        CHECK(r.d_hat <= 2.0);
    }
}

TEST_CASE("non-flip-closed family raises the warning flag and may leave [0,2]") {
    HypothesisFamily fam;
    fam.flip_closed = false;
    fam.stumps = {{0, 0.0, +1}};  // only I[x > 0]
    const Tensor S = column({1.0, 1.0});
    const Tensor T = column({1.0, 1.0});
    const DivergenceReport r = exact_h_divergence(S, T, fam);
    // bracket = 0 + 1 = 1 here; the flag reflects the family, not the value
    CHECK(r.warning);
    CHECK_FALSE(r.note.empty());

    const Tensor S2 = column({-1.0, -1.0});
    const DivergenceReport r2 = exact_h_divergence(S2, T, fam);  // bracket = 1 + 1 = 2
    CHECK(r2.d_hat == -2.0);
    CHECK(r2.warning);
}

TEST_CASE("fixed discriminator reproduces the collapse and swap substitutions") {
    const Tensor S = column({-1.0, -1.0, -1.0, -1.0});
    const Tensor T = column({+1.0, +1.0, +1.0, +1.0});

    const auto all_one = [](const double*, std::size_t) { return 1; };
    const DivergenceReport collapse = evaluate_fixed_discriminator(S, T, all_one);
    CHECK(collapse.epsilon == 1.0);  // [1 + 0]
    CHECK(collapse.d_hat == 0.0);
    CHECK(collapse.mode == DivergenceMode::fixed_discriminator);
    CHECK_FALSE(collapse.warning);

    const auto sign_split = [](const double* row, std::size_t) { return row[0] > 0.0 ? 1 : 0; };
    const DivergenceReport swap = evaluate_fixed_discriminator(S, T, sign_split);
    CHECK(swap.epsilon == 0.0);  // [0 + 0]
    CHECK(swap.d_hat == 2.0);

    const Tensor mixed = column({-1.0, +1.0, -1.0, +1.0});
    const DivergenceReport chance = evaluate_fixed_discriminator(mixed, mixed, sign_split);
    CHECK(chance.epsilon == 1.0);  // 0.5 + 0.5
    CHECK(chance.d_hat == 0.0);

    const auto anti = [](const double* row, std::size_t) { return row[0] > 0.0 ? 0 : 1; };
    const DivergenceReport worst = evaluate_fixed_discriminator(S, T, anti);  // [1 + 1]
    CHECK(worst.d_hat == -2.0);
    CHECK(worst.warning);

    // stump overload agrees with the lambda form
    const Stump s{0, 0.0, +1};
    CHECK(evaluate_fixed_discriminator(S, T, s).d_hat == swap.d_hat);
}

TEST_CASE("trained divergence: identical representations score exactly chance") {
    DatasetConfig cfg;
    cfg.seed = 404;
    cfg.concept_dim = 6;
    cfg.num_classes = 3;
    cfg.num_supports = 400;
    cfg.samples_per_domain = 400;
    cfg.shared_fraction = 1.0;
    // leak 0 and noise 0 on both sides renders every shared support to the
    // identical feature vector in both domains
    cfg.domains = {{.name = "a", .concept_noise = 0.0, .label_leak = 0.0, .block_noise = 0.0},
                   {.name = "b", .concept_noise = 0.0, .label_leak = 0.0, .block_noise = 0.0}};
    const Dataset ds = generate(cfg);

    const ModelParams enc = make_mlp("encoder", {ds.feature_dim, 16, 8},
                                     {Activation::relu, Activation::tanh_fn}, derive_seed(1, "init/encoder"));
    DiscriminatorConfig dc;
    dc.seed = 17;
    const DivergenceReport r = trained_h_divergence(enc, ds, "a", "b", dc);
    CHECK(r.epsilon == 0.5);
    CHECK(r.a_distance == 1.0);
    CHECK(r.d_hat == 0.0);
}

TEST_CASE("trained divergence: disjoint own-blocks are near-perfectly separable") {
    DatasetConfig cfg;
    cfg.seed = 405;
    cfg.concept_dim = 6;
    cfg.num_classes = 3;
    cfg.num_supports = 400;
    cfg.samples_per_domain = 400;
    cfg.shared_fraction = 1.0;
    cfg.domains = {{.name = "a", .concept_noise = 1.0, .label_leak = 2.0, .block_noise = 0.25},
                   {.name = "b", .concept_noise = 1.0, .label_leak = 2.0, .block_noise = 0.25}};
    const Dataset ds = generate(cfg);

    // identity encoder: representations are the raw features, which occupy
    // disjoint per-domain blocks
    ModelParams enc;
    enc.name = "encoder";
    Layer l;
    l.W = Tensor({ds.feature_dim, ds.feature_dim});
    for (std::size_t i = 0; i < ds.feature_dim; ++i) l.W.data[i * ds.feature_dim + i] = 1.0;
    l.b = Tensor({ds.feature_dim});
    l.act = Activation::linear;
    enc.layers.push_back(std::move(l));

    DiscriminatorConfig dc;
    dc.seed = 23;
    const DivergenceReport r = trained_h_divergence(enc, ds, "a", "b", dc);
    CHECK(r.epsilon <= 0.02);
    CHECK(r.a_distance >= 1.96);
    CHECK(r.d_hat >= 1.9);
    CHECK(r.n_source == r.n_target);
    CHECK(r.n_source >= 50);
}

TEST_CASE("trained divergence rejects undersized domains") {
    DatasetConfig cfg;
    cfg.seed = 406;
    cfg.concept_dim = 4;
    cfg.num_classes = 2;
    cfg.num_supports = 80;
    cfg.samples_per_domain = 80;
    cfg.shared_fraction = 1.0;
    cfg.domains = {{.name = "a", .concept_noise = 0.5, .label_leak = 1.0, .block_noise = 0.2},
                   {.name = "b", .concept_noise = 0.5, .label_leak = 1.0, .block_noise = 0.2}};
    const Dataset ds = generate(cfg);
    const ModelParams enc = make_mlp("encoder", {ds.feature_dim, 8}, {Activation::tanh_fn}, 3);
    CHECK_THROWS_AS(trained_h_divergence(enc, ds, "a", "b", {}), ValueError);
}

TEST_CASE("target risk bound matches a quad-precision evaluation") {
    // pinned instance
    const BoundInputs pinned{0.1, 1000.0, 10.0, 0.05, 0.05, 0.2};
    const double got = target_risk_bound(pinned);
    const double want = static_cast<double>(quad_bound(pinned));
    CHECK_THAT(got, Catch::Matchers::WithinRel(want, 1e-12));

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        BoundInputs in;
        in.r_s = ur(rng);
        in.d = 1.0 + std::floor(ur(rng) * 20.0);
        in.n = in.d * 2.72 + 10.0 + ur(rng) * 1e5;
        in.delta = 0.001 + ur(rng) * 0.5;
        in.beta = ur(rng) * 0.5;
        in.d_hat = ur(rng) * 2.0;
        CHECK_THAT(target_risk_bound(in),
                   Catch::Matchers::WithinRel(static_cast<double>(quad_bound(in)), 1e-12));
    }
}

TEST_CASE("bound is affine in d_hat to within two rounding steps") {
    BoundInputs a{0.1, 1000.0, 10.0, 0.05, 0.05, 0.375};
    BoundInputs b = a;
    b.d_hat = 0.125;  // difference 0.25 is exactly representable
    const double ba = target_risk_bound(a);
    const double bb = target_risk_bound(b);
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::max(ba, bb);
    CHECK(std::abs((ba - bb) - 0.25) <= tol);

    // direction: zero divergence gives the stricter bound
    BoundInputs zero = a;
    zero.d_hat = 0.0;
    CHECK(target_risk_bound(zero) <= target_risk_bound(a));
}

TEST_CASE("bound monotonicity in each argument") {
    const BoundInputs base{0.2, 5000.0, 12.0, 0.05, 0.1, 0.5};
    const double b0 = target_risk_bound(base);

    BoundInputs m = base;
    m.r_s += 0.1;
    CHECK(target_risk_bound(m) > b0);
    m = base;
    m.beta += 0.1;
    CHECK(target_risk_bound(m) > b0);
    m = base;
    m.d_hat += 0.1;
    CHECK(target_risk_bound(m) > b0);
    m = base;
    m.d += 1.0;
    CHECK(target_risk_bound(m) > b0);

    // decreasing in n past d*e
    double prev = std::numeric_limits<double>::infinity();
    for (double n : {40.0, 100.0, 400.0, 2000.0, 20000.0, 1e6}) {
        BoundInputs in = base;
        in.n = n;
        const double v = target_risk_bound(in);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("bound rejects out-of-domain inputs") {
    BoundInputs in{0.1, 10.0, 10.0, 0.05, 0.0, 0.0};
    CHECK_THROWS_AS(target_risk_bound(in), ValueError);  // n == d
    in.n = 5.0;
    CHECK_THROWS_AS(target_risk_bound(in), ValueError);  // n < d
    in = {0.1, 100.0, 10.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(target_risk_bound(in), ValueError);  // delta = 0
    in.delta = 1.0;
    CHECK_THROWS_AS(target_risk_bound(in), ValueError);
    in = {0.1, 100.0, 0.5, 0.05, 0.0, 0.0};
    CHECK_THROWS_AS(target_risk_bound(in), ValueError);  // d < 1
}

TEST_CASE("bound terms decompose the total") {
    const BoundInputs in{0.1, 1000.0, 10.0, 0.05, 0.05, 0.2};
    const BoundTerms t = target_risk_bound_terms(in);
    CHECK(t.total == target_risk_bound(in));
    CHECK(t.vc_term > 0.0);
    CHECK(t.est_term > 0.0);
    CHECK_THAT(t.total, Catch::Matchers::WithinRel(t.r_s + t.vc_term + t.est_term + t.beta + t.d_hat, 1e-15));
}

TEST_CASE("haussler sample complexity: pinned value, limits, exact halving") {
    CHECK(haussler_m(20, 0.05, 0.05) == 120);

    // singleton class with near-certain failure allowance needs nothing
    CHECK(haussler_eps(1, 1.0 - 1e-12, 1000) <= 2e-15);
    CHECK(haussler_m(1, 1.0 - 1e-12, 0.5) <= 1);

    std::mt19937_64 rng(555);
    for (int trial = 0; trial < 100; ++trial) {
        const long long fam = 1 + static_cast<long long>(rng() % 100000);
        const double delta = 0.001 + 0.998 * (static_cast<double>(rng() % 1000) / 1000.0);
        const long long m = 1 + static_cast<long long>(rng() % 1000000);
        CHECK(haussler_eps(fam, delta, 2 * m) == haussler_eps(fam, delta, m) / 2.0);
    }

    // consistency: the returned M achieves an eps bound no worse than requested
    for (int trial = 0; trial < 50; ++trial) {
        const long long fam = 2 + static_cast<long long>(rng() % 1000);
        const double delta = 0.01 + 0.5 * (static_cast<double>(rng() % 1000) / 1000.0);
        const double eps = 0.001 + 0.3 * (static_cast<double>(rng() % 1000) / 1000.0);
        const long long m = haussler_m(fam, delta, eps);
        CHECK(haussler_eps(fam, delta, m) <= eps * (1.0 + 1e-12));
        if (m > 1) CHECK(haussler_eps(fam, delta, m - 1) > eps);
    }

    CHECK_THROWS_AS(haussler_m(0, 0.05, 0.05), ValueError);
    CHECK_THROWS_AS(haussler_m(5, 1.5, 0.05), ValueError);
    CHECK_THROWS_AS(haussler_m(5, 0.05, 0.0), ValueError);
    CHECK_THROWS_AS(haussler_eps(5, 0.05, 0), ValueError);
}

TEST_CASE("metric axioms hold for stump-family divergence") {
    std::mt19937_64 rng(77);
    std::vector<Tensor> sets;
    for (int i = 0; i < 6; ++i) sets.push_back(random_matrix(18, 1, rng()));
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : sets) ptrs.push_back(&t);
    const HypothesisFamily fam = make_midpoint_stump_family(ptrs);

    const MetricAxiomReport rep = metric_axiom_check(sets, fam);
    CHECK(rep.identity_zero);
    CHECK(rep.symmetric);
    CHECK(rep.triangle_ok());

    // random-pair symmetry, checked exactly and independently of the report
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t i = rng() % sets.size(), j = rng() % sets.size();
        CHECK(exact_h_divergence(sets[i], sets[j], fam).d_hat ==
              exact_h_divergence(sets[j], sets[i], fam).d_hat);
    }
}

TEST_CASE("pairwise-disjoint clusters are strictly positive apart") {
    std::vector<Tensor> sets;
    sets.push_back(random_matrix(12, 1, 1, 0.0, 1.0));
    sets.push_back(random_matrix(12, 1, 2, 2.0, 3.0));
    sets.push_back(random_matrix(12, 1, 3, 4.0, 5.0));
    std::vector<const Tensor*> ptrs{&sets[0], &sets[1], &sets[2]};
    const MetricAxiomReport rep = metric_axiom_check(sets, make_midpoint_stump_family(ptrs));
    CHECK(rep.min_offdiagonal == 2.0);  // fully separable pairs
    CHECK(rep.identity_zero);
    CHECK(rep.symmetric);
    CHECK(rep.triangle_ok());
}

TEST_CASE("metric check requires three sets and flip closure") {
    std::vector<Tensor> two{random_matrix(5, 1, 1), random_matrix(5, 1, 2)};
    const HypothesisFamily fam = make_stump_family({0}, {0.0});
    CHECK_THROWS_AS(metric_axiom_check(two, fam), ValueError);
    std::vector<Tensor> three{random_matrix(5, 1, 1), random_matrix(5, 1, 2), random_matrix(5, 1, 3)};
    HypothesisFamily open = fam;
    open.flip_closed = false;
    CHECK_THROWS_AS(metric_axiom_check(three, open), ValueError);
}

TEST_CASE("report text and csv carry the headline numbers") {
    const Tensor S = column({-1.0, -1.0});
    const Tensor T = column({+1.0, +1.0});
    const DivergenceReport r = exact_h_divergence(S, T, make_midpoint_stump_family(S, T));
    const std::string text = divergence_report_text(r);
    CHECK(text.find("mode min_over_family") != std::string::npos);
    CHECK(text.find("d_hat 2") != std::string::npos);
    CHECK(text.find("n_source 2") != std::string::npos);

    const std::string row = divergence_csv_row("enc0", "a", "b", r);
    CHECK(row.rfind("enc0,a,b,min_over_family,2,", 0) == 0);
    CHECK(divergence_csv_header().rfind("encoder,source,target,", 0) == 0);
}

TEST_CASE("size and dimension errors carry context") {
    const Tensor S = column({1.0});
    Tensor empty({0, 1});
    CHECK_THROWS_AS(exact_h_divergence(S, empty, make_stump_family({0}, {0.0})), ValueError);
    const Tensor wide = random_matrix(3, 2, 9);
    CHECK_THROWS_WITH(exact_h_divergence(S, wide, make_stump_family({0}, {0.0})),
                      Catch::Matchers::ContainsSubstring("feature dims differ"));
    HypothesisFamily none;
    none.flip_closed = true;
    CHECK_THROWS_AS(exact_h_divergence(S, S, none), ValueError);
}

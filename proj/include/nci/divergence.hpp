#pragma once

// H-divergence between two representation sets, in three estimation modes,
// plus the closed-form generalization and sample-complexity calculators.
//
// Conventions. The empirical H-divergence is
//     d_hat = 2 (1 - min over eta of [frac(source classified 0) + frac(target classified 1)])
// with the minimum taken over an enumerated, flip-closed family. The
// single-discriminator evaluator instead substitutes one eta into the
// bracket with the complementary convention
//     [frac(source classified 1) + frac(target classified 0)]
// which reproduces the raw arithmetic of the collapse/swap substitutions
// (all-1 on both domains gives [1 + 0] and hence 0; source-to-0 with
// target-to-1 gives [0 + 0] and hence 2). For a flip-closed family the two
// conventions select the same minimum, so only the fixed mode is sensitive
// to the choice.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nci/common.hpp"
#include "nci/model.hpp"
#include "nci/synth.hpp"
#include "nci/tensor.hpp"

namespace nci {

// Axis-aligned decision stump over representation vectors.
// polarity +1: predicts 1 where x[axis] > threshold; -1 predicts the complement.
struct Stump {
    std::size_t axis = 0;
    double threshold = 0.0;
    int polarity = +1;
};

inline int stump_predict(const Stump& s, const double* row) {
    const bool right = row[s.axis] > s.threshold;
    return (s.polarity > 0) == right ? 1 : 0;
}

enum class FamilyKind { axis_threshold_enumerated, trained_mlp };

struct HypothesisFamily {
    FamilyKind kind = FamilyKind::axis_threshold_enumerated;
    std::vector<Stump> stumps;
    bool flip_closed = false;
};

// Both polarities for every (axis, threshold), so the family is flip-closed.
inline HypothesisFamily make_stump_family(const std::vector<std::size_t>& axes,
                                          const std::vector<double>& thresholds) {
    if (axes.empty() || thresholds.empty())
        throw ValueError("make_stump_family: need at least one axis and one threshold");
    HypothesisFamily f;
    f.flip_closed = true;
    for (std::size_t a : axes)
        for (double t : thresholds) {
            f.stumps.push_back({a, t, +1});
            f.stumps.push_back({a, t, -1});
        }
    return f;
}

// Midpoints between adjacent distinct pooled values on every axis, plus one
// threshold below and one above everything. Along each axis this family
// realizes every half-line split the pooled sample can distinguish, so the
// bracketed minimum equals 1 - (KS statistic) axis-wise and d_hat vanishes
// exactly when the two multisets coincide.
inline HypothesisFamily make_midpoint_stump_family(const std::vector<const Tensor*>& sets) {
    if (sets.empty()) throw ValueError("make_midpoint_stump_family: no sets");
    const std::size_t dim = sets.front()->shape.size() == 2 ? sets.front()->shape[1] : 0;
    for (const Tensor* t : sets)
        if (t->shape.size() != 2 || t->shape[1] != dim || t->shape[0] == 0)
            throw ShapeError("make_midpoint_stump_family: want nonempty [n,d] matrices with equal d");
    HypothesisFamily f;
    f.flip_closed = true;
    std::vector<double> vals;
    for (std::size_t axis = 0; axis < dim; ++axis) {
        vals.clear();
        for (const Tensor* t : sets)
            for (std::size_t i = 0; i < t->shape[0]; ++i) vals.push_back(t->data[i * dim + axis]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        std::vector<double> thr;
        thr.push_back(vals.front() - 1.0);
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) thr.push_back(vals[i] + 0.5 * (vals[i + 1] - vals[i]));
        thr.push_back(vals.back() + 1.0);
        for (double t : thr) {
            f.stumps.push_back({axis, t, +1});
            f.stumps.push_back({axis, t, -1});
        }
    }
    return f;
}

inline HypothesisFamily make_midpoint_stump_family(const Tensor& a, const Tensor& b) {
    return make_midpoint_stump_family(std::vector<const Tensor*>{&a, &b});
}

enum class DivergenceMode { min_over_family, fixed_discriminator };

inline std::string divergence_mode_name(DivergenceMode m) {
    return m == DivergenceMode::min_over_family ? "min_over_family" : "fixed_discriminator";
}

struct DivergenceReport {
    double d_hat = 0.0;
    double epsilon = 0.0;  // bracketed minimum (enumerated) or held-out error (trained)
    double a_distance = 0.0;
    DivergenceMode mode = DivergenceMode::min_over_family;
    std::size_t n_source = 0;
    std::size_t n_target = 0;
    bool warning = false;
    std::string note;
};

namespace detail {

inline void require_matrix_pair(const Tensor& s, const Tensor& t, const char* who) {
    if (s.shape.size() != 2 || t.shape.size() != 2)
        throw ShapeError(std::string(who) + ": representation sets must be rank-2");
    if (s.shape[0] == 0 || t.shape[0] == 0) throw ValueError(std::string(who) + ": empty representation set");
    if (s.shape[1] != t.shape[1])
        throw ShapeError(std::string(who) + ": feature dims differ (" + std::to_string(s.shape[1]) + " vs " +
                         std::to_string(t.shape[1]) + ")");
}

}  // namespace detail

// Bracketed sum of one stump under the min-mode convention:
// frac(source classified 0) + frac(target classified 1).
inline double stump_bracket(const Tensor& source, const Tensor& target, const Stump& s) {
    detail::require_matrix_pair(source, target, "stump_bracket");
    if (s.axis >= source.shape[1]) throw ShapeError("stump_bracket: axis out of range");
    const std::size_t dim = source.shape[1];
    std::size_t src_zero = 0, tgt_one = 0;
    for (std::size_t i = 0; i < source.shape[0]; ++i)
        if (stump_predict(s, &source.data[i * dim]) == 0) ++src_zero;
    for (std::size_t i = 0; i < target.shape[0]; ++i)
        if (stump_predict(s, &target.data[i * dim]) == 1) ++tgt_one;
    return static_cast<double>(src_zero) / static_cast<double>(source.shape[0]) +
           static_cast<double>(tgt_one) / static_cast<double>(target.shape[0]);
}

// Brute-force minimum of the bracket over an enumerated family.
inline DivergenceReport exact_h_divergence(const Tensor& source, const Tensor& target,
                                           const HypothesisFamily& family) {
    detail::require_matrix_pair(source, target, "exact_h_divergence");
    if (family.kind != FamilyKind::axis_threshold_enumerated)
        throw ValueError("exact_h_divergence: family must be enumerated");
    if (family.stumps.empty()) throw ValueError("exact_h_divergence: empty family");
    double best = std::numeric_limits<double>::infinity();
    for (const Stump& s : family.stumps) best = std::min(best, stump_bracket(source, target, s));
    DivergenceReport r;
    r.epsilon = best;
    r.d_hat = 2.0 * (1.0 - best);
    r.mode = DivergenceMode::min_over_family;
    r.n_source = source.shape[0];
    r.n_target = target.shape[0];
    if (!family.flip_closed) {
        r.warning = true;
        r.note = "family is not flip-closed; d_hat may fall outside [0,2]";
    }
    return r;
}

// Substitutes a single discriminator into the bracket with the
// complement convention: frac(source classified 1) + frac(target classified 0).
inline DivergenceReport evaluate_fixed_discriminator(const Tensor& source, const Tensor& target,
                                                     const std::function<int(const double*, std::size_t)>& eta) {
    detail::require_matrix_pair(source, target, "evaluate_fixed_discriminator");
    const std::size_t dim = source.shape[1];
    std::size_t src_one = 0, tgt_zero = 0;
    for (std::size_t i = 0; i < source.shape[0]; ++i)
        if (eta(&source.data[i * dim], dim) != 0) ++src_one;
    for (std::size_t i = 0; i < target.shape[0]; ++i)
        if (eta(&target.data[i * dim], dim) == 0) ++tgt_zero;
    const double bracket = static_cast<double>(src_one) / static_cast<double>(source.shape[0]) +
                           static_cast<double>(tgt_zero) / static_cast<double>(target.shape[0]);
    DivergenceReport r;
    r.epsilon = bracket;
    r.d_hat = 2.0 * (1.0 - bracket);
    r.mode = DivergenceMode::fixed_discriminator;
    r.n_source = source.shape[0];
    r.n_target = target.shape[0];
    if (r.d_hat < 0.0 || r.d_hat > 2.0) {
        r.warning = true;
        r.note = "single-discriminator bracket left [0,2]";
    }
    return r;
}

inline DivergenceReport evaluate_fixed_discriminator(const Tensor& source, const Tensor& target,
                                                     const Stump& s) {
    return evaluate_fixed_discriminator(source, target,
                                        [&s](const double* row, std::size_t) { return stump_predict(s, row); });
}

struct DiscriminatorConfig {
    std::size_t hidden = 16;
    std::size_t epochs = 40;
    std::size_t batch = 128;
    double lr = 0.01;
    std::uint64_t seed = 0;
};

// A-distance from a freshly trained discriminator on frozen representations.
// Train/held-out assignment follows the dataset's support split; both splits
// are balanced by truncation so a constant predictor scores exactly chance.
// d_hat applies the empirical formula to the trained eta and its flip, the
// smallest flip-closed family containing it.
inline DivergenceReport trained_h_divergence(const ModelParams& encoder, const Dataset& ds,
                                             const std::string& source, const std::string& target,
                                             const DiscriminatorConfig& cfg) {
    const int si = ds.domain_index(source);
    const int ti = ds.domain_index(target);
    if (si == ti) throw ValueError("trained_h_divergence: source and target must differ");
    if (ds.by_domain[si].size() < 100 || ds.by_domain[ti].size() < 100)
        throw ValueError("trained_h_divergence: need at least 100 samples per domain");

    const auto encode = [&encoder, &ds](const std::vector<const Sample*>& xs) {
        return forward(encoder, feature_matrix(xs, ds.feature_dim));
    };
    auto src_train = domain_split(ds, si, false);
    auto tgt_train = domain_split(ds, ti, false);
    auto src_eval = domain_split(ds, si, true);
    auto tgt_eval = domain_split(ds, ti, true);
    const std::size_t n_train = std::min(src_train.size(), tgt_train.size());
    const std::size_t n_eval = std::min(src_eval.size(), tgt_eval.size());
    if (n_train == 0 || n_eval == 0) throw ValueError("trained_h_divergence: a split is empty");
    src_train.resize(n_train);
    tgt_train.resize(n_train);
    src_eval.resize(n_eval);
    tgt_eval.resize(n_eval);

    const Tensor rs_train = encode(src_train), rt_train = encode(tgt_train);
    const Tensor rs_eval = encode(src_eval), rt_eval = encode(tgt_eval);
    const std::size_t rim = rs_train.shape[1];

    Tensor X({2 * n_train, rim});
    std::vector<int> y(2 * n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        std::copy_n(&rs_train.data[i * rim], rim, &X.data[i * rim]);
        y[i] = 0;
        std::copy_n(&rt_train.data[i * rim], rim, &X.data[(n_train + i) * rim]);
        y[n_train + i] = 1;
    }
    ClassifierOptions opts;
    opts.hidden = cfg.hidden;
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch;
    opts.lr = cfg.lr;
    const ModelParams disc = fit_classifier(X, y, 2, opts, derive_seed(cfg.seed, "disc/adistance"));

    const Tensor ls = forward(disc, rs_eval);
    const Tensor lt = forward(disc, rt_eval);
    std::size_t src_correct = 0, tgt_correct = 0;
    for (std::size_t i = 0; i < n_eval; ++i) {
        if (argmax_row(ls, i) == 0) ++src_correct;
        if (argmax_row(lt, i) == 1) ++tgt_correct;
    }
    const double acc_s = static_cast<double>(src_correct) / static_cast<double>(n_eval);
    const double acc_t = static_cast<double>(tgt_correct) / static_cast<double>(n_eval);
    const double eps = 1.0 - 0.5 * (acc_s + acc_t);

    // bracket of eta under the min-mode convention is acc_s + acc_t; the
    // flipped discriminator's bracket is its complement to 2
    const double bracket = acc_s + acc_t;
    const double best = std::min(bracket, 2.0 - bracket);

    DivergenceReport r;
    r.epsilon = eps;
    r.a_distance = 2.0 * (1.0 - eps);
    r.d_hat = 2.0 * (1.0 - best);
    r.mode = DivergenceMode::min_over_family;
    r.n_source = n_eval;
    r.n_target = n_eval;
    return r;
}

struct BoundInputs {
    double r_s = 0.0;    // empirical source risk
    double n = 0.0;      // per-domain sample count
    double d = 1.0;      // VC-dimension surrogate: discriminator parameter count
    double delta = 0.05;
    double beta = 0.0;   // joint-optimal risk
    double d_hat = 0.0;
};

struct BoundTerms {
    double r_s = 0.0;
    double vc_term = 0.0;      // sqrt((4/n)(d log(2en/d) + log(4/delta)))
    double est_term = 0.0;     // 4 sqrt((1/n)(d log(2n/d) + log(4/delta)))
    double beta = 0.0;
    double d_hat = 0.0;
    double total = 0.0;
};

inline BoundTerms target_risk_bound_terms(const BoundInputs& in) {
    if (!(in.delta > 0.0 && in.delta < 1.0))
        throw ValueError("target_risk_bound: delta must lie in (0,1)");
    if (!(in.d >= 1.0)) throw ValueError("target_risk_bound: d must be >= 1");
    if (!(in.n > in.d))
        throw ValueError("target_risk_bound: need n > d, got n=" + format_g9(in.n) + " d=" + format_g9(in.d));
    BoundTerms t;
    t.r_s = in.r_s;
    t.beta = in.beta;
    t.d_hat = in.d_hat;
    const double e = std::exp(1.0);
    const double log4d = std::log(4.0 / in.delta);
    t.vc_term = std::sqrt((4.0 / in.n) * (in.d * std::log(2.0 * e * in.n / in.d) + log4d));
    t.est_term = 4.0 * std::sqrt((1.0 / in.n) * (in.d * std::log(2.0 * in.n / in.d) + log4d));
    // d_hat enters additively and is summed last, so two evaluations that
    // differ only in d_hat differ by that delta up to one rounding
    t.total = (((t.r_s + t.vc_term) + t.est_term) + t.beta) + t.d_hat;
    return t;
}

inline double target_risk_bound(const BoundInputs& in) { return target_risk_bound_terms(in).total; }

// M = ceil((ln|T| + ln(1/delta)) / epsilon)
inline long long haussler_m(long long family_size, double delta, double epsilon) {
    if (family_size < 1) throw ValueError("haussler_m: |T| must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ValueError("haussler_m: delta must lie in (0,1)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValueError("haussler_m: epsilon must lie in (0,1)");
    const double need = (std::log(static_cast<double>(family_size)) + std::log(1.0 / delta)) / epsilon;
    return static_cast<long long>(std::ceil(need));
}

// Inverse: the error bound achievable with M samples.
inline double haussler_eps(long long family_size, double delta, long long m) {
    if (family_size < 1) throw ValueError("haussler_eps: |T| must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ValueError("haussler_eps: delta must lie in (0,1)");
    if (m < 1) throw ValueError("haussler_eps: M must be >= 1");
    return (std::log(static_cast<double>(family_size)) + std::log(1.0 / delta)) / static_cast<double>(m);
}

struct MetricAxiomReport {
    bool identity_zero = true;    // d(A,A) == 0 for every set
    bool symmetric = true;        // d(A,B) == d(B,A), exact
    double min_offdiagonal = 0.0; // smallest d over distinct pairs (positivity check)
    std::vector<std::vector<double>> d;  // pairwise d_hat matrix
    struct TriangleViolation {
        std::size_t i, j, k;
        double lhs, rhs;
    };
    std::vector<TriangleViolation> triangle_violations;
    bool triangle_ok() const { return triangle_violations.empty(); }
};

// Pairwise d_hat under one shared enumerated family, checked against the
// metric axioms. Symmetry must hold exactly: flip closure maps the minimizing
// hypothesis for (A,B) to the one for (B,A) with identical counts. The
// triangle check allows 1e-12 slack for the count-ratio roundings.
inline MetricAxiomReport metric_axiom_check(const std::vector<Tensor>& sets, const HypothesisFamily& family) {
    if (sets.size() < 3) throw ValueError("metric_axiom_check: need at least 3 representation sets");
    if (!family.flip_closed) throw ValueError("metric_axiom_check: family must be flip-closed");
    const std::size_t n = sets.size();
    MetricAxiomReport rep;
    rep.d.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) rep.d[i][j] = exact_h_divergence(sets[i], sets[j], family).d_hat;
    rep.min_offdiagonal = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (rep.d[i][i] != 0.0) rep.identity_zero = false;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rep.d[i][j] != rep.d[j][i]) rep.symmetric = false;
            rep.min_offdiagonal = std::min(rep.min_offdiagonal, rep.d[i][j]);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const double lhs = rep.d[i][k];
                const double rhs = rep.d[i][j] + rep.d[j][k];
                if (lhs > rhs + 1e-12) rep.triangle_violations.push_back({i, j, k, lhs, rhs});
            }
    return rep;
}

inline std::string divergence_report_text(const DivergenceReport& r) {
    std::ostringstream os;
    os << "mode " << divergence_mode_name(r.mode) << "\n";
    os << "d_hat " << format_g17(r.d_hat) << "\n";
    os << "epsilon " << format_g17(r.epsilon) << "\n";
    os << "a_distance " << format_g17(r.a_distance) << "\n";
    os << "n_source " << r.n_source << "\n";
    os << "n_target " << r.n_target << "\n";
    os << "warning " << (r.warning ? 1 : 0) << "\n";
    if (!r.note.empty()) os << "note " << r.note << "\n";
    return os.str();
}

inline std::string divergence_csv_header() {
    return "encoder,source,target,mode,d_hat,epsilon,a_distance,n_source,n_target,warning";
}

inline std::string divergence_csv_row(const std::string& encoder_name, const std::string& source,
                                      const std::string& target, const DivergenceReport& r) {
    std::ostringstream os;
    os << encoder_name << ',' << source << ',' << target << ',' << divergence_mode_name(r.mode) << ','
       << format_g9(r.d_hat) << ',' << format_g9(r.epsilon) << ',' << format_g9(r.a_distance) << ','
       << r.n_source << ',' << r.n_target << ',' << (r.warning ? 1 : 0);
    return os.str();
}

}  // namespace nci

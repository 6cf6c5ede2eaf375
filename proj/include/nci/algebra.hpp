#pragma once

// Symbolic model of the operator formalism. Domains are basis-symbol sets
// factored as [concept | own]; the two operator kinds act on whole domains.
// All checks are exact set/string comparisons, so every failure comes with a
// printable counterexample.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nci/common.hpp"

namespace nci {

struct SymbolicDomain {
    std::string name;
    std::set<std::string> concept_basis;  // shared across all domains
    std::set<std::string> own_basis;      // pairwise disjoint, disjoint from concept
};

inline bool symbolic_equal(const SymbolicDomain& a, const SymbolicDomain& b) {
    return a.concept_basis == b.concept_basis && a.own_basis == b.own_basis;
}

inline std::string domain_to_string(const SymbolicDomain& d) {
    std::ostringstream os;
    os << "[{";
    bool first = true;
    for (const std::string& s : d.concept_basis) {
        if (!first) os << ' ';
        os << s;
        first = false;
    }
    os << "}|{";
    first = true;
    for (const std::string& s : d.own_basis) {
        if (!first) os << ' ';
        os << s;
        first = false;
    }
    os << "}]";
    return os.str();
}

inline SymbolicDomain make_symbolic_domain(std::string name, std::set<std::string> concept_basis,
                                           std::set<std::string> own_basis) {
    for (const std::string& s : own_basis)
        if (concept_basis.count(s))
            throw ValueError("symbolic domain '" + name + "': own basis symbol '" + s +
                             "' collides with the concept basis");
    return {std::move(name), std::move(concept_basis), std::move(own_basis)};
}

// The all-concept domain [C | 0].
inline SymbolicDomain concept_only(std::set<std::string> concept_basis) {
    return {"C", std::move(concept_basis), {}};
}

enum class OperatorKind { commutative, right_invariant };

inline std::string operator_name(OperatorKind k) {
    return k == OperatorKind::commutative ? "commutative" : "right_invariant";
}

namespace detail {

inline void require_compatible(const SymbolicDomain& a, const SymbolicDomain& b, const char* who) {
    if (a.concept_basis != b.concept_basis)
        throw ValueError(std::string(who) + ": operands disagree on the concept basis");
    if (a.own_basis != b.own_basis) {
        for (const std::string& s : a.own_basis)
            if (b.own_basis.count(s))
                throw ValueError(std::string(who) + ": own bases of '" + a.name + "' and '" + b.name +
                                 "' overlap without being equal");
    }
}

}  // namespace detail

// commutative: both domain parts are dropped, leaving the shared concept.
// right_invariant: the left operand survives untouched.
inline SymbolicDomain apply(OperatorKind op, const SymbolicDomain& a, const SymbolicDomain& b) {
    detail::require_compatible(a, b, "apply");
    if (op == OperatorKind::commutative) return concept_only(a.concept_basis);
    return a;
}

struct SemigroupReport {
    bool closure_ok = true;
    bool commutativity_ok = true;
    bool associativity_ok = true;
    bool exhaustive = false;
    std::size_t pairs_checked = 0;
    std::size_t triples_checked = 0;
    std::vector<std::string> counterexamples;
    bool all_ok() const { return closure_ok && commutativity_ok && associativity_ok; }
};

// Closure in (set plus the concept-only domain), commutativity, and
// associativity. Sets of at most 4 domains are checked exhaustively over all
// ordered pairs and triples; larger sets get every pair plus `trials`
// seeded random triples.
inline SemigroupReport check_semigroup(OperatorKind op, const std::vector<SymbolicDomain>& domains,
                                       std::size_t trials, std::uint64_t seed = 0) {
    if (domains.size() < 2) throw ValueError("check_semigroup: need at least 2 domains");
    const SymbolicDomain cdom = concept_only(domains.front().concept_basis);
    bool has_c = false;
    for (const SymbolicDomain& d : domains) {
        if (symbolic_equal(d, cdom)) has_c = true;
        detail::require_compatible(domains.front(), d, "check_semigroup");
    }
    for (std::size_t i = 0; i < domains.size(); ++i)
        for (std::size_t j = i + 1; j < domains.size(); ++j)
            detail::require_compatible(domains[i], domains[j], "check_semigroup");
    if (!has_c) throw ValueError("check_semigroup: the domain set must contain the concept-only domain");

    SemigroupReport rep;
    const auto in_closure = [&](const SymbolicDomain& d) {
        if (symbolic_equal(d, cdom)) return true;
        for (const SymbolicDomain& m : domains)
            if (symbolic_equal(d, m)) return true;
        return false;
    };
    const auto note = [&rep](const std::string& s) {
        if (rep.counterexamples.size() < 10) rep.counterexamples.push_back(s);
    };

    const std::size_t n = domains.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const SymbolicDomain ab = apply(op, domains[i], domains[j]);
            ++rep.pairs_checked;
            if (!in_closure(ab)) {
                rep.closure_ok = false;
                note("closure: " + domains[i].name + " x " + domains[j].name + " -> " + domain_to_string(ab));
            }
            if (!symbolic_equal(ab, apply(op, domains[j], domains[i]))) {
                rep.commutativity_ok = false;
                note("commutativity: (" + domains[i].name + ", " + domains[j].name + "): got " +
                     domain_to_string(ab) + " vs " + domain_to_string(apply(op, domains[j], domains[i])));
            }
        }

    const auto check_triple = [&](std::size_t i, std::size_t j, std::size_t k) {
        const SymbolicDomain left = apply(op, apply(op, domains[i], domains[j]), domains[k]);
        const SymbolicDomain right = apply(op, domains[i], apply(op, domains[j], domains[k]));
        ++rep.triples_checked;
        if (!symbolic_equal(left, right)) {
            rep.associativity_ok = false;
            note("associativity: (" + domains[i].name + ", " + domains[j].name + ", " + domains[k].name +
                 "): " + domain_to_string(left) + " vs " + domain_to_string(right));
        }
    };

    if (n <= 4) {
        rep.exhaustive = true;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k) check_triple(i, j, k);
    } else {
        std::mt19937_64 rng(derive_seed(seed, "algebra/triples"));
        for (std::size_t t = 0; t < trials; ++t) check_triple(rng() % n, rng() % n, rng() % n);
    }
    return rep;
}

inline std::string semigroup_report_text(OperatorKind op, const SemigroupReport& r) {
    std::ostringstream os;
    os << "operator " << operator_name(op) << "\n";
    os << "closure " << (r.closure_ok ? "PASS" : "FAIL") << "\n";
    os << "commutativity " << (r.commutativity_ok ? "PASS" : "FAIL") << "\n";
    os << "associativity " << (r.associativity_ok ? "PASS" : "FAIL") << "\n";
    os << "pairs_checked " << r.pairs_checked << "\n";
    os << "triples_checked " << r.triples_checked << "\n";
    os << "exhaustive " << (r.exhaustive ? 1 : 0) << "\n";
    for (const std::string& c : r.counterexamples) os << "counterexample " << c << "\n";
    return os.str();
}

// Encoder over block labels. `commutatively_invariant` is the lemma's
// hypothesis: every domain-specific block, including an empty or annihilated
// one, maps to the single symbol k. A sensitive encoder keeps per-domain
// images and leaves the zero block at zero.
struct SymbolicEncoder {
    std::string concept_image = "yhat";
    std::string shared_image = "k";
    std::map<std::string, std::string> own_images;  // block label -> image
    bool commutatively_invariant = true;

    static SymbolicEncoder invariant(const std::vector<SymbolicDomain>& domains) {
        SymbolicEncoder e;
        for (const SymbolicDomain& d : domains) e.own_images[block_label(d)] = e.shared_image;
        return e;
    }
    static SymbolicEncoder domain_sensitive(const std::vector<SymbolicDomain>& domains) {
        SymbolicEncoder e;
        e.commutatively_invariant = false;
        for (const SymbolicDomain& d : domains) e.own_images[block_label(d)] = "k_" + d.name;
        return e;
    }

    // One symbol per own block; the empty block is the zero subspace.
    static std::string block_label(const SymbolicDomain& d) {
        if (d.own_basis.empty()) return "0";
        std::string s;
        for (const std::string& b : d.own_basis) {
            if (!s.empty()) s += '+';
            s += b;
        }
        return s;
    }
};

struct DistributivityReport {
    bool holds = false;
    std::string lhs;
    std::string rhs;
};

// phi(D_s . D_tau^T) vs phi(D_s) . phi(D_tau)^T, evaluated blockwise.
// Input-side products reduce by idempotence (equal blocks) and domain
// independence (distinct own blocks annihilate). Output-side products of
// distinct encoder images stay irreducible, which is where a
// domain-sensitive encoder breaks the equality.
inline DistributivityReport check_distributivity(const SymbolicEncoder& enc, const SymbolicDomain& a,
                                                 const SymbolicDomain& b) {
    detail::require_compatible(a, b, "check_distributivity");
    const auto input_prod = [](const std::string& x, const std::string& y) {
        if (x == y) return x;
        return std::string("0");
    };
    const auto output_prod = [](const std::string& x, const std::string& y) {
        if (x == y) return x;
        if (x == "0" || y == "0") return std::string("0");
        return "(" + x + "." + y + ")";
    };
    const auto encode_own = [&enc](const std::string& block) {
        if (enc.commutatively_invariant) return enc.shared_image;
        if (block == "0") return block;
        const auto it = enc.own_images.find(block);
        if (it == enc.own_images.end())
            throw ValueError("check_distributivity: encoder has no image for block '" + block + "'");
        return it->second;
    };

    const std::string block_a = SymbolicEncoder::block_label(a);
    const std::string block_b = SymbolicEncoder::block_label(b);

    const std::string lhs_concept = enc.concept_image;  // C.C^T stays in the concept basis
    const std::string lhs_own = encode_own(input_prod(block_a, block_b));
    const std::string rhs_concept = output_prod(enc.concept_image, enc.concept_image);
    const std::string rhs_own = output_prod(encode_own(block_a), encode_own(block_b));

    DistributivityReport r;
    r.lhs = "[" + lhs_concept + "|" + lhs_own + "]";
    r.rhs = "[" + rhs_concept + "|" + rhs_own + "]";
    r.holds = lhs_concept == rhs_concept && lhs_own == rhs_own;
    return r;
}

struct SymbolicSample {
    std::string concept_part;  // c^i, tagged with its support index
    std::string domain_part;   // d^j, tagged with its domain
    std::string domain;
};

// Right-invariant fusion: every source sample is re-expressed with an
// observed target domain part (index mod m_tau), so all m_s + m_tau outputs
// live in the target domain. Concept parts pass through untouched.
inline std::vector<SymbolicSample> sample_fusion(const std::vector<SymbolicSample>& sources,
                                                 const std::vector<SymbolicSample>& targets) {
    if (targets.empty())
        throw ValueError("sample_fusion: no target samples to pair with (need m_tau >= 1)");
    const std::string& tau = targets.front().domain;
    for (const SymbolicSample& t : targets)
        if (t.domain != tau) throw ValueError("sample_fusion: target samples span multiple domains");
    if (!sources.empty()) {
        const std::string& s0 = sources.front().domain;
        for (const SymbolicSample& s : sources)
            if (s.domain != s0) throw ValueError("sample_fusion: source samples span multiple domains");
    }
    std::vector<SymbolicSample> fused;
    fused.reserve(sources.size() + targets.size());
    for (std::size_t i = 0; i < sources.size(); ++i)
        fused.push_back({sources[i].concept_part, targets[i % targets.size()].domain_part, tau});
    fused.insert(fused.end(), targets.begin(), targets.end());
    return fused;
}

}  // namespace nci

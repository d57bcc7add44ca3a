#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "polyprompt/errors.hpp"

namespace polyprompt {

// All entropies are in nats. The 0*log(0) := 0 convention applies throughout.

// ------------------------------------------------------------ raw entropy

// Shannon entropy of a count vector: -sum p_i ln p_i with p_i = c_i / total.
// Zero counts contribute nothing. Throws EmptyDistribution when the total
// is zero.
inline double shannon_entropy(std::span<const long long> counts) {
    long long total = 0;
    for (long long c : counts) {
        if (c < 0) throw EmptyDistribution("negative count");
        total += c;
    }
    if (total == 0) throw EmptyDistribution("empty distribution");
    double h = 0.0;
    for (long long c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

inline double shannon_entropy(const std::vector<long long>& counts) {
    return shannon_entropy(std::span<const long long>(counts));
}

template <typename K>
double shannon_entropy(const std::map<K, long long>& counts) {
    std::vector<long long> v;
    v.reserve(counts.size());
    for (const auto& [key, c] : counts) v.push_back(c);
    return shannon_entropy(v);
}

// --------------------------------------------------------- maximum entropy

// Largest entropy achievable by spreading k items over m categories: r of
// them hold q+1 items and m-r hold q, where q = floor(k/m), r = k - m*q.
// Equals ln(m) whenever m divides k, and ln(k) when k <= m.
inline double h_max(long long k, long long m) {
    if (k < 1) throw EmptyDistribution("h_max: k must be >= 1");
    if (m < 2) throw EmptyDistribution("h_max: m must be >= 2");
    const long long q = k / m;
    const long long r = k - m * q;
    const double kd = static_cast<double>(k);
    const double p_high = static_cast<double>(q + 1) / kd;
    const double p_low = static_cast<double>(q) / kd;
    double h = 0.0;
    if (r > 0) h -= static_cast<double>(r) * p_high * std::log(p_high);
    if (q > 0) h -= static_cast<double>(m - r) * p_low * std::log(p_low);
    return h;
}

// ------------------------------------------------------ normalized entropy

// shannon_entropy / h_max(total, m), clamped to the degenerate case: one
// single item has no spread, so k == 1 scores 0.
inline double normalized_entropy(std::span<const long long> counts, long long m) {
    double h = shannon_entropy(counts);
    long long total = 0;
    for (long long c : counts) total += c;
    double bound = h_max(total, m);
    if (bound <= 0.0) return 0.0;
    return h / bound;
}

inline double normalized_entropy(const std::vector<long long>& counts, long long m) {
    return normalized_entropy(std::span<const long long>(counts), m);
}

template <typename K>
double normalized_entropy(const std::map<K, long long>& counts, long long m) {
    std::vector<long long> v;
    v.reserve(counts.size());
    for (const auto& [key, c] : counts) v.push_back(c);
    return normalized_entropy(v, m);
}

// ------------------------------------------------------------ choice labels

enum class Label : int { A = 0, B = 1, C = 2, D = 3 };

inline char label_char(Label l) { return static_cast<char>('A' + static_cast<int>(l)); }

inline Label label_from_char(char c) {
    switch (c) {
        case 'A': case 'a': return Label::A;
        case 'B': case 'b': return Label::B;
        case 'C': case 'c': return Label::C;
        case 'D': case 'd': return Label::D;
    }
    throw LabelMismatch(std::string("not a choice label: ") + c);
}

// Pooled answer counts for one item.
struct ChoiceDistribution {
    std::array<long long, 4> counts{};  // indexed by Label

    void add(Label l) { ++counts[static_cast<std::size_t>(l)]; }
    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }
    std::vector<long long> as_vector() const { return {counts.begin(), counts.end()}; }
};

// Reason entropy: normalized over the four choice labels (m = 4).
inline double reason_entropy(const ChoiceDistribution& dist) {
    return normalized_entropy(dist.as_vector(), 4);
}

// ------------------------------------------------------ demographic counts

enum class Attribute { nationality, ethnicity, region };

inline const char* attribute_name(Attribute a) {
    switch (a) {
        case Attribute::nationality: return "nationality";
        case Attribute::ethnicity: return "ethnicity";
        case Attribute::region: return "region";
    }
    return "?";
}

struct AttributeCounts {
    Attribute attribute = Attribute::nationality;
    std::map<std::string, long long> counts;
    long long total = 0;

    void add(const std::string& category) {
        ++counts[category];
        ++total;
    }
};

// Normalized entropy of category counts. Nationality and ethnicity are
// open vocabularies, so the bound is the all-distinct case ln(total);
// region uses the closed 8-way vocabulary bound h_max(total, 8).
inline double demographic_entropy(const AttributeCounts& ac) {
    if (ac.total == 0) throw EmptySet("no demographic labels");
    if (ac.total == 1) return 0.0;
    double h = shannon_entropy(ac.counts);
    double bound = ac.attribute == Attribute::region
                       ? h_max(ac.total, 8)
                       : std::log(static_cast<double>(ac.total));
    if (bound <= 0.0) return 0.0;
    return h / bound;
}

// ------------------------------------------------------- vector similarity

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatch("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw ZeroNormVector("zero-norm embedding");
    // rounding can push |cos| a hair past 1
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Mean pairwise cosine dissimilarity D(S) = 2/(k(k-1)) * sum_{a<b} (1 - cos).
// Repeated identical vectors are allowed and contribute zero-dissimilarity
// pairs.
inline double pairwise_dissimilarity(const std::vector<std::vector<double>>& vectors) {
    const std::size_t k = vectors.size();
    if (k < 2) throw EmptySet("pairwise_dissimilarity needs k >= 2 vectors");
    double sum = 0.0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            sum += 1.0 - cosine_similarity(vectors[a], vectors[b]);
    return 2.0 * sum / (static_cast<double>(k) * static_cast<double>(k - 1));
}

// --------------------------------------------------- perspective diversity

// Embeddings of one item's four choices, in label order.
struct EmbeddingSet {
    std::string statement_id;
    std::array<std::vector<double>, 4> vectors;

    const std::vector<double>& at(Label l) const {
        return vectors[static_cast<std::size_t>(l)];
    }
};

namespace detail {

// Largest D(S) over every size-k selection of the four choice embeddings,
// repetition allowed. Selections may legitimately repeat labels, so the
// candidate set must include multisets or repeated near-opposite pairs
// could push the normalized score past 1; for distinct selections the
// maximizing multiset coincides with the best distinct subset whenever one
// exists. Enumerates multiplicity vectors (c0,c1,c2,c3) summing to k.
inline double max_selection_dissimilarity(const EmbeddingSet& emb, std::size_t k) {
    double best = 0.0;
    const long long n = static_cast<long long>(k);
    for (long long c0 = 0; c0 <= n; ++c0)
        for (long long c1 = 0; c0 + c1 <= n; ++c1)
            for (long long c2 = 0; c0 + c1 + c2 <= n; ++c2) {
                long long c3 = n - c0 - c1 - c2;
                std::vector<std::vector<double>> sel;
                for (long long i = 0; i < c0; ++i) sel.push_back(emb.vectors[0]);
                for (long long i = 0; i < c1; ++i) sel.push_back(emb.vectors[1]);
                for (long long i = 0; i < c2; ++i) sel.push_back(emb.vectors[2]);
                for (long long i = 0; i < c3; ++i) sel.push_back(emb.vectors[3]);
                best = std::max(best, pairwise_dissimilarity(sel));
            }
    return best;
}

}  // namespace detail

// D(selected) / max_{|S|=k} D(S). Repeated labels in the selection are
// allowed (the model may pick the same choice under several languages).
// When every candidate selection scores ~zero (all four embeddings
// parallel), the score is 0 by convention.
inline double perspective_diversity(std::span<const Label> selection, const EmbeddingSet& emb) {
    const std::size_t k = selection.size();
    if (k < 2) throw EmptySet("perspective_diversity needs k >= 2 selections");
    std::vector<std::vector<double>> sel;
    sel.reserve(k);
    for (Label l : selection) sel.push_back(emb.at(l));
    const double numerator = pairwise_dissimilarity(sel);
    const double denominator = detail::max_selection_dissimilarity(emb, k);
    if (denominator <= 1e-12) return 0.0;
    return numerator / denominator;
}

inline double perspective_diversity(const std::vector<Label>& selection, const EmbeddingSet& emb) {
    return perspective_diversity(std::span<const Label>(selection), emb);
}

}  // namespace polyprompt

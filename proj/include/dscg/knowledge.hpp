#pragma once

// Offline commonsense knowledge: weighted (subject, relation, object) triples
// and a term -> vector embedding table.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "dscg/error.hpp"
#include "dscg/rng.hpp"

namespace dscg {

enum class Relation { AtLocation, UsedFor };

inline constexpr std::string_view relation_name(Relation r) {
    return r == Relation::AtLocation ? "AtLocation" : "UsedFor";
}

/// Accepts the canonical names, ConceptNet URIs (/r/AtLocation) and the
/// short CLI spellings atloc / usedfor, case-insensitively.
inline std::optional<Relation> parse_relation(std::string_view token) {
    std::string t(token);
    if (t.starts_with("/r/")) t = t.substr(3);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "atlocation" || t == "atloc") return Relation::AtLocation;
    if (t == "usedfor") return Relation::UsedFor;
    return std::nullopt;
}

/// Lowercase, underscores to spaces, whitespace runs collapsed, trimmed.
inline std::string normalize_term(std::string_view term) {
    std::string out;
    out.reserve(term.size());
    bool pending_space = false;
    for (unsigned char c : term) {
        if (c == '_' || std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

struct KnowledgeTriple {
    std::string subject;
    Relation relation;
    std::string object;
    double weight;

    bool operator==(const KnowledgeTriple&) const = default;
};

struct ConceptHit {
    std::string term;
    double weight;

    bool operator==(const ConceptHit&) const = default;
};

class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = 300) : dim_(dim) {
        if (dim_ == 0) throw ValidationError("embeddings: dimension must be positive");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }

    void insert(std::string_view term, std::vector<double> v) {
        if (v.size() != dim_)
            throw ValidationError("embeddings: vector for '" + std::string(term) + "' has dimension " +
                                  std::to_string(v.size()) + ", expected " + std::to_string(dim_));
        for (double x : v)
            if (!std::isfinite(x)) throw ValidationError("embeddings: non-finite value for '" + std::string(term) + "'");
        vectors_[normalize_term(term)] = std::move(v);
    }

    const std::vector<double>* find(std::string_view term) const {
        const auto it = vectors_.find(normalize_term(term));
        return it == vectors_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, std::vector<double>>& entries() const { return vectors_; }

private:
    std::size_t dim_;
    std::map<std::string, std::vector<double>> vectors_;
};

class KnowledgeBase {
public:
    KnowledgeBase() = default;

    KnowledgeBase(const std::vector<KnowledgeTriple>& triples, EmbeddingTable embeddings)
        : embeddings_(std::move(embeddings)) {
        for (const auto& t : triples) add(t);
        rebuild_index();
    }

    /// Triples after normalisation and max-weight deduplication, in key order.
    std::vector<KnowledgeTriple> triples() const {
        std::vector<KnowledgeTriple> out;
        out.reserve(weights_.size());
        for (const auto& [key, w] : weights_) out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), w});
        return out;
    }

    const EmbeddingTable& embeddings() const { return embeddings_; }
    std::size_t embedding_dim() const { return embeddings_.dim(); }

    /// Non-fatal problems found while loading, each prefixed with its line.
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

    /// Concepts linked to `object_class` by `relation` with weight strictly
    /// above 1, by descending weight then ascending term.
    std::vector<ConceptHit> query_concepts(std::string_view object_class, Relation relation) const {
        const auto it = index_.find({normalize_term(object_class), relation});
        if (it == index_.end()) return {};
        return it->second;
    }

    /// Stored vector, else mean of the stored token vectors of a multi-word
    /// term, else a pseudo-random unit vector seeded by the term's hash.
    std::vector<double> embed(std::string_view term) const {
        const std::string norm = normalize_term(term);
        if (const auto* v = embeddings_.find(norm)) return *v;

        std::vector<double> acc(embeddings_.dim(), 0.0);
        std::size_t found = 0;
        std::istringstream tokens(norm);
        for (std::string tok; tokens >> tok;) {
            if (const auto* v = embeddings_.find(tok)) {
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*v)[i];
                ++found;
            }
        }
        if (found > 0) {
            for (auto& x : acc) x /= static_cast<double>(found);
            return acc;
        }

        Rng rng(stable_hash(norm));
        double sq = 0;
        for (auto& x : acc) {
            x = rng.normal();
            sq += x * x;
        }
        const double n = std::sqrt(sq);
        for (auto& x : acc) x /= n;
        return acc;
    }

    /// True when embed() would have to fall back to the hashed vector.
    bool is_out_of_vocabulary(std::string_view term) const {
        const std::string norm = normalize_term(term);
        if (embeddings_.find(norm)) return false;
        std::istringstream tokens(norm);
        for (std::string tok; tokens >> tok;)
            if (embeddings_.find(tok)) return false;
        return true;
    }

    void add_diagnostic(std::string d) { diagnostics_.push_back(std::move(d)); }

private:
    using Key = std::tuple<std::string, Relation, std::string>;

    void add(const KnowledgeTriple& t) {
        if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
            throw ValidationError("knowledge: weight must be finite and non-negative");
        Key key{normalize_term(t.subject), t.relation, normalize_term(t.object)};
        auto [it, inserted] = weights_.emplace(key, t.weight);
        if (!inserted) it->second = std::max(it->second, t.weight);
    }

    void rebuild_index() {
        index_.clear();
        for (const auto& [key, w] : weights_) {
            if (!(w > 1.0)) continue;
            index_[{std::get<0>(key), std::get<1>(key)}].push_back({std::get<2>(key), w});
        }
        for (auto& [k, hits] : index_)
            std::sort(hits.begin(), hits.end(), [](const ConceptHit& a, const ConceptHit& b) {
                return a.weight != b.weight ? a.weight > b.weight : a.term < b.term;
            });
    }

    std::map<Key, double> weights_;
    std::map<std::pair<std::string, Relation>, std::vector<ConceptHit>> index_;
    EmbeddingTable embeddings_;
    std::vector<std::string> diagnostics_;
};

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i)
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace detail

struct TripleFile {
    std::vector<KnowledgeTriple> triples;
    std::vector<std::string> diagnostics;
};

/// TSV: subject, relation, object, weight. '#' lines and blank lines ignored.
/// Unknown relations are fatal; other malformed rows are skipped and reported.
inline TripleFile read_triples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("knowledge: cannot open triples file " + path.string());
    TripleFile out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto cols = detail::split(line, '\t');
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cols.size() != 4) {
            out.diagnostics.push_back(where + ": expected 4 tab-separated columns, got " + std::to_string(cols.size()));
            continue;
        }
        const auto rel = parse_relation(cols[1]);
        if (!rel) throw ParseError(where + ": unknown relation '" + std::string(cols[1]) + "'");
        const auto w = detail::parse_double(cols[3]);
        if (!w || !std::isfinite(*w) || *w < 0) {
            out.diagnostics.push_back(where + ": invalid weight '" + std::string(cols[3]) + "'");
            continue;
        }
        if (normalize_term(cols[0]).empty() || normalize_term(cols[2]).empty()) {
            out.diagnostics.push_back(where + ": empty term");
            continue;
        }
        out.triples.push_back({std::string(cols[0]), *rel, std::string(cols[2]), *w});
    }
    return out;
}

/// First line "DIM <d>", then one row per term: the term (may contain spaces)
/// followed by d space-separated numbers.
inline EmbeddingTable read_embeddings(const std::filesystem::path& path, std::vector<std::string>* diagnostics = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("knowledge: cannot open embeddings file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing DIM header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream header(line);
    std::string tag;
    long long dim = 0;
    if (!(header >> tag >> dim) || tag != "DIM" || dim <= 0)
        throw ParseError(path.string() + ":1: expected header 'DIM <d>'");
    EmbeddingTable table(static_cast<std::size_t>(dim));
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> tokens;
        std::istringstream ts(line);
        for (std::string t; ts >> t;) tokens.push_back(t);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (tokens.size() < static_cast<std::size_t>(dim) + 1) {
            if (diagnostics) diagnostics->push_back(where + ": expected a term and " + std::to_string(dim) + " values");
            continue;
        }
        const std::size_t n_term = tokens.size() - static_cast<std::size_t>(dim);
        std::string term;
        for (std::size_t i = 0; i < n_term; ++i) term += (i ? " " : "") + tokens[i];
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(dim));
        bool ok = true;
        for (std::size_t i = n_term; i < tokens.size() && ok; ++i) {
            const auto x = detail::parse_double(tokens[i]);
            ok = x && std::isfinite(*x);
            if (ok) v.push_back(*x);
        }
        if (!ok) {
            if (diagnostics) diagnostics->push_back(where + ": invalid number");
            continue;
        }
        table.insert(term, std::move(v));
    }
    return table;
}

inline KnowledgeBase load_kb(const std::filesystem::path& triples_path, const std::filesystem::path& embeddings_path) {
    TripleFile tf = read_triples(triples_path);
    std::vector<std::string> diags = std::move(tf.diagnostics);
    EmbeddingTable table = read_embeddings(embeddings_path, &diags);
    KnowledgeBase kb(tf.triples, std::move(table));
    for (auto& d : diags) kb.add_diagnostic(std::move(d));
    return kb;
}

inline void write_triples(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("knowledge: cannot write " + path.string());
    out << "# subject\trelation\tobject\tweight\n";
    for (const auto& t : kb.triples())
        out << t.subject << '\t' << relation_name(t.relation) << '\t' << t.object << '\t'
            << detail::format_double(t.weight) << '\n';
}

inline void write_embeddings(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("knowledge: cannot write " + path.string());
    out << "DIM " << kb.embedding_dim() << '\n';
    for (const auto& [term, v] : kb.embeddings().entries()) {
        out << term;
        for (double x : v) out << ' ' << detail::format_double(x);
        out << '\n';
    }
}

} // namespace dscg

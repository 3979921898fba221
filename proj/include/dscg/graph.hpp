#pragma once

// Directed spatial graph over scene objects, and its commonsense expansion
// with concept nodes.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dscg/knowledge.hpp"
#include "dscg/scene.hpp"

namespace dscg {

enum class NodeKind { ObjectObserved, ObjectTarget, Concept };
enum class EdgeType { Proximity, AtLocation, UsedFor };

inline constexpr std::string_view node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::ObjectObserved: return "observed";
        case NodeKind::ObjectTarget: return "target";
        case NodeKind::Concept: return "concept";
    }
    return "?";
}

inline constexpr std::string_view edge_type_name(EdgeType t) {
    switch (t) {
        case EdgeType::Proximity: return "Proximity";
        case EdgeType::AtLocation: return "AtLocation";
        case EdgeType::UsedFor: return "UsedFor";
    }
    return "?";
}

inline constexpr EdgeType edge_type_of(Relation r) {
    return r == Relation::AtLocation ? EdgeType::AtLocation : EdgeType::UsedFor;
}

using RelationSet = std::set<Relation>;

inline const RelationSet& all_relations() {
    static const RelationSet all{Relation::AtLocation, Relation::UsedFor};
    return all;
}

struct Node {
    std::size_t id = 0;
    NodeKind kind = NodeKind::ObjectObserved;
    std::string label;
    std::vector<double> feature;
    /// Observed objects only.
    std::optional<Position> position;
    /// Scene instance id for observed objects, -1 otherwise.
    std::int64_t instance_id = -1;

    bool is_object() const { return kind != NodeKind::Concept; }
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    EdgeType etype = EdgeType::Proximity;
    bool target_flag = false;
    /// position(dst) - position(src) for observed pairs, zero otherwise.
    Position relpos;
};

struct Graph {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    int dim = 2;

    std::size_t target() const {
        std::optional<std::size_t> t;
        for (const auto& n : nodes)
            if (n.kind == NodeKind::ObjectTarget) {
                if (t) throw ContractError("graph: more than one target node");
                t = n.id;
            }
        if (!t) throw ContractError("graph: no target node");
        return *t;
    }

    std::vector<std::size_t> observed() const {
        std::vector<std::size_t> out;
        for (const auto& n : nodes)
            if (n.kind == NodeKind::ObjectObserved) out.push_back(n.id);
        return out;
    }

    std::size_t count(NodeKind k) const {
        std::size_t c = 0;
        for (const auto& n : nodes) c += n.kind == k;
        return c;
    }

    std::size_t feature_dim() const { return nodes.empty() ? 0 : nodes.front().feature.size(); }
};

/// Object nodes (observed ones, then the target) joined by a complete set of
/// directed proximity edges. Target-incident edges carry a zero offset and
/// the target flag, since the target's position is unknown.
inline Graph build_dsg(const PartialScene& scene, const KnowledgeBase& kb) {
    validate(scene);
    Graph g;
    g.dim = scene.dim;
    for (const auto& o : scene.observed) {
        Node n;
        n.id = g.nodes.size();
        n.kind = NodeKind::ObjectObserved;
        n.label = normalize_term(o.class_label);
        n.feature = kb.embed(n.label);
        n.position = o.position;
        n.instance_id = o.instance_id;
        g.nodes.push_back(std::move(n));
    }
    Node t;
    t.id = g.nodes.size();
    t.kind = NodeKind::ObjectTarget;
    t.label = normalize_term(scene.target_class);
    t.feature = kb.embed(t.label);
    g.nodes.push_back(std::move(t));

    const std::size_t n_obj = g.nodes.size();
    const auto dim = static_cast<std::size_t>(scene.dim);
    for (std::size_t i = 0; i < n_obj; ++i)
        for (std::size_t j = 0; j < n_obj; ++j) {
            if (i == j) continue;
            Edge e;
            e.src = i;
            e.dst = j;
            e.etype = EdgeType::Proximity;
            e.relpos.assign(dim, 0.0);
            const bool involves_target = g.nodes[i].kind == NodeKind::ObjectTarget || g.nodes[j].kind == NodeKind::ObjectTarget;
            e.target_flag = involves_target;
            if (!involves_target)
                for (std::size_t d = 0; d < dim; ++d) e.relpos[d] = (*g.nodes[j].position)[d] - (*g.nodes[i].position)[d];
            g.edges.push_back(std::move(e));
        }
    return g;
}

/// Adds one node per distinct concept linked (weight > 1) to any object
/// node by an enabled relation, with a directed edge each way.
inline Graph enrich_commonsense(Graph g, const KnowledgeBase& kb, const RelationSet& relations) {
    if (relations.empty()) return g;
    std::map<std::string, std::size_t> concept_ids;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Concept) concept_ids.emplace(n.label, n.id);
    const auto dim = static_cast<std::size_t>(g.dim);
    const std::size_t n_existing = g.nodes.size();
    for (std::size_t i = 0; i < n_existing; ++i) {
        if (!g.nodes[i].is_object()) continue;
        const std::string label = g.nodes[i].label;
        for (const Relation rel : relations) {
            for (const auto& hit : kb.query_concepts(label, rel)) {
                auto it = concept_ids.find(hit.term);
                if (it == concept_ids.end()) {
                    Node c;
                    c.id = g.nodes.size();
                    c.kind = NodeKind::Concept;
                    c.label = hit.term;
                    c.feature = kb.embed(hit.term);
                    g.nodes.push_back(std::move(c));
                    it = concept_ids.emplace(hit.term, g.nodes.size() - 1).first;
                }
                const auto et = edge_type_of(rel);
                g.edges.push_back(Edge{i, it->second, et, false, Position(dim, 0.0)});
                g.edges.push_back(Edge{it->second, i, et, false, Position(dim, 0.0)});
            }
        }
    }
    return g;
}

inline Graph build_dscg(const PartialScene& scene, const KnowledgeBase& kb, const RelationSet& relations) {
    return enrich_commonsense(build_dsg(scene, kb), kb, relations);
}

/// [onehot(Proximity, AtLocation, UsedFor), target_flag, relpos...], length 4 + dim.
inline std::vector<double> edge_feature(const Edge& e, int dim) {
    std::vector<double> f(4 + static_cast<std::size_t>(dim), 0.0);
    f[static_cast<std::size_t>(e.etype)] = 1.0;
    f[3] = e.target_flag ? 1.0 : 0.0;
    for (std::size_t d = 0; d < static_cast<std::size_t>(dim) && d < e.relpos.size(); ++d) f[4 + d] = e.relpos[d];
    return f;
}

inline nlohmann::json graph_to_json(const Graph& g) {
    nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
    for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"kind", node_kind_name(n.kind)}, {"label", n.label}});
    for (const auto& e : g.edges)
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", edge_type_name(e.etype)}, {"feature", edge_feature(e, g.dim)}});
    return {{"dim", g.dim}, {"nodes", nodes}, {"edges", edges}};
}

} // namespace dscg

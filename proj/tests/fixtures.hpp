#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dscg/numcore/grad_check.hpp"
#include "dscg/training.hpp"

namespace fixtures {

using namespace dscg;
namespace fs = std::filesystem;

inline fs::path data_dir() { return DSCG_DATA_DIR; }

inline const KnowledgeBase& bundled_kb() {
    static const KnowledgeBase kb = load_kb(data_dir() / "mini_kb.tsv", data_dir() / "mini_emb.txt");
    return kb;
}

inline LayoutSpec bundled_spec(int dim = 2) {
    LayoutSpec s = load_layout_spec(data_dir() / "layout.json");
    s.dim = dim;
    return s;
}

inline std::vector<PartialScene> scenes(std::size_t n, std::uint64_t seed, int dim = 2, double lo = 0.3, double hi = 0.9) {
    return generate_partial_dataset(bundled_spec(dim), n, seed, lo, hi);
}

inline ModelConfig small_config(std::size_t layers = 2, std::size_t hidden = 16, std::size_t heads = 2, int dim = 2) {
    ModelConfig c;
    c.d_emb = bundled_kb().embedding_dim();
    c.hidden = hidden;
    c.layers = layers;
    c.heads = heads;
    c.dim = dim;
    return c;
}

/// Moves biases and gains away from their initial constants so every
/// parameter influences the output.
inline void randomize(ModelParams& m, Rng& rng, double scale = 0.5) {
    m.for_each([&](const std::string& name, Tensor& t) {
        const bool weight = name.find(".W") != std::string::npos;
        const bool gain = name.ends_with("gain");
        if (weight) return;
        for (auto& x : t.mutable_data()) x = gain ? rng.uniform(0.5, 1.5) : rng.uniform(-scale, scale);
    });
}

/// Random graph: node 0 is the target, the rest observed objects, with
/// `n_concepts` of the last nodes turned into concept nodes. Edges are a
/// random subset of ordered pairs with consistent types and features.
inline Graph random_graph(Rng& rng, std::size_t n, std::size_t d, int dim, std::size_t n_concepts = 1, double p_edge = 0.6) {
    Graph g;
    g.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        Node node;
        node.id = i;
        node.kind = i == 0 ? NodeKind::ObjectTarget : (i + n_concepts >= n ? NodeKind::Concept : NodeKind::ObjectObserved);
        node.label = "n" + std::to_string(i);
        for (std::size_t k = 0; k < d; ++k) node.feature.push_back(rng.uniform(-1, 1));
        if (node.kind == NodeKind::ObjectObserved) {
            Position p;
            for (int k = 0; k < dim; ++k) p.push_back(rng.uniform(0, 5));
            node.position = p;
        }
        g.nodes.push_back(std::move(node));
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || rng.uniform() > p_edge) continue;
            const auto& a = g.nodes[i];
            const auto& b = g.nodes[j];
            if (a.kind == NodeKind::Concept && b.kind == NodeKind::Concept) continue;
            Edge e;
            e.src = i;
            e.dst = j;
            e.relpos.assign(static_cast<std::size_t>(dim), 0.0);
            if (a.is_object() && b.is_object()) {
                e.etype = EdgeType::Proximity;
                e.target_flag = a.kind == NodeKind::ObjectTarget || b.kind == NodeKind::ObjectTarget;
                if (!e.target_flag)
                    for (std::size_t k = 0; k < e.relpos.size(); ++k) e.relpos[k] = (*b.position)[k] - (*a.position)[k];
            } else {
                e.etype = rng.uniform() < 0.5 ? EdgeType::AtLocation : EdgeType::UsedFor;
            }
            g.edges.push_back(std::move(e));
        }
    return g;
}

/// Four-dimensional toy knowledge base: chair and table share "kitchen",
/// chair links to "sitting"; the table/eating link is below the weight cut.
inline KnowledgeBase tiny_kb() {
    EmbeddingTable t(4);
    t.insert("chair", {1, 0, 0, 0});
    t.insert("table", {0, 1, 0, 0});
    t.insert("kitchen", {0, 0, 1, 0});
    t.insert("sitting", {0, 0, 0, 1});
    return KnowledgeBase({{"chair", Relation::AtLocation, "kitchen", 3.0},
                          {"table", Relation::AtLocation, "kitchen", 2.0},
                          {"chair", Relation::UsedFor, "sitting", 4.0},
                          {"table", Relation::UsedFor, "eating", 0.5}},
                         t);
}

/// Three observed objects, a target and two concepts under tiny_kb().
inline PartialScene six_node_scene() {
    return {"six", 2, {{0, "chair", {1, 2}}, {1, "table", {4, 6}}, {2, "lamp", {0.5, 0}}}, "cup", {{2, 2}, {3.5, 1}}, 0.75};
}

/// Full training loss of `scene` as a function of the parameter map.
inline TapeObjective scene_objective(const PartialScene& scene, const KnowledgeBase& kb, const ModelParams& m) {
    return [&scene, &kb, m](Tape& tape, const ParamSet& ps) {
        ModelParams local = m;
        local.assign(ps);
        const Graph g = build_dscg(scene, kb, local.config.relations);
        const BoundModel bm = bind(tape, local, true);
        const auto fr = forward(g, bm);
        const Var p = aggregate_position(fr.relpos, positions_of(g, fr.observed_nodes));
        return closest_instance_loss(p, scene.target_instances);
    };
}

inline std::vector<double> flat(const Var& v) { return v.value().values(); }

} // namespace fixtures

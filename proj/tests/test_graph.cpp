#include <filesystem>
#include <iostream>

#include <gtest/gtest.h>

#include "dscg/graph.hpp"

using namespace dscg;
namespace fs = std::filesystem;

namespace {

KnowledgeBase tiny_kb() {
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

PartialScene three_observed() {
    return {"fix", 2, {{0, "chair", {1, 2}}, {1, "table", {4, 6}}, {2, "lamp", {0, 0}}}, "cup", {{2, 2}}, 0.75};
}

const KnowledgeBase& bundled_kb() {
    static const KnowledgeBase kb = load_kb(fs::path(DSCG_DATA_DIR) / "mini_kb.tsv", fs::path(DSCG_DATA_DIR) / "mini_emb.txt");
    return kb;
}

std::vector<PartialScene> bundled_scenes(int dim, std::size_t n, std::uint64_t seed) {
    auto spec = load_layout_spec(fs::path(DSCG_DATA_DIR) / "layout.json");
    spec.dim = dim;
    return generate_partial_dataset(spec, n, seed, 0.3, 0.9);
}

const Edge& find_edge(const Graph& g, std::size_t s, std::size_t d) {
    for (const auto& e : g.edges)
        if (e.src == s && e.dst == d && e.etype == EdgeType::Proximity) return e;
    throw std::runtime_error("edge not found");
}

} // namespace

TEST(BuildDsg, CompleteDigraphOverObjects) {
    const Graph g = build_dsg(three_observed(), tiny_kb());
    EXPECT_EQ(g.nodes.size(), 4u);
    EXPECT_EQ(g.edges.size(), 12u);
    EXPECT_EQ(g.count(NodeKind::ObjectObserved), 3u);
    EXPECT_EQ(g.target(), 3u);
    EXPECT_EQ(g.nodes[3].label, "cup");
    EXPECT_EQ(g.nodes[0].feature, (std::vector<double>{1, 0, 0, 0}));
    EXPECT_EQ(g.nodes[3].feature, tiny_kb().embed("cup"));
    EXPECT_FALSE(g.nodes[3].position);
}

TEST(BuildDsg, RelativePositionsAndAntisymmetry) {
    const Graph g = build_dsg(three_observed(), tiny_kb());
    EXPECT_EQ(find_edge(g, 0, 1).relpos, (Position{3, 4}));
    EXPECT_EQ(find_edge(g, 1, 0).relpos, (Position{-3, -4}));
    EXPECT_FALSE(find_edge(g, 0, 1).target_flag);
}

TEST(BuildDsg, TargetEdgesZeroedAndFlagged) {
    const Graph g = build_dsg(three_observed(), tiny_kb());
    std::size_t n = 0;
    for (const auto& e : g.edges) {
        const bool t = e.src == 3 || e.dst == 3;
        EXPECT_EQ(e.target_flag, t);
        if (t) {
            EXPECT_EQ(e.relpos, (Position{0, 0}));
            ++n;
        }
    }
    EXPECT_EQ(n, 6u);
}

TEST(EnrichCommonsense, EmptyRelationsLeaveGraphUnchanged) {
    const Graph g = build_dsg(three_observed(), tiny_kb());
    const Graph e = enrich_commonsense(g, tiny_kb(), {});
    EXPECT_EQ(graph_to_json(e), graph_to_json(g));
}

TEST(EnrichCommonsense, SharedConceptIsOneNodeWithEdgesBothWays) {
    const Graph g = enrich_commonsense(build_dsg(three_observed(), tiny_kb()), tiny_kb(), {Relation::AtLocation});
    std::size_t kitchens = 0, kitchen_id = 0;
    for (const auto& n : g.nodes)
        if (n.label == "kitchen") {
            ++kitchens;
            kitchen_id = n.id;
            EXPECT_EQ(n.kind, NodeKind::Concept);
            EXPECT_FALSE(n.position);
            EXPECT_EQ(n.feature, (std::vector<double>{0, 0, 1, 0}));
        }
    ASSERT_EQ(kitchens, 1u);
    std::size_t incident = 0;
    for (const auto& e : g.edges)
        if (e.src == kitchen_id || e.dst == kitchen_id) {
            ++incident;
            EXPECT_EQ(e.etype, EdgeType::AtLocation);
            EXPECT_FALSE(e.target_flag);
            EXPECT_EQ(e.relpos, (Position{0, 0}));
        }
    EXPECT_EQ(incident, 4u);
}

TEST(EnrichCommonsense, RelationSubsetsSelectEdgeTypes) {
    const auto kb = tiny_kb();
    const Graph base = build_dsg(three_observed(), kb);
    const Graph u = enrich_commonsense(base, kb, {Relation::UsedFor});
    // Only chair->sitting passes the weight filter.
    EXPECT_EQ(u.count(NodeKind::Concept), 1u);
    EXPECT_EQ(u.edges.size(), base.edges.size() + 2);
    const Graph both = build_dscg(three_observed(), kb, all_relations());
    EXPECT_EQ(both.count(NodeKind::Concept), 2u);
    EXPECT_EQ(both.edges.size(), base.edges.size() + 6);
}

TEST(EnrichCommonsense, TargetClassGetsConceptEdges) {
    PartialScene s = three_observed();
    s.observed.erase(s.observed.begin());
    s.target_class = "chair";
    const Graph g = build_dscg(s, tiny_kb(), {Relation::UsedFor});
    const std::size_t t = g.target();
    bool linked = false;
    for (const auto& e : g.edges) linked |= e.src == t && e.etype == EdgeType::UsedFor && g.nodes[e.dst].label == "sitting";
    EXPECT_TRUE(linked);
}

TEST(EdgeFeature, Layouts) {
    EXPECT_EQ(edge_feature(Edge{0, 1, EdgeType::Proximity, false, {3, 4}}, 2), (std::vector<double>{1, 0, 0, 0, 3, 4}));
    EXPECT_EQ(edge_feature(Edge{0, 5, EdgeType::AtLocation, false, {0, 0}}, 2), (std::vector<double>{0, 1, 0, 0, 0, 0}));
    EXPECT_EQ(edge_feature(Edge{0, 3, EdgeType::Proximity, true, {0, 0}}, 2), (std::vector<double>{1, 0, 0, 1, 0, 0}));
    EXPECT_EQ(edge_feature(Edge{5, 0, EdgeType::UsedFor, false, {0, 0, 0}}, 3), (std::vector<double>{0, 0, 1, 0, 0, 0, 0}));
    EXPECT_EQ(edge_feature(Edge{0, 1, EdgeType::Proximity, false, {1, 2, 3}}, 3).size(), 7u);
}

TEST(DscgInvariants, HoldOnBundledScenes) {
    double ratio_sum = 0;
    std::size_t graphs = 0;
    for (int dim : {2, 3}) {
        for (const auto& s : bundled_scenes(dim, 25, 31)) {
            const Graph g = build_dscg(s, bundled_kb(), all_relations());
            const std::size_t n_o = s.observed.size() + 1;
            EXPECT_EQ(g.nodes.size(), n_o + g.count(NodeKind::Concept));
            std::size_t prox = 0;
            std::set<std::string> labels;
            for (const auto& n : g.nodes) {
                if (n.kind == NodeKind::Concept) {
                    EXPECT_TRUE(labels.insert(n.label).second) << "duplicate concept " << n.label;
                }
            }
            for (const auto& e : g.edges) {
                EXPECT_NE(e.src, e.dst);
                const bool sc = g.nodes[e.src].kind == NodeKind::Concept, dc = g.nodes[e.dst].kind == NodeKind::Concept;
                EXPECT_FALSE(sc && dc);
                if (e.etype == EdgeType::Proximity) {
                    ++prox;
                    EXPECT_FALSE(sc || dc);
                    if (!e.target_flag) {
                        const auto& back = find_edge(g, e.dst, e.src);
                        for (int d = 0; d < dim; ++d) EXPECT_EQ(e.relpos[static_cast<std::size_t>(d)] + back.relpos[static_cast<std::size_t>(d)], 0.0);
                    }
                } else {
                    EXPECT_NE(sc, dc);
                    EXPECT_EQ(e.relpos, Position(static_cast<std::size_t>(dim), 0.0));
                }
                EXPECT_EQ(edge_feature(e, dim).size(), 4u + static_cast<std::size_t>(dim));
            }
            EXPECT_EQ(prox, n_o * (n_o - 1));
            ratio_sum += static_cast<double>(g.count(NodeKind::Concept)) / static_cast<double>(n_o);
            ++graphs;
        }
    }
    std::cout << "mean concept/object node ratio on bundled scenes: " << ratio_sum / static_cast<double>(graphs) << "\n";
}

TEST(DscgInvariants, EdgeFeaturesTranslationInvariant) {
    Rng rng(4);
    for (int dim : {2, 3}) {
        for (const auto& s : bundled_scenes(dim, 10, 8)) {
            Position t;
            for (int d = 0; d < dim; ++d) t.push_back(rng.uniform(-50, 50));
            const Graph a = build_dscg(s, bundled_kb(), all_relations());
            const Graph b = build_dscg(translate_scene(s, t), bundled_kb(), all_relations());
            ASSERT_EQ(a.edges.size(), b.edges.size());
            for (std::size_t i = 0; i < a.edges.size(); ++i) {
                const auto fa = edge_feature(a.edges[i], dim), fb = edge_feature(b.edges[i], dim);
                for (std::size_t k = 0; k < fa.size(); ++k) EXPECT_NEAR(fa[k], fb[k], 1e-12);
            }
        }
    }
}

TEST(GraphJson, DumpHasNodesAndEdgeFeatures) {
    const Graph g = build_dscg(three_observed(), tiny_kb(), all_relations());
    const auto j = graph_to_json(g);
    EXPECT_EQ(j["nodes"].size(), g.nodes.size());
    EXPECT_EQ(j["edges"].size(), g.edges.size());
    EXPECT_EQ(j["nodes"][3]["kind"], "target");
    EXPECT_EQ(j["edges"][0]["feature"].size(), 6u);
    EXPECT_TRUE(j["edges"][0].contains("src"));
    EXPECT_TRUE(j["edges"][0].contains("dst"));
}

TEST(BuildDsg, InvalidSceneRejected) {
    PartialScene s = three_observed();
    s.observed.clear();
    EXPECT_THROW(build_dsg(s, tiny_kb()), ValidationError);
}

#pragma once

// Sparse ReLU-attention message passing over a D-SCG, the relative-position
// head and mean-pooled localisation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dscg/graph.hpp"
#include "dscg/numcore/ops.hpp"
#include "dscg/numcore/grad_check.hpp"
#include "dscg/rng.hpp"

namespace dscg {

struct ModelConfig {
    std::size_t d_emb = 300;
    /// Width of the first layer; later layers use twice this.
    std::size_t hidden = 256;
    std::size_t layers = 4;
    std::size_t heads = 4;
    int dim = 2;
    RelationSet relations = all_relations();

    std::size_t layer_out(std::size_t l) const { return l == 0 ? hidden : 2 * hidden; }
    std::size_t layer_in(std::size_t l) const { return l == 0 ? d_emb : layer_out(l - 1); }
    std::size_t edge_dim() const { return 4 + static_cast<std::size_t>(dim); }
    std::size_t head_in() const { return 2 * (d_emb + layer_out(layers - 1)); }

    void validate() const {
        if (d_emb < 1) throw ConfigError("model: d_emb must be positive");
        if (layers < 1) throw ConfigError("model: at least one message-passing layer is required");
        if (hidden < 2) throw ConfigError("model: hidden width must be at least 2");
        if (heads < 1) throw ConfigError("model: heads must be positive");
        if (dim != 2 && dim != 3) throw ConfigError("model: dim must be 2 or 3");
        for (std::size_t l = 0; l < layers; ++l)
            if (layer_out(l) % heads != 0)
                throw ConfigError("model: heads=" + std::to_string(heads) + " does not divide layer width " +
                                  std::to_string(layer_out(l)));
    }

    bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json rels = nlohmann::json::array();
    for (auto r : c.relations) rels.push_back(relation_name(r));
    return {{"d_emb", c.d_emb}, {"hidden", c.hidden}, {"layers", c.layers},
            {"heads", c.heads}, {"dim", c.dim},       {"relations", rels}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.d_emb = j.at("d_emb").get<std::size_t>();
        c.hidden = j.at("hidden").get<std::size_t>();
        c.layers = j.at("layers").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.dim = j.at("dim").get<int>();
        c.relations.clear();
        for (const auto& r : j.at("relations")) {
            const auto rel = parse_relation(r.get<std::string>());
            if (!rel) throw ParseError("model config: unknown relation " + r.dump());
            c.relations.insert(*rel);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

/// Per-layer weights, named as in the update rule: W_q/W_k/W_v node
/// projections, W_e edge projection, W_r residual projection, W_g gate,
/// W_o output projection, layer-norm gain/shift and scale-norm gain.
struct LayerParams {
    Tensor W_q, b_q, W_k, b_k, W_v, b_v, W_e, b_e, W_g, W_r, b_r, W_o, b_o, ln_gain, ln_shift, sn_gain;

    template <class Self, class F>
    static void visit(Self& self, F&& f) {
        f("W_q", self.W_q); f("b_q", self.b_q);
        f("W_k", self.W_k); f("b_k", self.b_k);
        f("W_v", self.W_v); f("b_v", self.b_v);
        f("W_e", self.W_e); f("b_e", self.b_e);
        f("W_g", self.W_g);
        f("W_r", self.W_r); f("b_r", self.b_r);
        f("W_o", self.W_o); f("b_o", self.b_o);
        f("ln_gain", self.ln_gain); f("ln_shift", self.ln_shift);
        f("sn_gain", self.sn_gain);
    }

    std::size_t d_in() const { return W_q.shape()[1]; }
    std::size_t d_out() const { return W_q.shape()[0]; }
};

struct ModelParams {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::vector<LayerParams> layers;
    Tensor head_W, head_b;

    /// Visits every parameter tensor with its stable name, in a fixed order.
    template <class F>
    void for_each(F&& f) {
        for (std::size_t l = 0; l < layers.size(); ++l)
            LayerParams::visit(layers[l], [&](const char* n, Tensor& t) { f("layer" + std::to_string(l) + "." + n, t); });
        f(std::string("head.W"), head_W);
        f(std::string("head.b"), head_b);
    }
    template <class F>
    void for_each(F&& f) const {
        for (std::size_t l = 0; l < layers.size(); ++l)
            LayerParams::visit(layers[l], [&](const char* n, const Tensor& t) { f("layer" + std::to_string(l) + "." + n, t); });
        f(std::string("head.W"), head_W);
        f(std::string("head.b"), head_b);
    }

    ParamSet to_map() const {
        ParamSet m;
        for_each([&](const std::string& n, const Tensor& t) { m.emplace(n, t); });
        return m;
    }

    /// Replaces every parameter from `m`; names and shapes must match.
    void assign(const ParamSet& m) {
        for_each([&](const std::string& n, Tensor& t) {
            const auto it = m.find(n);
            if (it == m.end()) throw ContractError("model: missing parameter '" + n + "'");
            if (it->second.shape() != t.shape())
                throw DimensionError("model: parameter '" + n + "' has shape " + shape_str(it->second.shape()) +
                                     ", expected " + shape_str(t.shape()));
            t = it->second;
        });
        if (m.size() != to_map().size()) throw ContractError("model: unexpected extra parameters");
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
        return n;
    }
};

namespace detail {

inline Tensor glorot(Rng& rng, std::size_t out, std::size_t in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> v(out * in);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return Tensor({out, in}, std::move(v));
}

inline Tensor filled(std::size_t n, double value) { return Tensor({n}, std::vector<double>(n, value)); }

} // namespace detail

/// Glorot-uniform weights, zero biases, unit gains; deterministic in seed.
inline ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams m;
    m.config = config;
    m.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::size_t in = config.layer_in(l), out = config.layer_out(l);
        LayerParams p;
        p.W_q = detail::glorot(rng, out, in);
        p.b_q = Tensor::zeros({out});
        p.W_k = detail::glorot(rng, out, in);
        p.b_k = Tensor::zeros({out});
        p.W_v = detail::glorot(rng, out, in);
        p.b_v = Tensor::zeros({out});
        p.W_e = detail::glorot(rng, out, config.edge_dim());
        p.b_e = Tensor::zeros({out});
        p.W_g = detail::glorot(rng, out, 3 * out);
        p.W_r = detail::glorot(rng, out, in);
        p.b_r = Tensor::zeros({out});
        p.W_o = detail::glorot(rng, out, out);
        p.b_o = Tensor::zeros({out});
        p.ln_gain = detail::filled(out, 1.0);
        p.ln_shift = Tensor::zeros({out});
        p.sn_gain = Tensor::scalar(1.0);
        m.layers.push_back(std::move(p));
    }
    m.head_W = detail::glorot(rng, static_cast<std::size_t>(config.dim), config.head_in());
    m.head_b = Tensor::zeros({static_cast<std::size_t>(config.dim)});
    return m;
}

/// Parameters placed on a tape, either as differentiable leaves or constants.
struct BoundLayer {
    Var W_q, b_q, W_k, b_k, W_v, b_v, W_e, b_e, W_g, W_r, b_r, W_o, b_o, ln_gain, ln_shift, sn_gain;
    std::size_t heads = 1;
};

struct BoundModel {
    std::vector<BoundLayer> layers;
    Var head_W, head_b;
    const ModelConfig* config = nullptr;
};

inline BoundModel bind(Tape& tape, const ModelParams& m, bool trainable) {
    auto put = [&](const std::string& name, const Tensor& t) { return trainable ? tape.param(name, t) : tape.constant(t); };
    BoundModel b;
    b.config = &m.config;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& p = m.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        BoundLayer bl;
        bl.W_q = put(pre + "W_q", p.W_q);
        bl.b_q = put(pre + "b_q", p.b_q);
        bl.W_k = put(pre + "W_k", p.W_k);
        bl.b_k = put(pre + "b_k", p.b_k);
        bl.W_v = put(pre + "W_v", p.W_v);
        bl.b_v = put(pre + "b_v", p.b_v);
        bl.W_e = put(pre + "W_e", p.W_e);
        bl.b_e = put(pre + "b_e", p.b_e);
        bl.W_g = put(pre + "W_g", p.W_g);
        bl.W_r = put(pre + "W_r", p.W_r);
        bl.b_r = put(pre + "b_r", p.b_r);
        bl.W_o = put(pre + "W_o", p.W_o);
        bl.b_o = put(pre + "b_o", p.b_o);
        bl.ln_gain = put(pre + "ln_gain", p.ln_gain);
        bl.ln_shift = put(pre + "ln_shift", p.ln_shift);
        bl.sn_gain = put(pre + "sn_gain", p.sn_gain);
        bl.heads = m.config.heads;
        b.layers.push_back(bl);
    }
    b.head_W = put("head.W", m.head_W);
    b.head_b = put("head.b", m.head_b);
    return b;
}

/// Graph connectivity and edge features as tape constants.
struct GraphInputs {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> src, dst;
    std::optional<Var> edge_features;  // [E x (4 + dim)]
    Var node_features;                 // [N x d_emb]
};

inline GraphInputs graph_inputs(Tape& tape, const Graph& g) {
    GraphInputs in;
    in.n_nodes = g.nodes.size();
    if (in.n_nodes == 0) throw ContractError("graph has no nodes");
    const std::size_t d = g.feature_dim();
    std::vector<double> feats;
    feats.reserve(in.n_nodes * d);
    for (const auto& n : g.nodes) {
        if (n.feature.size() != d) throw DimensionError("graph: node feature widths differ");
        feats.insert(feats.end(), n.feature.begin(), n.feature.end());
    }
    in.node_features = tape.constant(Tensor({in.n_nodes, d}, std::move(feats)));
    if (!g.edges.empty()) {
        const std::size_t fd = 4 + static_cast<std::size_t>(g.dim);
        std::vector<double> ef;
        ef.reserve(g.edges.size() * fd);
        for (const auto& e : g.edges) {
            const auto f = edge_feature(e, g.dim);
            ef.insert(ef.end(), f.begin(), f.end());
            in.src.push_back(e.src);
            in.dst.push_back(e.dst);
        }
        in.edge_features = tape.constant(Tensor({g.edges.size(), fd}, std::move(ef)));
    }
    return in;
}

/// Attention weights of one layer, one row per edge and one column per head.
struct LayerAttention {
    std::vector<std::size_t> src, dst;
    Tensor alpha;
};

struct AttentionTrace {
    std::vector<LayerAttention> layers;

    std::size_t total_weights() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.src.size() * l.alpha.cols();
        return n;
    }
    std::size_t zero_weights() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            for (std::size_t i = 0; i < l.src.size() * l.alpha.cols(); ++i) n += l.alpha[i] == 0.0;
        return n;
    }
};

/// One round of attentional message passing.
///
/// For each edge j->i and head h the weight is
///   alpha = ReLU(<q_i, k_j + e_ji> / sqrt(d_out / H))
/// and node i aggregates sum_j alpha (v_j + e_ji) per head slice. The
/// aggregate is added to the residual projection s_i = W_r h_i + b_r,
/// layer-normalised to u_i, gated with beta_i = sigmoid(W_g [u; s; u - s])
/// as (1 - beta) u + beta s, then re-projected by W_o and scale-normalised.
inline Var mp_layer(const GraphInputs& g, const Var& H, const BoundLayer& p, LayerAttention* trace = nullptr) {
    using namespace ops;
    if (H.value().rank() != 2 || H.value().rows() != g.n_nodes)
        throw ContractError("mp_layer: feature rows " + shape_str(H.shape()) + " do not match " +
                            std::to_string(g.n_nodes) + " nodes");
    if (H.value().cols() != p.W_q.value().shape()[1])
        throw ContractError("mp_layer: feature width " + std::to_string(H.value().cols()) + " vs layer input " +
                            std::to_string(p.W_q.value().shape()[1]));
    const std::size_t d_out = p.W_q.value().shape()[0];

    Var S = linear(H, p.W_r, p.b_r);
    Var pre = S;
    if (!g.src.empty()) {
        Var Q = linear(H, p.W_q, p.b_q);
        Var K = linear(H, p.W_k, p.b_k);
        Var V = linear(H, p.W_v, p.b_v);
        Var E = linear(*g.edge_features, p.W_e, p.b_e);
        Var KE = add(gather_rows(K, g.src), E);
        Var VE = add(gather_rows(V, g.src), E);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_out / p.heads));
        Var alpha = relu(head_dot(gather_rows(Q, g.dst), KE, p.heads, scale));
        if (trace) *trace = LayerAttention{g.src, g.dst, alpha.value()};
        pre = add(S, weighted_scatter(alpha, VE, g.dst, g.n_nodes));
    } else if (trace) {
        *trace = LayerAttention{{}, {}, Tensor::zeros({1, p.heads})};
    }
    Var U = layer_norm_rows(pre, p.ln_gain, p.ln_shift);
    Var beta = sigmoid(linear(concat_cols({U, S, sub(U, S)}), p.W_g));
    Var R = add(mul(one_minus(beta), U), mul(beta, S));
    return scale_norm_rows(linear(R, p.W_o, p.b_o), p.sn_gain);
}

struct ForwardResult {
    /// Predicted target offsets d_it, one row per observed node, [N_obs x dim].
    Var relpos;
    std::vector<std::size_t> observed_nodes;
    std::size_t target_node = 0;
    /// Final embeddings [h_i; h'_i] for every node.
    Var final_embeddings;
};

inline ForwardResult forward(const Graph& g, const BoundModel& m, AttentionTrace* trace = nullptr) {
    using namespace ops;
    const auto observed = g.observed();
    if (observed.empty()) throw ContractError("forward: graph has no observed objects");
    const std::size_t target = g.target();
    if (g.dim != m.config->dim)
        throw ContractError("forward: graph dim " + std::to_string(g.dim) + " vs model dim " + std::to_string(m.config->dim));
    if (g.feature_dim() != m.config->d_emb)
        throw ContractError("forward: node features have width " + std::to_string(g.feature_dim()) + ", model expects " +
                            std::to_string(m.config->d_emb));
    Tape& tape = *m.head_W.tape;
    GraphInputs in = graph_inputs(tape, g);
    if (trace) trace->layers.assign(m.layers.size(), {});
    Var H = in.node_features;
    for (std::size_t l = 0; l < m.layers.size(); ++l) H = mp_layer(in, H, m.layers[l], trace ? &trace->layers[l] : nullptr);
    Var Hstar = concat_cols({in.node_features, H});
    Var pairs = concat_cols({gather_rows(Hstar, observed), gather_rows(Hstar, std::vector<std::size_t>(observed.size(), target))});
    return {linear(pairs, m.head_W, m.head_b), observed, target, Hstar};
}

/// Mean of the absolute estimates p_i + d_it, as a vector of length dim.
inline Var aggregate_position(const Var& relpos, const Tensor& observed_positions) {
    if (relpos.value().rank() != 2 || relpos.value().rows() < 1)
        throw ContractError("aggregate_position: need at least one prediction");
    if (observed_positions.shape() != relpos.shape())
        throw ContractError("aggregate_position: " + std::to_string(relpos.value().rows()) + " predictions vs positions " +
                            shape_str(observed_positions.shape()));
    return ops::mean_rows(ops::add(relpos, relpos.tape->constant(observed_positions)));
}

inline Tensor positions_of(const Graph& g, const std::vector<std::size_t>& nodes) {
    const auto dim = static_cast<std::size_t>(g.dim);
    std::vector<double> v;
    v.reserve(nodes.size() * dim);
    for (auto i : nodes) {
        const auto& p = *g.nodes.at(i).position;
        v.insert(v.end(), p.begin(), p.end());
    }
    return Tensor({nodes.size(), dim}, std::move(v));
}

struct Prediction {
    Position position;
    /// Per observed object (scene order) predicted offset to the target.
    std::vector<Position> relpos;
    std::vector<Position> observed_positions;
    std::optional<AttentionTrace> trace;
    Graph graph;
};

/// Graph construction, forward pass and mean pooling for one scene.
inline Prediction predict(const PartialScene& scene, const KnowledgeBase& kb, const ModelParams& m,
                          std::optional<RelationSet> relations = std::nullopt, bool with_trace = false) {
    Prediction out;
    out.graph = build_dscg(scene, kb, relations.value_or(m.config.relations));
    Tape tape;
    BoundModel bm = bind(tape, m, false);
    AttentionTrace trace;
    const auto fr = forward(out.graph, bm, with_trace ? &trace : nullptr);
    const Tensor P = positions_of(out.graph, fr.observed_nodes);
    const Var p = aggregate_position(fr.relpos, P);
    out.position.assign(p.value().data().begin(), p.value().data().end());
    const auto dim = static_cast<std::size_t>(m.config.dim);
    for (std::size_t r = 0; r < fr.observed_nodes.size(); ++r) {
        out.relpos.emplace_back(fr.relpos.value().data().begin() + static_cast<std::ptrdiff_t>(r * dim),
                                fr.relpos.value().data().begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
        out.observed_positions.push_back(*out.graph.nodes[fr.observed_nodes[r]].position);
    }
    if (with_trace) out.trace = std::move(trace);
    return out;
}

/// Per layer and head, (src_label, dst_label, weight) for every edge. With
/// `normalise`, weights into each destination sum to one (when non-zero).
inline nlohmann::json attention_to_json(const AttentionTrace& trace, const Graph& g, bool normalise) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const auto& la = trace.layers[l];
        const std::size_t H = la.alpha.cols();
        nlohmann::json heads = nlohmann::json::array();
        for (std::size_t h = 0; h < H; ++h) {
            std::vector<double> totals(g.nodes.size(), 0.0);
            if (normalise)
                for (std::size_t e = 0; e < la.src.size(); ++e) totals[la.dst[e]] += la.alpha.at(e, h);
            nlohmann::json edges = nlohmann::json::array();
            for (std::size_t e = 0; e < la.src.size(); ++e) {
                double w = la.alpha.at(e, h);
                if (normalise && totals[la.dst[e]] > 0) w /= totals[la.dst[e]];
                edges.push_back({{"src", la.src[e]},
                                 {"dst", la.dst[e]},
                                 {"src_label", g.nodes[la.src[e]].label},
                                 {"dst_label", g.nodes[la.dst[e]].label},
                                 {"weight", w}});
            }
            heads.push_back({{"layer", l}, {"head", h}, {"edges", edges}});
        }
        layers.push_back({{"layer", l}, {"heads", heads}});
    }
    return {{"normalised", normalise}, {"layers", layers}};
}

} // namespace dscg

#pragma once

// Closest-instance loss, Adam / Adafactor updates and the per-scene training loop.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dscg/checkpoint.hpp"
#include "dscg/eval.hpp"

namespace dscg {

/// min_k ||p - p_k||^2. The gradient flows through the nearest instance only
/// (lowest index on ties).
inline Var closest_instance_loss(const Var& p, const std::vector<Position>& instances) {
    if (instances.empty()) throw ContractError("closest_instance_loss: no instances");
    const auto& pv = p.value();
    if (pv.rank() != 1) throw DimensionError("closest_instance_loss: prediction must be a vector");
    for (const auto& inst : instances)
        if (inst.size() != pv.size()) throw DimensionError("closest_instance_loss: instance dimension mismatch");
    Position pred(pv.data().begin(), pv.data().end());
    std::vector<double> d2;
    for (const auto& inst : instances) {
        const double d = distance(pred, inst);
        d2.push_back(d * d);
    }
    const auto [k, dist] = closest_instance(pred, instances);
    // Branch record so finite-difference checks can tell when the argmin flips.
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d2.size(); ++j)
        if (j != k) margin = std::min(margin, d2[j] - d2[k]);
    p.tape->note_branch(true, margin);
    for (std::size_t j = 0; j < d2.size(); ++j) p.tape->note_branch(j == k, margin);
    return ops::sum_squares(ops::sub(p, p.tape->constant(Tensor::vector(instances[k]))));
}

enum class OptimizerKind { Adam, Adafactor };

inline std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "adafactor"; }

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool augment = true;
    std::uint64_t seed = 0;
    std::size_t val_interval = 1;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 10.0;
    ModelConfig model;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be > 0");
        if (val_interval < 1) throw ConfigError("train: validation interval must be >= 1");
        if (clip_norm < 0) throw ConfigError("train: clip norm must be >= 0");
        model.validate();
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"optimizer", optimizer_name(c.optimizer)},
            {"augment", c.augment},
            {"seed", c.seed},
            {"val_interval", c.val_interval},
            {"clip_norm", c.clip_norm},
            {"model", to_json(c.model)}};
}

/// Optimiser moments keyed "<slot>/<param>", plus the step counter.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    std::uint64_t step = 0;
    ParamSet slots;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kAdafactorEps1 = 1e-30;
inline constexpr double kAdafactorEps2 = 1e-3;
inline constexpr double kAdafactorDecay = 0.8;
inline constexpr double kAdafactorClip = 1.0;

namespace detail {

inline Tensor& slot(OptimizerState& st, const std::string& key, const Shape& shape) {
    auto it = st.slots.find(key);
    if (it == st.slots.end()) it = st.slots.emplace(key, Tensor::zeros(shape)).first;
    return it->second;
}

inline double rms(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline void adam_update(Tensor& param, const Tensor& grad, OptimizerState& st, const std::string& name, double lr) {
    auto m = slot(st, "m/" + name, param.shape()).mutable_data();
    auto v = slot(st, "v/" + name, param.shape()).mutable_data();
    auto p = param.mutable_data();
    const auto g = grad.data();
    const auto t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

/// Factored second moments for matrices, full ones for vectors; no first
/// moment; update clipped to unit RMS and scaled by max(eps2, RMS(param)).
inline void adafactor_update(Tensor& param, const Tensor& grad, OptimizerState& st, const std::string& name, double lr) {
    const auto t = static_cast<double>(st.step);
    const double decay = 1.0 - std::pow(t, -kAdafactorDecay);
    const auto g = grad.data();
    auto p = param.mutable_data();
    std::vector<double> u(p.size());
    if (param.rank() == 2 && param.shape()[0] > 1 && param.shape()[1] > 1) {
        const std::size_t R = param.shape()[0], C = param.shape()[1];
        auto row = slot(st, "r/" + name, {R}).mutable_data();
        auto col = slot(st, "c/" + name, {C}).mutable_data();
        std::vector<double> rs(R, 0.0), cs(C, 0.0);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) {
                const double g2 = g[r * C + c] * g[r * C + c] + kAdafactorEps1;
                rs[r] += g2;
                cs[c] += g2;
            }
        double row_total = 0;
        for (std::size_t r = 0; r < R; ++r) {
            row[r] = decay * row[r] + (1.0 - decay) * rs[r];
            row_total += row[r];
        }
        for (std::size_t c = 0; c < C; ++c) col[c] = decay * col[c] + (1.0 - decay) * cs[c];
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) u[r * C + c] = g[r * C + c] / std::sqrt(row[r] * col[c] / row_total);
    } else {
        auto v = slot(st, "v/" + name, param.shape()).mutable_data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = decay * v[i] + (1.0 - decay) * (g[i] * g[i] + kAdafactorEps1);
            u[i] = g[i] / std::sqrt(v[i]);
        }
    }
    const double denom = std::max(1.0, rms(u) / kAdafactorClip);
    const double step = std::max(kAdafactorEps2, rms(p)) * lr;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * u[i] / denom;
}

} // namespace detail

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_gradients(GradientMap& grads, double max_norm) {
    double sq = 0;
    for (const auto& [n, g] : grads)
        for (double x : g.data()) sq += x * x;
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [n, g] : grads)
            for (auto& x : g.mutable_data()) x *= s;
    }
    return norm;
}

inline void optimiser_step(ModelParams& params, const GradientMap& grads, OptimizerState& state, OptimizerKind kind,
                           double learning_rate) {
    if (state.step > 0 && state.kind != kind) throw ContractError("optimiser: state belongs to a different optimiser");
    state.kind = kind;
    std::size_t seen = 0;
    params.for_each([&](const std::string& name, const Tensor& t) {
        const auto it = grads.find(name);
        if (it == grads.end()) throw ContractError("optimiser: no gradient for '" + name + "'");
        if (it->second.shape() != t.shape()) throw ContractError("optimiser: gradient shape mismatch for '" + name + "'");
        ++seen;
    });
    if (seen != grads.size()) throw ContractError("optimiser: gradient keys do not match parameters");
    ++state.step;
    params.for_each([&](const std::string& name, Tensor& t) {
        const Tensor& g = grads.at(name);
        if (kind == OptimizerKind::Adam)
            detail::adam_update(t, g, state, name, learning_rate);
        else
            detail::adafactor_update(t, g, state, name, learning_rate);
        for (double x : t.data())
            if (!std::isfinite(x)) throw NumericError("optimiser: parameter '" + name + "' became non-finite");
    });
}

/// Loss of one scene under `m`, with gradients when `grads` is non-null.
inline double scene_loss(const PartialScene& scene, const KnowledgeBase& kb, const ModelParams& m, GradientMap* grads) {
    if (!scene.labelled()) throw ValidationError("scene '" + scene.scene_id + "' has no ground-truth instances");
    const Graph g = build_dscg(scene, kb, m.config.relations);
    Tape tape;
    const BoundModel bm = bind(tape, m, grads != nullptr);
    const auto fr = forward(g, bm);
    const Var p = aggregate_position(fr.relpos, positions_of(g, fr.observed_nodes));
    const Var loss = closest_instance_loss(p, scene.target_instances);
    const double value = loss.value().item();
    if (!std::isfinite(value)) throw NumericError("loss is not finite for scene '" + scene.scene_id + "'");
    if (grads) *grads = tape.backward(loss);
    return value;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0;
    std::optional<double> val_lsr;
    double seconds = 0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_lsr;
    std::vector<std::string> warnings;
    std::vector<std::string> checkpoints;
};

/// CSV with epoch, loss, val_lsr, seconds. Wall time is only written when
/// `with_timing` is set, so logs of identical runs compare byte-equal.
inline std::string train_log_csv(const TrainLog& log, bool with_timing) {
    std::ostringstream os;
    os << "epoch,loss,val_lsr,seconds\n";
    for (const auto& e : log.epochs)
        os << e.epoch << ',' << detail::format_double(e.loss) << ',' << (e.val_lsr ? detail::format_double(*e.val_lsr) : "")
           << ',' << (with_timing ? detail::format_double(e.seconds) : "") << '\n';
    return os.str();
}

/// Everything needed to continue a run bit-identically.
struct TrainState {
    ModelParams model;
    ModelParams best;
    OptimizerState optimizer;
    TrainLog log;
    std::size_t epochs_done = 0;
};

inline Checkpoint to_checkpoint(const TrainState& s, const TrainConfig& cfg) {
    Checkpoint ck;
    ck.model = s.model;
    ck.meta["training"] = {{"epochs_done", s.epochs_done},
                           {"optimizer", optimizer_name(s.optimizer.kind)},
                           {"optimizer_step", s.optimizer.step},
                           {"best_epoch", s.log.best_epoch},
                           {"config", to_json(cfg)}};
    for (const auto& [k, t] : s.optimizer.slots) ck.extra.emplace("opt/" + k, t);
    s.best.for_each([&](const std::string& n, const Tensor& t) { ck.extra.emplace("best/" + n, t); });
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : s.log.epochs)
        log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"val_lsr", e.val_lsr ? nlohmann::json(*e.val_lsr) : nlohmann::json(nullptr)}});
    ck.meta["training"]["log"] = log;
    if (s.log.best_val_lsr) ck.meta["training"]["best_val_lsr"] = *s.log.best_val_lsr;
    return ck;
}

inline TrainState from_checkpoint(const Checkpoint& ck) {
    if (!ck.meta.contains("training")) throw ParseError("checkpoint has no training state to resume from");
    const auto& tr = ck.meta.at("training");
    TrainState s;
    s.model = ck.model;
    s.best = ck.model;
    s.epochs_done = tr.at("epochs_done").get<std::size_t>();
    s.optimizer.kind = tr.at("optimizer").get<std::string>() == "adam" ? OptimizerKind::Adam : OptimizerKind::Adafactor;
    s.optimizer.step = tr.at("optimizer_step").get<std::uint64_t>();
    ParamSet best;
    for (const auto& [k, t] : ck.extra) {
        if (k.starts_with("opt/")) s.optimizer.slots.emplace(k.substr(4), t);
        if (k.starts_with("best/")) best.emplace(k.substr(5), t);
    }
    s.best.assign(best);
    s.log.best_epoch = tr.at("best_epoch").get<std::size_t>();
    if (tr.contains("best_val_lsr")) s.log.best_val_lsr = tr.at("best_val_lsr").get<double>();
    for (const auto& e : tr.at("log")) {
        EpochRecord r;
        r.epoch = e.at("epoch").get<std::size_t>();
        r.loss = e.at("loss").get<double>();
        if (!e.at("val_lsr").is_null()) r.val_lsr = e.at("val_lsr").get<double>();
        s.log.epochs.push_back(r);
    }
    return s;
}

struct TrainHooks {
    /// Called after every epoch with the current state.
    std::function<void(const TrainState&)> on_epoch;
    /// Warnings (skipped scenes) as they occur.
    std::function<void(const std::string&)> on_warning;
};

inline std::optional<double> validation_lsr(const std::vector<PartialScene>& val, const KnowledgeBase& kb, const ModelParams& m,
                                            std::vector<std::string>* warnings) {
    std::vector<EvalRecord> recs;
    for (const auto& s : val) {
        try {
            const Prediction p = predict(s, kb, m);
            recs.push_back(make_record(s.scene_id, p.position, s.target_instances, s.completeness, {1.0}));
        } catch (const ValidationError& e) {
            if (warnings) warnings->push_back(std::string("validation: skipped: ") + e.what());
        } catch (const ContractError& e) {
            if (warnings) warnings->push_back(std::string("validation: skipped: ") + e.what());
        }
    }
    if (recs.empty()) return std::nullopt;
    return lsr(recs, 1.0);
}

/// Per-scene (batch size 1) training: seeded shuffle each epoch, optional
/// random rotation about the observed centroid, clipped gradients, and
/// retention of the best-validation-LSR parameters (the last ones when there
/// is no validation split).
inline TrainState train(const std::vector<PartialScene>& train_set, const std::vector<PartialScene>& val_set,
                        const KnowledgeBase& kb, const TrainConfig& cfg, std::optional<TrainState> resume = std::nullopt,
                        const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_set.empty()) throw ContractError("train: empty training split");
    if (cfg.model.d_emb != kb.embedding_dim())
        throw ConfigError("train: model d_emb " + std::to_string(cfg.model.d_emb) + " vs embedding dimension " +
                          std::to_string(kb.embedding_dim()));
    TrainState st;
    if (resume) {
        st = std::move(*resume);
        if (!(st.model.config == cfg.model)) throw ConfigError("train: resumed checkpoint has a different model config");
    } else {
        st.model = init_model(cfg.model, cfg.seed);
        st.best = st.model;
        st.optimizer.kind = cfg.optimizer;
    }
    auto warn = [&](const std::string& w) {
        st.log.warnings.push_back(w);
        if (hooks.on_warning) hooks.on_warning(w);
    };

    for (std::size_t epoch = st.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(cfg.seed, epoch));
        rng.shuffle(order);
        double total = 0;
        std::size_t used = 0;
        for (std::size_t idx : order) {
            PartialScene scene = train_set[idx];
            if (cfg.augment) scene = rotate_scene(scene, rng.uniform(0.0, 2.0 * std::numbers::pi));
            GradientMap grads;
            double loss;
            try {
                loss = scene_loss(scene, kb, st.model, &grads);
            } catch (const ValidationError& e) {
                warn("epoch " + std::to_string(epoch) + ": skipped scene: " + e.what());
                continue;
            } catch (const ContractError& e) {
                warn("epoch " + std::to_string(epoch) + ": skipped scene: " + e.what());
                continue;
            }
            clip_gradients(grads, cfg.clip_norm);
            optimiser_step(st.model, grads, st.optimizer, cfg.optimizer, cfg.learning_rate);
            total += loss;
            ++used;
        }
        if (used == 0) throw ContractError("train: every training scene failed graph construction");
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = total / static_cast<double>(used);
        if (!std::isfinite(rec.loss)) throw NumericError("train: non-finite epoch loss");
        if (!val_set.empty() && (epoch % cfg.val_interval == 0 || epoch == cfg.epochs)) {
            std::vector<std::string> w;
            rec.val_lsr = validation_lsr(val_set, kb, st.model, &w);
            for (auto& s : w) warn(s);
            if (rec.val_lsr && (!st.log.best_val_lsr || *rec.val_lsr > *st.log.best_val_lsr)) {
                st.log.best_val_lsr = rec.val_lsr;
                st.log.best_epoch = epoch;
                st.best = st.model;
            }
        }
        if (val_set.empty()) {
            st.best = st.model;
            st.log.best_epoch = epoch;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        st.log.epochs.push_back(rec);
        st.epochs_done = epoch;
        if (hooks.on_epoch) hooks.on_epoch(st);
    }
    return st;
}

/// Mean loss over scenes without updating anything.
inline double mean_loss(const std::vector<PartialScene>& scenes, const KnowledgeBase& kb, const ModelParams& m) {
    double total = 0;
    for (const auto& s : scenes) total += scene_loss(s, kb, m, nullptr);
    return total / static_cast<double>(scenes.size());
}

} // namespace dscg

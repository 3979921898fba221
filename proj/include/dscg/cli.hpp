#pragma once

// Command-line front end: gen-scenes, build-graph, train, eval, predict,
// inspect-attention. Exit codes: 0 success, 2 usage or configuration,
// 3 numeric failure at run time.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dscg/checkpoint.hpp"
#include "dscg/eval.hpp"
#include "dscg/training.hpp"

namespace dscg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

namespace cli {

namespace fs = std::filesystem;

inline void require_file(const std::string& flag, const std::string& path) {
    if (path.empty()) throw ConfigError(flag + " is required");
    if (!fs::is_regular_file(path)) throw ConfigError(flag + ": no such file: " + path);
}

inline void require_dir(const std::string& flag, const std::string& path) {
    if (path.empty()) throw ConfigError(flag + " is required");
    if (!fs::is_directory(path)) throw ConfigError(flag + ": no such directory: " + path);
}

inline RelationSet parse_relations(const std::string& text) {
    RelationSet out;
    for (auto tok : detail::split(text, ',')) {
        std::string t(tok);
        const auto b = t.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        t = t.substr(b, t.find_last_not_of(" \t") - b + 1);
        const auto r = parse_relation(t);
        if (!r) throw ConfigError("--relations: unknown relation '" + t + "' (expected atloc, usedfor)");
        out.insert(*r);
    }
    return out;
}

inline std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    for (auto tok : detail::split(text, ',')) {
        const auto v = detail::parse_double(tok);
        if (!v || !(*v > 0) || !std::isfinite(*v)) throw ConfigError("--thresholds: bad value '" + std::string(tok) + "'");
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigError("--thresholds: at least one threshold is required");
    return out;
}

inline std::pair<double, double> parse_range(const std::string& text) {
    const auto parts = detail::split(text, ':');
    if (parts.size() != 2) throw ConfigError("--completeness-range: expected a:b, got '" + text + "'");
    const auto a = detail::parse_double(parts[0]);
    const auto b = detail::parse_double(parts[1]);
    if (!a || !b || !(*a > 0 && *a <= *b && *b <= 1.0))
        throw ConfigError("--completeness-range: need 0 < a <= b <= 1, got '" + text + "'");
    return {*a, *b};
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Options shared by commands that load a checkpoint.
struct ModelSource {
    std::string model;
    std::string kb;
    std::string emb;
};

struct LoadedModel {
    Checkpoint ck;
    KnowledgeBase kb;
};

/// The checkpoint remembers the KB it was trained with; --kb/--emb override.
inline LoadedModel load_model(const ModelSource& src) {
    require_file("--model", src.model);
    LoadedModel out{load_checkpoint(src.model), {}};
    std::string kb = src.kb, emb = src.emb;
    if (kb.empty() && out.ck.meta.contains("kb")) kb = out.ck.meta["kb"].get<std::string>();
    if (emb.empty() && out.ck.meta.contains("emb")) emb = out.ck.meta["emb"].get<std::string>();
    require_file("--kb", kb);
    require_file("--emb", emb);
    out.kb = load_kb(kb, emb);
    if (out.kb.embedding_dim() != out.ck.model.config.d_emb)
        throw ConfigError("embedding dimension " + std::to_string(out.kb.embedding_dim()) + " does not match model d_emb " +
                          std::to_string(out.ck.model.config.d_emb));
    return out;
}

inline void check_dims(const std::vector<PartialScene>& scenes, int dim) {
    for (const auto& s : scenes)
        if (s.dim != dim)
            throw ConfigError("scene '" + s.scene_id + "' is " + std::to_string(s.dim) + "D but the model predicts " +
                              std::to_string(dim) + "D positions");
}

inline void warn_oov(const KnowledgeBase& kb, const PartialScene& s, std::ostream& err) {
    if (kb.is_out_of_vocabulary(s.target_class))
        err << "warning: target class '" << s.target_class << "' has no embedding; using fallback vector\n";
}

// ---------------------------------------------------------------------------

struct GenScenesArgs {
    std::string spec, out, range = "0.3:1.0";
    std::size_t count = 0, val = 0, test = 0;
    std::uint64_t seed = 0;
    bool dim3 = false;
};

inline int gen_scenes_cmd(const GenScenesArgs& a, std::ostream& out) {
    require_file("--spec", a.spec);
    if (a.out.empty()) throw ConfigError("--out is required");
    if (a.count < 1) throw ConfigError("--count must be >= 1");
    if (a.val + a.test >= a.count) throw ConfigError("--val + --test must leave at least one training scene");
    const auto [lo, hi] = parse_range(a.range);
    LayoutSpec spec = load_layout_spec(a.spec);
    if (a.dim3) spec.dim = 3;
    detail::check_capacity(spec);
    detail::placement_order(spec);
    const auto scenes = generate_partial_dataset(spec, a.count, a.seed, lo, hi);

    fs::create_directories(a.out);
    Manifest m;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const std::string name = scenes[i].scene_id + ".json";
        save_scene(fs::path(a.out) / name, scenes[i]);
        if (i < a.count - a.val - a.test)
            m.train.push_back(name);
        else if (i < a.count - a.test)
            m.val.push_back(name);
        else
            m.test.push_back(name);
    }
    save_manifest(a.out, m);
    out << "wrote " << scenes.size() << " scenes to " << a.out << " (train " << m.train.size() << ", val " << m.val.size()
        << ", test " << m.test.size() << ")\n";
    return kExitOk;
}

struct BuildGraphArgs {
    std::string scene, kb, emb, relations = "atloc,usedfor", out;
};

inline int build_graph_cmd(const BuildGraphArgs& a, std::ostream& out) {
    require_file("--scene", a.scene);
    require_file("--kb", a.kb);
    require_file("--emb", a.emb);
    const RelationSet rels = parse_relations(a.relations);
    const KnowledgeBase kb = load_kb(a.kb, a.emb);
    const Graph g = build_dscg(load_scene(a.scene), kb, rels);
    if (a.out.empty())
        out << dump(graph_to_json(g));
    else
        write_text(a.out, dump(graph_to_json(g)));
    return kExitOk;
}

struct TrainArgs {
    std::string data, kb, emb, out, log, resume, relations = "atloc,usedfor", optimizer = "adam";
    std::size_t epochs = 200, layers = 4, heads = 4, hidden = 256, val_interval = 1, save_every = 0;
    std::uint64_t seed = 0;
    double lr = 1e-4, clip = 10.0;
    bool dim2 = false, dim3 = false, no_augment = false, no_clip = false, timing = false, quiet = false;
};

inline int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    require_dir("--data", a.data);
    require_file("--kb", a.kb);
    require_file("--emb", a.emb);
    if (a.out.empty()) throw ConfigError("--out is required");
    if (a.dim2 && a.dim3) throw ConfigError("--dim-2d and --dim-3d are mutually exclusive");
    if (!a.resume.empty()) require_file("--resume", a.resume);
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.learning_rate = a.lr;
    if (a.optimizer == "adam")
        cfg.optimizer = OptimizerKind::Adam;
    else if (a.optimizer == "adafactor")
        cfg.optimizer = OptimizerKind::Adafactor;
    else
        throw ConfigError("--optimizer: expected adam or adafactor, got '" + a.optimizer + "'");
    cfg.augment = !a.no_augment;
    cfg.seed = a.seed;
    cfg.val_interval = a.val_interval;
    cfg.clip_norm = a.no_clip ? 0.0 : a.clip;
    cfg.model.layers = a.layers;
    cfg.model.heads = a.heads;
    cfg.model.hidden = a.hidden;
    cfg.model.relations = parse_relations(a.relations);
    cfg.model.dim = a.dim3 ? 3 : 2;

    const Manifest m = load_manifest(a.data);
    if (m.train.empty()) throw ConfigError("--data: manifest has no training scenes");
    const auto train_set = load_split(a.data, m.train);
    const auto val_set = load_split(a.data, m.val);
    if (!a.dim2 && !a.dim3) cfg.model.dim = train_set.front().dim;
    check_dims(train_set, cfg.model.dim);
    check_dims(val_set, cfg.model.dim);
    const KnowledgeBase kb = load_kb(a.kb, a.emb);
    for (const auto& d : kb.diagnostics()) err << "warning: " << d << '\n';
    cfg.model.d_emb = kb.embedding_dim();
    cfg.validate();

    std::optional<TrainState> resume;
    if (!a.resume.empty()) {
        resume = from_checkpoint(load_checkpoint(a.resume));
        if (!(resume->model.config == cfg.model)) throw ConfigError("--resume: checkpoint model config differs from flags");
        if (resume->epochs_done >= cfg.epochs) throw ConfigError("--resume: checkpoint already has all requested epochs");
    }

    const fs::path out_path(a.out);
    const fs::path state_path = out_path.string() + ".state";
    const fs::path log_path = a.log.empty() ? fs::path(out_path.string() + ".log.csv") : fs::path(a.log);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());

    TrainHooks hooks;
    hooks.on_warning = [&](const std::string& w) { err << "warning: " << w << '\n'; };
    hooks.on_epoch = [&](const TrainState& st) {
        const auto& e = st.log.epochs.back();
        if (!a.quiet) {
            err << "epoch " << e.epoch << " loss " << detail::format_double(e.loss);
            if (e.val_lsr) err << " val_lsr@1 " << detail::format_double(*e.val_lsr);
            err << '\n';
        }
        if (a.save_every > 0 && e.epoch % a.save_every == 0) save_checkpoint(state_path, to_checkpoint(st, cfg));
    };
    const TrainState st = train(train_set, val_set, kb, cfg, std::move(resume), hooks);

    Checkpoint best;
    best.model = st.best;
    best.meta["kb"] = a.kb;
    best.meta["emb"] = a.emb;
    best.meta["best_epoch"] = st.log.best_epoch;
    if (st.log.best_val_lsr) best.meta["best_val_lsr"] = *st.log.best_val_lsr;
    best.meta["train_config"] = to_json(cfg);
    save_checkpoint(out_path, best);
    save_checkpoint(state_path, to_checkpoint(st, cfg));
    write_text(log_path, train_log_csv(st.log, a.timing));
    json echo = {{"config", to_json(cfg)},
                 {"data", a.data},
                 {"kb", a.kb},
                 {"emb", a.emb},
                 {"best_epoch", st.log.best_epoch},
                 {"best_val_lsr", st.log.best_val_lsr ? json(*st.log.best_val_lsr) : json(nullptr)},
                 {"final_loss", st.log.epochs.back().loss},
                 {"warnings", st.log.warnings}};
    write_text(log_path.string() + ".json", dump(echo));
    out << "trained " << st.epochs_done << " epochs; best epoch " << st.log.best_epoch << "; wrote " << out_path.string() << '\n';
    return kExitOk;
}

struct EvalArgs {
    ModelSource src;
    std::string data, out, thresholds = "0.5,1,2,3", split = "test";
    double bins = 0.1;
    std::size_t workers = 1;
};

inline int eval_cmd(const EvalArgs& a, std::ostream& out) {
    require_dir("--data", a.data);
    if (a.out.empty()) throw ConfigError("--out is required");
    const auto thresholds = parse_thresholds(a.thresholds);
    const auto edges = uniform_edges(a.bins);
    if (a.workers < 1) throw ConfigError("--workers must be >= 1");
    const Manifest m = load_manifest(a.data);
    const std::vector<std::string>* names = nullptr;
    if (a.split == "train")
        names = &m.train;
    else if (a.split == "val")
        names = &m.val;
    else if (a.split == "test")
        names = &m.test;
    else
        throw ConfigError("--split: expected train, val or test");
    if (names->empty()) throw ConfigError("--data: manifest split '" + a.split + "' is empty");
    const auto scenes = load_split(a.data, *names);
    const LoadedModel lm = load_model(a.src);
    check_dims(scenes, lm.ck.model.config.dim);

    const EvalReport rep = evaluate(scenes, lm.kb, lm.ck.model, thresholds, edges, a.workers);
    fs::create_directories(a.out);
    json j = to_json(rep);
    j["model"] = {{"config", to_json(lm.ck.model.config)}, {"seed", lm.ck.model.seed}};
    write_text(fs::path(a.out) / "report.json", dump(j));
    write_text(fs::path(a.out) / "records.csv", records_csv(rep));
    write_text(fs::path(a.out) / "bins.csv", bins_csv(rep));
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        out << "LSR@" << detail::format_double(thresholds[i]) << " " << detail::format_double(rep.lsr[i]);
        if (rep.baseline_lsr) out << " (centroid " << detail::format_double((*rep.baseline_lsr)[i]) << ")";
        out << '\n';
    }
    return kExitOk;
}

struct PredictArgs {
    ModelSource src;
    std::string scene, attention;
    bool raw_attention = false;
};

inline int predict_cmd(const PredictArgs& a, std::ostream& out, std::ostream& err) {
    require_file("--scene", a.scene);
    const PartialScene s = load_scene(a.scene);
    const LoadedModel lm = load_model(a.src);
    check_dims({s}, lm.ck.model.config.dim);
    warn_oov(lm.kb, s, err);
    const Prediction p = predict(s, lm.kb, lm.ck.model, std::nullopt, !a.attention.empty());
    out << dump({{"scene_id", s.scene_id}, {"predicted_position", p.position}, {"target_class", s.target_class}});
    if (!a.attention.empty()) {
        const fs::path ap(a.attention);
        if (ap.has_parent_path()) fs::create_directories(ap.parent_path());
        write_text(ap, dump(attention_to_json(*p.trace, p.graph, !a.raw_attention)));
    }
    return kExitOk;
}

inline void add_model_source(CLI::App* cmd, ModelSource& src) {
    cmd->add_option("--model", src.model, "Checkpoint file")->required();
    cmd->add_option("--kb", src.kb, "Triples TSV (default: the one recorded in the checkpoint)");
    cmd->add_option("--emb", src.emb, "Embeddings file (default: the one recorded in the checkpoint)");
}

} // namespace cli

/// Parses arguments and runs one subcommand. Errors are reported on `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Localise an unseen object in a partial indoor scene with a spatial commonsense graph"};
    app.require_subcommand(1);

    cli::GenScenesArgs gen;
    auto* g = app.add_subcommand("gen-scenes", "Generate a synthetic partial-scene dataset");
    g->add_option("--spec", gen.spec, "Layout spec JSON")->required();
    g->add_option("--count", gen.count, "Number of scenes")->required();
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--completeness-range", gen.range, "Observed fraction range a:b");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--val", gen.val, "Scenes reserved for validation");
    g->add_option("--test", gen.test, "Scenes reserved for testing");
    g->add_flag("--dim-3d", gen.dim3, "Emit 3D positions");

    cli::BuildGraphArgs bg;
    auto* b = app.add_subcommand("build-graph", "Dump the graph built for one scene");
    b->add_option("--scene", bg.scene)->required();
    b->add_option("--kb", bg.kb)->required();
    b->add_option("--emb", bg.emb)->required();
    b->add_option("--relations", bg.relations, "Comma list of atloc, usedfor; empty for proximity only");
    b->add_option("--out", bg.out, "Output file (default: stdout)");

    cli::TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model");
    t->add_option("--data", tr.data, "Dataset directory with manifest.json")->required();
    t->add_option("--kb", tr.kb)->required();
    t->add_option("--emb", tr.emb)->required();
    t->add_option("--out", tr.out, "Best checkpoint path")->required();
    t->add_option("--epochs", tr.epochs);
    t->add_option("--layers", tr.layers);
    t->add_option("--heads", tr.heads);
    t->add_option("--hidden", tr.hidden, "First-layer width");
    t->add_flag("--dim-2d", tr.dim2);
    t->add_flag("--dim-3d", tr.dim3);
    t->add_option("--relations", tr.relations, "Comma list of atloc, usedfor; empty for proximity only");
    t->add_option("--seed", tr.seed);
    t->add_option("--lr", tr.lr);
    t->add_option("--optimizer", tr.optimizer, "adam or adafactor");
    t->add_option("--clip", tr.clip, "Global gradient-norm limit");
    t->add_flag("--no-clip", tr.no_clip);
    t->add_flag("--no-augment", tr.no_augment, "Disable random rotations");
    t->add_option("--val-interval", tr.val_interval, "Validate every k epochs");
    t->add_option("--log", tr.log, "CSV log path (default: <out>.log.csv)");
    t->add_flag("--timing", tr.timing, "Record wall time per epoch in the log");
    t->add_option("--resume", tr.resume, "Continue from a <out>.state checkpoint");
    t->add_option("--save-every", tr.save_every, "Write the resumable state every k epochs");
    t->add_flag("--quiet", tr.quiet);

    cli::EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    cli::add_model_source(e, ev.src);
    e->add_option("--data", ev.data)->required();
    e->add_option("--thresholds", ev.thresholds, "Comma list of success radii in metres");
    e->add_option("--bins", ev.bins, "Completeness bin width");
    e->add_option("--out", ev.out, "Report directory")->required();
    e->add_option("--split", ev.split, "train, val or test");
    e->add_option("--workers", ev.workers, "Evaluation threads");

    cli::PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Predict the target position for one scene");
    cli::add_model_source(p, pr.src);
    p->add_option("--scene", pr.scene)->required();
    p->add_option("--attention", pr.attention, "Write the attention trace here");
    p->add_flag("--raw-attention", pr.raw_attention, "Keep unnormalised weights in the trace");

    cli::PredictArgs ia;
    auto* ins = app.add_subcommand("inspect-attention", "Write the attention trace for one scene");
    cli::add_model_source(ins, ia.src);
    ins->add_option("--scene", ia.scene)->required();
    ins->add_option("--out", ia.attention, "Trace output file")->required();
    ins->add_flag("--raw-attention", ia.raw_attention);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cli::gen_scenes_cmd(gen, out);
        if (b->parsed()) return cli::build_graph_cmd(bg, out);
        if (t->parsed()) return cli::train_cmd(tr, out, err);
        if (e->parsed()) return cli::eval_cmd(ev, out);
        if (p->parsed()) return cli::predict_cmd(pr, out, err);
        if (ins->parsed()) {
            std::ostringstream discard;
            return cli::predict_cmd(ia, discard, err);
        }
    } catch (const NumericError& ex) {
        err << "error: numeric failure: " << ex.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace dscg

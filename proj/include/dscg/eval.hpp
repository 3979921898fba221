#pragma once

// Localisation metrics: success rate at distance thresholds, mean error of
// successful localisations, pairwise-distance error, completeness bins.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dscg/gnn.hpp"

namespace dscg {

inline const std::vector<double>& default_thresholds() {
    static const std::vector<double> t{0.5, 1.0, 2.0, 3.0};
    return t;
}

struct EvalRecord {
    std::string scene_id;
    Position predicted;
    std::vector<Position> instances;
    double completeness = 1.0;
    /// Euclidean distance to the closest ground-truth instance.
    double error = 0.0;
    std::vector<double> thresholds;
    std::vector<bool> success;
    std::optional<double> mppe;

    bool operator==(const EvalRecord&) const = default;
};

/// Index of and distance to the instance nearest to `p` (lowest index on ties).
inline std::pair<std::size_t, double> closest_instance(const Position& p, const std::vector<Position>& instances) {
    if (instances.empty()) throw ContractError("closest_instance: no instances");
    std::size_t best = 0;
    double best_d = distance(p, instances[0]);
    for (std::size_t k = 1; k < instances.size(); ++k) {
        const double d = distance(p, instances[k]);
        if (d < best_d) {
            best = k;
            best_d = d;
        }
    }
    return {best, best_d};
}

inline EvalRecord make_record(std::string scene_id, Position predicted, std::vector<Position> instances, double completeness,
                              const std::vector<double>& thresholds, std::optional<double> mppe = std::nullopt) {
    EvalRecord r;
    r.scene_id = std::move(scene_id);
    r.error = closest_instance(predicted, instances).second;
    r.predicted = std::move(predicted);
    r.instances = std::move(instances);
    r.completeness = completeness;
    r.thresholds = thresholds;
    for (double t : thresholds) r.success.push_back(r.error <= t);
    r.mppe = mppe;
    return r;
}

/// Fraction of records with error within `tau`.
inline double lsr(const std::vector<EvalRecord>& records, double tau) {
    if (records.empty()) throw ContractError("lsr: no records");
    std::size_t ok = 0;
    for (const auto& r : records) ok += r.error <= tau;
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

/// Mean error over records successful at `tau`; absent when there are none.
inline std::optional<double> msle(const std::vector<EvalRecord>& records, double tau) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : records)
        if (r.error <= tau) {
            sum += r.error;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

/// Mean absolute difference between predicted offset lengths and the true
/// object-to-target distances, against the instance closest to the final
/// prediction.
inline double mppe(const std::vector<Position>& relpos, const Position& target, const std::vector<Position>& observed) {
    if (relpos.size() != observed.size() || relpos.empty()) throw ContractError("mppe: inputs are not aligned");
    double sum = 0;
    for (std::size_t i = 0; i < relpos.size(); ++i) {
        double sq = 0;
        for (double x : relpos[i]) sq += x * x;
        sum += std::abs(std::sqrt(sq) - distance(target, observed[i]));
    }
    return sum / static_cast<double>(relpos.size());
}

inline double mean_error(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ContractError("mean_error: no records");
    double s = 0;
    for (const auto& r : records) s += r.error;
    return s / static_cast<double>(records.size());
}

struct CompletenessBin {
    double lo = 0, hi = 0;
    std::size_t count = 0;
    /// Per threshold; empty when the bin is empty.
    std::vector<double> lsr;
    std::optional<double> mae;
};

/// Half-open bins (lo, hi]. Edges must increase strictly and cover (0, 1].
inline std::vector<CompletenessBin> bin_by_completeness(const std::vector<EvalRecord>& records, const std::vector<double>& edges,
                                                        const std::vector<double>& thresholds) {
    if (edges.size() < 2) throw ValidationError("bins: need at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw ValidationError("bins: edges must be strictly increasing");
    if (edges.front() > 0.0 || edges.back() < 1.0) throw ValidationError("bins: edges must cover (0, 1]");
    std::vector<std::vector<EvalRecord>> members(edges.size() - 1);
    for (const auto& r : records) {
        if (!(r.completeness > 0.0 && r.completeness <= 1.0))
            throw ValidationError("bins: record '" + r.scene_id + "' has completeness outside (0, 1]");
        for (std::size_t b = 0; b + 1 < edges.size(); ++b)
            if (r.completeness > edges[b] && r.completeness <= edges[b + 1]) {
                members[b].push_back(r);
                break;
            }
    }
    std::vector<CompletenessBin> out;
    for (std::size_t b = 0; b < members.size(); ++b) {
        CompletenessBin bin{edges[b], edges[b + 1], members[b].size(), {}, std::nullopt};
        if (!members[b].empty()) {
            for (double t : thresholds) bin.lsr.push_back(lsr(members[b], t));
            bin.mae = mean_error(members[b]);
        }
        out.push_back(std::move(bin));
    }
    return out;
}

/// Edges 0, w, 2w, ..., 1 for bin width w.
inline std::vector<double> uniform_edges(double width) {
    if (!(width > 0.0 && width <= 1.0)) throw ValidationError("bins: width must be in (0, 1]");
    const auto n = static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
    std::vector<double> e;
    for (std::size_t i = 0; i <= n; ++i) e.push_back(std::min(1.0, static_cast<double>(i) / static_cast<double>(n)));
    return e;
}

inline Position centroid_baseline(const PartialScene& s) {
    if (s.observed.empty()) throw ContractError("centroid_baseline: no observed objects");
    return observed_centroid(s);
}

struct EvalReport {
    std::vector<double> thresholds;
    std::vector<double> bin_edges;
    std::vector<EvalRecord> records;
    std::vector<double> lsr;
    std::vector<std::optional<double>> msle;
    std::optional<double> mppe;
    double mae = 0;
    std::vector<CompletenessBin> bins;
    /// Same metrics for the observed-centroid predictor, when computed.
    std::optional<std::vector<double>> baseline_lsr;
};

/// Aggregates are a pure function of the records.
inline EvalReport report_from_records(std::vector<EvalRecord> records, const std::vector<double>& thresholds,
                                      const std::vector<double>& edges) {
    EvalReport rep;
    rep.thresholds = thresholds;
    rep.bin_edges = edges;
    for (double t : thresholds) {
        rep.lsr.push_back(lsr(records, t));
        rep.msle.push_back(msle(records, t));
    }
    double ms = 0;
    std::size_t mn = 0;
    for (const auto& r : records)
        if (r.mppe) {
            ms += *r.mppe;
            ++mn;
        }
    if (mn) rep.mppe = ms / static_cast<double>(mn);
    rep.mae = mean_error(records);
    rep.bins = bin_by_completeness(records, edges, thresholds);
    rep.records = std::move(records);
    return rep;
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::string csv_num(double v) { return format_double(v); }

inline std::string csv_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

} // namespace detail

inline nlohmann::json to_json(const EvalRecord& r) {
    return {{"scene_id", r.scene_id},   {"predicted", r.predicted}, {"instances", r.instances},
            {"completeness", r.completeness}, {"error", r.error},   {"thresholds", r.thresholds},
            {"success", r.success},     {"mppe", detail::opt_json(r.mppe)}};
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.predicted = j.at("predicted").get<Position>();
    r.instances = j.at("instances").get<std::vector<Position>>();
    r.completeness = j.at("completeness").get<double>();
    r.error = j.at("error").get<double>();
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    r.success = j.at("success").get<std::vector<bool>>();
    if (!j.at("mppe").is_null()) r.mppe = j.at("mppe").get<double>();
    return r;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json lsr = nlohmann::json::object(), msle = nlohmann::json::object();
    for (std::size_t i = 0; i < rep.thresholds.size(); ++i) {
        const std::string key = detail::format_double(rep.thresholds[i]);
        lsr[key] = rep.lsr[i];
        msle[key] = detail::opt_json(rep.msle[i]);
    }
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : rep.bins)
        bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"lsr", b.lsr}, {"mae", detail::opt_json(b.mae)}});
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : rep.records) records.push_back(to_json(r));
    nlohmann::json j = {{"count", rep.records.size()},
                        {"thresholds", rep.thresholds},
                        {"bin_edges", rep.bin_edges},
                        {"lsr", lsr},
                        {"msle", msle},
                        {"mppe", detail::opt_json(rep.mppe)},
                        {"mae", rep.mae},
                        {"bins", bins},
                        {"records", records}};
    if (rep.baseline_lsr) {
        nlohmann::json b = nlohmann::json::object();
        for (std::size_t i = 0; i < rep.thresholds.size(); ++i) b[detail::format_double(rep.thresholds[i])] = (*rep.baseline_lsr)[i];
        j["baseline_centroid_lsr"] = b;
    }
    return j;
}

inline std::string records_csv(const EvalReport& rep) {
    std::ostringstream os;
    os << "scene_id,completeness,error";
    for (std::size_t d = 0; d < (rep.records.empty() ? 0 : rep.records[0].predicted.size()); ++d) os << ",pred_" << "xyz"[d];
    for (double t : rep.thresholds) os << ",success@" << detail::csv_num(t);
    os << ",mppe\n";
    for (const auto& r : rep.records) {
        os << r.scene_id << ',' << detail::csv_num(r.completeness) << ',' << detail::csv_num(r.error);
        for (double x : r.predicted) os << ',' << detail::csv_num(x);
        for (bool s : r.success) os << ',' << (s ? 1 : 0);
        os << ',' << detail::csv_opt(r.mppe) << '\n';
    }
    return os.str();
}

inline std::string bins_csv(const EvalReport& rep) {
    std::ostringstream os;
    os << "lo,hi,count";
    for (double t : rep.thresholds) os << ",lsr@" << detail::csv_num(t);
    os << ",mae\n";
    for (const auto& b : rep.bins) {
        os << detail::csv_num(b.lo) << ',' << detail::csv_num(b.hi) << ',' << b.count;
        for (std::size_t i = 0; i < rep.thresholds.size(); ++i) os << ',' << (b.lsr.empty() ? std::string() : detail::csv_num(b.lsr[i]));
        os << ',' << detail::csv_opt(b.mae) << '\n';
    }
    return os.str();
}

/// Prediction and metrics for one labelled scene.
inline EvalRecord evaluate_scene(const PartialScene& s, const KnowledgeBase& kb, const ModelParams& m,
                                 const std::vector<double>& thresholds) {
    if (!s.labelled()) throw ContractError("evaluate: scene '" + s.scene_id + "' has no ground-truth instances");
    Prediction p = predict(s, kb, m);
    const auto [k, err] = closest_instance(p.position, s.target_instances);
    const double pe = mppe(p.relpos, s.target_instances[k], p.observed_positions);
    return make_record(s.scene_id, p.position, s.target_instances, s.completeness, thresholds, pe);
}

/// Evaluates every scene, optionally on several threads; records keep input order.
inline EvalReport evaluate(const std::vector<PartialScene>& scenes, const KnowledgeBase& kb, const ModelParams& m,
                           const std::vector<double>& thresholds, const std::vector<double>& edges, std::size_t workers = 1,
                           bool with_baseline = true) {
    if (scenes.empty()) throw ContractError("evaluate: no scenes");
    std::vector<std::optional<EvalRecord>> slots(scenes.size());
    std::vector<std::exception_ptr> errors(scenes.size());
    auto run = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < scenes.size(); i += stride) {
            try {
                slots[i] = evaluate_scene(scenes[i], kb, m, thresholds);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, scenes.size()));
    if (workers == 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
        for (auto& t : pool) t.join();
    }
    std::vector<EvalRecord> records;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        records.push_back(std::move(*slots[i]));
    }
    EvalReport rep = report_from_records(std::move(records), thresholds, edges);
    if (with_baseline) {
        std::vector<EvalRecord> base;
        for (const auto& s : scenes)
            base.push_back(make_record(s.scene_id, centroid_baseline(s), s.target_instances, s.completeness, thresholds));
        std::vector<double> b;
        for (double t : thresholds) b.push_back(lsr(base, t));
        rep.baseline_lsr = std::move(b);
    }
    return rep;
}

} // namespace dscg

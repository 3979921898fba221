#pragma once

// Scene data model, JSON ingestion, synthetic layouts and partial views.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dscg/error.hpp"
#include "dscg/knowledge.hpp"
#include "dscg/rng.hpp"

namespace dscg {

using json = nlohmann::json;

/// A point in metres; 2 (x, y) or 3 (x, y, z) components.
using Position = std::vector<double>;

struct SceneObject {
    std::int64_t instance_id = 0;
    std::string class_label;
    Position position;

    bool operator==(const SceneObject&) const = default;
};

/// Fully known synthetic scene.
struct Scene {
    std::string scene_id;
    int dim = 2;
    std::vector<SceneObject> objects;

    bool operator==(const Scene&) const = default;
};

/// Observed part of a scene plus the hidden instances of the class to find.
struct PartialScene {
    std::string scene_id;
    int dim = 2;
    std::vector<SceneObject> observed;
    std::string target_class;
    std::vector<Position> target_instances;
    double completeness = 1.0;

    bool operator==(const PartialScene&) const = default;
    bool labelled() const { return !target_instances.empty(); }
};

inline double distance(const Position& a, const Position& b) {
    double sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sq);
}

inline void validate(const PartialScene& s) {
    if (s.dim != 2 && s.dim != 3) throw ValidationError("scene '" + s.scene_id + "': dim must be 2 or 3");
    if (s.observed.empty()) throw ValidationError("scene '" + s.scene_id + "': observed must be non-empty");
    if (normalize_term(s.target_class).empty()) throw ValidationError("scene '" + s.scene_id + "': empty target_class");
    if (!(s.completeness > 0.0 && s.completeness <= 1.0))
        throw ValidationError("scene '" + s.scene_id + "': completeness must be in (0, 1]");
    std::set<std::int64_t> ids;
    const auto dim = static_cast<std::size_t>(s.dim);
    for (std::size_t i = 0; i < s.observed.size(); ++i) {
        const auto& o = s.observed[i];
        const std::string where = "scene '" + s.scene_id + "': observed[" + std::to_string(i) + "]";
        if (!ids.insert(o.instance_id).second) throw ValidationError(where + ": duplicate instance_id");
        if (o.position.size() != dim)
            throw ValidationError(where + ".position has " + std::to_string(o.position.size()) +
                                  " components in a dim=" + std::to_string(s.dim) + " scene");
        for (double x : o.position)
            if (!std::isfinite(x)) throw ValidationError(where + ".position is not finite");
    }
    for (std::size_t i = 0; i < s.target_instances.size(); ++i) {
        const auto& p = s.target_instances[i];
        const std::string where = "scene '" + s.scene_id + "': target_instances[" + std::to_string(i) + "]";
        if (p.size() != dim)
            throw ValidationError(where + " has " + std::to_string(p.size()) + " components in a dim=" +
                                  std::to_string(s.dim) + " scene");
        for (double x : p)
            if (!std::isfinite(x)) throw ValidationError(where + " is not finite");
    }
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const PartialScene& s) {
    json observed = json::array();
    for (const auto& o : s.observed)
        observed.push_back({{"instance_id", o.instance_id}, {"class", o.class_label}, {"position", o.position}});
    return {{"scene_id", s.scene_id},         {"dim", s.dim},
            {"observed", observed},           {"target_class", s.target_class},
            {"target_instances", s.target_instances}, {"completeness", s.completeness}};
}

namespace detail {

template <class T>
T field(const json& j, const std::string& name, const std::string& path) {
    if (!j.is_object() || !j.contains(name)) throw ParseError("missing field '" + path + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw ParseError("field '" + path + name + "' has the wrong type");
    }
}

inline Position position_field(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ParseError("field '" + what + "' must be a non-empty array of numbers");
    Position p;
    for (const auto& x : j) {
        if (!x.is_number()) throw ParseError("field '" + what + "' must contain numbers");
        p.push_back(x.get<double>());
    }
    return p;
}

} // namespace detail

inline PartialScene partial_scene_from_json(const json& j) {
    PartialScene s;
    s.scene_id = detail::field<std::string>(j, "scene_id", "");
    s.dim = detail::field<int>(j, "dim", "");
    s.target_class = detail::field<std::string>(j, "target_class", "");
    s.completeness = detail::field<double>(j, "completeness", "");
    if (!j.contains("observed") || !j["observed"].is_array()) throw ParseError("missing array field 'observed'");
    for (std::size_t i = 0; i < j["observed"].size(); ++i) {
        const auto& o = j["observed"][i];
        const std::string path = "observed[" + std::to_string(i) + "].";
        SceneObject obj;
        obj.instance_id = detail::field<std::int64_t>(o, "instance_id", path);
        obj.class_label = detail::field<std::string>(o, "class", path);
        if (!o.contains("position")) throw ParseError("missing field '" + path + "position'");
        obj.position = detail::position_field(o["position"], path + "position");
        s.observed.push_back(std::move(obj));
    }
    if (!j.contains("target_instances") || !j["target_instances"].is_array())
        throw ParseError("missing array field 'target_instances'");
    for (std::size_t i = 0; i < j["target_instances"].size(); ++i)
        s.target_instances.push_back(
            detail::position_field(j["target_instances"][i], "target_instances[" + std::to_string(i) + "]"));
    validate(s);
    return s;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline PartialScene load_scene(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    try {
        return partial_scene_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

inline void save_scene(const std::filesystem::path& path, const PartialScene& s) { write_json_file(path, to_json(s)); }

/// Lists of scene file names relative to the dataset directory.
struct Manifest {
    std::vector<std::string> train, val, test;
};

inline Manifest load_manifest(const std::filesystem::path& dir) {
    const json j = read_json_file(dir / "manifest.json");
    Manifest m;
    auto list = [&](const char* key) {
        std::vector<std::string> out;
        if (!j.contains(key)) return out;
        if (!j[key].is_array()) throw ParseError("manifest: field '" + std::string(key) + "' must be an array");
        for (const auto& x : j[key]) {
            if (!x.is_string()) throw ParseError("manifest: field '" + std::string(key) + "' must list file names");
            out.push_back(x.get<std::string>());
        }
        return out;
    };
    m.train = list("train");
    m.val = list("val");
    m.test = list("test");
    return m;
}

inline void save_manifest(const std::filesystem::path& dir, const Manifest& m) {
    write_json_file(dir / "manifest.json", json{{"train", m.train}, {"val", m.val}, {"test", m.test}});
}

inline std::vector<PartialScene> load_split(const std::filesystem::path& dir, const std::vector<std::string>& names) {
    std::vector<PartialScene> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(load_scene(dir / n));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic layouts

struct Region {
    double x0, y0, x1, y1;
};

/// How instances of one class are placed.
struct PlacementRule {
    std::string class_label;
    int min_count = 0;
    int max_count = 1;
    /// Anchored classes are placed at a uniform angle and radius in
    /// [radius_min, radius_max] around a random instance of the anchor class.
    std::optional<std::string> anchor;
    double radius_min = 0.0;
    double radius_max = 1.0;
    /// Unanchored classes are placed uniformly in the region (default: room).
    std::optional<Region> region;
    double z_min = 0.0;
    double z_max = 1.0;
    bool target = true;
};

struct LayoutSpec {
    double width = 6.0;
    double depth = 5.0;
    int dim = 2;
    double min_separation = 0.0;
    std::vector<PlacementRule> rules;
};

inline LayoutSpec layout_spec_from_json(const json& j) {
    auto bad = [](const std::string& field, const std::string& why) {
        return ValidationError("layout spec: field '" + field + "' " + why);
    };
    auto num = [&](const json& obj, const std::string& key, const std::string& path, double def) {
        if (!obj.contains(key)) return def;
        if (!obj[key].is_number()) throw bad(path + key, "must be a number");
        return obj[key].get<double>();
    };
    if (!j.is_object()) throw ValidationError("layout spec: document must be an object");
    LayoutSpec spec;
    if (!j.contains("room") || !j["room"].is_array() || j["room"].size() != 2 || !j["room"][0].is_number() ||
        !j["room"][1].is_number())
        throw bad("room", "must be [width, depth]");
    spec.width = j["room"][0].get<double>();
    spec.depth = j["room"][1].get<double>();
    if (!(spec.width > 0 && spec.depth > 0)) throw bad("room", "extents must be positive");
    spec.dim = static_cast<int>(num(j, "dim", "", 2));
    if (spec.dim != 2 && spec.dim != 3) throw bad("dim", "must be 2 or 3");
    spec.min_separation = num(j, "min_separation", "", 0.0);
    if (spec.min_separation < 0) throw bad("min_separation", "must be non-negative");
    if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty())
        throw bad("classes", "must be a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < j["classes"].size(); ++i) {
        const auto& c = j["classes"][i];
        const std::string path = "classes[" + std::to_string(i) + "].";
        if (!c.is_object()) throw bad("classes[" + std::to_string(i) + "]", "must be an object");
        PlacementRule r;
        if (!c.contains("class") || !c["class"].is_string()) throw bad(path + "class", "must be a string");
        r.class_label = normalize_term(c["class"].get<std::string>());
        if (r.class_label.empty()) throw bad(path + "class", "must be non-empty");
        if (!names.insert(r.class_label).second) throw bad(path + "class", "duplicates another class");
        if (!c.contains("count") || !c["count"].is_array() || c["count"].size() != 2 || !c["count"][0].is_number_integer() ||
            !c["count"][1].is_number_integer())
            throw bad(path + "count", "must be [min, max] integers");
        r.min_count = c["count"][0].get<int>();
        r.max_count = c["count"][1].get<int>();
        if (r.min_count < 0 || r.max_count < r.min_count) throw bad(path + "count", "must satisfy 0 <= min <= max");
        if (c.contains("anchor")) {
            if (!c["anchor"].is_string()) throw bad(path + "anchor", "must be a class name");
            r.anchor = normalize_term(c["anchor"].get<std::string>());
            if (!c.contains("radius") || !c["radius"].is_array() || c["radius"].size() != 2)
                throw bad(path + "radius", "must be [min, max] for anchored classes");
            r.radius_min = c["radius"][0].get<double>();
            r.radius_max = c["radius"][1].get<double>();
            if (r.radius_min < 0 || r.radius_max < r.radius_min) throw bad(path + "radius", "must satisfy 0 <= min <= max");
        }
        if (c.contains("region")) {
            const auto& g = c["region"];
            if (!g.is_array() || g.size() != 4) throw bad(path + "region", "must be [x0, y0, x1, y1]");
            r.region = Region{g[0].get<double>(), g[1].get<double>(), g[2].get<double>(), g[3].get<double>()};
            if (!(r.region->x0 < r.region->x1 && r.region->y0 < r.region->y1) || r.region->x0 < 0 || r.region->y0 < 0 ||
                r.region->x1 > spec.width || r.region->y1 > spec.depth)
                throw bad(path + "region", "must be a non-empty box inside the room");
        }
        if (c.contains("z")) {
            const auto& z = c["z"];
            if (!z.is_array() || z.size() != 2) throw bad(path + "z", "must be [min, max]");
            r.z_min = z[0].get<double>();
            r.z_max = z[1].get<double>();
            if (r.z_max < r.z_min) throw bad(path + "z", "must satisfy min <= max");
        }
        if (c.contains("target")) {
            if (!c["target"].is_boolean()) throw bad(path + "target", "must be a boolean");
            r.target = c["target"].get<bool>();
        }
        spec.rules.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < spec.rules.size(); ++i)
        if (spec.rules[i].anchor && !names.contains(*spec.rules[i].anchor))
            throw bad("classes[" + std::to_string(i) + "].anchor", "names an unknown class");
    return spec;
}

inline LayoutSpec load_layout_spec(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    try {
        return layout_spec_from_json(j);
    } catch (const json::exception& e) {
        throw ValidationError("layout spec: " + std::string(e.what()));
    }
}

namespace detail {

/// Rules ordered so every anchor precedes its dependants.
inline std::vector<std::size_t> placement_order(const LayoutSpec& spec) {
    std::vector<std::size_t> order;
    std::vector<int> state(spec.rules.size(), 0);
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < spec.rules.size(); ++i) by_name[spec.rules[i].class_label] = i;
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        if (state[i] == 2) return;
        if (state[i] == 1) throw GenerationError("layout spec: anchor cycle through '" + spec.rules[i].class_label + "'");
        state[i] = 1;
        if (spec.rules[i].anchor) visit(by_name.at(*spec.rules[i].anchor));
        state[i] = 2;
        order.push_back(i);
    };
    for (std::size_t i = 0; i < spec.rules.size(); ++i) visit(i);
    return order;
}

inline void check_capacity(const LayoutSpec& spec) {
    double total = 0;
    int max_objects = 0;
    for (const auto& r : spec.rules) max_objects += r.max_count;
    total = max_objects * std::numbers::pi * std::pow(spec.min_separation / 2.0, 2);
    if (total > spec.width * spec.depth)
        throw GenerationError("layout spec: up to " + std::to_string(max_objects) + " objects at min_separation " +
                              std::to_string(spec.min_separation) + " m exceed the room capacity");
    if (max_objects == 0) throw GenerationError("layout spec: every class has a zero maximum count");
}

} // namespace detail

/// One synthetic scene, deterministic in (spec, seed).
inline Scene generate_scene(const LayoutSpec& spec, std::uint64_t seed, std::string scene_id) {
    detail::check_capacity(spec);
    const auto order = detail::placement_order(spec);
    constexpr int kSceneAttempts = 50;
    constexpr int kObjectAttempts = 200;
    for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        Scene scene{scene_id, spec.dim, {}};
        std::map<std::string, std::vector<std::size_t>> placed;
        bool failed = false;
        for (std::size_t ri : order) {
            const auto& rule = spec.rules[ri];
            const auto count = rng.uniform_int(rule.min_count, rule.max_count);
            for (std::int64_t k = 0; k < count && !failed; ++k) {
                const std::vector<std::size_t>* anchors = nullptr;
                if (rule.anchor) {
                    anchors = &placed[*rule.anchor];
                    if (anchors->empty()) break;
                }
                bool ok = false;
                for (int tries = 0; tries < kObjectAttempts && !ok; ++tries) {
                    double x, y;
                    if (anchors) {
                        const auto& a = scene.objects[(*anchors)[static_cast<std::size_t>(
                            rng.uniform_int(0, static_cast<std::int64_t>(anchors->size()) - 1))]];
                        const double r = rng.uniform(rule.radius_min, rule.radius_max);
                        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
                        x = a.position[0] + r * std::cos(th);
                        y = a.position[1] + r * std::sin(th);
                    } else {
                        const Region g = rule.region.value_or(Region{0, 0, spec.width, spec.depth});
                        x = rng.uniform(g.x0, g.x1);
                        y = rng.uniform(g.y0, g.y1);
                    }
                    if (x < 0 || y < 0 || x > spec.width || y > spec.depth) continue;
                    bool clear = true;
                    for (const auto& o : scene.objects)
                        if (std::hypot(o.position[0] - x, o.position[1] - y) < spec.min_separation) {
                            clear = false;
                            break;
                        }
                    if (!clear) continue;
                    Position p{x, y};
                    if (spec.dim == 3) p.push_back(rng.uniform(rule.z_min, rule.z_max));
                    placed[rule.class_label].push_back(scene.objects.size());
                    scene.objects.push_back({static_cast<std::int64_t>(scene.objects.size()), rule.class_label, std::move(p)});
                    ok = true;
                }
                failed = !ok;
            }
            if (failed) break;
        }
        if (!failed && !scene.objects.empty()) return scene;
    }
    throw GenerationError("layout spec: could not place all objects after " + std::to_string(kSceneAttempts) +
                          " attempts (spec is unsatisfiable or too tight)");
}

inline std::string scene_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05zu", index);
    return buf;
}

inline std::vector<Scene> gen_scenes(const LayoutSpec& spec, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw ContractError("gen_scenes: count must be >= 1");
    std::vector<Scene> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(spec, derive_seed(seed, i), scene_name(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Partial views

namespace detail {

/// Objects in the order a camera sweeping outward from a random viewpoint
/// and heading would see them: by angular offset from the heading, then range.
inline std::vector<std::size_t> sweep_order(const Scene& scene, std::uint64_t seed) {
    Rng rng(seed);
    double x0 = scene.objects[0].position[0], x1 = x0, y0 = scene.objects[0].position[1], y1 = y0;
    for (const auto& o : scene.objects) {
        x0 = std::min(x0, o.position[0]);
        x1 = std::max(x1, o.position[0]);
        y0 = std::min(y0, o.position[1]);
        y1 = std::max(y1, o.position[1]);
    }
    const double vx = rng.uniform(x0, x1), vy = rng.uniform(y0, y1);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    struct Key {
        double angle, range;
        std::int64_t id;
        std::size_t index;
    };
    std::vector<Key> keys;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& p = scene.objects[i].position;
        double a = std::atan2(p[1] - vy, p[0] - vx) - heading;
        a = std::remainder(a, 2.0 * std::numbers::pi);
        keys.push_back({std::abs(a), std::hypot(p[0] - vx, p[1] - vy), scene.objects[i].instance_id, i});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.angle != b.angle) return a.angle < b.angle;
        if (a.range != b.range) return a.range < b.range;
        return a.id < b.id;
    });
    std::vector<std::size_t> order;
    for (const auto& k : keys) order.push_back(k.index);
    return order;
}

} // namespace detail

/// Observe exactly `n_observed` objects by angular sweep; the unobserved
/// instances of `target_class` become ground truth.
inline PartialScene extract_partial_count(const Scene& scene, std::size_t n_observed, const std::string& target_class,
                                          std::uint64_t seed) {
    const std::string cls = normalize_term(target_class);
    const std::size_t total = scene.objects.size();
    if (n_observed < 1 || n_observed > total) throw ContractError("extract_partial: observed count out of range");
    if (std::none_of(scene.objects.begin(), scene.objects.end(), [&](const auto& o) { return normalize_term(o.class_label) == cls; }))
        throw ContractError("extract_partial: scene '" + scene.scene_id + "' has no '" + cls + "' instance");
    const auto order = detail::sweep_order(scene, seed);
    PartialScene out;
    out.scene_id = scene.scene_id;
    out.dim = scene.dim;
    out.target_class = cls;
    for (std::size_t k = 0; k < total; ++k) {
        const auto& o = scene.objects[order[k]];
        if (k < n_observed)
            out.observed.push_back(o);
        else if (normalize_term(o.class_label) == cls)
            out.target_instances.push_back(o.position);
    }
    if (out.target_instances.empty())
        throw GenerationError("extract_partial: every '" + cls + "' instance in '" + scene.scene_id + "' would be observed");
    out.completeness = static_cast<double>(n_observed) / static_cast<double>(total);
    return out;
}

inline PartialScene extract_partial(const Scene& scene, double completeness, const std::string& target_class,
                                    std::uint64_t seed) {
    if (!(completeness > 0.0 && completeness <= 1.0))
        throw ContractError("extract_partial: completeness must be in (0, 1]");
    const auto total = static_cast<double>(scene.objects.size());
    const auto n = std::max<long>(1, std::lround(completeness * total));
    return extract_partial_count(scene, static_cast<std::size_t>(n), target_class, seed);
}

/// Centroid of the observed objects.
inline Position observed_centroid(const PartialScene& s) {
    Position c(static_cast<std::size_t>(s.dim), 0.0);
    for (const auto& o : s.observed)
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.position[i];
    for (auto& x : c) x /= static_cast<double>(s.observed.size());
    return c;
}

/// Rotation of every position about the vertical axis through the observed centroid.
inline PartialScene rotate_scene(const PartialScene& s, double angle) {
    const Position c = observed_centroid(s);
    const double cs = std::cos(angle), sn = std::sin(angle);
    auto rot = [&](Position p) {
        const double dx = p[0] - c[0], dy = p[1] - c[1];
        p[0] = c[0] + cs * dx - sn * dy;
        p[1] = c[1] + sn * dx + cs * dy;
        return p;
    };
    PartialScene out = s;
    for (auto& o : out.observed) o.position = rot(o.position);
    for (auto& p : out.target_instances) p = rot(p);
    return out;
}

inline PartialScene translate_scene(const PartialScene& s, const Position& offset) {
    PartialScene out = s;
    auto shift = [&](Position& p) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += offset[i];
    };
    for (auto& o : out.observed) shift(o.position);
    for (auto& p : out.target_instances) shift(p);
    return out;
}

/// Synthetic partial scenes with observed fraction in [min_completeness, max_completeness].
///
/// The target class is drawn among targetable classes present in the scene;
/// draws that would leave no target instance unseen are retried.
inline std::vector<PartialScene> generate_partial_dataset(const LayoutSpec& spec, std::size_t count, std::uint64_t seed,
                                                          double min_completeness, double max_completeness) {
    if (count < 1) throw ContractError("generate_partial_dataset: count must be >= 1");
    if (!(min_completeness > 0 && min_completeness <= max_completeness && max_completeness <= 1.0))
        throw ConfigError("completeness range must satisfy 0 < a <= b <= 1");
    std::set<std::string> targetable;
    for (const auto& r : spec.rules)
        if (r.target) targetable.insert(r.class_label);
    if (targetable.empty()) throw GenerationError("layout spec: no class is marked as a target");

    constexpr int kSceneRedraws = 16;
    constexpr int kExtractAttempts = 32;
    std::vector<PartialScene> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t base = derive_seed(seed, i);
        std::optional<PartialScene> made;
        for (int redraw = 0; redraw < kSceneRedraws && !made; ++redraw) {
            const Scene scene = generate_scene(spec, derive_seed(base, 2 * static_cast<std::uint64_t>(redraw)), scene_name(i));
            const std::size_t total = scene.objects.size();
            const auto lo = static_cast<std::size_t>(std::max(1.0, std::ceil(min_completeness * static_cast<double>(total) - 1e-9)));
            const auto hi = static_cast<std::size_t>(std::floor(max_completeness * static_cast<double>(total) + 1e-9));
            std::vector<std::string> candidates;
            for (const auto& o : scene.objects)
                if (targetable.contains(o.class_label) &&
                    std::find(candidates.begin(), candidates.end(), o.class_label) == candidates.end())
                    candidates.push_back(o.class_label);
            if (lo > hi || candidates.empty()) continue;
            Rng rng(derive_seed(base, 2 * static_cast<std::uint64_t>(redraw) + 1));
            for (int attempt = 0; attempt < kExtractAttempts && !made; ++attempt) {
                const double c = rng.uniform(min_completeness, max_completeness);
                auto n = static_cast<std::size_t>(std::max<long>(1, std::lround(c * static_cast<double>(total))));
                n = std::clamp(n, lo, hi);
                const auto& cls = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
                const std::uint64_t view_seed = rng.next_u64();
                try {
                    made = extract_partial_count(scene, n, cls, view_seed);
                } catch (const GenerationError&) {
                }
            }
        }
        if (!made) throw GenerationError("could not extract a partial view for " + scene_name(i));
        out.push_back(std::move(*made));
    }
    return out;
}

} // namespace dscg

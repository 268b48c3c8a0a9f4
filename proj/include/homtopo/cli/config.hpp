#pragma once

// Run configuration: a nested JSON document checked against a default
// document (unknown keys and type mismatches are rejected), then converted
// into typed settings with every violation reported at once.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "homtopo/cli/presets.hpp"
#include "homtopo/core/errors.hpp"
#include "homtopo/core/kelvin.hpp"
#include "homtopo/mesh/mesh.hpp"

namespace homtopo {

using Json = nlohmann::json;

inline const std::vector<std::string> &command_names() {
    static const std::vector<std::string> names{"cell-table", "thickness", "topopt-cond", "topopt-elastic", "simp",
                                                "dehomog"};
    return names;
}

/// Every accepted key with its default. A null default accepts a number.
inline Json default_config() {
    return Json::parse(R"({
  "domain": {"lx": 2.0, "ly": 1.0, "nx": 40, "ny": 20},
  "boundary": {"preset": "cantilever", "band_edges": 2, "segments": []},
  "material": {"alpha": 1.0, "beta": 2.0, "young": 1.0, "poisson": 0.3, "lambda": null, "mu": null},
  "volume": 0.5,
  "objective": "compliance",
  "load": {"source": 1.0, "body_force": [0.0, 0.0]},
  "thickness": {"model": "membrane", "method": "oc", "h_min": 0.1, "h_max": 1.0, "h0": 0.5,
                "regularization": 0.0},
  "algorithm": {"iterations": 100, "tolerance": 0.001, "penalization_iterations": 20, "theta_min": 0.001,
                "simp_schedule": [1.0, 2.0, 3.0], "step": 0.0},
  "cell_table": {"samples": 17, "resolution": 32, "ersatz": 0.001},
  "dehomog": {"epsilon": 0.05, "h_min": 0.01, "eta": 0.05, "newton_iterations": 50, "presmooth": true,
              "micro_iterations": 300, "nodes_per_period": 8, "table": "", "design": ""},
  "output": {"dir": "out"}
})");
}

struct RunConfig {
    std::string command;
    Json resolved;  // defaults merged with the file and the flags

    double lx = 0, ly = 0;
    int nx = 0, ny = 0;
    std::string preset;
    int band_edges = 2;
    std::vector<BoundarySegment> segments;  // explicit or expanded from the preset

    double alpha = 1, beta = 2;
    IsotropicModuli moduli;
    double volume = 0.5;
    std::string objective;
    double source = 1.0;
    Vec2 body_force = Vec2::Zero();

    std::string thickness_model, thickness_method;
    double h_min = 0.1, h_max = 1.0, h0 = 0.5, regularization = 0.0;

    int iterations = 100;
    double tolerance = 1e-3;
    int penalization_iterations = 20;
    double theta_min = 1e-3;
    std::vector<double> simp_schedule;
    double step = 0.0;

    int table_samples = 17, table_resolution = 32;
    double ersatz = 1e-3;

    double epsilon = 0.05, feature_min = 0.01, eta = 0.05;
    int newton_iterations = 50, micro_iterations = 300, nodes_per_period = 8;
    bool presmooth = true;
    std::string table_path, design_path;

    std::string output_dir;

    Mesh2D mesh() const {
        Mesh2D m = make_mesh(nx, ny, lx, ly, segments);
        if (preset == "lbeam") mask_elements(m, [&](const Vec2 &c) { return c(0) > 0.5 * lx && c(1) > 0.5 * ly; });
        return m;
    }
};

namespace detail {

inline const char *json_kind(const Json &j) {
    if (j.is_null()) return "null";
    if (j.is_boolean()) return "boolean";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    return "object";
}

inline bool same_kind(const Json &def, const Json &v) {
    if (def.is_null() || def.is_number()) return v.is_number() || (def.is_null() && v.is_null());
    return std::string(json_kind(def)) == json_kind(v);
}

/// Overlays `user` onto `base`, recording unknown keys and type mismatches.
inline void merge_checked(Json &base, const Json &user, const std::string &path, std::vector<std::string> &errors) {
    if (!user.is_object()) {
        errors.push_back((path.empty() ? std::string("configuration") : path) + ": expected an object");
        return;
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) {
            errors.push_back(key + ": unknown key");
            continue;
        }
        Json &slot = base[it.key()];
        if (slot.is_object()) {
            merge_checked(slot, it.value(), key, errors);
        } else if (!same_kind(slot, it.value())) {
            errors.push_back(key + ": expected " + std::string(slot.is_null() ? "number" : json_kind(slot)) + ", got " +
                             json_kind(it.value()));
        } else {
            slot = it.value();
        }
    }
}

/// Nested object holding `value` at a dotted path.
inline Json at_path(const std::string &dotted, const Json &value) {
    Json out = value;
    std::string rest = dotted;
    while (true) {
        const auto dot = rest.rfind('.');
        const std::string key = dot == std::string::npos ? rest : rest.substr(dot + 1);
        out = Json{{key, out}};
        if (dot == std::string::npos) break;
        rest = rest.substr(0, dot);
    }
    return out;
}

inline bool parse_side(const std::string &s, Side &out) {
    for (Side side : {Side::Bottom, Side::Right, Side::Top, Side::Left})
        if (s == side_name(side)) {
            out = side;
            return true;
        }
    return false;
}

inline std::vector<BoundarySegment> parse_segments(const Json &list, double lx, double ly,
                                                   std::vector<std::string> &errors) {
    std::vector<BoundarySegment> out;
    for (size_t i = 0; i < list.size(); ++i) {
        const Json &s = list[i];
        const std::string where = "boundary.segments[" + std::to_string(i) + "]";
        if (!s.is_object()) {
            errors.push_back(where + ": expected an object");
            continue;
        }
        for (auto it = s.begin(); it != s.end(); ++it)
            if (it.key() != "side" && it.key() != "from" && it.key() != "to" && it.key() != "tag" && it.key() != "load")
                errors.push_back(where + "." + it.key() + ": unknown key");
        BoundarySegment seg;
        if (!s.contains("side") || !s["side"].is_string() || !parse_side(s["side"].get<std::string>(), seg.side)) {
            errors.push_back(where + ".side: expected one of bottom, right, top, left");
            continue;
        }
        const double len = (seg.side == Side::Bottom || seg.side == Side::Top) ? lx : ly;
        auto number = [&](const char *key, double fallback) {
            if (!s.contains(key)) return fallback;
            if (s[key].is_number()) return s[key].get<double>();
            errors.push_back(where + "." + key + ": expected number");
            return fallback;
        };
        seg.from = number("from", 0.0);
        seg.to = number("to", len);
        if (!(0.0 <= seg.from && seg.from < seg.to && seg.to <= len))
            errors.push_back(where + ": need 0 <= from < to <= side length");
        std::string tag = "free";
        if (s.contains("tag")) {
            if (s["tag"].is_string()) tag = s["tag"].get<std::string>();
            else tag = "?";
        }
        if (tag == "dirichlet") seg.tag = BoundaryTag::Dirichlet;
        else if (tag == "neumann") seg.tag = BoundaryTag::Neumann;
        else if (tag == "free") seg.tag = BoundaryTag::Free;
        else errors.push_back(where + ".tag: expected dirichlet, neumann or free");
        if (s.contains("load")) {
            const Json &l = s["load"];
            if (l.is_array() && l.size() == 2 && l[0].is_number() && l[1].is_number())
                seg.load = Vec2(l[0].get<double>(), l[1].get<double>());
            else errors.push_back(where + ".load: expected two numbers");
        }
        out.push_back(seg);
    }
    return out;
}

}  // namespace detail

/// Builds the typed configuration; `overrides` are applied after `file` in order.
inline RunConfig resolve_config(const std::string &command, const Json &file, const std::vector<Json> &overrides = {}) {
    std::vector<std::string> errors;
    bool known = false;
    for (const auto &c : command_names()) known |= c == command;
    if (!known) errors.push_back("unknown command '" + command + "'");

    Json doc = default_config();
    detail::merge_checked(doc, file, "", errors);
    for (const auto &o : overrides) detail::merge_checked(doc, o, "", errors);
    // rejected keys keep their defaults so the checks below still report everything else

    RunConfig c;
    c.command = command;
    c.resolved = doc;
    auto num = [&](const Json &j) { return j.get<double>(); };
    auto whole = [&](const Json &j, const std::string &key) {
        const double v = j.get<double>();
        if (v != std::floor(v)) errors.push_back(key + ": expected an integer");
        return static_cast<int>(v);
    };

    const Json &d = doc["domain"];
    c.lx = num(d["lx"]);
    c.ly = num(d["ly"]);
    c.nx = whole(d["nx"], "domain.nx");
    c.ny = whole(d["ny"], "domain.ny");
    if (!(c.lx > 0 && c.ly > 0)) errors.push_back("domain: lx and ly must be positive");
    if (c.nx < 1 || c.ny < 1) errors.push_back("domain: nx and ny must be at least 1");

    const Json &b = doc["boundary"];
    c.preset = b["preset"].get<std::string>();
    c.band_edges = whole(b["band_edges"], "boundary.band_edges");
    if (c.band_edges < 1) errors.push_back("boundary.band_edges must be at least 1");
    const bool explicit_segments = !b["segments"].empty();
    if (!c.preset.empty() && explicit_segments)
        errors.push_back("boundary: give either a preset or explicit segments, not both");
    if (c.preset.empty() && !explicit_segments) errors.push_back("boundary: a preset or segments are required");
    if (explicit_segments) c.segments = detail::parse_segments(b["segments"], c.lx, c.ly, errors);
    else if (!c.preset.empty() && !is_preset(c.preset)) errors.push_back("boundary.preset: unknown preset '" + c.preset + "'");
    else if (c.nx >= 1 && c.ny >= 1 && c.band_edges >= 1)
        c.segments = preset_segments(c.preset, c.nx, c.ny, c.lx, c.ly, c.band_edges);

    const Json &m = doc["material"];
    c.alpha = num(m["alpha"]);
    c.beta = num(m["beta"]);
    if (!(c.alpha > 0 && c.beta > 0)) errors.push_back("material: alpha and beta must be positive");
    if (m["lambda"].is_null() != m["mu"].is_null()) errors.push_back("material: give both lambda and mu or neither");
    if (!m["lambda"].is_null() && !m["mu"].is_null()) {
        c.moduli = {num(m["lambda"]), num(m["mu"])};
    } else {
        const double e = num(m["young"]), nu = num(m["poisson"]);
        if (!(e > 0)) errors.push_back("material.young must be positive");
        if (!(nu > -1 && nu < 1)) errors.push_back("material.poisson must lie in (-1, 1)");
        c.moduli = IsotropicModuli::from_young(e, nu);
    }
    if (!(c.moduli.mu > 0 && c.moduli.kappa() > 0)) errors.push_back("material: moduli must give mu > 0 and kappa > 0");

    c.volume = num(doc["volume"]);
    if (!(c.volume > 0.0 && c.volume <= 1.0)) errors.push_back("volume: must lie in (0, 1], got " + doc["volume"].dump());
    c.objective = doc["objective"].get<std::string>();
    if (c.objective != "compliance" && c.objective != "torsion")
        errors.push_back("objective: expected compliance or torsion");
    if (c.objective == "torsion" && command != "topopt-cond")
        errors.push_back("objective: torsion applies to topopt-cond only");

    const Json &l = doc["load"];
    c.source = num(l["source"]);
    const Json &bf = l["body_force"];
    if (bf.size() == 2 && bf[0].is_number() && bf[1].is_number()) c.body_force = Vec2(num(bf[0]), num(bf[1]));
    else errors.push_back("load.body_force: expected two numbers");

    const Json &t = doc["thickness"];
    c.thickness_model = t["model"].get<std::string>();
    c.thickness_method = t["method"].get<std::string>();
    c.h_min = num(t["h_min"]);
    c.h_max = num(t["h_max"]);
    c.h0 = num(t["h0"]);
    c.regularization = num(t["regularization"]);
    if (c.thickness_model != "membrane" && c.thickness_model != "plate")
        errors.push_back("thickness.model: expected membrane or plate");
    if (c.thickness_method != "oc" && c.thickness_method != "gradient")
        errors.push_back("thickness.method: expected oc or gradient");
    if (!(0 < c.h_min && c.h_min <= c.h0 && c.h0 <= c.h_max))
        errors.push_back("thickness: need 0 < h_min <= h0 <= h_max");
    if (c.regularization < 0) errors.push_back("thickness.regularization must be non-negative");

    const Json &a = doc["algorithm"];
    c.iterations = whole(a["iterations"], "algorithm.iterations");
    c.tolerance = num(a["tolerance"]);
    c.penalization_iterations = whole(a["penalization_iterations"], "algorithm.penalization_iterations");
    c.theta_min = num(a["theta_min"]);
    c.step = num(a["step"]);
    for (const auto &p : a["simp_schedule"]) {
        if (!p.is_number()) {
            errors.push_back("algorithm.simp_schedule: expected numbers");
            break;
        }
        c.simp_schedule.push_back(p.get<double>());
    }
    if (c.iterations < 0) errors.push_back("algorithm.iterations must be non-negative");
    if (c.penalization_iterations < 0) errors.push_back("algorithm.penalization_iterations must be non-negative");
    if (!(c.tolerance >= 0)) errors.push_back("algorithm.tolerance must be non-negative");
    if (!(c.theta_min > 0 && c.theta_min < 1)) errors.push_back("algorithm.theta_min must lie in (0, 1)");
    if (c.step < 0) errors.push_back("algorithm.step must be non-negative");
    if (c.simp_schedule.empty() || c.simp_schedule.front() != 1.0)
        errors.push_back("algorithm.simp_schedule must start at 1");

    const Json &ct = doc["cell_table"];
    c.table_samples = whole(ct["samples"], "cell_table.samples");
    c.table_resolution = whole(ct["resolution"], "cell_table.resolution");
    c.ersatz = num(ct["ersatz"]);
    if (c.table_samples < 5) errors.push_back("cell_table.samples must be at least 5");
    if (c.table_resolution < 4) errors.push_back("cell_table.resolution must be at least 4");
    if (!(c.ersatz > 0 && c.ersatz < 1)) errors.push_back("cell_table.ersatz must lie in (0, 1)");

    const Json &dh = doc["dehomog"];
    c.epsilon = num(dh["epsilon"]);
    c.feature_min = num(dh["h_min"]);
    c.eta = num(dh["eta"]);
    c.newton_iterations = whole(dh["newton_iterations"], "dehomog.newton_iterations");
    c.micro_iterations = whole(dh["micro_iterations"], "dehomog.micro_iterations");
    c.nodes_per_period = whole(dh["nodes_per_period"], "dehomog.nodes_per_period");
    c.presmooth = dh["presmooth"].get<bool>();
    c.table_path = dh["table"].get<std::string>();
    c.design_path = dh["design"].get<std::string>();
    if (!(c.epsilon > 0)) errors.push_back("dehomog.epsilon must be positive");
    if (!(c.feature_min >= 0)) errors.push_back("dehomog.h_min must be non-negative");
    if (!(c.eta > 0)) errors.push_back("dehomog.eta must be positive");
    if (c.newton_iterations < 0 || c.micro_iterations < 0)
        errors.push_back("dehomog: iteration counts must be non-negative");
    if (c.nodes_per_period < 2) errors.push_back("dehomog.nodes_per_period must be at least 2");

    c.output_dir = doc["output"]["dir"].get<std::string>();
    if (c.output_dir.empty()) errors.push_back("output.dir must not be empty");

    if (!errors.empty()) throw ConfigError(errors);
    return c;
}

inline Json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open configuration file " + path});
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error &e) {
        throw ConfigError({path + ": " + e.what()});
    }
}

inline RunConfig load_config(const std::string &path, const std::string &command) {
    return resolve_config(command, read_json_file(path));
}

/// "a.b.c=value"; the value is read as JSON when possible, else as a string.
inline Json parse_assignment(const std::string &text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError({"--set expects key=value, got '" + text + "'"});
    const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const Json::parse_error &) {
        value = raw;
    }
    return detail::at_path(key, value);
}

}  // namespace homtopo

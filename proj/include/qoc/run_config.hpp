#pragma once

#include "qoc/control_field.hpp"
#include "qoc/io.hpp"
#include "qoc/observables.hpp"
#include "qoc/optimizer.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <json.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <string>

namespace qoc {

using Json = nlohmann::ordered_json;

namespace detail {

// Dimensioned config values are strings with an SI unit suffix ("5 nm",
// "8.5625e6 V/m").  Returns the value scaled to the base unit.
inline double parse_with_unit(const Json& node, const std::map<std::string, double>& units,
                              const std::string& what)
{
    if (!node.is_string())
        throw ConfigError(what + ": expected a string with an SI unit suffix");
    const std::string s = node.get<std::string>();
    size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError(what + ": cannot parse number in '" + s + "'");
    }
    std::string unit = s.substr(pos);
    const auto strip = [](std::string t) {
        const auto a = t.find_first_not_of(" \t");
        const auto b = t.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
    };
    unit = strip(unit);
    const auto it = units.find(unit);
    if (it == units.end()) {
        std::string known;
        for (const auto& [u, f] : units) known += (known.empty() ? "" : ", ") + u;
        throw ConfigError(what + ": unknown unit '" + unit + "' (accepted: " + known + ")");
    }
    return value * it->second;
}

inline double parse_length_m(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"m", 1.0}, {"nm", 1e-9}, {"um", 1e-6}, {"pm", 1e-12}}, what);
}

inline double parse_time_s(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"s", 1.0}, {"ns", 1e-9}, {"us", 1e-6}, {"ps", 1e-12}}, what);
}

// Appendix-style data sheets quote the amplitude in N/C or V/m; identical scale.
inline double parse_field_v_per_m(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"V/m", 1.0}, {"N/C", 1.0}, {"kV/m", 1e3}, {"MV/m", 1e6}}, what);
}

inline double parse_angle_rad(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"rad", 1.0}, {"deg", std::numbers::pi / 180.0}}, what);
}

inline double parse_energy_j(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"J", 1.0}}, what);
}

inline double parse_dipole_cm(const Json& n, const std::string& what)
{
    return parse_with_unit(n, {{"C m", 1.0}, {"C*m", 1.0}}, what);
}

template <typename T>
T get_or(const Json& obj, const std::string& key, T fallback)
{
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

} // namespace detail

// Parsed, unit-converted run description.  All numerical members are in the
// reduced unit system (energy B, time hbar/B, field B/mu); SI appears only in
// `consts` and `geometry`.
struct RunConfig {
    PhysicalConstants consts;
    RotorGeometry geometry; // SI metres/radians
    int truncation = 0;     // M
    SystemSpec spec;

    int steps = 0;            // n
    double total_time_si = 0; // seconds
    double total_time = 0;    // internal units

    std::optional<TrialFieldParams> trial; // a0 in internal units
    std::optional<std::filesystem::path> field_file;

    ObjectiveSpec objective;
    OptimizerConfig optimizer;
    std::filesystem::path output_dir = "out";

    double dt() const { return total_time / steps; }

    // Trial synthesis or file load (with nearest-step resampling), on this grid.
    FieldGrid initial_field() const
    {
        if (field_file) return resample_nearest(read_field_csv(*field_file, consts), steps);
        if (!trial) throw ConfigError("config: no trial field parameters and no field file");
        return trial_field(*trial, steps, dt());
    }
};

namespace detail {

inline RunConfig parse_run_config_impl(const Json& root, const std::filesystem::path& base_dir)
{
    RunConfig cfg;
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, value] : root.items()) {
        if (key != "system" && key != "grid" && key != "field" && key != "objective"
            && key != "optimizer" && key != "output")
            throw ConfigError("config: unknown section '" + key + "'");
    }
    if (!root.contains("system") || !root.contains("grid"))
        throw ConfigError("config: 'system' and 'grid' sections are required");

    // system
    const Json& sys = root.at("system");
    if (sys.contains("constants")) {
        const Json& c = sys.at("constants");
        if (c.contains("B")) cfg.consts.B = detail::parse_energy_j(c.at("B"), "constants.B");
        if (c.contains("mu")) cfg.consts.mu = detail::parse_dipole_cm(c.at("mu"), "constants.mu");
        cfg.consts.validate();
    }
    cfg.truncation = detail::get_or<int>(sys, "M", -1);
    if (cfg.truncation < 0) throw ConfigError("config: system.M is required and must be >= 0");

    if (!sys.contains("geometry")) throw ConfigError("config: system.geometry is required");
    const Json& g = sys.at("geometry");
    if (g.contains("preset")) {
        const std::string preset = g.at("preset").get<std::string>();
        const double r = detail::parse_length_m(g.at("R"), "geometry.R");
        if (preset == "two-rotor") {
            const double theta = g.contains("theta")
                                     ? detail::parse_angle_rad(g.at("theta"), "geometry.theta")
                                     : std::numbers::pi / 2;
            cfg.geometry = RotorGeometry::two_rotor(r, theta);
        } else if (preset == "equilateral") {
            cfg.geometry = RotorGeometry::equilateral(r);
        } else {
            throw ConfigError("config: unknown geometry preset '" + preset + "'");
        }
    } else if (g.contains("pairs")) {
        cfg.geometry.num_rotors = detail::get_or<int>(sys, "rotors", 0);
        if (cfg.geometry.num_rotors < 1)
            throw ConfigError("config: system.rotors is required with an explicit pair list");
        for (const Json& p : g.at("pairs"))
            cfg.geometry.pairs.push_back({p.at("i").get<int>(), p.at("j").get<int>(),
                                          detail::parse_length_m(p.at("R"), "pair.R"),
                                          detail::parse_angle_rad(p.at("theta"), "pair.theta")});
    } else {
        throw ConfigError("config: geometry needs either a preset or a pair list");
    }
    if (sys.contains("rotors") && sys.at("rotors").get<int>() != cfg.geometry.num_rotors)
        throw ConfigError("config: system.rotors disagrees with the geometry");
    cfg.spec = build_rotor_system(cfg.geometry, cfg.truncation, cfg.consts);

    // grid
    const Json& grid = root.at("grid");
    cfg.steps = detail::get_or<int>(grid, "n", 0);
    if (cfg.steps < 1) throw ConfigError("config: grid.n must be >= 1");
    cfg.total_time_si = detail::parse_time_s(grid.at("T"), "grid.T");
    cfg.total_time = cfg.total_time_si * cfg.consts.time_si_to_internal();

    // field
    if (root.contains("field")) {
        const Json& field = root.at("field");
        if (field.contains("trial")) {
            const Json& t = field.at("trial");
            TrialFieldParams p;
            p.a0 = detail::parse_field_v_per_m(t.at("a0"), "field.trial.a0")
                   * cfg.consts.field_si_to_internal();
            p.b = t.at("b").get<std::vector<double>>();
            if (p.b.empty()) throw ConfigError("config: field.trial.b must be non-empty");
            if (static_cast<int>(p.b.size()) > cfg.truncation)
                throw ConfigError("config: trial field uses more frequencies than the basis supports (F > M)");
            cfg.trial = p;
        }
        if (field.contains("file")) {
            std::filesystem::path fp = field.at("file").get<std::string>();
            if (fp.is_relative()) fp = base_dir / fp;
            if (!std::filesystem::exists(fp))
                throw ConfigError("config: field file does not exist: " + fp.string());
            cfg.field_file = fp;
        }
        if (cfg.trial && cfg.field_file)
            throw ConfigError("config: give either field.trial or field.file, not both");
    }

    // objective
    cfg.objective = ObjectiveSpec::orientations(cfg.spec.dims);
    if (root.contains("objective")) {
        const Json& obj = root.at("objective");
        const std::string kind = detail::get_or<std::string>(obj, "kind", "sum-of-orientations");
        if (kind == "sum-of-orientations") {
            cfg.objective = ObjectiveSpec::orientations(cfg.spec.dims);
        } else if (kind == "signed-orientations") {
            const auto w = obj.at("weights").get<std::vector<double>>();
            if (w.size() != cfg.spec.dims.size())
                throw ConfigError("config: objective.weights needs one entry per rotor");
            cfg.objective = ObjectiveSpec::signed_orientations(cfg.spec.dims, w);
        } else if (kind == "projection-onto-target") {
            const std::string target = detail::get_or<std::string>(obj, "target", "mes");
            if (target != "mes") throw ConfigError("config: the only built-in projection target is 'mes'");
            if (cfg.spec.num_dofs != 2)
                throw ConfigError("config: the MES target is defined for two rotors");
            cfg.objective = ObjectiveSpec::projection(cfg.spec.dims, mes_state(cfg.truncation));
        } else {
            throw ConfigError("config: unknown objective kind '" + kind + "'");
        }
    }

    // optimizer
    if (root.contains("optimizer")) {
        const Json& opt = root.at("optimizer");
        cfg.optimizer.j_thresh = detail::get_or<double>(opt, "j_thresh", 0.0);
        cfg.optimizer.max_iters = detail::get_or<long>(opt, "max_iters", 1);
        cfg.optimizer.perturb_scale = detail::get_or<double>(opt, "perturb_scale", 0.02);
        cfg.optimizer.seed = detail::get_or<std::uint64_t>(opt, "seed", 0);
        cfg.optimizer.propagator =
            propagator_from_string(detail::get_or<std::string>(opt, "propagator", "magnus1"));
        cfg.optimizer.log_every = detail::get_or<long>(opt, "log_every", 100);
        const int default_f = cfg.trial ? static_cast<int>(cfg.trial->b.size()) : 4;
        cfg.optimizer.perturb_frequencies = detail::get_or<int>(opt, "perturb_frequencies", default_f);
        cfg.optimizer.batch_size = detail::get_or<int>(opt, "batch_size", 1);
        cfg.optimizer.validate();
    } else if (cfg.trial) {
        cfg.optimizer.perturb_frequencies = static_cast<int>(cfg.trial->b.size());
    }

    // output
    if (root.contains("output")) {
        std::filesystem::path out = root.at("output").get<std::string>();
        cfg.output_dir = out.is_relative() ? base_dir / out : out;
    } else {
        cfg.output_dir = base_dir / "out";
    }
    return cfg;
}

} // namespace detail

inline RunConfig parse_run_config(const Json& root, const std::filesystem::path& base_dir = ".")
{
    try {
        return detail::parse_run_config_impl(root, base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    Json root;
    try {
        root = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_run_config(root, path.parent_path().empty() ? "." : path.parent_path());
}

} // namespace qoc

#ifndef CASCADE_CONFIG_HPP
#define CASCADE_CONFIG_HPP

#include "cascade/observability.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascade {

/// Invalid configuration; the message starts with "file:line:" when the key has a source line.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    enum class Kind { simulate, gramian, sweep, hum, insensitize, audit };

    std::string name = "config";
    Kind kind = Kind::simulate;
    std::uint64_t seed = 1;

    int modes = 16;
    int panels = 0;  // 0: 8 * modes

    double horizon = 4.0;
    bool horizon_auto = false;  // horizon_factor times the empirical observability horizon
    double horizon_factor = 1.25;
    std::vector<double> horizon_scan;
    int steps = 0;  // 0: smallest resolved even count
    double cfl = 0.5;

    std::vector<PlateauBump> coupling;
    bool observer_boundary = false;
    std::vector<PlateauBump> observer_bumps;
    bool left = false, right = false;
    double b_left = 1.0, b_right = 1.0;

    bool random_data = true;
    bool random_source = false;
    int ensemble = 100;

    double c1 = 4.0, c2 = 16.0, c3 = 32.0, c4 = 128.0;
    std::optional<double> alpha, beta, gamma0, eta0, alpha0, t0;
    double safety = 2.0;
    double eig_floor = 1e-12;

    bool oracle = false;
    bool order = false;
    std::optional<double> order_horizon;  // horizon of the convergence-rate check; defaults to horizon

    bool expect_observable = true;

    std::string sweep_axis = "T";
    std::vector<double> sweep_values;
    std::string sweep_check = "none";

    double cg_tolerance = 1e-10;
    int max_iterations = 2000;
    double hum_floor = 1e-8;
    int transposition_tests = 0;
    bool dense_check = false;
    bool write_control = true;

    int modal_perturbations = 10;
    int random_perturbations = 10;
    int equivalence_instances = 0;

    double identity_tol = 1e-6;
    double conservation_tol = 1e-12;
    double terminal_tol = 1e-6;
    double stability = 0.5;
    double observable_floor = 1e-6;
    double unobservable_tol = 1e-10;
    double trend_factor = 2.0;
    int max_cg_iterations = 500;
    bool expect_fail = false;

    std::string prefix;

    CoefficientFunction coupling_function() const
    {
        return coupling.empty() ? CoefficientFunction::constant(0.0) : CoefficientFunction(coupling);
    }

    Observer observer() const
    {
        if (observer_boundary)
            return Observer::boundary(left, right, b_left, b_right);
        return Observer::interior(observer_bumps.empty() ? CoefficientFunction::constant(0.0)
                                                         : CoefficientFunction(observer_bumps));
    }
};

inline std::string kind_name(ExperimentConfig::Kind k)
{
    switch (k) {
    case ExperimentConfig::Kind::simulate: return "simulate";
    case ExperimentConfig::Kind::gramian: return "gramian";
    case ExperimentConfig::Kind::sweep: return "sweep";
    case ExperimentConfig::Kind::hum: return "hum";
    case ExperimentConfig::Kind::insensitize: return "insensitize";
    case ExperimentConfig::Kind::audit: return "audit";
    }
    return "?";
}

namespace detail {

using boost::property_tree::ptree;

inline std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Line of every "section.key" in the source text.
inline std::map<std::string, int> key_lines(const std::string& text)
{
    std::map<std::string, int> out;
    std::istringstream is(text);
    std::string line, section;
    for (int no = 1; std::getline(is, line); ++no) {
        line = trim(line);
        if (line.empty() || line[0] == ';' || line[0] == '#')
            continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        const std::string key = trim(line.substr(0, eq));
        out[section.empty() ? key : section + "." + key] = no;
    }
    return out;
}

class Reader {
public:
    Reader(const ptree& pt, std::string name, std::map<std::string, int> lines)
        : pt_(pt), name_(std::move(name)), lines_(std::move(lines))
    {
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const
    {
        auto it = lines_.find(key);
        std::string where = it != lines_.end() ? name_ + ":" + std::to_string(it->second) : name_ + ": override";
        throw ConfigError(where + ": " + key + ": " + msg);
    }

    bool has(const std::string& key) const { return static_cast<bool>(pt_.get_optional<std::string>(key)); }

    std::string text(const std::string& key, const std::string& def) const
    {
        return trim(pt_.get<std::string>(key, def));
    }

    double number(const std::string& key, double def) const
    {
        if (!has(key))
            return def;
        return parse_number(key, text(key, ""));
    }

    std::optional<double> optional_number(const std::string& key) const
    {
        if (!has(key))
            return std::nullopt;
        return parse_number(key, text(key, ""));
    }

    long integer(const std::string& key, long def) const
    {
        if (!has(key))
            return def;
        const std::string s = text(key, "");
        try {
            size_t used = 0;
            long v = std::stol(s, &used);
            if (used == s.size())
                return v;
        } catch (const std::exception&) {
        }
        fail(key, "expected an integer, got '" + s + "'");
    }

    bool boolean(const std::string& key, bool def) const
    {
        if (!has(key))
            return def;
        const std::string s = text(key, "");
        if (s == "true" || s == "yes" || s == "1" || s == "on")
            return true;
        if (s == "false" || s == "no" || s == "0" || s == "off")
            return false;
        fail(key, "expected a boolean, got '" + s + "'");
    }

    std::string choice(const std::string& key, const std::string& def, const std::set<std::string>& allowed) const
    {
        std::string s = text(key, def);
        if (!allowed.count(s)) {
            std::string list;
            for (const auto& a : allowed)
                list += (list.empty() ? "" : "|") + a;
            fail(key, "expected one of " + list + ", got '" + s + "'");
        }
        return s;
    }

    std::vector<double> numbers(const std::string& key) const
    {
        std::vector<double> out;
        std::istringstream is(text(key, ""));
        std::string tok;
        while (is >> tok)
            out.push_back(parse_number(key, tok));
        return out;
    }

    std::vector<PlateauBump> bumps(const std::string& key) const
    {
        auto v = numbers(key);
        if (v.size() % 4 != 0)
            fail(key, "expected groups of four numbers: plateau_lo plateau_hi margin height");
        std::vector<PlateauBump> out;
        for (size_t i = 0; i < v.size(); i += 4) {
            PlateauBump b{v[i], v[i + 1], v[i + 2], v[i + 3]};
            if (!(b.lo < b.hi) || b.margin < 0.0 || b.height < 0.0)
                fail(key, "malformed plateau bump");
            if (b.lo - b.margin < 0.0 || b.hi + b.margin > 1.0)
                fail(key, "region must lie inside (0,1)");
            out.push_back(b);
        }
        return out;
    }

private:
    double parse_number(const std::string& key, const std::string& s) const
    {
        try {
            size_t used = 0;
            double v = std::stod(s, &used);
            if (used == s.size() && std::isfinite(v))
                return v;
        } catch (const std::exception&) {
        }
        fail(key, "expected a number, got '" + s + "'");
    }

    const ptree& pt_;
    std::string name_;
    std::map<std::string, int> lines_;
};

inline const std::map<std::string, std::set<std::string>>& schema_keys()
{
    static const std::map<std::string, std::set<std::string>> keys = {
        {"", {"schema", "kind", "seed"}},
        {"space", {"modes", "panels"}},
        {"grid", {"horizon", "horizon_factor", "scan", "steps", "cfl"}},
        {"coupling", {"bumps"}},
        {"observer", {"type", "bumps", "left", "right", "b_left", "b_right"}},
        {"data", {"initial", "source", "ensemble"}},
        {"constants", {"c1", "c2", "c3", "c4", "alpha", "beta", "gamma0", "eta0", "alpha0", "t0", "safety", "floor"}},
        {"simulate", {"oracle", "order", "order_horizon"}},
        {"gramian", {"expect"}},
        {"sweep", {"axis", "values", "check"}},
        {"hum", {"tolerance", "max_iterations", "floor", "transposition_tests", "dense_check", "write_control"}},
        {"insensitize", {"modal", "random", "equivalence_instances"}},
        {"checks",
         {"identity_tol", "conservation_tol", "terminal_tol", "stability", "observable_floor", "unobservable_tol",
          "trend_factor", "max_cg_iterations", "expect_fail"}},
        {"output", {"prefix"}},
    };
    return keys;
}

inline void check_known_keys(const ptree& pt, const Reader& r)
{
    const auto& keys = schema_keys();
    for (const auto& [k, v] : pt) {
        if (v.empty()) {
            if (!keys.at("").count(k))
                r.fail(k, "unknown key");
            continue;
        }
        auto sec = keys.find(k);
        if (sec == keys.end() || k.empty())
            r.fail(k, "unknown section");
        for (const auto& [kk, vv] : v)
            if (!sec->second.count(kk))
                r.fail(k + "." + kk, "unknown key");
    }
}

}  // namespace detail

/// Parses INI text plus "section.key=value" overrides into a validated configuration.
inline ExperimentConfig parse_config(const std::string& text, const std::string& name,
                                     const std::vector<std::string>& overrides = {})
{
    using detail::ptree;
    ptree pt;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(name + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    auto lines = detail::key_lines(text);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError(name + ": override: expected section.key=value, got '" + o + "'");
        const std::string key = detail::trim(o.substr(0, eq));
        pt.put(ptree::path_type(key, '.'), detail::trim(o.substr(eq + 1)));
        lines.erase(key);
    }
    detail::Reader r(pt, name, lines);
    detail::check_known_keys(pt, r);

    ExperimentConfig c;
    c.name = name;
    if (!r.has("schema"))
        throw ConfigError(name + ": missing schema version (expected schema = 1)");
    if (r.integer("schema", 0) != 1)
        r.fail("schema", "unsupported schema version");
    if (!r.has("kind"))
        throw ConfigError(name + ": missing experiment kind");
    static const std::map<std::string, ExperimentConfig::Kind> kinds = {
        {"simulate", ExperimentConfig::Kind::simulate}, {"gramian", ExperimentConfig::Kind::gramian},
        {"sweep", ExperimentConfig::Kind::sweep},       {"hum", ExperimentConfig::Kind::hum},
        {"insensitize", ExperimentConfig::Kind::insensitize}, {"audit", ExperimentConfig::Kind::audit}};
    c.kind = kinds.at(r.choice("kind", "", {"simulate", "gramian", "sweep", "hum", "insensitize", "audit"}));
    const long seed = r.integer("seed", 1);
    if (seed < 0)
        r.fail("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);

    c.modes = static_cast<int>(r.integer("space.modes", 16));
    if (c.modes < 1)
        r.fail("space.modes", "must be at least 1");
    c.panels = static_cast<int>(r.integer("space.panels", 0));
    if (c.panels != 0 && (c.panels < 8 * c.modes || c.panels % 2))
        r.fail("space.panels", "must be even and at least 8 * modes");

    if (r.text("grid.horizon", "") == "auto") {
        c.horizon_auto = true;
    } else {
        c.horizon = r.number("grid.horizon", 4.0);
        if (!(c.horizon > 0.0))
            r.fail("grid.horizon", "must be positive");
    }
    c.horizon_factor = r.number("grid.horizon_factor", 1.25);
    if (!(c.horizon_factor > 0.0))
        r.fail("grid.horizon_factor", "must be positive");
    if (r.has("grid.scan")) {
        auto s = r.numbers("grid.scan");
        if (s.size() != 3 || !(s[0] > 0.0) || !(s[2] > 0.0) || s[1] < s[0])
            r.fail("grid.scan", "expected start stop step");
        for (double t = s[0]; t <= s[1] + 1e-12; t += s[2])
            c.horizon_scan.push_back(t);
    } else {
        for (int i = 1; i <= 32; ++i)
            c.horizon_scan.push_back(0.25 * i);
    }
    c.steps = static_cast<int>(r.integer("grid.steps", 0));
    if (c.steps < 0 || c.steps % 2)
        r.fail("grid.steps", "must be an even non-negative count");
    c.cfl = r.number("grid.cfl", 0.5);
    if (!(c.cfl > 0.0) || c.cfl > TimeGrid::max_cfl)
        r.fail("grid.cfl", "must lie in (0, 0.5]");

    c.coupling = r.bumps("coupling.bumps");
    c.observer_boundary = r.choice("observer.type", "interior", {"interior", "boundary"}) == "boundary";
    c.observer_bumps = r.bumps("observer.bumps");
    c.left = r.boolean("observer.left", false);
    c.right = r.boolean("observer.right", false);
    c.b_left = r.number("observer.b_left", 1.0);
    c.b_right = r.number("observer.b_right", 1.0);
    if (c.b_left < 0.0)
        r.fail("observer.b_left", "must be non-negative");
    if (c.b_right < 0.0)
        r.fail("observer.b_right", "must be non-negative");
    if (c.observer_boundary && !c.left && !c.right)
        r.fail("observer.type", "boundary observer needs left or right");

    c.random_data = r.choice("data.initial", "random", {"random", "zero"}) == "random";
    c.random_source = r.choice("data.source", "zero", {"random", "zero"}) == "random";
    c.ensemble = static_cast<int>(r.integer("data.ensemble", 100));
    if (c.ensemble < 1)
        r.fail("data.ensemble", "must be at least 1");

    c.c1 = r.number("constants.c1", 4.0);
    c.c2 = r.number("constants.c2", 16.0);
    c.c3 = r.number("constants.c3", 32.0);
    c.c4 = r.number("constants.c4", 128.0);
    c.alpha = r.optional_number("constants.alpha");
    c.beta = r.optional_number("constants.beta");
    c.gamma0 = r.optional_number("constants.gamma0");
    c.eta0 = r.optional_number("constants.eta0");
    c.alpha0 = r.optional_number("constants.alpha0");
    c.t0 = r.optional_number("constants.t0");
    for (const char* k : {"constants.c1", "constants.c2", "constants.c3", "constants.c4", "constants.alpha",
                          "constants.beta", "constants.gamma0", "constants.eta0", "constants.alpha0"})
        if (r.has(k) && !(r.number(k, 0.0) > 0.0))
            r.fail(k, "must be positive");
    if (c.t0 && *c.t0 < 0.0)
        r.fail("constants.t0", "must be non-negative");
    c.safety = r.number("constants.safety", 2.0);
    if (!(c.safety > 1.0))
        r.fail("constants.safety", "must exceed 1");
    c.eig_floor = r.number("constants.floor", 1e-12);

    c.oracle = r.boolean("simulate.oracle", false);
    c.order = r.boolean("simulate.order", false);
    c.order_horizon = r.optional_number("simulate.order_horizon");
    if (c.order_horizon && !(*c.order_horizon > 0.0))
        r.fail("simulate.order_horizon", "must be positive");
    if ((c.oracle || c.order) && c.modes > dense_mode_limit)
        r.fail("simulate.oracle", "dense oracle limited to 64 modes");

    c.expect_observable = r.choice("gramian.expect", "observable", {"observable", "unobservable"}) == "observable";

    c.sweep_axis = r.choice("sweep.axis", "T", {"T", "N", "offset"});
    c.sweep_values = r.numbers("sweep.values");
    c.sweep_check = r.choice("sweep.check", "none", {"none", "trend", "decay", "stable"});
    if (c.sweep_axis == "N")
        for (double v : c.sweep_values)
            if (v < 1 || v != std::floor(v))
                r.fail("sweep.values", "mode counts must be positive integers");
    if (c.sweep_axis == "T")
        for (double v : c.sweep_values)
            if (!(v > 0.0))
                r.fail("sweep.values", "horizons must be positive");

    c.cg_tolerance = r.number("hum.tolerance", 1e-10);
    if (!(c.cg_tolerance > 0.0))
        r.fail("hum.tolerance", "must be positive");
    c.max_iterations = static_cast<int>(r.integer("hum.max_iterations", 2000));
    c.hum_floor = r.number("hum.floor", 1e-8);
    c.transposition_tests = static_cast<int>(r.integer("hum.transposition_tests", 0));
    c.dense_check = r.boolean("hum.dense_check", false);
    c.write_control = r.boolean("hum.write_control", true);

    c.modal_perturbations = static_cast<int>(r.integer("insensitize.modal", 10));
    c.random_perturbations = static_cast<int>(r.integer("insensitize.random", 10));
    c.equivalence_instances = static_cast<int>(r.integer("insensitize.equivalence_instances", 0));

    c.identity_tol = r.number("checks.identity_tol", 1e-6);
    c.conservation_tol = r.number("checks.conservation_tol", 1e-12);
    c.terminal_tol = r.number("checks.terminal_tol", 1e-6);
    c.stability = r.number("checks.stability", 0.5);
    c.observable_floor = r.number("checks.observable_floor", 1e-6);
    c.unobservable_tol = r.number("checks.unobservable_tol", 1e-10);
    c.trend_factor = r.number("checks.trend_factor", 2.0);
    c.max_cg_iterations = static_cast<int>(r.integer("checks.max_cg_iterations", 500));
    c.expect_fail = r.boolean("checks.expect_fail", false);

    c.prefix = r.text("output.prefix", kind_name(c.kind));
    if (c.prefix.empty() || c.prefix.find('/') != std::string::npos)
        r.fail("output.prefix", "must be a plain file name stem");
    return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {})
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError(path + ": cannot open");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path, overrides);
}

}  // namespace cascade

#endif

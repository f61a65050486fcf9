#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "fkpide/applications.hpp"

namespace fkpide::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kConfigError = 2, kConditionFailure = 3, kSolverFailure = 4, kValidationFailure = 5 };

inline const std::vector<std::string> &commands() {
    static const std::vector<std::string> c{"check",        "price",    "bond",    "occupation",
                                            "barrier",      "schroedinger", "validate", "figure1"};
    return c;
}

// ---------------------------------------------------------------- TOML <-> JSON

namespace detail {

// Non-finite floats are kept as the strings "inf" / "-inf" so the canonical
// JSON stays valid and hashes stably.
inline Json float_json(double v) {
    if (std::isnan(v)) throw ConfigError("NaN is not a valid configuration value");
    if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
    return Json(v);
}

inline Json node_to_json(const toml::node &n, const std::string &path) {
    if (auto t = n.as_table()) {
        Json o = Json::object();
        for (const auto &[k, v] : *t) {
            const std::string key(k.str());
            o[key] = node_to_json(v, path.empty() ? key : path + "." + key);
        }
        return o;
    }
    if (auto a = n.as_array()) {
        Json arr = Json::array();
        for (const auto &v : *a) arr.push_back(node_to_json(v, path));
        return arr;
    }
    if (auto v = n.as_integer()) return Json(v->get());
    if (auto v = n.as_floating_point()) return float_json(v->get());
    if (auto v = n.as_string()) return Json(v->get());
    if (auto v = n.as_boolean()) return Json(v->get());
    throw ConfigError("unsupported value type at '" + path + "'");
}

inline void json_to_toml(const Json &j, toml::table &out);

inline void push_json(const Json &v, toml::array &arr) {
    if (v.is_string() && (v == "inf" || v == "-inf"))
        arr.push_back(v == "inf" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity());
    else if (v.is_string()) arr.push_back(v.get<std::string>());
    else if (v.is_boolean()) arr.push_back(v.get<bool>());
    else if (v.is_number_integer()) arr.push_back(v.get<std::int64_t>());
    else if (v.is_number()) arr.push_back(v.get<double>());
    else if (v.is_array()) {
        toml::array sub;
        for (const auto &e : v) push_json(e, sub);
        arr.push_back(std::move(sub));
    } else throw ConfigError("cannot express value in TOML: " + v.dump());
}

inline void json_to_toml(const Json &j, toml::table &out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto &v = it.value();
        if (v.is_object()) {
            toml::table sub;
            json_to_toml(v, sub);
            out.insert(it.key(), std::move(sub));
        } else if (v.is_string() && (v == "inf" || v == "-inf")) {
            out.insert(it.key(), v == "inf" ? std::numeric_limits<double>::infinity()
                                            : -std::numeric_limits<double>::infinity());
        } else if (v.is_string()) {
            out.insert(it.key(), v.get<std::string>());
        } else if (v.is_boolean()) {
            out.insert(it.key(), v.get<bool>());
        } else if (v.is_number_integer()) {
            out.insert(it.key(), v.get<std::int64_t>());
        } else if (v.is_number()) {
            out.insert(it.key(), v.get<double>());
        } else if (v.is_array()) {
            toml::array arr;
            for (const auto &e : v) push_json(e, arr);
            out.insert(it.key(), std::move(arr));
        } else {
            throw ConfigError("cannot express value in TOML: " + v.dump());
        }
    }
}

}  // namespace detail

inline Json parse_toml(const std::string &text, const std::string &source = "config") {
    try {
        return detail::node_to_json(toml::parse(text, source), "");
    } catch (const toml::parse_error &e) {
        std::ostringstream os;
        os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw ConfigError(os.str());
    }
}

inline Json load_toml(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml(ss.str(), path);
}

inline std::string to_toml(const Json &doc) {
    // scalars first, then tables, so top-level keys are not captured by a section
    toml::table top;
    Json scalars = Json::object(), tables = Json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) (it.value().is_object() ? tables : scalars)[it.key()] = it.value();
    detail::json_to_toml(scalars, top);
    detail::json_to_toml(tables, top);
    std::ostringstream os;
    os << toml::toml_formatter(top, toml::format_flags::none) << '\n';
    return os.str();
}

/// `section.key=value`, value in TOML syntax; a bare word is taken as a string.
inline void apply_override(Json &raw, const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() || key.find('.', dot + 1) != std::string::npos)
        throw ConfigError("--set key must be section.key, got '" + key + "'");
    Json value;
    try {
        value = detail::node_to_json(*toml::parse("v = " + text)["v"].node(), key);
    } catch (const toml::parse_error &) {
        value = text;
    }
    Json &sec = raw[key.substr(0, dot)];
    if (!sec.is_null() && !sec.is_object()) throw ConfigError("'" + key.substr(0, dot) + "' is not a section");
    sec[key.substr(dot + 1)] = value;
}

inline std::string fnv1a_hex(const std::string &s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- canonical form

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double as_float(const Json &v, const std::string &where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    throw ConfigError("type mismatch at '" + where + "': expected a number, got " + v.dump());
}

/// Reads typed keys of one section with defaults; leftovers are unknown keys.
class SectionReader {
public:
    SectionReader(std::string name, const Json &raw) : name_(std::move(name)), raw_(raw) {
        if (!raw_.is_null() && !raw_.is_object()) throw ConfigError("'" + name_ + "' must be a section");
    }

    bool has(const std::string &k) const { return raw_.is_object() && raw_.contains(k); }

    double num(const std::string &k, double def) {
        const double v = has(k) ? as_float(raw_.at(k), where(k)) : def;
        out_[k] = float_json(v);
        used_.insert(k);
        return v;
    }
    double required_num(const std::string &k) {
        if (!has(k)) throw ConfigError("missing key '" + where(k) + "'");
        return num(k, 0.0);
    }
    std::int64_t integer(const std::string &k, std::int64_t def) {
        std::int64_t v = def;
        if (has(k)) {
            const auto &j = raw_.at(k);
            if (j.is_number_integer()) v = j.get<std::int64_t>();
            else throw ConfigError("type mismatch at '" + where(k) + "': expected an integer, got " + j.dump());
        }
        out_[k] = v;
        used_.insert(k);
        return v;
    }
    bool flag(const std::string &k, bool def) {
        bool v = def;
        if (has(k)) {
            const auto &j = raw_.at(k);
            if (!j.is_boolean()) throw ConfigError("type mismatch at '" + where(k) + "': expected a boolean");
            v = j.get<bool>();
        }
        out_[k] = v;
        used_.insert(k);
        return v;
    }
    std::string str(const std::string &k, const std::string &def, const std::vector<std::string> &allowed) {
        std::string v = def;
        if (has(k)) {
            const auto &j = raw_.at(k);
            if (!j.is_string()) throw ConfigError("type mismatch at '" + where(k) + "': expected a string");
            v = j.get<std::string>();
        }
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string list;
            for (const auto &a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError("invalid value '" + v + "' at '" + where(k) + "' (expected one of: " + list + ")");
        }
        out_[k] = v;
        used_.insert(k);
        return v;
    }
    std::vector<double> nums(const std::string &k, const std::vector<double> &def) {
        std::vector<double> v = def;
        if (has(k)) {
            const auto &j = raw_.at(k);
            if (!j.is_array()) throw ConfigError("type mismatch at '" + where(k) + "': expected an array of numbers");
            v.clear();
            for (const auto &e : j) v.push_back(as_float(e, where(k)));
        }
        Json arr = Json::array();
        for (double x : v) arr.push_back(float_json(x));
        out_[k] = arr;
        used_.insert(k);
        return v;
    }

    Json finish() const {
        if (raw_.is_object())
            for (auto it = raw_.begin(); it != raw_.end(); ++it)
                if (!used_.count(it.key())) throw ConfigError("unknown key '" + where(it.key()) + "'");
        return out_;
    }

private:
    std::string where(const std::string &k) const { return name_ + "." + k; }
    std::string name_;
    const Json &raw_;
    Json out_ = Json::object();
    std::set<std::string> used_;
};

struct Layout {
    std::vector<std::string> required, optional;
};

inline Layout layout(const std::string &command, const std::string &validate_app) {
    if (command == "check") return {{"model"}, {"check"}};
    if (command == "price") return {{"model", "contract"}, {"numerics"}};
    if (command == "figure1") return {{"model", "contract"}, {"numerics", "figure1"}};
    if (command == "bond") return {{"model", "bond"}, {"numerics"}};
    if (command == "occupation") return {{"model", "occupation"}, {"numerics"}};
    if (command == "barrier") return {{"model", "contract", "barrier"}, {"numerics"}};
    if (command == "schroedinger") return {{"schroedinger"}, {"numerics"}};
    if (command == "validate") {
        Layout l = layout(validate_app, "");
        l.required.insert(l.required.begin(), "validate");
        l.optional.push_back("mc");
        return l;
    }
    throw ConfigError("unknown subcommand '" + command + "'");
}

inline const Json &section(const Json &raw, const std::string &name) {
    static const Json null;
    return raw.contains(name) ? raw.at(name) : null;
}

inline void check_sorted_increasing(const std::vector<double> &v, const std::string &where) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw ConfigError("'" + where + "' must increase strictly");
}

inline void check_steps(const std::vector<double> &lo, const std::vector<double> &hi, const std::vector<double> &lv,
                        const std::string &where) {
    if (lo.size() != hi.size() || (!lv.empty() && lv.size() != lo.size()))
        throw ConfigError("'" + where + "': interval arrays must have equal length");
}

inline Json canonical_model(const Json &raw, double default_rate) {
    SectionReader r("model", raw);
    if (!r.has("family")) throw ConfigError("missing key 'model.family'");
    const auto family = r.str("family", "", {"brownian", "jump_diffusion", "cgmy", "nig", "compound_poisson"});
    if (family == "brownian") r.num("sigma", 0.2);
    if (family == "jump_diffusion") {
        r.num("sigma", 0.2);
        r.num("intensity", 0.0);
        r.num("jump_mean", 0.0);
        r.num("jump_std", 0.1);
    }
    if (family == "compound_poisson") {
        r.num("intensity", 1.0);
        r.num("jump_mean", 0.0);
        r.num("jump_std", 0.1);
    }
    if (family == "cgmy") {
        r.num("C", 0.0156);
        r.num("G", 0.0767);
        r.num("M", 7.55);
        r.num("Y", 1.2996);
    }
    if (family == "nig") {
        r.num("alpha", 15.0);
        r.num("beta", -3.0);
        r.num("delta", 0.5);
        r.num("shape", 1.0);
    }
    std::vector<std::string> modes{"martingale", "explicit"};
    if (family == "cgmy") modes.push_back("zero_truncation");
    const auto mode = r.str("drift_mode", "martingale", modes);
    if (mode == "martingale") r.num("rate", default_rate);
    if (mode == "explicit") r.num("drift", 0.0);
    return r.finish();
}

inline Json canonical_numerics(const Json &raw, double R1, double R2, double eta) {
    SectionReader r("numerics", raw);
    const double a = r.num("R1", R1), b = r.num("R2", R2);
    if (!(std::isfinite(a) && std::isfinite(b) && a < b)) throw ConfigError("numerics: need finite R1 < R2");
    if (r.integer("n", 1023) < 3) throw ConfigError("numerics.n must be at least 3");
    if (r.integer("steps", 256) < 1) throw ConfigError("numerics.steps must be positive");
    if (r.integer("startup", 4) < 0) throw ConfigError("numerics.startup must be nonnegative");
    const double theta = r.num("theta", 0.5);
    if (!(theta >= 0.5 && theta <= 1)) throw ConfigError("numerics.theta must lie in [0.5, 1]");
    r.num("eta", eta);
    if (!(r.num("epsilon", 0.1) > 0)) throw ConfigError("numerics.epsilon must be positive");
    r.num("solver_tolerance", 1e-10);
    if (r.integer("dense_limit", 4096) < 0) throw ConfigError("numerics.dense_limit must be nonnegative");
    r.num("abs_tolerance", 1e-4);
    r.num("rel_tolerance", 1e-3);
    r.num("fourier_cutoff", 20.0);
    r.integer("gl_order", 16);
    r.integer("laguerre_order", 48);
    r.flag("check_conditions", true);
    return r.finish();
}

inline Json canonical_mc(const Json &raw) {
    SectionReader r("mc", raw);
    if (r.integer("paths", 100000) < 2) throw ConfigError("mc.paths must be at least 2");
    if (r.integer("steps", 500) < 1) throw ConfigError("mc.steps must be positive");
    if (!(r.num("epsilon", 1e-3) > 0)) throw ConfigError("mc.epsilon must be positive");
    if (r.integer("seed", 1) < 0) throw ConfigError("mc.seed must be nonnegative");
    r.str("small_jumps", "substitute", {"substitute", "drop"});
    return r.finish();
}

inline Json canonical_contract(const Json &raw, double default_rate) {
    SectionReader r("contract", raw);
    const double S0 = r.num("S0", 100.0);
    r.num("K", 100.0);
    r.num("B", 100.0);
    r.num("lambda", 0.0);
    r.num("T", 1.0);
    r.num("rate", default_rate);
    const auto br = r.nums("rate_breaks", {});
    const auto lv = r.nums("rate_levels", {});
    check_sorted_increasing(br, "contract.rate_breaks");
    if (!lv.empty() && lv.size() != br.size() + 1)
        throw ConfigError("'contract.rate_levels' needs one entry more than 'contract.rate_breaks'");
    if (lv.empty() && !br.empty()) throw ConfigError("'contract.rate_breaks' given without 'contract.rate_levels'");
    r.nums("probes", {S0});
    return r.finish();
}

}  // namespace detail

/// Canonical configuration: defaults filled, keys sorted, hashed.
struct RunConfig {
    std::string command;
    Json doc;  // includes "command"
    std::string hash;

    const Json &operator[](const std::string &s) const { return doc.at(s); }
    std::string toml() const { return to_toml(doc); }
};

inline RunConfig canonicalize(const std::string &command, Json raw) {
    using namespace detail;
    if (raw.is_null()) raw = Json::object();
    if (!raw.is_object()) throw ConfigError("configuration must be a table");
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
        throw ConfigError("unknown subcommand '" + command + "'");
    if (raw.contains("command")) {
        if (!raw.at("command").is_string() || raw.at("command") != command)
            throw ConfigError("config is for command " + raw.at("command").dump() + ", not '" + command + "'");
        raw.erase("command");
    }

    std::string vapp;
    Json validate;
    if (command == "validate") {
        SectionReader r("validate", section(raw, "validate"));
        vapp = r.str("app", "price", {"price", "bond", "occupation", "schroedinger"});
        r.num("k_stderr", 3.0);
        r.num("relative", 0.005);
        r.num("absolute", 0.0);
        validate = r.finish();
    }
    const Layout lay = layout(command, vapp);
    const std::string app = command == "validate" ? vapp : command;
    for (auto it = raw.begin(); it != raw.end(); ++it) {
        const bool known = std::count(lay.required.begin(), lay.required.end(), it.key()) ||
                           std::count(lay.optional.begin(), lay.optional.end(), it.key());
        if (!known) throw ConfigError("unknown section '" + it.key() + "' for subcommand '" + command + "'");
    }
    for (const auto &s : lay.required)
        if (!raw.contains(s)) throw ConfigError("missing section '" + s + "' for subcommand '" + command + "'");

    Json doc = Json::object();
    doc["command"] = command;
    if (command == "validate") doc["validate"] = validate;

    const bool priced = app == "price" || app == "barrier" || app == "figure1";
    double rate = 0.0, logK = 0.0;
    if (priced) {
        doc["contract"] = canonical_contract(section(raw, "contract"), app == "figure1" ? 0.0 : 0.03);
        rate = doc["contract"]["rate"].get<double>();
        logK = std::log(doc["contract"]["K"].get<double>());
    }

    if (app == "check") {
        SectionReader r("check", section(raw, "check"));
        r.num("eta", -1.5);
        r.num("T", 1.0);
        r.num("xi_max", 1e4);
        r.integer("n_xi", 120);
        doc["check"] = r.finish();
    }
    if (app == "bond") {
        SectionReader r("bond", section(raw, "bond"));
        r.num("T", 2.0);
        r.num("r0", 0.05);
        const auto br = r.nums("rate_breaks", {});
        const auto lv = r.nums("rate_levels", {});
        check_sorted_increasing(br, "bond.rate_breaks");
        if (!lv.empty() && lv.size() != br.size() + 1)
            throw ConfigError("'bond.rate_levels' needs one entry more than 'bond.rate_breaks'");
        if (lv.empty() && !br.empty()) throw ConfigError("'bond.rate_breaks' given without 'bond.rate_levels'");
        check_steps(r.nums("state_lo", {}), r.nums("state_hi", {}), r.nums("state_level", {}), "bond.state_*");
        r.nums("probes", {-1.0, 0.0, 1.0});
        doc["bond"] = r.finish();
    }
    if (app == "occupation") {
        SectionReader r("occupation", section(raw, "occupation"));
        r.num("gamma", 1.0);
        r.num("T", 1.0);
        check_steps(r.nums("lo", {0.0}), r.nums("hi", {kInf}), {}, "occupation.lo/hi");
        r.num("center", 0.0);
        r.nums("probes", {0.0});
        doc["occupation"] = r.finish();
    }
    if (app == "barrier") {
        SectionReader r("barrier", section(raw, "barrier"));
        const double lo = r.num("lower", 0.0), hi = r.num("upper", kInf);
        if (!(lo >= 0 && hi > lo)) throw ConfigError("barrier: need 0 <= lower < upper");
        r.nums("lambdas", {10.0, 100.0, 1000.0});
        doc["barrier"] = r.finish();
    }
    if (app == "figure1") {
        SectionReader r("figure1", section(raw, "figure1"));
        r.nums("barriers", {100.0, 70.0});
        r.nums("lambdas", {1.0, 10.0, 100.0});
        const double a = r.num("S_min", 50.0), b = r.num("S_max", 150.0);
        const auto n = r.integer("S_count", 101);
        if (!(a > 0 && b > a && n >= 2)) throw ConfigError("figure1: need 0 < S_min < S_max and S_count >= 2");
        doc["figure1"] = r.finish();
    }
    if (app == "schroedinger") {
        SectionReader r("schroedinger", section(raw, "schroedinger"));
        r.num("mass", 1.0);
        r.num("c", 1.0);
        r.num("hbar", 1.0);
        r.num("T", 1.0);
        r.num("x0", 0.0);
        r.num("width", 1.0);
        r.num("eta", 0.0);
        r.num("v0", 0.0);
        check_steps(r.nums("step_lo", {}), r.nums("step_hi", {}), r.nums("step_level", {}), "schroedinger.step_*");
        r.nums("probes", {-2.0, -1.0, 0.0, 1.0, 2.0});
        doc["schroedinger"] = r.finish();
    }
    if (app != "schroedinger") doc["model"] = canonical_model(section(raw, "model"), rate);
    if (app != "check") {
        double R1 = -5, R2 = 5, eta = -1.5;
        if (priced) R1 = logK - 5, R2 = logK + 5;
        if (app == "schroedinger") R1 = -8, R2 = 8, eta = doc["schroedinger"]["eta"].get<double>();
        doc["numerics"] = canonical_numerics(section(raw, "numerics"), R1, R2, eta);
    }
    if (command == "validate") doc["mc"] = canonical_mc(section(raw, "mc"));

    if (priced && doc["model"].value("drift_mode", "") == "martingale" &&
        doc["contract"]["rate_levels"].empty() && doc["model"]["rate"] != doc["contract"]["rate"])
        throw ConfigError("model.rate (martingale drift) differs from contract.rate");

    RunConfig cfg{command, doc, fnv1a_hex(doc.dump())};
    return cfg;
}

// ---------------------------------------------------------------- builders

inline LevyModel build_model(const Json &m) {
    const auto family = m.at("family").get<std::string>();
    const auto mode = m.at("drift_mode").get<std::string>();
    auto f = [&](const char *k) { return detail::as_float(m.at(k), std::string("model.") + k); };

    if (family == "cgmy") {
        DriftMode dm = mode == "martingale" ? DriftMode::martingale(f("rate"))
                       : mode == "explicit" ? DriftMode::explicit_drift(f("drift"))
                                            : DriftMode::zero_truncation();
        return make_cgmy(f("C"), f("G"), f("M"), f("Y"), dm);
    }
    auto make = [&](double b) -> LevyModel {
        if (family == "brownian") return make_brownian(f("sigma"), b);
        if (family == "nig") return make_nig(f("alpha"), f("beta"), f("delta"), b, f("shape"));
        if (family == "compound_poisson") return make_compound_poisson(f("intensity"), f("jump_mean"), f("jump_std"), b);
        // jump_diffusion
        if (f("intensity") == 0.0) return make_brownian(f("sigma"), b);
        const auto jumps = make_compound_poisson(f("intensity"), f("jump_mean"), f("jump_std"));
        return make_jump_diffusion(vec1(b), mat1(f("sigma") * f("sigma")), &jumps);
    };
    if (mode == "explicit") return make(f("drift"));
    // E e^{L_1} = exp(-A(i)) = e^r fixes the drift
    const double a0 = make(0.0)(0.0, kI).real();
    if (!std::isfinite(a0)) throw DomainError("martingale drift needs a finite exponential moment E e^{L}");
    return make(f("rate") + a0);
}

inline double fnum(const Json &s, const char *k) { return detail::as_float(s.at(k), k); }
inline std::vector<double> fnums(const Json &s, const char *k) {
    std::vector<double> v;
    for (const auto &e : s.at(k)) v.push_back(detail::as_float(e, k));
    return v;
}

inline ApplicationOptions build_options(const Json &n) {
    ApplicationOptions o;
    o.eta = fnum(n, "eta");
    o.epsilon = fnum(n, "epsilon");
    o.check_conditions = n.at("check_conditions").get<bool>();
    o.evolution.theta = fnum(n, "theta");
    o.evolution.tolerance = fnum(n, "solver_tolerance");
    o.evolution.dense_limit = n.at("dense_limit").get<Eigen::Index>();
    o.fourier.cutoff = fnum(n, "fourier_cutoff");
    o.fourier.gl_order = n.at("gl_order").get<int>();
    o.fourier.laguerre_order = n.at("laguerre_order").get<int>();
    o.abs_tolerance = fnum(n, "abs_tolerance");
    o.rel_tolerance = fnum(n, "rel_tolerance");
    return o;
}

inline TruncatedDomain build_grid(const Json &n) {
    return build_domain(fnum(n, "R1"), fnum(n, "R2"), n.at("n").get<int>());
}

/// Mesh with every rate break (calendar time) on a mesh time.
inline TimeMesh build_mesh(const Json &n, double T, const std::vector<double> &calendar_breaks = {}) {
    std::vector<double> taus;
    for (double b : calendar_breaks) taus.push_back(T - b);
    return TimeMesh::aligned(T, n.at("steps").get<int>(), taus, n.at("startup").get<int>());
}

inline RatePath build_rate(const Json &s, const char *constant_key) {
    const auto lv = fnums(s, "rate_levels");
    if (lv.empty()) return RatePath::constant(fnum(s, constant_key));
    RatePath r{fnums(s, "rate_breaks"), lv};
    r.validate();
    return r;
}

inline ContractSpec build_contract(const Json &c) {
    ContractSpec s;
    s.S0 = fnum(c, "S0");
    s.K = fnum(c, "K");
    s.B = fnum(c, "B");
    s.lambda = fnum(c, "lambda");
    s.T = fnum(c, "T");
    s.rate = build_rate(c, "rate");
    s.validate();
    return s;
}

inline KillingRateSpec build_steps(const Json &s, const char *lo, const char *hi, const char *level) {
    KillingRateSpec k;
    const auto a = fnums(s, lo), b = fnums(s, hi), v = fnums(s, level);
    for (std::size_t i = 0; i < a.size(); ++i) k.add(a[i], b[i], v[i]);
    return k;
}

inline McSettings build_mc(const Json &m) {
    McSettings s;
    s.paths = m.at("paths").get<std::size_t>();
    s.steps = m.at("steps").get<int>();
    s.seed = m.at("seed").get<std::uint64_t>();
    s.scheme.epsilon = fnum(m, "epsilon");
    s.scheme.small_jumps =
        m.at("small_jumps") == "drop" ? McScheme::SmallJumps::Drop : McScheme::SmallJumps::Substitute;
    return s;
}

inline SchroedingerConfig build_schroedinger(const Json &s) {
    SchroedingerConfig c;
    c.mass = fnum(s, "mass");
    c.c = fnum(s, "c");
    c.hbar = fnum(s, "hbar");
    if (const double v0 = fnum(s, "v0"); v0 != 0.0) c.potential = KillingRateSpec::constant(v0);
    const auto steps = build_steps(s, "step_lo", "step_hi", "step_level");
    for (const auto &st : steps.steps) c.potential.add(st.lo, st.hi, st.level);
    c.validate();
    return c;
}

inline std::function<double(double)> gaussian_datum(const Json &s) {
    const double x0 = fnum(s, "x0"), w = fnum(s, "width");
    if (!(w > 0)) throw ConfigError("schroedinger.width must be positive");
    return [x0, w](double x) { return std::exp(-0.5 * (x - x0) * (x - x0) / (w * w)); };
}

inline IntervalSet build_set(const Json &s) {
    IntervalSet D;
    const auto lo = fnums(s, "lo"), hi = fnums(s, "hi");
    for (std::size_t i = 0; i < lo.size(); ++i) D.push_back({lo[i], hi[i]});
    return D;
}

inline double black_scholes_call(double S, double K, double T, double r, double sigma) {
    const double sd = sigma * std::sqrt(T);
    const double d1 = (std::log(S / K) + (r + 0.5 * sigma * sigma) * T) / sd, d2 = d1 - sd;
    auto N = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    return S * N(d1) - K * std::exp(-r * T) * N(d2);
}

// ---------------------------------------------------------------- reports

struct Row {
    std::string method, app;
    double S0 = 0;
    std::optional<double> lambda, B;
    double value = 0;
    std::optional<double> stderr_;
};

struct Outcome {
    int status = kOk;
    std::vector<Row> rows;
    Json results = Json::object();
    std::string summary;  // human-readable lines for stdout
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline const char *kCsvHeader = "method,app,S0,lambda,B,value,stderr,config_hash";

/// First line is the only run-dependent one.
inline void write_csv(std::ostream &os, const RunConfig &cfg, const std::vector<Row> &rows,
                      const std::string &timestamp) {
    os << "# fkpide " << cfg.command << " generated " << timestamp << '\n' << kCsvHeader << '\n';
    auto opt = [](const std::optional<double> &v) { return v ? fmt(*v) : std::string(); };
    for (const auto &r : rows)
        os << r.method << ',' << r.app << ',' << fmt(r.S0) << ',' << opt(r.lambda) << ',' << opt(r.B) << ','
           << fmt(r.value) << ',' << opt(r.stderr_) << ',' << cfg.hash << '\n';
}

inline Json report_json(const RunConfig &cfg, const Outcome &o) {
    return Json{{"schema_version", kSchemaVersion}, {"command", cfg.command}, {"config_hash", cfg.hash},
                {"config", cfg.doc},                {"status", o.status},     {"results", o.results}};
}

// ---------------------------------------------------------------- subcommands

namespace run {

inline Outcome check(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto &c = cfg["check"];
    GrowthOptions g;
    g.T = fnum(c, "T");
    g.xi_max = fnum(c, "xi_max");
    g.n_xi = c.at("n_xi").get<int>();
    const auto rep = estimate_growth(model, fnum(c, "eta"), g);
    Outcome o;
    o.results = rep.to_json();
    o.status = rep.passes() ? kOk : kConditionFailure;
    std::ostringstream os;
    os << "alpha_hat = " << fmt(rep.alpha_hat) << " +- " << fmt(rep.alpha_uncertainty) << '\n';
    for (const auto &[k, f] : rep.flags) os << k << ": " << to_string(f.verdict) << '\n';
    os << (rep.passes() ? "conditions: pass" : "conditions: FAIL") << '\n';
    o.summary = os.str();
    return o;
}

inline Outcome price(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto c = build_contract(cfg["contract"]);
    const auto &num = cfg["numerics"];
    const auto probes = fnums(cfg["contract"], "probes");
    const auto curve = price_employee_option(model, c, build_grid(num), build_mesh(num, c.T, c.rate.breaks), probes,
                                             build_options(num));
    Outcome o;
    for (std::size_t i = 0; i < curve.S0.size(); ++i) o.rows.push_back({"pide", "price", curve.S0[i], c.lambda, c.B, curve.value[i], {}});
    const auto &m = cfg["model"];
    const bool diffusion = m["family"] == "brownian" || (m["family"] == "jump_diffusion" && fnum(m, "intensity") == 0);
    const bool bs = diffusion && m["drift_mode"] == "martingale" && c.lambda == 0 && c.constant_rate();
    Json oracle = nullptr;
    if (bs) {
        oracle = Json::array();
        for (double S : curve.S0) {
            const double v = black_scholes_call(S, c.K, c.T, *c.constant_rate(), fnum(m, "sigma"));
            o.rows.push_back({"oracle", "price", S, c.lambda, c.B, v, {}});
            oracle.push_back(v);
        }
    }
    o.results = curve.to_json();
    o.results["black_scholes"] = oracle;
    std::ostringstream os;
    for (std::size_t i = 0; i < curve.S0.size(); ++i)
        os << "S0 = " << fmt(curve.S0[i]) << "  price = " << fmt(curve.value[i]) << '\n';
    o.summary = os.str();
    return o;
}

inline Outcome figure1(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto base = build_contract(cfg["contract"]);
    const auto &num = cfg["numerics"];
    const auto &f = cfg["figure1"];
    const auto Bs = fnums(f, "barriers");
    auto lambdas = fnums(f, "lambdas");
    lambdas.insert(lambdas.begin(), 0.0);
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] > lambdas[i - 1])) throw ConfigError("figure1.lambdas must be positive and increasing");
    const double a = fnum(f, "S_min"), b = fnum(f, "S_max");
    const auto n = f.at("S_count").get<int>();
    std::vector<double> S(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) S[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);

    const auto opt = build_options(num);
    const auto grid = build_grid(num);
    const auto mesh = build_mesh(num, base.T, base.rate.breaks);
    const std::size_t L = lambdas.size();
    std::vector<PriceCurve> curves(Bs.size() * L);
    parallel_for(curves.size(), [&](std::size_t k) {
        auto c = base;
        c.B = Bs[k / L];
        c.lambda = lambdas[k % L];
        curves[k] = price_employee_option(model, c, grid, mesh, S, opt);
    });

    Outcome o;
    Json panels = Json::array();
    bool all_monotone = true;
    std::ostringstream os;
    for (std::size_t ib = 0; ib < Bs.size(); ++ib) {
        const PriceCurve *call = &curves[ib * L];
        bool monotone = true;
        for (std::size_t il = 1; il < L; ++il)
            for (std::size_t i = 0; i < S.size(); ++i)
                if (curves[ib * L + il].value[i] > curves[ib * L + il - 1].value[i] + 1e-6) monotone = false;
        all_monotone = all_monotone && monotone;
        Json peaks = Json::array();
        for (std::size_t il = 1; il < L; ++il) {
            // argmax of call - employee over the grid nodes in the probe window
            const auto &cv = curves[ib * L + il];
            const auto &dom = cv.surface.domain;
            double best = -1, argx = 0;
            for (int j = 0; j < dom.n; ++j) {
                const double x = dom.node(j);
                if (x < std::log(a) || x > std::log(b)) continue;
                const double d = call->surface.final_value(x) - cv.surface.final_value(x);
                if (d > best) best = d, argx = x;
            }
            const double cells = (argx - std::log(Bs[ib])) / dom.h;
            peaks.push_back(Json{{"lambda", lambdas[il]}, {"peak_S", std::exp(argx)}, {"peak_difference", best},
                                 {"offset_cells", cells}, {"h", dom.h}});
            os << "B = " << fmt(Bs[ib]) << " lambda = " << fmt(lambdas[il]) << ": difference peaks at S = "
               << fmt(std::exp(argx)) << " (" << fmt(cells) << " cells from B)\n";
        }
        panels.push_back(Json{{"B", Bs[ib]}, {"monotone_in_lambda", monotone}, {"peaks", peaks}});
        for (std::size_t il = 0; il < L; ++il) {
            const auto &cv = curves[ib * L + il];
            for (std::size_t i = 0; i < S.size(); ++i)
                o.rows.push_back({"pide", il == 0 ? "call" : "employee", S[i], lambdas[il], Bs[ib], cv.value[i], {}});
        }
    }
    os << "monotone in lambda at every probe: " << (all_monotone ? "yes" : "NO") << '\n';
    o.results = Json{{"panels", panels}, {"monotone_in_lambda", all_monotone}, {"lambdas", lambdas}};
    o.summary = os.str();
    return o;
}

inline ShortRate build_short_rate(const Json &b) {
    return {build_rate(b, "r0"), build_steps(b, "state_lo", "state_hi", "state_level")};
}

inline Outcome bond(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto &b = cfg["bond"];
    const auto &num = cfg["numerics"];
    const double T = fnum(b, "T");
    const auto r = build_short_rate(b);
    const auto sol = price_zero_coupon_bond(model, r, T, build_grid(num), build_mesh(num, T, r.time.breaks), build_options(num));
    Outcome o;
    Json vals = Json::array();
    std::ostringstream os;
    for (double x : fnums(b, "probes")) {
        const double v = sol.value(x);
        o.rows.push_back({"pide", "bond", x, {}, {}, v, {}});
        vals.push_back(v);
        os << "x = " << fmt(x) << "  P(0,T) = " << fmt(v) << '\n';
    }
    o.results = sol.to_json();
    o.results["probes"] = b.at("probes");
    o.results["value"] = vals;
    o.summary = os.str();
    return o;
}

inline Outcome occupation(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto &s = cfg["occupation"];
    const auto &num = cfg["numerics"];
    const double T = fnum(s, "T");
    const auto sol = occupation_laplace(model, build_set(s), fnum(s, "gamma"), T, build_grid(num), build_mesh(num, T),
                                        build_options(num), fnum(s, "center"));
    Outcome o;
    Json vals = Json::array();
    std::ostringstream os;
    for (double x : fnums(s, "probes")) {
        const double v = sol.value(x);
        o.rows.push_back({"pide", "occupation", x, {}, {}, v, {}});
        vals.push_back(v);
        os << "x = " << fmt(x) << "  E exp(-gamma occupation) = " << fmt(v) << '\n';
    }
    o.results = sol.to_json();
    o.results["probes"] = s.at("probes");
    o.results["value"] = vals;
    o.summary = os.str();
    return o;
}

inline Outcome barrier(const RunConfig &cfg) {
    const auto model = build_model(cfg["model"]);
    const auto c = build_contract(cfg["contract"]);
    const auto &b = cfg["barrier"];
    const auto &num = cfg["numerics"];
    const double lo = fnum(b, "lower"), hi = fnum(b, "upper");
    const IntervalSet D{{lo > 0 ? std::log(lo) : -detail::kInf, std::isfinite(hi) ? std::log(hi) : detail::kInf}};
    const auto lambdas = fnums(b, "lambdas");
    const auto sweep = barrier_penalization_sweep(model, c, D, lambdas, build_grid(num), build_mesh(num, c.T, c.rate.breaks),
                                                  fnums(cfg["contract"], "probes"), build_options(num));
    Outcome o;
    std::ostringstream os;
    for (std::size_t i = 0; i < sweep.plain.S0.size(); ++i)
        o.rows.push_back({"pide", "barrier", sweep.plain.S0[i], 0.0, {}, sweep.plain.value[i], {}});
    for (std::size_t k = 0; k < lambdas.size(); ++k)
        for (std::size_t i = 0; i < sweep.curves[k].S0.size(); ++i)
            o.rows.push_back({"pide", "barrier", sweep.curves[k].S0[i], lambdas[k], {}, sweep.curves[k].value[i], {}});
    for (std::size_t k = 0; k < lambdas.size(); ++k)
        os << "lambda = " << fmt(lambdas[k]) << "  price(S0) = " << fmt(sweep.curves[k].at(c.S0)) << '\n';
    os << "limit proxy: " << (sweep.limit_proxy ? fmt(*sweep.limit_proxy) : std::string("n/a")) << '\n';
    o.results = sweep.to_json();
    o.summary = os.str();
    return o;
}

inline Outcome schroedinger(const RunConfig &cfg) {
    const auto &s = cfg["schroedinger"];
    const auto &num = cfg["numerics"];
    const auto sc = build_schroedinger(s);
    const double T = fnum(s, "T");
    const auto u = schroedinger_evolve(sc, gaussian_datum(s), T, build_grid(num), build_mesh(num, T), fnum(s, "eta"),
                                       build_options(num));
    Outcome o;
    Json vals = Json::array();
    std::ostringstream os;
    for (double x : fnums(s, "probes")) {
        const double v = u.final_value(x);
        o.rows.push_back({"pide", "schroedinger", x, {}, {}, v, {}});
        vals.push_back(v);
        os << "x = " << fmt(x) << "  u(T, x) = " << fmt(v) << '\n';
    }
    o.results = Json{{"setup", sc.to_json()}, {"probes", s.at("probes")}, {"value", vals}, {"domain", u.domain.to_json()}};
    o.summary = os.str();
    return o;
}

inline Outcome validate(const RunConfig &cfg) {
    const auto &v = cfg["validate"];
    const auto app = v.at("app").get<std::string>();
    const auto mcs = build_mc(cfg["mc"]);
    TolerancePolicy pol{fnum(v, "k_stderr"), fnum(v, "relative"), fnum(v, "absolute")};
    Json pide_cfg = cfg.doc, mc_cfg = cfg.doc;
    pide_cfg.erase("mc");
    mc_cfg.erase("numerics");

    // PIDE values first (one solve), then one MC estimate per probe
    std::vector<double> probes, pide;
    std::vector<FkEstimate> mc;
    std::function<FkEstimate(double)> estimate;
    std::optional<LevyModel> model;
    if (app != "schroedinger") model = build_model(cfg["model"]);
    Outcome first;
    if (app == "price") {
        first = price(cfg);
        const auto c = build_contract(cfg["contract"]);
        estimate = [&, c](double S) { return mc_employee_option(*model, c, S, mcs); };
    } else if (app == "bond") {
        first = bond(cfg);
        const auto &b = cfg["bond"];
        const double T = fnum(b, "T");
        const auto r = build_short_rate(b);
        estimate = [&, T, r](double x) { return mc_zero_coupon_bond(*model, r, T, x, mcs); };
    } else if (app == "occupation") {
        first = occupation(cfg);
        const auto &s = cfg["occupation"];
        const auto D = build_set(s);
        const double g = fnum(s, "gamma"), T = fnum(s, "T");
        estimate = [&, D, g, T](double x) { return mc_occupation_laplace(*model, D, g, T, x, mcs); };
    } else {
        first = schroedinger(cfg);
        const auto &s = cfg["schroedinger"];
        const auto sc = build_schroedinger(s);
        const auto g = gaussian_datum(s);
        const double T = fnum(s, "T");
        estimate = [&, sc, g, T](double x) { return mc_schroedinger(sc, g, T, x, mcs); };
    }
    Outcome o;
    Json verdicts = Json::array();
    bool all = true;
    std::ostringstream os;
    for (const auto &r : first.rows) {
        if (r.method != "pide") continue;
        const auto est = estimate(r.S0);
        const auto cv = cross_validate(r.value, pide_cfg, est, mc_cfg, pol);
        all = all && cv.pass;
        o.rows.push_back(r);
        o.rows.push_back({"mc", r.app, r.S0, r.lambda, r.B, est.mean, est.stderr_});
        Json j = cv.to_json();
        j.erase("provenance");
        j["probe"] = r.S0;
        j["mc_estimate"] = est.to_json();
        verdicts.push_back(j);
        os << "probe " << fmt(r.S0) << ": pide " << fmt(r.value) << "  mc " << fmt(est.mean) << " +- " << fmt(est.stderr_)
           << "  -> " << (cv.pass ? "pass" : "FAIL") << '\n';
    }
    o.status = all ? kOk : kValidationFailure;
    o.results = Json{{"app", app},
                     {"verdict", all ? "pass" : "fail"},
                     {"verdicts", verdicts},
                     {"policy", {{"k_stderr", pol.k_stderr}, {"relative", pol.relative}, {"absolute", pol.absolute}}},
                     {"pide", first.results}};
    o.summary = os.str();
    return o;
}

}  // namespace run

inline Outcome execute(const RunConfig &cfg) {
    const auto &c = cfg.command;
    if (c == "check") return run::check(cfg);
    if (c == "price") return run::price(cfg);
    if (c == "figure1") return run::figure1(cfg);
    if (c == "bond") return run::bond(cfg);
    if (c == "occupation") return run::occupation(cfg);
    if (c == "barrier") return run::barrier(cfg);
    if (c == "schroedinger") return run::schroedinger(cfg);
    return run::validate(cfg);
}

/// Maps library errors onto exit codes.
template <class F>
int guarded(F &&body, std::ostream &err) {
    try {
        return body();
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DomainError &e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ConditionError &e) {
        err << "condition check failed: " << e.what() << '\n';
        return kConditionFailure;
    } catch (const StripError &e) {
        err << "condition check failed: " << e.what() << '\n';
        return kConditionFailure;
    } catch (const std::exception &e) {
        err << "solver failure: " << e.what() << '\n';
        return kSolverFailure;
    }
}

struct Invocation {
    std::string command, config_path, out_dir = "out";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool write = true;
};

inline RunConfig load(const Invocation &inv) {
    Json raw = inv.config_path.empty() ? Json::object() : load_toml(inv.config_path);
    for (const auto &s : inv.overrides) apply_override(raw, s);
    if (inv.seed) {
        if (inv.command != "validate") throw ConfigError("--seed applies to the validate subcommand only");
        raw["mc"]["seed"] = *inv.seed;
    }
    return canonicalize(inv.command, raw);
}

/// Full run: load, execute, write <out>/<command>.{csv,json,toml}.
inline int run_invocation(const Invocation &inv, std::ostream &out, std::ostream &err) {
    return guarded(
        [&] {
            const auto cfg = load(inv);
            const auto o = execute(cfg);
            if (inv.write) {
                namespace fs = std::filesystem;
                fs::create_directories(inv.out_dir);
                const fs::path base = fs::path(inv.out_dir) / cfg.command;
                std::ofstream(base.string() + ".toml") << cfg.toml();
                std::ofstream(base.string() + ".json") << report_json(cfg, o).dump(2) << '\n';
                if (!o.rows.empty()) {
                    std::ofstream csv(base.string() + ".csv");
                    write_csv(csv, cfg, o.rows, utc_timestamp());
                }
            }
            out << o.summary << "config hash " << cfg.hash << '\n';
            if (o.status == kValidationFailure) err << "validation failed\n";
            return o.status;
        },
        err);
}

}  // namespace fkpide::cli

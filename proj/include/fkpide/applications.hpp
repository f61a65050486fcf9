#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fkpide/conditions.hpp"
#include "fkpide/evolution.hpp"
#include "fkpide/montecarlo.hpp"
#include "fkpide/parallel.hpp"

namespace fkpide {

inline Json rate_path_json(const RatePath &r) { return Json{{"breaks", r.breaks}, {"levels", r.levels}}; }

/// Option on S = e^x killed at rate lambda while S <= B. The API uses the
/// killing sign throughout: a positive lambda lowers the price.
struct ContractSpec {
    double S0 = 100, K = 100, B = 100, lambda = 0, T = 1;
    RatePath rate = RatePath::constant(0.0);
    std::string payout = "call";          // "call" or "custom"
    std::function<double(double)> custom;  // G(S) when payout == "custom"

    void validate() const {
        require(S0 > 0 && K > 0 && B > 0 && T > 0, "contract: S0, K, B and T must be positive");
        require(std::isfinite(lambda) && lambda >= 0, "contract: lambda must be finite and nonnegative");
        rate.validate();
        require(payout == "call" || (payout == "custom" && custom), "contract: payout must be call or custom");
    }
    double payoff(double S) const { return payout == "call" ? std::max(S - K, 0.0) : custom(S); }
    std::optional<double> constant_rate() const {
        if (rate.breaks.empty()) return rate.levels.front();
        return std::nullopt;
    }
    Json to_json() const {
        return Json{{"S0", S0},         {"K", K}, {"B", B}, {"lambda", lambda}, {"T", T}, {"rate", rate_path_json(rate)},
                    {"payout", payout}};
    }
};

/// Sign vectors p^j of the 2^d orthants O^j = {x : p_i (x_i - c_i) > 0} (with
/// <= 0 for p_i = -1) and the matching weights eta^j = -eps d^{-1/2} p^j.
struct DomainSplit {
    Vec center;
    std::vector<Vec> signs, weights;

    static DomainSplit orthants(const Vec &center, double eps) {
        require(eps > 0, "orthant split: epsilon must be positive");
        const auto d = center.size();
        require(d >= 1 && d < 20, "orthant split: unsupported dimension");
        DomainSplit s;
        s.center = center;
        for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
            Vec p(d);
            for (Eigen::Index i = 0; i < d; ++i) p(i) = (mask >> i) & 1u ? -1.0 : 1.0;
            s.signs.push_back(p);
            s.weights.push_back(-eps / std::sqrt(static_cast<double>(d)) * p);
        }
        return s;
    }
    bool contains(std::size_t j, const Vec &x) const {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double y = x(i) - center(i);
            if (signs[j](i) > 0 ? !(y > 0) : !(y <= 0)) return false;
        }
        return true;
    }
    /// (lo, hi) in coordinate 0 for d = 1.
    PayoffModifier modifier(std::size_t j) const {
        require(center.size() == 1, "orthant split: the solver is one-dimensional");
        return indicator_transform(center(0), weights[j](0), signs[j](0) > 0);
    }
};

/// r(t, x) = time(t) + state(x), bounded and piecewise constant.
struct ShortRate {
    RatePath time = RatePath::constant(0.0);
    KillingRateSpec state;

    static ShortRate constant(double r) { return {RatePath::constant(r), {}}; }
    double operator()(double t, double x) const { return time(t) + state(x); }
    Json to_json() const {
        Json st = Json::array();
        for (const auto &s : state.steps) st.push_back(Json{{"lo", s.lo}, {"hi", s.hi}, {"level", s.level}});
        return Json{{"time", rate_path_json(time)}, {"state", st}};
    }
};

struct ApplicationOptions {
    double eta = -1.5;     // weight for call payouts, below -1
    double epsilon = 0.1;  // radius of the orthant weights
    bool check_conditions = true;
    GrowthOptions growth;
    EvolutionOptions evolution;
    FourierOptions fourier;
    // declared solver tolerance per probe: absolute + relative |value|
    double abs_tolerance = 1e-4, rel_tolerance = 1e-3;

    double tolerance(double v) const { return abs_tolerance + rel_tolerance * std::abs(v); }
};

struct McSettings {
    std::size_t paths = 100000;
    int steps = 500;
    McScheme scheme;
    std::uint64_t seed = 1;
};

namespace app {

inline ConditionReport check_model(const LevyModel &model, double eta, const ApplicationOptions &opt,
                                   const std::string &what) {
    ConditionReport rep = estimate_growth(model, eta, opt.growth);
    if (opt.check_conditions && !rep.passes()) {
        std::string msg = what + ": conditions fail at eta = " + std::to_string(eta);
        for (const auto &[k, f] : rep.flags)
            if (f.verdict != Verdict::Pass) msg += "; " + k + " " + to_string(f.verdict) + " (" + f.diagnostic + ")";
        throw ConditionError(msg);
    }
    return rep;
}

inline void check_martingale_rate(const LevyModel &model, const ContractSpec &c) {
    const Json j = model.to_json();
    if (!j.is_object() || j.value("drift_mode", "") != "martingale") return;
    const auto r = c.constant_rate();
    if (r && std::abs(j.at("rate").get<double>() - *r) > 1e-12)
        throw DomainError("martingale drift is set for rate " + std::to_string(j.at("rate").get<double>()) +
                          " but the contract discounts at " + std::to_string(*r));
}

/// Complement of a finite union of open intervals as killing steps.
inline KillingRateSpec complement_killing(IntervalSet D, double lambda) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (const auto &iv : D) require(iv.first < iv.second, "barrier set: need lo < hi");
    std::sort(D.begin(), D.end());
    KillingRateSpec k;
    double lo = -inf;
    for (const auto &[a, b] : D) {
        require(a >= lo, "barrier set: intervals overlap");
        if (a > lo) k.add(lo, a, lambda);
        lo = b;
    }
    if (lo < inf) k.add(lo, inf, lambda);
    return k;
}

inline KillingRateSpec set_killing(const IntervalSet &D, double gamma) {
    KillingRateSpec k;
    for (const auto &[a, b] : D) {
        require(a < b, "occupation set: need lo < hi");
        k.add(a, b, gamma);
    }
    return k;
}

}  // namespace app

struct PriceCurve {
    std::vector<double> S0, value, tolerance;
    SolutionSurface surface;
    double eta = 0;
    Json conditions;

    double at(double S) const { return surface.final_value(std::log(S)); }
    Json to_json() const {
        return Json{{"S0", S0}, {"value", value}, {"tolerance", tolerance}, {"eta", eta}, {"conditions", conditions}};
    }
};

namespace app {

inline PriceCurve price_with_killing(const LevyModel &model, const ContractSpec &c, const KillingRateSpec &kappa,
                                     const TruncatedDomain &grid, const TimeMesh &mesh, std::vector<double> probes,
                                     const ApplicationOptions &opt, const ConditionReport &rep) {
    require(std::abs(mesh.T - c.T) <= 1e-12 * c.T, "time mesh horizon differs from the contract maturity");
    PideProblem p;
    p.model = model;
    p.domain = grid;
    p.rate_path = c.rate;
    p.killing = kappa;
    p.fourier = opt.fourier;
    if (c.payout == "call") {
        p.modifier = call_payoff_transform(1.0, c.K, opt.eta);
    } else {
        p.initial = [&c](double x) { return c.payoff(std::exp(x)); };
        p.initial_breaks = {std::log(c.K)};
    }
    PriceCurve out;
    out.surface = solve_pide(p, mesh, opt.evolution);
    out.eta = opt.eta;
    out.conditions = rep.to_json();
    if (probes.empty()) probes = {c.S0};
    for (double S : probes) {
        require(S > 0, "probe S0 must be positive");
        out.S0.push_back(S);
        out.value.push_back(out.at(S));
        out.tolerance.push_back(opt.tolerance(out.value.back()));
    }
    return out;
}

}  // namespace app

/// Price of the option killed at rate lambda below B, over the probe S0
/// values (the contract S0 when empty). The grid is realigned so that log K
/// and log B are nodes.
inline PriceCurve price_employee_option(const LevyModel &model, const ContractSpec &c, const TruncatedDomain &grid,
                                        const TimeMesh &mesh, const std::vector<double> &probes = {},
                                        const ApplicationOptions &opt = {}) {
    c.validate();
    app::check_martingale_rate(model, c);
    const auto rep = app::check_model(model, opt.eta, opt, "employee option");
    const auto kappa = c.lambda > 0 ? KillingRateSpec::threshold(c.lambda, std::log(c.B)) : KillingRateSpec::none();
    const double xb = std::log(c.B);
    const bool inside = xb > grid.R1 && xb < grid.R2;
    const auto dom = inside ? align_domain(grid, std::log(c.K), xb) : align_domain(grid, std::log(c.K));
    return app::price_with_killing(model, c, kappa, dom, mesh, probes, opt, rep);
}

/// Sum over orthants of solutions with initial data 1_{O^j} at weight eta^j.
struct SplitSolution {
    DomainSplit split;
    std::vector<SolutionSurface> parts;
    std::vector<Json> conditions;

    double value(double x) const {
        double s = 0.0;
        for (const auto &p : parts) s += p.final_value(x);
        return s;
    }
    double value(double t, double x) const {
        double s = 0.0;
        for (const auto &p : parts) s += p.evaluate(t, x);
        return s;
    }
    const TruncatedDomain &domain() const { return parts.front().domain; }
    Json to_json() const {
        Json w = Json::array();
        for (const auto &v : split.weights) w.push_back(v(0));
        return Json{{"center", split.center(0)}, {"weights", w}, {"conditions", conditions}};
    }
};

namespace app {

inline SplitSolution solve_split(const LevyModel &model, const TruncatedDomain &grid, const TimeMesh &mesh, double center,
                                 const RatePath &rate, const KillingRateSpec &kappa, const ApplicationOptions &opt,
                                 const std::string &what) {
    require(model.dim() == 1, what + ": the solver is one-dimensional");
    SplitSolution out;
    out.split = DomainSplit::orthants(vec1(center), opt.epsilon);
    for (const auto &w : out.split.weights) out.conditions.push_back(check_model(model, w(0), opt, what).to_json());
    const auto dom = align_domain(grid, center);
    out.parts.resize(out.split.signs.size());
    parallel_for(out.parts.size(), [&](std::size_t j) {
        PideProblem p;
        p.model = model;
        p.domain = dom;
        p.modifier = out.split.modifier(j);
        p.rate_path = rate;
        p.killing = kappa;
        p.fourier = opt.fourier;
        out.parts[j] = solve_pide(p, mesh, opt.evolution);
    });
    return out;
}

}  // namespace app

/// P(0, T) as a function of the state x, from the split at x = 0.
inline SplitSolution price_zero_coupon_bond(const LevyModel &model, const ShortRate &r, double T,
                                            const TruncatedDomain &grid, const TimeMesh &mesh,
                                            const ApplicationOptions &opt = {}) {
    require(T > 0 && std::abs(mesh.T - T) <= 1e-12 * T, "bond: time mesh horizon differs from the maturity");
    r.time.validate();
    r.state.validate();
    return app::solve_split(model, grid, mesh, 0.0, r.time, r.state, opt, "zero-coupon bond");
}

/// x -> E_x exp(-gamma int_0^T 1_D(L_s) ds), split at `center`.
inline SplitSolution occupation_laplace(const LevyModel &model, const IntervalSet &D, double gamma, double T,
                                        const TruncatedDomain &grid, const TimeMesh &mesh,
                                        const ApplicationOptions &opt = {}, double center = 0.0) {
    require(std::isfinite(gamma) && gamma >= 0, "occupation: gamma must be finite and nonnegative");
    require(T > 0 && std::abs(mesh.T - T) <= 1e-12 * T, "occupation: time mesh horizon differs from T");
    return app::solve_split(model, grid, mesh, center, RatePath::constant(0.0), app::set_killing(D, gamma), opt,
                            "occupation time");
}

struct BarrierSweep {
    std::vector<double> lambdas;
    PriceCurve plain;
    std::vector<PriceCurve> curves;
    bool monotone = true;
    // extrapolated lambda -> infinity value at the contract S0; a proxy only
    std::optional<double> limit_proxy, proxy_order;

    Json to_json() const {
        Json c = Json::array();
        for (const auto &p : curves) c.push_back(p.to_json());
        Json j{{"lambdas", lambdas}, {"plain", plain.to_json()}, {"curves", c}, {"monotone", monotone}};
        j["limit_proxy"] = limit_proxy ? Json(*limit_proxy) : Json(nullptr);
        j["proxy_order"] = proxy_order ? Json(*proxy_order) : Json(nullptr);
        return j;
    }
};

/// Geometric-ratio extrapolation of v(lambda) ~ v_inf + C lambda^{-p} from the
/// last three values, when the lambdas are geometric and the differences
/// shrink with one sign.
inline std::pair<std::optional<double>, std::optional<double>> penalization_limit(const std::vector<double> &lambdas,
                                                                                 const std::vector<double> &v) {
    const auto n = lambdas.size();
    if (n < 3) return {};
    const double l1 = lambdas[n - 3], l2 = lambdas[n - 2], l3 = lambdas[n - 1];
    const double q = l2 / l1;
    if (std::abs(l3 / l2 - q) > 1e-9 * q) return {};
    const double d1 = v[n - 3] - v[n - 2], d2 = v[n - 2] - v[n - 1];
    if (!(d1 * d2 > 0 && std::abs(d2) < std::abs(d1))) return {};
    const double p = std::log(d1 / d2) / std::log(q);
    return {v[n - 1] - d2 / (std::pow(q, p) - 1.0), p};
}

/// Prices with the penalty lambda 1_{complement of D} (D in log price) for
/// each lambda, plus the unpenalized price.
inline BarrierSweep barrier_penalization_sweep(const LevyModel &model, const ContractSpec &c, const IntervalSet &D,
                                               const std::vector<double> &lambdas, const TruncatedDomain &grid,
                                               const TimeMesh &mesh, const std::vector<double> &probes = {},
                                               const ApplicationOptions &opt = {}) {
    c.validate();
    require(!D.empty(), "barrier: empty set D");
    require(!lambdas.empty(), "barrier: empty lambda list");
    for (std::size_t i = 0; i < lambdas.size(); ++i)
        require(lambdas[i] > 0 && (i == 0 || lambdas[i] > lambdas[i - 1]), "barrier: lambdas must be positive and increasing");
    app::check_martingale_rate(model, c);
    const auto rep = app::check_model(model, opt.eta, opt, "barrier");
    double anchor = std::log(c.K);
    for (const auto &[a, b] : D) {
        if (std::isfinite(a)) anchor = a;
        else if (std::isfinite(b)) anchor = b;
        if (std::isfinite(a) || std::isfinite(b)) break;
    }
    const auto dom = align_domain(grid, std::log(c.K), anchor);

    BarrierSweep out;
    out.lambdas = lambdas;
    out.curves.resize(lambdas.size() + 1);
    parallel_for(out.curves.size(), [&](std::size_t i) {
        const auto kappa = i == 0 ? KillingRateSpec::none() : app::complement_killing(D, lambdas[i - 1]);
        out.curves[i] = app::price_with_killing(model, c, kappa, dom, mesh, probes, opt, rep);
    });
    out.plain = std::move(out.curves.front());
    out.curves.erase(out.curves.begin());

    const PriceCurve *prev = &out.plain;
    for (const auto &cv : out.curves) {
        for (std::size_t k = 0; k < cv.value.size(); ++k)
            if (cv.value[k] > prev->value[k] + cv.tolerance[k]) out.monotone = false;
        prev = &cv;
    }
    std::vector<double> at_s0;
    for (const auto &cv : out.curves) at_s0.push_back(cv.at(c.S0));
    std::tie(out.limit_proxy, out.proxy_order) = penalization_limit(lambdas, at_s0);
    return out;
}

/// Free relativistic particle with potential V: the NIG model with
/// alpha = m c^2, beta = 0, delta = 1 / hbar, mu = 0, Delta = c^2.
struct SchroedingerConfig {
    double mass = 1, c = 1, hbar = 1;
    KillingRateSpec potential;  // V(x), bounded and piecewise constant

    void validate() const {
        require(mass > 0 && c > 0 && hbar > 0, "schroedinger: m, c and hbar must be positive");
        potential.validate();
    }
    LevyModel model() const { return make_nig(mass * c * c, 0.0, 1.0 / hbar, 0.0, c * c); }
    /// sqrt(m^2 c^4 + c^2 xi^2) - m c^2
    double kinetic_energy(double xi) const {
        const double mc2 = mass * c * c;
        return c * c * xi * xi / (std::sqrt(mc2 * mc2 + c * c * xi * xi) + mc2);
    }
    Json to_json() const {
        Json v = Json::array();
        for (const auto &s : potential.steps) v.push_back(Json{{"lo", s.lo}, {"hi", s.hi}, {"level", s.level}});
        return Json{{"mass", mass}, {"c", c}, {"hbar", hbar}, {"potential", v}};
    }
};

/// u' + (1/hbar)(H0 u + V u) = 0 from u(0) = g, with g in L^2_eta, |eta| <= m c.
inline SolutionSurface schroedinger_evolve(const SchroedingerConfig &cfg, const std::function<double(double)> &g,
                                           double T, const TruncatedDomain &grid, const TimeMesh &mesh, double eta = 0.0,
                                           const ApplicationOptions &opt = {}) {
    cfg.validate();
    require(T > 0 && std::abs(mesh.T - T) <= 1e-12 * T, "schroedinger: time mesh horizon differs from T");
    if (!(std::abs(eta) <= cfg.mass * cfg.c))
        throw DomainError("schroedinger: weight violation, need |eta| <= m c = " + std::to_string(cfg.mass * cfg.c));
    const auto model = cfg.model();
    // the closed strip edge |eta| = m c is admissible but outside the sampled open strip
    if (std::abs(eta) < cfg.mass * cfg.c) app::check_model(model, eta, opt, "schroedinger");
    KillingRateSpec kappa;
    for (const auto &s : cfg.potential.steps) kappa.add(s.lo, s.hi, s.level / cfg.hbar);
    PideProblem p;
    p.model = model;
    p.domain = grid;
    p.killing = kappa;
    p.initial = g;
    p.fourier = opt.fourier;
    return solve_pide(p, mesh, opt.evolution);
}

// Monte-Carlo counterparts, each a Feynman-Kac estimate on simulated paths.

inline FkEstimate mc_employee_option(const LevyModel &model, const ContractSpec &c, double S0, const McSettings &s) {
    c.validate();
    const auto b = mc::simulate(model, std::log(S0), c.T, s.steps, s.paths, s.seed, s.scheme);
    FkFunctional fk;
    fk.g = [&c](double x) { return c.payoff(std::exp(x)); };
    if (c.lambda > 0) {
        const double xb = std::log(c.B), lam = c.lambda;
        fk.kappa = [xb, lam](double, double x) { return x < xb ? lam : 0.0; };
    }
    fk.rate = [&c](double t) { return c.rate(t); };
    return estimate_feynman_kac(b, fk);
}

inline FkEstimate mc_zero_coupon_bond(const LevyModel &model, const ShortRate &r, double T, double x,
                                      const McSettings &s) {
    const auto b = mc::simulate(model, x, T, s.steps, s.paths, s.seed, s.scheme);
    FkFunctional fk;
    fk.g = [](double) { return 1.0; };
    if (!r.state.zero()) fk.kappa = [&r](double, double y) { return r.state(y); };
    fk.rate = [&r](double t) { return r.time(t); };
    return estimate_feynman_kac(b, fk);
}

inline FkEstimate mc_occupation_laplace(const LevyModel &model, const IntervalSet &D, double gamma, double T, double x,
                                        const McSettings &s) {
    return estimate_occupation_laplace(mc::simulate(model, x, T, s.steps, s.paths, s.seed, s.scheme), D, gamma);
}

/// Hard killing when a monitoring date falls outside D (log price).
inline FkEstimate mc_barrier(const LevyModel &model, const ContractSpec &c, const IntervalSet &D, double S0,
                             const McSettings &s) {
    c.validate();
    const auto b = mc::simulate(model, std::log(S0), c.T, s.steps, s.paths, s.seed, s.scheme);
    const double disc = std::exp(-c.rate.integral(0.0, c.T));
    std::vector<double> v(b.n_paths);
    b.for_each_path([&](std::size_t i, const Vec &x) {
        bool alive = true;
        for (Eigen::Index k = 0; k < x.size() && alive; ++k) alive = contains(D, x(k));
        double killing = 0.0;
        for (int k = 0; k < b.steps(); ++k) killing += b.symbol_killing(k);
        v[i] = alive ? disc * std::exp(-killing) * c.payoff(std::exp(x(x.size() - 1))) : 0.0;
    });
    return mc::summarize(v, b);
}

inline FkEstimate mc_schroedinger(const SchroedingerConfig &cfg, const std::function<double(double)> &g, double T,
                                  double x, const McSettings &s) {
    cfg.validate();
    const auto b = simulate_nig(cfg.model(), x, T, s.steps, s.paths, s.seed);
    FkFunctional fk;
    fk.g = g;
    if (!cfg.potential.zero()) fk.kappa = [&cfg](double, double y) { return cfg.potential(y) / cfg.hbar; };
    return estimate_feynman_kac(b, fk);
}

struct TolerancePolicy {
    double k_stderr = 3.0;
    double relative = 0.0;  // discretization allowance relative to |pide|
    double absolute = 0.0;
};

struct CrossValidation {
    bool pass = false;
    double pide = 0, mc = 0, stderr_ = 0, allowance = 0, deviation = 0;
    Json provenance;

    Json to_json() const {
        return Json{{"schema_version", 1}, {"verdict", pass ? "pass" : "fail"}, {"pide", pide}, {"mc", mc},
                    {"stderr", stderr_},  {"allowance", allowance},           {"deviation", deviation},
                    {"provenance", provenance}};
    }
};

/// Pass iff |pide - mc| <= k stderr + allowance. Configs must agree on every
/// shared section other than numerics and mc settings.
inline CrossValidation cross_validate(double pide, const Json &pide_config, const FkEstimate &mc, const Json &mc_config,
                                      const TolerancePolicy &policy = {}) {
    if (pide_config.is_object() && mc_config.is_object())
        for (auto it = pide_config.begin(); it != pide_config.end(); ++it) {
            if (it.key() == "numerics" || it.key() == "mc" || it.key() == "method") continue;
            if (mc_config.contains(it.key()) && mc_config.at(it.key()) != it.value())
                throw ConfigError("cross_validate: configurations differ in '" + it.key() + "'");
        }
    CrossValidation v;
    v.pide = pide;
    v.mc = mc.mean;
    v.stderr_ = mc.stderr_;
    v.allowance = policy.absolute + policy.relative * std::abs(pide);
    v.deviation = std::abs(pide - mc.mean);
    v.pass = std::isfinite(v.deviation) && v.deviation <= policy.k_stderr * mc.stderr_ + v.allowance;
    v.provenance = Json{{"pide_config", pide_config}, {"mc_config", mc_config}, {"mc", mc.to_json()},
                        {"k_stderr", policy.k_stderr}, {"relative", policy.relative}, {"absolute", policy.absolute}};
    return v;
}

}  // namespace fkpide

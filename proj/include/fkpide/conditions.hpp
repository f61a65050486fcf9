#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fkpide/symbols/model.hpp"

namespace fkpide {

/// Grid checks never prove anything, so every verdict can be inconclusive.
enum class Verdict { Pass, Fail, Inconclusive };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

struct ConditionFlag {
    Verdict verdict = Verdict::Inconclusive;
    std::string diagnostic;
    Json to_json() const { return Json{{"verdict", to_string(verdict)}, {"diagnostic", diagnostic}}; }
};

/// A sampled point (t, eta', xi) at which a reported constant is attained.
struct Witness {
    double t = 0;
    Vec eta;
    Vec xi;
    double value = 0;
    Json to_json() const {
        return Json{{"t", t}, {"eta", detail::vec_to_json(eta)}, {"xi", detail::vec_to_json(xi)}, {"value", value}};
    }
};

namespace cond {

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Corners of R_eta = sgn(eta_1)[0, |eta_1|] x ... (2^d points, origin included).
inline std::vector<Vec> corners(const Vec &eta) {
    const auto d = eta.size();
    std::vector<Vec> out;
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
        Vec c = Vec::Zero(d);
        for (Eigen::Index j = 0; j < d; ++j)
            if (mask & (1u << j)) c(j) = eta(j);
        out.push_back(c);
    }
    return out;
}

/// Corners plus n interior points on the diagonal s * eta, s in (0, 1).
inline std::vector<Vec> eta_samples(const Vec &eta, int n_interior) {
    auto out = corners(eta);
    if (eta.norm() > 0)
        for (int k = 1; k <= n_interior; ++k) out.push_back(eta * (static_cast<double>(k) / (n_interior + 1)));
    return out;
}

/// Uniform samples in [0, T] plus every breakpoint and a point just before it.
inline std::vector<double> time_samples(const LevyModel &m, double T, int n) {
    std::vector<double> t;
    for (int k = 0; k < std::max(1, n); ++k) t.push_back(n <= 1 ? 0.0 : T * k / (n - 1));
    for (double b : m.breakpoints())
        if (b > 0 && b <= T) {
            t.push_back(b);
            t.push_back(b - 1e-9 * std::max(1.0, b));
        }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

/// Frequency directions: coordinate axes, both signs, plus the diagonal.
inline std::vector<Vec> directions(int d) {
    std::vector<Vec> out;
    for (int j = 0; j < d; ++j) {
        Vec e = Vec::Zero(d);
        e(j) = 1;
        out.push_back(e);
        out.push_back(-e);
    }
    if (d > 1) out.push_back(Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))));
    return out;
}

/// Radii 0 and log-spaced in [1e-2, xi_max].
inline std::vector<double> radii(double xi_max, int n) {
    std::vector<double> r{0.0};
    const double lo = std::log(1e-2), hi = std::log(xi_max);
    for (int k = 0; k < n; ++k) r.push_back(std::exp(lo + (hi - lo) * k / std::max(1, n - 1)));
    return r;
}

inline Complex symbol_at(const LevyModel &m, double t, const Vec &xi, const Vec &eta) {
    CVec z = xi.cast<Complex>() - kI * eta.cast<Complex>();
    return m.node().eval(t, z);
}

/// Least-squares slope of log y against log x, with its standard error.
inline std::pair<double, double> loglog_slope(const std::vector<double> &x, const std::vector<double> &y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    }
    const double slope = sxy / sxx;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::log(y[i]) - my - slope * (std::log(x[i]) - mx);
        ss += r * r;
    }
    const double se = n > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
    return {slope, se};
}

/// (characteristics, jump scale) of every triplet in the symbol tree.
inline void collect_triplets(const LevyModel &m, double scale, std::vector<std::pair<LevyCharacteristics, double>> &out) {
    const SymbolNode &n = m.node();
    if (auto *t = dynamic_cast<const detail::TripletNode *>(&n)) {
        out.emplace_back(t->characteristics(), scale);
    } else if (auto *s = dynamic_cast<const detail::SumNode *>(&n)) {
        collect_triplets(s->first(), scale, out);
        collect_triplets(s->second(), scale, out);
    } else if (auto *p = dynamic_cast<const detail::PiecewiseNode *>(&n)) {
        for (const auto &seg : p->segments()) collect_triplets(seg, scale, out);
    } else if (auto *ig = dynamic_cast<const detail::IntegrandNode *>(&n)) {
        for (const auto &v : ig->path().values) collect_triplets(ig->base(), scale * v(0, 0), out);
    }
}

}  // namespace cond

struct MomentCheck {
    Verdict verdict = Verdict::Pass;
    double margin = std::numeric_limits<double>::infinity();  // smallest decay-rate slack over the corners
    std::vector<Vec> corners;
    std::vector<double> tail_integrals;  // int_{|x|>1} e^{-<eta', x>} F(dx) per corner (d = 1)
    std::optional<Vec> divergent_corner;
    std::string diagnostic;

    Json to_json() const {
        Json c = Json::array(), ti = Json::array();
        for (const auto &v : corners) c.push_back(detail::vec_to_json(v));
        for (double v : tail_integrals) ti.push_back(cond::finite_or_null(v));
        Json j{{"verdict", to_string(verdict)},
               {"margin", cond::finite_or_null(margin)},
               {"corners", c},
               {"tail_integrals", ti},
               {"diagnostic", diagnostic}};
        if (divergent_corner) j["divergent_corner"] = detail::vec_to_json(*divergent_corner);
        return j;
    }
};

/// (A1) at the corners of R_eta; convexity of the moment set makes the
/// corners sufficient.
inline MomentCheck check_exponential_moment(const LevyModel &model, const Vec &eta) {
    require(eta.size() == model.dim(), "check_exponential_moment: weight dimension mismatch");
    MomentCheck out;
    out.corners = cond::corners(eta);
    std::vector<std::pair<LevyCharacteristics, double>> leaves;
    cond::collect_triplets(model, 1.0, leaves);
    for (const Vec &c : out.corners) {
        // E e^{-<eta', L>} < inf  <=>  the symbol extends to Im z = -eta'
        double integral = 0.0;
        bool ok = model.in_strip(-c);
        for (const auto &[ch, scale] : leaves) {
            if (!measure::has_jumps(ch.measure)) continue;
            const Vec w = -c * scale;
            if (ch.dim() == 1) {
                const double v = measure::tail_moment(ch.measure, -w(0));
                integral += v;
                ok = ok && std::isfinite(v);
                for (const auto &iv : measure::strip(ch.measure))
                    out.margin = std::min(out.margin, std::min(iv.hi - w(0), w(0) - iv.lo));
            } else {
                ok = ok && measure::in_strip(ch.measure, w);
                // slack along the ray through w by bisection
                double lo = 0, hi = 1e6;
                const Vec dir = w.norm() > 0 ? Vec(w / w.norm()) : Vec(Vec::Unit(w.size(), 0));
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (measure::in_strip(ch.measure, dir * mid) ? lo : hi) = mid;
                }
                out.margin = std::min(out.margin, lo - w.norm());
            }
        }
        out.tail_integrals.push_back(ok ? integral : std::numeric_limits<double>::infinity());
        if (!ok && !out.divergent_corner) {
            out.verdict = Verdict::Fail;
            out.divergent_corner = c;
            std::ostringstream os;
            os << "tail integral diverges at eta' = " << c.transpose();
            out.diagnostic = os.str();
        }
    }
    if (out.verdict == Verdict::Pass) out.diagnostic = "finite at all corners of R_eta";
    return out;
}

inline MomentCheck check_exponential_moment(const LevyModel &model, double eta) {
    return check_exponential_moment(model, vec1(eta));
}

struct CadlagCheck {
    Verdict verdict = Verdict::Pass;
    std::vector<double> jumps;  // breakpoints where A_t(z) jumps for some sampled z
    std::vector<double> violations;  // breakpoints where A_t(z) is not right-continuous
    Json to_json() const { return Json{{"verdict", to_string(verdict)}, {"jumps", jumps}, {"violations", violations}}; }
};

/// (A4): right-continuity with left limits of t -> A_t(z) at the declared
/// breakpoints; homogeneous models pass vacuously.
inline CadlagCheck check_cadlag(const LevyModel &model, const std::vector<CVec> &z_samples) {
    CadlagCheck out;
    for (double b : model.breakpoints()) {
        const double d = 1e-9 * std::max(1.0, std::abs(b));
        bool jumped = false, violated = false;
        for (const auto &z : z_samples) {
            const Complex at = model.node().eval(b, z), right = model.node().eval(b + d, z),
                          left = model.node().eval(b - d, z);
            const double tol = 1e-12 * (1 + std::abs(at));
            if (std::abs(at - right) > tol) violated = true;
            if (std::abs(left - right) > tol) jumped = true;
            if (!std::isfinite(left.real()) || !std::isfinite(left.imag())) violated = true;
        }
        if (jumped) out.jumps.push_back(b);
        if (violated) out.violations.push_back(b);
    }
    if (!out.violations.empty()) out.verdict = Verdict::Fail;
    return out;
}

struct GrowthOptions {
    double T = 1.0;
    double xi_max = 1e4;
    int n_xi = 120;   // radii per direction
    int n_eta = 3;    // interior samples of R_eta
    int n_t = 5;
    double fit_decades = 1.0;  // the fit window is [xi_max 10^-fit_decades, xi_max]
};

struct ConditionReport {
    Vec eta;
    double alpha_hat = 0;
    double alpha_uncertainty = 0;
    double continuity_constant = 0;
    Witness continuity_witness;
    double G = 0, G_prime = 0, beta = 0;
    Witness garding_witness, garding_prime_witness;
    double bg_index = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, ConditionFlag> flags;
    MomentCheck moment;
    CadlagCheck cadlag;
    std::vector<double> xi_grid;
    std::vector<Vec> eta_samples;
    std::vector<double> t_samples;

    bool passes() const {
        return std::all_of(flags.begin(), flags.end(), [](const auto &f) { return f.second.verdict == Verdict::Pass; });
    }
    Verdict verdict(const std::string &key) const {
        auto it = flags.find(key);
        return it == flags.end() ? Verdict::Inconclusive : it->second.verdict;
    }

    Json to_json() const {
        Json fl = Json::object(), es = Json::array();
        for (const auto &[k, v] : flags) fl[k] = v.to_json();
        for (const auto &e : eta_samples) es.push_back(detail::vec_to_json(e));
        return Json{{"schema_version", 1},
                    {"eta", detail::vec_to_json(eta)},
                    {"sampled_radius", eta.norm()},
                    {"alpha_hat", alpha_hat},
                    {"alpha_uncertainty", alpha_uncertainty},
                    {"continuity_constant", cond::finite_or_null(continuity_constant)},
                    {"continuity_witness", continuity_witness.to_json()},
                    {"garding", {{"G", G},
                                 {"G_prime", G_prime},
                                 {"beta", beta},
                                 {"G_witness", garding_witness.to_json()},
                                 {"G_prime_witness", garding_prime_witness.to_json()}}},
                    {"bg_index", cond::finite_or_null(bg_index)},
                    {"flags", fl},
                    {"moment", moment.to_json()},
                    {"cadlag", cadlag.to_json()},
                    {"xi_grid", xi_grid},
                    {"eta_samples", es},
                    {"t_samples", t_samples}};
    }
};

namespace cond {

/// Log-log slope of the real part of the jump part at high frequency (d = 1).
inline double blumenthal_getoor(const LevyModel &m, const std::vector<double> &ts, double xi_max) {
    if (m.dim() != 1 || !m.has_jumps()) return m.dim() == 1 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    double best = 0.0;
    for (double t : ts) {
        std::vector<double> x, y;
        for (int k = 0; k <= 20; ++k) {
            const double xi = xi_max * std::pow(10.0, -1.0 + k / 20.0);
            const double v = m.node().jump1(t, Complex(xi, 0)).real() + m.node().jump1(t, Complex(-xi, 0)).real();
            if (v > 0) {
                x.push_back(xi);
                y.push_back(v);
            }
        }
        if (x.size() < 3) continue;
        best = std::max(best, loglog_slope(x, y).first);
    }
    return std::clamp(best, 0.0, 2.0);
}

}  // namespace cond

/// (A1)-(A4) on a sample grid: alpha_hat is the high-frequency log-log slope
/// of Re A_t(xi - i eta'), C the continuity constant for that index, and
/// (G, G') the lower envelope with beta = max(alpha_hat - 1, alpha_hat / 2).
inline ConditionReport estimate_growth(const LevyModel &model, const Vec &eta, const GrowthOptions &opt = {}) {
    require(eta.size() == model.dim(), "estimate_growth: weight dimension mismatch");
    require(opt.xi_max > 1 && opt.n_xi >= 10, "estimate_growth: need xi_max > 1 and at least 10 radii");
    ConditionReport rep;
    rep.eta = eta;
    rep.moment = check_exponential_moment(model, eta);
    rep.flags["A1"] = {rep.moment.verdict, rep.moment.diagnostic};
    rep.xi_grid = cond::radii(opt.xi_max, opt.n_xi);
    rep.eta_samples = cond::eta_samples(eta, opt.n_eta);
    rep.t_samples = cond::time_samples(model, opt.T, opt.n_t);
    const int d = model.dim();
    const auto dirs = cond::directions(d);

    {
        std::vector<CVec> zs;
        for (const auto &e : rep.eta_samples)
            for (double r : {0.0, 1.0, 10.0}) zs.push_back((dirs[0] * r).cast<Complex>() - kI * e.cast<Complex>());
        rep.cadlag = check_cadlag(model, zs);
        std::string diag = rep.cadlag.jumps.empty() ? "no jumps in time" : "jumps at the listed breakpoints";
        if (!rep.cadlag.violations.empty()) diag = "not right-continuous at a breakpoint";
        rep.flags["A4"] = {rep.cadlag.verdict, diag};
    }
    rep.bg_index = cond::blumenthal_getoor(model, rep.t_samples, opt.xi_max);

    if (rep.moment.verdict != Verdict::Pass) {
        rep.flags["A2"] = {Verdict::Inconclusive, "not evaluated: exponential moment condition fails"};
        rep.flags["A3"] = {Verdict::Inconclusive, "not evaluated: exponential moment condition fails"};
        return rep;
    }

    struct Sample {
        double t;
        Vec eta, xi;
        double radius;
        Complex a;
    };
    std::vector<Sample> samples;
    for (double t : rep.t_samples)
        for (const auto &e : rep.eta_samples)
            for (const auto &dir : dirs)
                for (double r : rep.xi_grid) {
                    const Vec xi = dir * r;
                    samples.push_back({t, e, xi, r, cond::symbol_at(model, t, xi, e)});
                }
    for (const auto &s : samples)
        if (!std::isfinite(s.a.real()) || !std::isfinite(s.a.imag()))
            throw DomainError("estimate_growth: symbol not finite on the sample grid");

    // index: per (t, eta', direction) slope over the fit window, maximum over samples
    const double lo_fit = opt.xi_max * std::pow(10.0, -opt.fit_decades);
    const std::size_t per_line = rep.xi_grid.size();
    double alpha = 0.0, unc = 0.0;
    bool bounded = false, non_monotone = false;
    for (std::size_t start = 0; start < samples.size(); start += per_line) {
        std::vector<double> x, y;
        for (std::size_t i = start; i < start + per_line; ++i)
            if (samples[i].radius >= lo_fit) {
                x.push_back(samples[i].radius);
                y.push_back(samples[i].a.real());
            }
        const std::size_t h = x.size() / 2;
        const double lower_max = *std::max_element(y.begin(), y.begin() + h);
        const double upper_max = *std::max_element(y.begin() + h, y.end());
        // no growth across the window: Re A bounded, no positive index
        if (upper_max <= lower_max + 1e-3 * std::abs(lower_max)) {
            bounded = true;
            continue;
        }
        bool monotone = true;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] <= 0) monotone = false;
            if (i > 0 && y[i] < y[i - 1] - 1e-9 * std::abs(y[i - 1])) monotone = false;
        }
        if (!monotone) {
            non_monotone = true;
            continue;
        }
        const auto [slope, se] = cond::loglog_slope(x, y);
        // drift of the local slope across the window
        const auto lower = cond::loglog_slope({x.begin(), x.begin() + h}, {y.begin(), y.begin() + h});
        const auto upper = cond::loglog_slope({x.begin() + h, x.end()}, {y.begin() + h, y.end()});
        alpha = std::max(alpha, slope);
        unc = std::max(unc, se + std::abs(upper.first - lower.first));
    }
    rep.alpha_hat = std::clamp(alpha, 1e-6, 2.0);
    rep.alpha_uncertainty = unc;
    rep.beta = std::max(rep.alpha_hat - 1.0, rep.alpha_hat / 2.0);

    // continuity constant
    for (const auto &s : samples) {
        const double c = std::abs(s.a) / std::pow(1 + s.radius, rep.alpha_hat);
        if (c > rep.continuity_constant) {
            rep.continuity_constant = c;
            rep.continuity_witness = {s.t, s.eta, s.xi, c};
        }
    }
    rep.flags["A2"] = {Verdict::Pass, "|A| <= C (1 + |xi|)^alpha_hat on the grid"};
    if (alpha <= 0) rep.flags["A2"] = {Verdict::Inconclusive, "no growth on the fit window"};

    // Garding: G is half the smallest high-frequency ratio Re A / (1 + |xi|)^alpha,
    // G' the smallest value making the envelope hold on the whole grid
    if (bounded || alpha <= 0) {
        rep.G = 0;
        rep.flags["A3"] = {Verdict::Fail, "Re A is bounded at high frequency"};
        return rep;
    }
    double ratio_min = std::numeric_limits<double>::infinity(), ratio_max = 0;
    for (const auto &s : samples) {
        if (s.radius < lo_fit) continue;
        const double q = s.a.real() / std::pow(1 + s.radius, rep.alpha_hat);
        ratio_max = std::max(ratio_max, q);
        if (q < ratio_min) {
            ratio_min = q;
            rep.garding_witness = {s.t, s.eta, s.xi, q};
        }
    }
    rep.G = 0.5 * ratio_min;
    for (const auto &s : samples) {
        const double need = (rep.G * std::pow(1 + s.radius, rep.alpha_hat) - s.a.real()) / std::pow(1 + s.radius, rep.beta);
        if (need > rep.G_prime) {
            rep.G_prime = need;
            rep.garding_prime_witness = {s.t, s.eta, s.xi, need};
        }
    }
    rep.garding_witness.value = rep.G;
    if (non_monotone) {
        rep.flags["A3"] = {Verdict::Inconclusive, "Re A not monotone on the fit window"};
    } else if (rep.G > 1e-3 * ratio_max) {
        rep.flags["A3"] = {Verdict::Pass, "G > 0 with beta = max(alpha - 1, alpha / 2)"};
    } else {
        rep.flags["A3"] = {Verdict::Fail, "no positive lower envelope on the grid"};
    }
    return rep;
}

inline ConditionReport estimate_growth(const LevyModel &model, double eta, const GrowthOptions &opt = {}) {
    return estimate_growth(model, vec1(eta), opt);
}

struct HeatKernelBound {
    Verdict verdict = Verdict::Fail;
    double C1 = 0, C2 = 0, alpha = 0;
    Json to_json() const { return Json{{"verdict", to_string(verdict)}, {"C1", C1}, {"C2", C2}, {"alpha", alpha}}; }
};

/// Constants with |exp(-int_0^t A_u(xi - i eta') du)| <= C1 exp(-t C2 |xi|^alpha)
/// on the sample grid (d = 1). C2 is the smallest high-frequency ratio.
inline HeatKernelBound heat_kernel_decay(const LevyModel &model, double eta, double t, const GrowthOptions &opt = {}) {
    require(model.dim() == 1, "heat_kernel_decay is one-dimensional");
    require(t > 0, "heat_kernel_decay: need t > 0");
    GrowthOptions o = opt;
    o.T = t;
    const auto rep = estimate_growth(model, eta, o);
    HeatKernelBound out;
    out.alpha = rep.alpha_hat;
    if (rep.verdict("A3") != Verdict::Pass) return out;
    const double lo_fit = opt.xi_max * std::pow(10.0, -opt.fit_decades);
    std::vector<std::pair<double, Complex>> pts;
    double c2 = std::numeric_limits<double>::infinity();
    for (const auto &e : rep.eta_samples)
        for (double s : {1.0, -1.0})
            for (double r : rep.xi_grid) {
                const Complex I = integrate_exponent(model, 0.0, t, Complex(s * r, -e(0)));
                pts.emplace_back(r, I);
                if (r >= lo_fit) c2 = std::min(c2, I.real() / (t * std::pow(r, out.alpha)));
            }
    if (!(c2 > 0)) return out;
    out.C2 = c2;
    for (const auto &[r, I] : pts) out.C1 = std::max(out.C1, std::exp(-I.real() + t * c2 * std::pow(r, out.alpha)));
    out.verdict = Verdict::Pass;
    return out;
}

struct DensityOptions {
    double ratio_span = 1e-8;  // grid covers [epsilon * ratio_span, epsilon]
    int points = 200;
    std::optional<double> drift;           // b_t, checked against int h dF when alpha < 1
    Truncation truncation = Truncation::Full;
};

struct DensityReport {
    ConditionFlag f3, f4, drift;
    double C1 = 0, C2 = 0, C3 = 0;
    double singularity = 0;  // fitted a in f_sym ~ |x|^{-1-a}
    bool alpha_unconstrained = false;
    bool symmetric = false;
    Json to_json() const {
        return Json{{"F3", f3.to_json()},        {"F4", f4.to_json()}, {"drift", drift.to_json()},
                    {"C1", C1},                  {"C2", C2},           {"C3", C3},
                    {"singularity", singularity}, {"alpha_unconstrained", alpha_unconstrained},
                    {"symmetric", symmetric}};
    }
};

namespace cond {

/// True if r_k (ordered from the smallest x) stays bounded: the maximum over
/// the innermost decade does not dominate the rest.
inline bool bounded_near_zero(const std::vector<double> &r, std::size_t decade) {
    double head = 0, tail = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (k < decade) head = std::max(head, r[k]);
        else tail = std::max(tail, r[k]);
    }
    return std::isfinite(head) && head <= 2.0 * tail + 1e-300;
}

}  // namespace cond

/// (F2)-(F4) for a one-dimensional density on a log grid in (0, eps].
inline DensityReport check_density_conditions(const std::function<double(double)> &f, double alpha, double beta,
                                              double eps, const DensityOptions &opt = {}) {
    require(eps > 0 && alpha > 0 && alpha < 2 && beta >= 0 && beta < alpha,
            "check_density_conditions: need eps > 0 and 0 <= beta < alpha < 2");
    DensityReport rep;
    std::vector<double> xs;
    const double lo = std::log(eps * opt.ratio_span), hi = std::log(eps);
    for (int k = 0; k < opt.points; ++k) xs.push_back(std::exp(lo + (hi - lo) * k / (opt.points - 1)));
    std::vector<double> sym, asym;
    double asym_max = 0, sym_max = 0;
    for (double x : xs) {
        const double a = f(x), b = f(-x);
        if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("check_density_conditions: density not finite near 0");
        sym.push_back(0.5 * (a + b));
        asym.push_back(0.5 * (a - b));
        asym_max = std::max(asym_max, std::abs(0.5 * (a - b)));
        sym_max = std::max(sym_max, 0.5 * (a + b));
    }
    rep.symmetric = asym_max <= 1e-14 * std::max(sym_max, 1e-300);
    const std::size_t decade = static_cast<std::size_t>(opt.points / (-std::log10(opt.ratio_span)));

    // fitted singularity from the innermost decade
    {
        std::vector<double> x, y;
        for (std::size_t k = 0; k < decade; ++k)
            if (sym[k] > 0) {
                x.push_back(xs[k]);
                y.push_back(sym[k]);
            }
        rep.singularity = x.size() >= 3 ? -cond::loglog_slope(x, y).first - 1.0 : -1.0;
    }
    if (rep.singularity <= 0.0) {
        // no power singularity: any alpha works with C1 = 0 and g = f_sym
        rep.alpha_unconstrained = true;
        rep.C1 = 0;
        std::vector<double> r;
        for (std::size_t k = 0; k < xs.size(); ++k) r.push_back(sym[k] * std::pow(xs[k], 1 + beta));
        rep.C2 = *std::max_element(r.begin(), r.end());
        rep.f3 = {Verdict::Pass, "no power singularity at 0; alpha unconstrained"};
    } else {
        // C1 from the innermost decade, g the positive part of the excess
        for (std::size_t k = 0; k < decade; ++k) rep.C1 = std::max(rep.C1, sym[k] * std::pow(xs[k], 1 + alpha));
        std::vector<double> r;
        for (std::size_t k = 0; k < xs.size(); ++k)
            r.push_back(std::max(sym[k] - rep.C1 * std::pow(xs[k], -1 - alpha), 0.0) * std::pow(xs[k], 1 + beta));
        rep.C2 = *std::max_element(r.begin(), r.end());
        if (rep.singularity > alpha + 1e-2) {
            rep.f3 = {Verdict::Fail, "density more singular than |x|^{-1-alpha}"};
        } else if (cond::bounded_near_zero(r, decade)) {
            rep.f3 = {Verdict::Pass, "f_sym <= C1|x|^{-1-alpha} + g with |g| <= C2|x|^{-1-beta}"};
        } else {
            rep.f3 = {Verdict::Fail, "remainder g not O(|x|^{-1-beta})"};
        }
    }

    if (rep.symmetric) {
        rep.f4 = {Verdict::Pass, "antisymmetric part vanishes"};
    } else {
        std::vector<double> r;
        for (std::size_t k = 0; k < xs.size(); ++k) r.push_back(std::abs(asym[k]) * std::pow(xs[k], 1 + beta));
        rep.C3 = *std::max_element(r.begin(), r.end());
        const bool need = std::abs(alpha - 1.0) < 1e-12 || alpha < 1.0;
        if (!need) rep.f4 = {Verdict::Pass, "not required for alpha > 1"};
        else if (cond::bounded_near_zero(r, decade)) rep.f4 = {Verdict::Pass, "|f_asym| <= C3|x|^{-1-beta}"};
        else rep.f4 = {Verdict::Fail, "antisymmetric part too singular"};
    }

    if (alpha < 1.0) {
        if (!opt.drift) {
            rep.drift = {Verdict::Inconclusive, "drift not supplied"};
        } else {
            auto h = [&](double x) {
                switch (opt.truncation) {
                    case Truncation::Zero: return 0.0;
                    case Truncation::UnitBall: return std::abs(x) <= 1 ? x : 0.0;
                    default: return x;
                }
            };
            double integral = 0.0;
            if (opt.truncation != Truncation::Zero) {
                const double p = 1.0 / std::max(1.0 - alpha, 1e-3);
                auto hr = [&](double x) { return h(x) * f(x); };
                auto hl = [&](double x) { return h(-x) * f(-x); };
                integral = quad::adaptive_singular_at_zero(hr, 1.0, p, 1e-14, 1e-10).value +
                           quad::adaptive_singular_at_zero(hl, 1.0, p, 1e-14, 1e-10).value;
                if (opt.truncation == Truncation::Full)
                    integral += quad::adaptive_to_infinity(hr, 1.0, 1.0, 1e-14, 1e-10).value +
                                quad::adaptive_to_infinity(hl, 1.0, 1.0, 1e-14, 1e-10).value;
            }
            const bool ok = std::abs(*opt.drift - integral) <= 1e-8 * std::max(1.0, std::abs(integral));
            rep.drift = {ok ? Verdict::Pass : Verdict::Fail,
                         "b_t = " + std::to_string(*opt.drift) + ", int h dF = " + std::to_string(integral)};
        }
    } else {
        rep.drift = {Verdict::Pass, "not required for alpha >= 1"};
    }
    return rep;
}

}  // namespace fkpide

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/LU>

#include "fkpide/discretization.hpp"

namespace fkpide {

struct TimeMesh {
    double T = 0;
    std::vector<double> steps;
    int startup = 4;  // implicit Euler half-steps replacing the first startup/2 steps

    static TimeMesh uniform(double T, int n, int startup = 4) {
        require(T > 0 && n > 0, "TimeMesh: need T > 0 and at least one step");
        return {T, std::vector<double>(static_cast<std::size_t>(n), T / n), startup};
    }
    /// Steps growing geometrically by `factor` away from t = 0.
    static TimeMesh graded(double T, int n, double factor, int startup = 4) {
        require(T > 0 && n > 0 && factor > 0, "TimeMesh: invalid grading");
        std::vector<double> s(static_cast<std::size_t>(n));
        double w = 1.0, total = 0.0;
        for (auto &x : s) {
            x = w;
            total += w;
            w *= factor;
        }
        for (auto &x : s) x *= T / total;
        return {T, s, startup};
    }
    /// Uniform within each interval between sorted breakpoints in (0, T), about
    /// n steps in total, so every breakpoint is a mesh time.
    static TimeMesh aligned(double T, int n, std::vector<double> breaks, int startup = 4) {
        require(T > 0 && n > 0, "TimeMesh: need T > 0 and at least one step");
        std::vector<double> pts{0.0};
        std::sort(breaks.begin(), breaks.end());
        for (double b : breaks)
            if (b > 1e-14 * T && b < T * (1 - 1e-14)) pts.push_back(b);
        pts.push_back(T);
        TimeMesh m{T, {}, startup};
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double len = pts[i + 1] - pts[i];
            const int k = std::max(1, static_cast<int>(std::lround(n * len / T)));
            for (int j = 0; j < k; ++j) m.steps.push_back(len / k);
        }
        return m;
    }

    std::vector<double> times() const {
        std::vector<double> t{0.0};
        for (double s : steps) t.push_back(t.back() + s);
        return t;
    }
    void validate() const {
        double sum = 0.0;
        for (double s : steps) {
            if (!(s > 0)) throw DomainError("TimeMesh: non-positive step");
            sum += s;
        }
        if (std::abs(sum - T) > 1e-10 * std::max(1.0, T)) throw DomainError("TimeMesh: steps do not sum to T");
        if (startup < 0) throw DomainError("TimeMesh: negative startup count");
    }
};

/// L2 projection onto the hat basis: solve M alpha = <f, w_j>. Cells are split
/// at `breaks` so piecewise-smooth data is integrated to rounding.
inline Vec project_initial(const std::function<double(double)> &f, const TruncatedDomain &dom,
                           const std::vector<double> &breaks = {}) {
    Vec rhs = Vec::Zero(dom.n);
    const auto &rule = quad::gauss_legendre(20);
    for (int c = 0; c <= dom.n; ++c) {
        const double x0 = dom.R1 + c * dom.h, x1 = x0 + dom.h;
        std::vector<double> pts{x0, x1};
        for (double b : breaks)
            if (b > x0 && b < x1) pts.push_back(b);
        std::sort(pts.begin(), pts.end());
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double mid = 0.5 * (pts[i] + pts[i + 1]), rad = 0.5 * (pts[i + 1] - pts[i]);
            for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                const double x = mid + rad * rule.nodes[k];
                const double fx = f(x) * rule.weights[k] * rad;
                if (c >= 1) rhs(c - 1) += fx * (x1 - x) / dom.h;
                if (c < dom.n) rhs(c) += fx * (x - x0) / dom.h;
            }
        }
    }
    return assemble_mass(dom).solve(rhs);
}

/// The discrete solution: phi coefficients per mesh time; u = phi + psi.
struct SolutionSurface {
    std::vector<double> times;
    std::vector<Vec> coefficients;
    TruncatedDomain domain;
    PayoffModifier modifier;

    /// Piecewise-linear interpolation of the nodal values of u = phi + psi, with
    /// u = psi on the boundary. Interpolating u rather than phi keeps the kink
    /// of psi out of the interpolant.
    double u_at(std::size_t k, double x) const {
        const double s = (x - domain.R1) / domain.h;  // node j+1 sits at s = j+1
        if (!(s > 0 && s < domain.n + 1)) return modifier(x);
        const auto c = static_cast<long>(std::floor(s));
        const double w = s - static_cast<double>(c);
        auto at = [&](long i) {
            const double xi = domain.R1 + static_cast<double>(i) * domain.h;
            return (i >= 1 && i <= domain.n ? coefficients[k](i - 1) : 0.0) + modifier(xi);
        };
        if (w == 0.0) return at(c);
        return (1 - w) * at(c) + w * at(c + 1);
    }

    double evaluate(double t, double x) const {
        if (t < times.front() - 1e-12 || t > times.back() + 1e-12) throw DomainError("evaluate: time outside the mesh");
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t k1 = static_cast<std::size_t>(std::distance(times.begin(), it));
        if (k1 >= times.size()) k1 = times.size() - 1;
        const std::size_t k0 = k1 == 0 ? 0 : k1 - 1;
        if (k0 == k1 || times[k1] == times[k0]) return u_at(k1, x);
        const double w = std::clamp((t - times[k0]) / (times[k1] - times[k0]), 0.0, 1.0);
        return (1 - w) * u_at(k0, x) + w * u_at(k1, x);
    }
    double final_value(double x) const { return evaluate(times.back(), x); }

    /// CSV with columns t, x, S, u; every `stride`-th time and node.
    void write_csv(std::ostream &os, int time_stride = 1, int node_stride = 1) const {
        os << "# fkpide surface v1\nt,x,S,u\n";
        os.precision(12);
        for (std::size_t k = 0; k < times.size(); k += static_cast<std::size_t>(std::max(1, time_stride))) {
            for (int j = 0; j < domain.n; j += std::max(1, node_stride)) {
                const double x = domain.node(j);
                os << times[k] << ',' << x << ',' << std::exp(x) << ',' << coefficients[k](j) + modifier(x) << '\n';
            }
        }
    }
};

/// One assembled system valid on [t0, t1) of the evolution time.
struct SegmentSystem {
    double t0, t1;
    AssembledSystem system;
};

struct EvolutionOptions {
    double theta = 0.5;
    double tolerance = 1e-10;       // relative residual of each linear solve
    Eigen::Index dense_limit = 4096;  // dense LU up to this size, Krylov above
};

namespace detail {

class StepSolver {
public:
    StepSolver(const AssembledSystem &s, double dt, double theta, const EvolutionOptions &opt)
        : sys_(s), dt_(dt), theta_(theta), opt_(opt) {
        const auto n = s.domain.n;
        if (n <= opt.dense_limit) {
            Mat B = s.operator_matrix();
            B_ = B;
            lu_.compute(s.mass.dense() + theta * dt * B);
        } else {
            // tridiagonal part of the left-hand side as preconditioner
            Tridiagonal band(n);
            band.diag.setConstant(s.stiffness(0, 0));
            band.upper.setConstant(n > 1 ? s.stiffness(0, 1) : 0.0);
            band.lower.setConstant(n > 1 ? s.stiffness(1, 0) : 0.0);
            band = band.scaled_sum(theta * dt, s.killing, theta * dt);
            prec_ = band.scaled_sum(1.0, s.mass, 1.0 + theta * dt * s.rate);
        }
    }

    Vec apply_B(const Vec &v) const { return B_ ? Vec(*B_ * v) : sys_.apply_operator(v); }

    Vec step(const Vec &v) const {
        const Vec rhs = sys_.mass * v - (1.0 - theta_) * dt_ * apply_B(v) + dt_ * sys_.load;
        Vec next;
        if (B_) {
            next = lu_.solve(rhs);
            const Vec res = sys_.mass * next + theta_ * dt_ * (*B_ * next) - rhs;
            const double rel = res.norm() / std::max(rhs.norm(), 1e-300);
            if (!(rel <= std::max(opt_.tolerance, 1e3 * std::numeric_limits<double>::epsilon() * sys_.domain.n)))
                throw SolverError("time step: residual " + std::to_string(rel) + " above tolerance");
        } else {
            auto op = [&](const Vec &x) -> Vec { return sys_.mass * x + theta_ * dt_ * sys_.apply_operator(x); };
            auto pc = [&](const Vec &x) -> Vec { return prec_.solve(x); };
            auto r = gmres(op, pc, rhs, v, opt_.tolerance, 80, 4000);
            if (!r.converged) throw SolverError("time step: GMRES did not converge");
            next = std::move(r.x);
        }
        if (!next.allFinite()) throw SolverError("time step: non-finite coefficients");
        return next;
    }

private:
    const AssembledSystem &sys_;
    double dt_, theta_;
    EvolutionOptions opt_;
    std::optional<Mat> B_;
    Eigen::PartialPivLU<Mat> lu_;
    Tridiagonal prec_;
};

}  // namespace detail

/// theta-scheme for M V' + B V = F with B = A + K + r M, one system per segment.
inline SolutionSurface solve_evolution(const std::vector<SegmentSystem> &segments, const TimeMesh &mesh,
                                       const Vec &alpha, const EvolutionOptions &opt = {},
                                       const PayoffModifier &modifier = {}) {
    mesh.validate();
    if (segments.empty()) throw DomainError("solve_evolution: no system");
    if (!(opt.theta >= 0 && opt.theta <= 1)) throw DomainError("solve_evolution: theta must lie in [0, 1]");
    const auto &dom = segments.front().system.domain;
    for (const auto &s : segments) {
        if (s.system.domain.n != dom.n || s.system.load.size() != dom.n || s.system.stiffness.size() != dom.n)
            throw DomainError("solve_evolution: inconsistent system dimensions");
    }
    if (alpha.size() != dom.n) throw DomainError("solve_evolution: initial vector has the wrong size");

    SolutionSurface out;
    out.domain = dom;
    out.modifier = modifier;
    out.times = mesh.times();
    out.coefficients.reserve(out.times.size());
    out.coefficients.push_back(alpha);

    auto system_at = [&](double t) -> const AssembledSystem & {
        for (const auto &s : segments)
            if (t >= s.t0 && t < s.t1) return s.system;
        return t < segments.front().t0 ? segments.front().system : segments.back().system;
    };
    // factorizations keyed by (segment address, dt, theta)
    std::map<std::tuple<const void *, double, double>, std::unique_ptr<detail::StepSolver>> cache;
    auto solver = [&](const AssembledSystem &s, double dt, double theta) -> const detail::StepSolver & {
        auto key = std::make_tuple(static_cast<const void *>(&s), dt, theta);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, std::make_unique<detail::StepSolver>(s, dt, theta, opt)).first;
        return *it->second;
    };

    Vec v = alpha;
    const int smooth_steps = (mesh.startup + 1) / 2;
    for (std::size_t k = 0; k < mesh.steps.size(); ++k) {
        const double dt = mesh.steps[k];
        const auto &sys = system_at(out.times[k] + 0.5 * dt);
        if (static_cast<int>(k) < smooth_steps) {
            const auto &s = solver(sys, 0.5 * dt, 1.0);
            v = s.step(s.step(v));
        } else {
            v = solver(sys, dt, opt.theta).step(v);
        }
        out.coefficients.push_back(v);
    }
    return out;
}

inline SolutionSurface solve_evolution(const AssembledSystem &system, const TimeMesh &mesh, const Vec &alpha,
                                       const EvolutionOptions &opt = {}, const PayoffModifier &modifier = {}) {
    return solve_evolution({SegmentSystem{0.0, std::numeric_limits<double>::infinity(), system}}, mesh, alpha, opt,
                           modifier);
}

/// Piecewise constant short rate in calendar time: levels[i] on
/// [breaks[i-1], breaks[i]), with breaks strictly increasing.
struct RatePath {
    std::vector<double> breaks;
    std::vector<double> levels;

    static RatePath constant(double r) { return {{}, {r}}; }
    double operator()(double t) const {
        const auto k = std::upper_bound(breaks.begin(), breaks.end(), t) - breaks.begin();
        return levels[static_cast<std::size_t>(k)];
    }
    /// int_s^t r(u) du
    double integral(double s, double t) const {
        double acc = 0.0, a = s;
        for (double b : breaks) {
            if (b <= a) continue;
            if (b >= t) break;
            acc += (*this)(a) * (b - a);
            a = b;
        }
        return acc + (*this)(a) * (t - a);
    }
    void validate() const {
        if (levels.size() != breaks.size() + 1) throw DomainError("rate path: need one level more than breaks");
        if (!std::is_sorted(breaks.begin(), breaks.end()) ||
            std::adjacent_find(breaks.begin(), breaks.end()) != breaks.end())
            throw DomainError("rate path: breaks must increase strictly");
        for (double v : levels)
            if (!std::isfinite(v)) throw DomainError("rate path: non-finite level");
    }
};

/// Evolution time tau runs forward from the payoff; a model with time-dependent
/// parameters is frozen at calendar time T - tau on each segment.
struct PideProblem {
    LevyModel model;
    TruncatedDomain domain;
    PayoffModifier modifier;
    double rate = 0.0;
    std::optional<RatePath> rate_path;  // overrides `rate` when set
    KillingRateSpec killing;
    std::function<double(double)> initial;  // g; defaults to psi
    std::vector<double> initial_breaks;
    FourierOptions fourier;
};

inline SolutionSurface solve_pide(const PideProblem &p, const TimeMesh &mesh, const EvolutionOptions &opt = {}) {
    const double T = mesh.T;
    std::vector<double> cal = p.model.breakpoints();
    if (p.rate_path) {
        p.rate_path->validate();
        cal.insert(cal.end(), p.rate_path->breaks.begin(), p.rate_path->breaks.end());
    }
    std::vector<double> taus{0.0};
    for (double b : cal)
        if (b > 0 && b < T) taus.push_back(T - b);
    taus.push_back(T);
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

    std::vector<SegmentSystem> segs;
    for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
        FourierOptions fo = p.fourier;
        fo.time = T - 0.5 * (taus[i] + taus[i + 1]);
        const double r = p.rate_path ? (*p.rate_path)(fo.time) : p.rate;
        segs.push_back({taus[i], taus[i + 1], assemble_system(p.model, p.domain, p.modifier, r, p.killing, fo)});
    }
    segs.back().t1 = std::numeric_limits<double>::infinity();

    Vec alpha = Vec::Zero(p.domain.n);
    if (p.initial) {
        auto breaks = p.initial_breaks;
        const auto pb = p.modifier.psi.breakpoints();
        breaks.insert(breaks.end(), pb.begin(), pb.end());
        alpha = project_initial([&](double x) { return p.initial(x) - p.modifier(x); }, p.domain, breaks);
    }
    return solve_evolution(segs, mesh, alpha, opt, p.modifier);
}

struct OrderEstimate {
    std::vector<double> values, errors, orders;
    double order = std::numeric_limits<double>::quiet_NaN();
    bool conclusive = false;
    bool exact = false;  // every error below rounding
};

/// Observed convergence order from nested levels refined by `ratio`. With a
/// reference the errors are |v_k - ref|, otherwise successive differences.
inline OrderEstimate richardson_order(const std::function<double(int)> &value_at_level, int levels,
                                      std::optional<double> reference = std::nullopt, double ratio = 2.0) {
    require(levels >= 3, "richardson_order: need at least 3 levels");
    OrderEstimate e;
    for (int k = 0; k < levels; ++k) e.values.push_back(value_at_level(k));
    if (reference) {
        for (double v : e.values) e.errors.push_back(std::abs(v - *reference));
    } else {
        for (int k = 0; k + 1 < levels; ++k) e.errors.push_back(std::abs(e.values[k + 1] - e.values[k]));
    }
    const double scale = std::max(1.0, std::abs(e.values.back()));
    e.exact = std::all_of(e.errors.begin(), e.errors.end(), [&](double x) { return x <= 1e-14 * scale; });
    if (e.exact) {
        e.order = std::numeric_limits<double>::infinity();
        e.conclusive = true;
        return e;
    }
    bool monotone = true;
    for (std::size_t k = 0; k + 1 < e.errors.size(); ++k) {
        if (!(e.errors[k + 1] < e.errors[k])) monotone = false;
        e.orders.push_back(std::log(e.errors[k] / e.errors[k + 1]) / std::log(ratio));
    }
    e.order = e.orders.empty() ? e.order : e.orders.back();
    e.conclusive = monotone && std::isfinite(e.order);
    return e;
}

}  // namespace fkpide

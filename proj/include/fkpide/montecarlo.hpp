#pragma once

#include <cmath>
#include <complex>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "fkpide/discretization.hpp"
#include "fkpide/parallel.hpp"
#include "fkpide/symbols/model.hpp"

namespace fkpide {

/// How infinite-activity jump parts are approximated: jumps above epsilon are
/// simulated exactly as compound Poisson, the rest is either replaced by a
/// Brownian motion of equal variance or dropped (drift compensated either way).
struct McScheme {
    enum class SmallJumps { Substitute, Drop };
    double epsilon = 1e-3;
    SmallJumps small_jumps = SmallJumps::Substitute;
};

namespace mc {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Random source of one path: its stream depends only on (seed, path).
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(splitmix64(path)),
                          static_cast<std::uint32_t>(splitmix64(path) >> 32), static_cast<std::uint32_t>(path)};
        eng_.seed(seq);
    }
    double normal() { return normal_(eng_); }
    double uniform() { return unif_(eng_); }  // in [0, 1)
    double uniform_open() {
        double u;
        do u = unif_(eng_);
        while (u <= 0.0);
        return u;
    }
    long poisson(double mean) {
        if (mean <= 0.0) return 0;
        return std::poisson_distribution<long>(mean)(eng_);
    }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_;
    std::uniform_real_distribution<double> unif_;
};

/// Increment of the process over [t0, t0 + dt].
class IncrementSampler {
public:
    virtual ~IncrementSampler() = default;
    virtual double sample(double t0, double dt, PathRng &rng) const = 0;
    /// int_{t0}^{t0+dt} of the constant term of the symbol.
    virtual double killing(double, double) const { return 0.0; }
    virtual bool finite_activity() const = 0;
    virtual Json describe() const = 0;
};

namespace detail {

/// Inverse Gaussian with the given mean and shape (Michael, Schucany, Haas).
inline double inverse_gaussian(double mean, double shape, PathRng &rng) {
    const double nu = rng.normal();
    const double y = nu * nu;
    const double x = mean + mean * mean * y / (2 * shape) -
                     mean / (2 * shape) * std::sqrt(4 * mean * shape * y + mean * mean * y * y);
    return rng.uniform() * (mean + x) <= mean ? x : mean * mean / x;
}

/// Exact sampler for jumps of a one-sided density f on (eps, inf): log-spaced
/// cells with quadrature masses, then rejection inside the chosen cell.
class TailJumps {
public:
    TailJumps() = default;
    /// `sign` is the direction of the jumps (f is given on the positive axis).
    TailJumps(const std::function<double(double)> &f, double eps, double decay, double sign) {
        constexpr double ratio = 1.04;
        const double y_cap = decay > 0 ? std::max(eps * ratio, 60.0 / decay) : 1e4;
        double lo = eps;
        const auto &rule = quad::gauss_legendre(20);
        auto g = [&](double u) { return f(std::exp(u)) * std::exp(u); };  // density in log y
        while (lo < y_cap) {
            const double hi = std::min(lo * ratio, y_cap), a = std::log(lo), b = std::log(hi);
            const double c = 0.5 * (a + b), r = 0.5 * (b - a);
            double mass = 0, first = 0, expo = 0, peak = 0;
            for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                const double u = c + r * rule.nodes[k], w = rule.weights[k] * r, v = g(u), y = std::exp(u);
                mass += w * v;
                first += w * v * y;
                expo += w * v * std::expm1(sign * y);
                peak = std::max(peak, v);
            }
            for (int k = 0; k <= 32; ++k) peak = std::max(peak, g(a + (b - a) * k / 32.0));
            mass_ += mass;
            first_ += first;
            expo_ += expo;
            cells_.push_back({a, b, mass_, 1.02 * peak});
            if (mass < 1e-18 * mass_ && hi > 1.0) break;
            lo = hi;
        }
    }
    double rate() const { return mass_; }
    double first_moment() const { return first_; }        // int y f
    double exponential_moment() const { return expo_; }  // int (e^{sign y} - 1) f
    template <class F>
    double sample(PathRng &rng, const F &f) const {
        const double target = rng.uniform() * mass_;
        auto it = std::upper_bound(cells_.begin(), cells_.end(), target,
                                   [](double t, const Cell &c) { return t < c.cum; });
        if (it == cells_.end()) it = std::prev(cells_.end());
        for (;;) {
            const double u = it->a + (it->b - it->a) * rng.uniform();
            const double y = std::exp(u);
            if (rng.uniform() * it->bound <= f(y) * y) return y;
        }
    }

private:
    struct Cell {
        double a, b, cum, bound;
    };
    std::vector<Cell> cells_;
    double mass_ = 0, first_ = 0, expo_ = 0;
};

/// One time-homogeneous d = 1 triplet.
class TripletSampler final : public IncrementSampler {
public:
    TripletSampler(const LevyCharacteristics &c, const Json &spec, const McScheme &scheme)
        : scheme_(scheme) {
        require(c.dim() == 1, "path simulation is one-dimensional");
        const double gap = measure::truncation_gap(c.measure, c.truncation);
        drift_ = c.drift(0) + gap;  // mean rate with fully compensated jumps
        var_ = c.covariance(0, 0);
        killing_ = c.killing;
        std::visit([&](const auto &m) { setup(m); }, c.measure);
        if (!spec.is_null() && spec.value("drift_mode", std::string()) == "martingale" && !exact_) {
            // keep E exp(L_t) = exp(r t) for the approximating process
            const double r = spec.at("rate").get<double>();
            drift_ = r - 0.5 * var_ - left_.exponential_moment() - right_.exponential_moment();
            compensator_ = 0.0;
            corrected_ = true;
        }
    }

    double sample(double, double dt, PathRng &rng) const override {
        double x = (drift_ - compensator_) * dt;
        if (var_ > 0) x += std::sqrt(var_ * dt) * rng.normal();
        if (nig_) {
            const double z = inverse_gaussian(nig_delta_ * dt / nig_gamma_, nig_delta_ * nig_delta_ * dt * dt, rng);
            // drift_ already holds the mean, remove the subordinated mean
            x += nig_beta_ * (z - nig_delta_ * dt / nig_gamma_) + std::sqrt(z) * rng.normal();
            return x;
        }
        if (cp_) {
            const long k = rng.poisson(cp_->intensity * dt);
            if (k > 0) x += k * cp_->mean + std::sqrt(static_cast<double>(k)) * cp_->stddev * rng.normal();
            return x;
        }
        const double total = right_.rate() + left_.rate();
        if (total > 0) {
            const long k = rng.poisson(total * dt);
            for (long j = 0; j < k; ++j) {
                if (rng.uniform() * total < right_.rate()) x += right_.sample(rng, fr_);
                else x -= left_.sample(rng, fl_);
            }
        }
        return x;
    }
    double killing(double, double dt) const override { return killing_ * dt; }
    bool finite_activity() const override { return exact_ && !nig_; }
    Json describe() const override {
        Json j{{"drift", drift_}, {"gaussian_variance", var_}};
        if (nig_) j["scheme"] = "inverse_gaussian_subordination";
        else if (cp_) j["scheme"] = "compound_poisson";
        else if (exact_) j["scheme"] = "gaussian";
        else {
            j["scheme"] = scheme_.small_jumps == McScheme::SmallJumps::Substitute ? "small_jump_substitution"
                                                                                : "small_jump_truncation";
            j["epsilon"] = scheme_.epsilon;
            j["substitution_variance"] = small_var_;
            j["jump_intensity"] = left_.rate() + right_.rate();
            j["martingale_corrected"] = corrected_;
        }
        return j;
    }

private:
    void setup(const NoJumps &) {}
    void setup(const CompoundPoissonMeasure &m) {
        cp_ = m;
        compensator_ = m.intensity * m.mean;
    }
    void setup(const NigMeasure &m) {
        // standard NIG(alpha / sqrt(s), -beta, delta sqrt(s)); the symbol carries the opposite skew sign
        const double s = m.shape(0, 0);
        nig_ = true;
        nig_beta_ = -m.beta(0);
        const double alpha = m.alpha / std::sqrt(s);
        nig_delta_ = m.delta * std::sqrt(s);
        nig_gamma_ = std::sqrt(alpha * alpha - nig_beta_ * nig_beta_);
    }
    void setup(const CgmyMeasure &m) {
        small_jumps([m](double y) { return measure::density(m, y); }, [m](double y) { return measure::density(m, -y); },
                    std::max(m.y_minus, m.y_plus), m.G, m.M, m.c_minus > 0 || m.c_plus > 0);
    }
    void setup(const UserDensity &m) {
        small_jumps(m.f, [f = m.f](double y) { return f(-y); }, m.singularity, m.left_rate, m.right_rate, true);
    }

    void small_jumps(std::function<double(double)> right, std::function<double(double)> left, double sing,
                     double left_rate, double right_rate, bool present) {
        exact_ = false;
        const double eps = scheme_.epsilon;
        require(eps > 0 && std::isfinite(eps), "small-jump threshold must be positive");
        fr_ = std::move(right);
        fl_ = std::move(left);
        right_ = TailJumps(fr_, eps, right_rate, 1.0);
        left_ = TailJumps(fl_, eps, left_rate, -1.0);
        if (present && !(right_.rate() + left_.rate() > 0))
            throw DomainError("small-jump threshold leaves no simulated jumps");
        compensator_ = right_.first_moment() - left_.first_moment();
        const double p = 2.0 / std::max(2.0 - sing, 1e-3);
        auto y2r = [&](double y) { return y * y * fr_(y); };
        auto y2l = [&](double y) { return y * y * fl_(y); };
        small_var_ = quad::adaptive_singular_at_zero(y2r, eps, std::max(1.0, p), 1e-16, 1e-11).value +
                     quad::adaptive_singular_at_zero(y2l, eps, std::max(1.0, p), 1e-16, 1e-11).value;
        if (scheme_.small_jumps == McScheme::SmallJumps::Substitute) var_ += small_var_;
    }

    McScheme scheme_;
    double drift_ = 0, var_ = 0, killing_ = 0, compensator_ = 0, small_var_ = 0;
    bool exact_ = true, corrected_ = false;
    std::optional<CompoundPoissonMeasure> cp_;
    bool nig_ = false;
    double nig_beta_ = 0, nig_delta_ = 0, nig_gamma_ = 1;
    std::function<double(double)> fr_, fl_;
    TailJumps right_, left_;
};

class SumSampler final : public IncrementSampler {
public:
    SumSampler(std::shared_ptr<const IncrementSampler> a, std::shared_ptr<const IncrementSampler> b)
        : a_(std::move(a)), b_(std::move(b)) {}
    double sample(double t0, double dt, PathRng &rng) const override {
        const double x = a_->sample(t0, dt, rng);
        return x + b_->sample(t0, dt, rng);
    }
    double killing(double t0, double dt) const override { return a_->killing(t0, dt) + b_->killing(t0, dt); }
    bool finite_activity() const override { return a_->finite_activity() && b_->finite_activity(); }
    Json describe() const override { return Json{{"scheme", "sum"}, {"parts", {a_->describe(), b_->describe()}}}; }

private:
    std::shared_ptr<const IncrementSampler> a_, b_;
};

/// Piecewise-constant in time; `scale` > 0 per segment turns it into the
/// integral of a deterministic integrand.
class PiecewiseSampler final : public IncrementSampler {
public:
    PiecewiseSampler(std::vector<double> breaks, std::vector<std::shared_ptr<const IncrementSampler>> segs,
                     std::vector<double> scale, bool right_continuous)
        : breaks_(std::move(breaks)), segs_(std::move(segs)), scale_(std::move(scale)), right_(right_continuous) {}

    double sample(double t0, double dt, PathRng &rng) const override {
        double x = 0.0;
        split(t0, dt, [&](std::size_t k, double a, double len) { x += scale_[k] * segs_[k]->sample(a, len, rng); });
        return x;
    }
    double killing(double t0, double dt) const override {
        double s = 0.0;
        split(t0, dt, [&](std::size_t k, double a, double len) { s += segs_[k]->killing(a, len); });
        return s;
    }
    bool finite_activity() const override {
        return std::all_of(segs_.begin(), segs_.end(), [](const auto &s) { return s->finite_activity(); });
    }
    Json describe() const override {
        Json parts = Json::array();
        for (const auto &s : segs_) parts.push_back(s->describe());
        return Json{{"scheme", "piecewise"}, {"breaks", breaks_}, {"parts", parts}};
    }

private:
    template <class F>
    void split(double t0, double dt, F &&f) const {
        double a = t0;
        const double end = t0 + dt;
        while (a < end) {
            const double mid_probe = a + 1e-15 * std::max(1.0, std::abs(a));
            auto it = right_ ? std::upper_bound(breaks_.begin(), breaks_.end(), mid_probe)
                             : std::lower_bound(breaks_.begin(), breaks_.end(), mid_probe);
            const auto k = static_cast<std::size_t>(it - breaks_.begin());
            const double b = it == breaks_.end() ? end : std::min(end, *it);
            if (b <= a) break;
            f(k, a, b - a);
            a = b;
        }
    }

    std::vector<double> breaks_;
    std::vector<std::shared_ptr<const IncrementSampler>> segs_;
    std::vector<double> scale_;
    bool right_;
};

}  // namespace detail

/// Path sampler for a model; throws DomainError for unsupported structure.
inline std::shared_ptr<const IncrementSampler> make_sampler(const LevyModel &model, const McScheme &scheme = {}) {
    require(model.dim() == 1, "path simulation is one-dimensional");
    const SymbolNode &node = model.node();
    if (auto *t = dynamic_cast<const fkpide::detail::TripletNode *>(&node))
        return std::make_shared<detail::TripletSampler>(t->characteristics(), model.to_json(), scheme);
    if (auto *s = dynamic_cast<const fkpide::detail::SumNode *>(&node))
        return std::make_shared<detail::SumSampler>(make_sampler(s->first(), scheme), make_sampler(s->second(), scheme));
    if (auto *p = dynamic_cast<const fkpide::detail::PiecewiseNode *>(&node)) {
        std::vector<std::shared_ptr<const IncrementSampler>> segs;
        for (const auto &m : p->segments()) segs.push_back(make_sampler(m, scheme));
        return std::make_shared<detail::PiecewiseSampler>(p->breaks(), segs, std::vector<double>(segs.size(), 1.0),
                                                          p->right_continuous());
    }
    if (auto *ig = dynamic_cast<const fkpide::detail::IntegrandNode *>(&node)) {
        const auto base = make_sampler(ig->base(), scheme);
        const auto &path = ig->path();
        std::vector<double> scale;
        for (const auto &v : path.values) scale.push_back(v(0, 0));
        return std::make_shared<detail::PiecewiseSampler>(
            path.breaks, std::vector<std::shared_ptr<const IncrementSampler>>(scale.size(), base), scale,
            path.right_continuous);
    }
    throw DomainError("path simulation: unsupported symbol structure");
}

/// Pairwise sum, so reductions do not depend on how paths were scheduled.
inline double pairwise_sum(const double *v, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace mc

/// Lazily generated batch: path i is regenerated bit-identically from
/// (seed, i) whenever it is needed, so large batches need no storage.
struct PathBatch {
    std::vector<double> times;
    double x0 = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    Json scheme;
    std::shared_ptr<const mc::IncrementSampler> sampler;

    int steps() const { return static_cast<int>(times.size()) - 1; }
    double horizon() const { return times.back(); }

    /// States L_{t_0..t_m} of path i.
    Vec path(std::size_t i) const {
        Vec s(static_cast<Eigen::Index>(times.size()));
        fill(i, s);
        return s;
    }
    Vec increments(std::size_t i) const {
        const Vec s = path(i);
        return s.tail(s.size() - 1) - s.head(s.size() - 1);
    }
    /// int_0^T of the symbol's constant term (same for all paths).
    double symbol_killing(int k) const { return sampler->killing(times[k], times[k + 1] - times[k]); }

    /// fn(i, states) for every path, in parallel.
    template <class F>
    void for_each_path(F &&fn) const {
        constexpr std::size_t chunk = 256;
        const std::size_t blocks = (n_paths + chunk - 1) / chunk;
        parallel_for(blocks, [&](std::size_t b) {
            Vec s(static_cast<Eigen::Index>(times.size()));
            for (std::size_t i = b * chunk; i < std::min(n_paths, (b + 1) * chunk); ++i) {
                fill(i, s);
                fn(i, static_cast<const Vec &>(s));
            }
        });
    }

    Vec terminal_values() const {
        Vec out(static_cast<Eigen::Index>(n_paths));
        for_each_path([&](std::size_t i, const Vec &s) { out(static_cast<Eigen::Index>(i)) = s(s.size() - 1); });
        return out;
    }

private:
    void fill(std::size_t i, Vec &s) const {
        mc::PathRng rng(seed, i);
        s(0) = x0;
        for (std::size_t k = 0; k + 1 < times.size(); ++k)
            s(static_cast<Eigen::Index>(k + 1)) =
                s(static_cast<Eigen::Index>(k)) + sampler->sample(times[k], times[k + 1] - times[k], rng);
        if (!s.allFinite()) throw SolverError("path simulation produced a non-finite state");
    }
};

struct FkEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t paths = 0;
    int steps = 0;
    double epsilon = 0.0;
    std::uint64_t seed = 0;

    Json to_json() const {
        return Json{{"mean", mean}, {"stderr", stderr_}, {"paths", paths}, {"steps", steps}, {"epsilon", epsilon},
                    {"seed", seed}};
    }
};

namespace mc {

inline PathBatch simulate(const LevyModel &model, double x0, double T, int m, std::size_t n_paths,
                          std::uint64_t seed, const McScheme &scheme = {}) {
    require(T > 0 && m > 0 && n_paths > 0, "simulate: need T > 0, m > 0 and at least one path");
    require(std::isfinite(x0), "simulate: non-finite start");
    PathBatch b;
    b.times.resize(static_cast<std::size_t>(m) + 1);
    for (int k = 0; k <= m; ++k) b.times[static_cast<std::size_t>(k)] = T * k / m;
    b.x0 = x0;
    b.n_paths = n_paths;
    b.seed = seed;
    b.sampler = make_sampler(model, scheme);
    b.scheme = b.sampler->describe();
    b.scheme["model"] = model.to_json();
    return b;
}

inline FkEstimate summarize(const std::vector<double> &v, const PathBatch &b) {
    for (double x : v)
        if (!std::isfinite(x)) throw SolverError("Monte Carlo: non-finite path functional");
    const std::size_t n = v.size();
    FkEstimate e;
    e.paths = n;
    e.steps = b.steps();
    e.seed = b.seed;
    e.epsilon = b.scheme.value("epsilon", 0.0);
    e.mean = pairwise_sum(v.data(), n) / static_cast<double>(n);
    if (n > 1) {
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = (v[i] - e.mean) * (v[i] - e.mean);
        e.stderr_ = std::sqrt(pairwise_sum(d.data(), n) / static_cast<double>(n - 1) / static_cast<double>(n));
    }
    return e;
}

}  // namespace mc

inline PathBatch simulate_jump_diffusion(const LevyModel &model, double x0, double T, int m, std::size_t n_paths,
                                         std::uint64_t seed) {
    auto b = mc::simulate(model, x0, T, m, n_paths, seed);
    if (!b.sampler->finite_activity())
        throw DomainError("simulate_jump_diffusion: jump part must be compound Poisson or absent");
    return b;
}

inline PathBatch simulate_cgmy(const LevyModel &model, double x0, double T, int m, std::size_t n_paths, double eps,
                               std::uint64_t seed,
                               McScheme::SmallJumps small = McScheme::SmallJumps::Substitute) {
    require(eps > 0, "simulate_cgmy: epsilon must be positive");
    return mc::simulate(model, x0, T, m, n_paths, seed, McScheme{eps, small});
}

inline PathBatch simulate_nig(const LevyModel &model, double x0, double T, int m, std::size_t n_paths,
                              std::uint64_t seed) {
    const auto *c = characteristics_of(model);
    if (!c || !std::holds_alternative<NigMeasure>(c->measure))
        throw DomainError("simulate_nig: model is not a normal inverse Gaussian process");
    return mc::simulate(model, x0, T, m, n_paths, seed);
}

/// Ingredients of the Feynman-Kac functional
/// g(L_T) e^{-int_0^T (kappa + r)} + int_0^T f(T - s, L_s) e^{-int_0^s (kappa + r)} ds.
struct FkFunctional {
    std::function<double(double)> g;
    std::function<double(double, double)> kappa;  // (s, x)
    std::function<double(double, double)> f;      // (t, x), evaluated at t = T - s
    std::function<double(double)> rate;           // r_s
};

namespace mc {

/// Per-path value with left-endpoint Riemann sums on the path grid.
inline double fk_path_value(const PathBatch &b, const FkFunctional &fk, const Vec &s, const std::vector<double> &c) {
    const int m = b.steps();
    const double T = b.horizon();
    double integral = 0.0, running = 0.0;
    for (int k = 0; k < m; ++k) {
        const double t = b.times[static_cast<std::size_t>(k)], dt = b.times[static_cast<std::size_t>(k) + 1] - t;
        const double x = s(k);
        if (fk.f) running += fk.f(T - t, x) * std::exp(-integral) * dt;
        double rate = c[static_cast<std::size_t>(k)];
        if (fk.kappa) rate += fk.kappa(t, x) * dt;
        if (fk.rate) rate += fk.rate(t) * dt;
        integral += rate;
    }
    const double terminal = fk.g ? fk.g(s(m)) : 0.0;
    return terminal * std::exp(-integral) + running;
}

inline std::vector<double> symbol_killing(const PathBatch &b) {
    std::vector<double> c(static_cast<std::size_t>(b.steps()));
    for (int k = 0; k < b.steps(); ++k) c[static_cast<std::size_t>(k)] = b.symbol_killing(k);
    return c;
}

}  // namespace mc

inline FkEstimate estimate_feynman_kac(const PathBatch &b, const FkFunctional &fk) {
    const auto c = mc::symbol_killing(b);
    std::vector<double> v(b.n_paths);
    b.for_each_path([&](std::size_t i, const Vec &s) { v[i] = mc::fk_path_value(b, fk, s, c); });
    return mc::summarize(v, b);
}

inline FkEstimate estimate_feynman_kac(const PathBatch &b, const std::function<double(double)> &g,
                                       const KillingRateSpec &kappa, double r,
                                       const std::function<double(double, double)> &f = nullptr) {
    FkFunctional fk;
    fk.g = g;
    if (!kappa.zero()) fk.kappa = [kappa](double, double x) { return kappa(x); };
    fk.f = f;
    if (r != 0.0) fk.rate = [r](double) { return r; };
    return estimate_feynman_kac(b, fk);
}

/// One estimate per killing rate, all on the same paths (common random numbers).
inline std::vector<FkEstimate> estimate_feynman_kac_sweep(const PathBatch &b, const std::function<double(double)> &g,
                                                          const std::vector<KillingRateSpec> &kappas, double r) {
    const auto c = mc::symbol_killing(b);
    std::vector<std::vector<double>> v(kappas.size(), std::vector<double>(b.n_paths));
    b.for_each_path([&](std::size_t i, const Vec &s) {
        const double payoff = g(s(s.size() - 1));
        for (std::size_t q = 0; q < kappas.size(); ++q) {
            double integral = 0.0;
            for (int k = 0; k < b.steps(); ++k) {
                const double dt = b.times[static_cast<std::size_t>(k) + 1] - b.times[static_cast<std::size_t>(k)];
                integral += c[static_cast<std::size_t>(k)] + (kappas[q](s(k)) + r) * dt;
            }
            v[q][i] = payoff * std::exp(-integral);
        }
    });
    std::vector<FkEstimate> out;
    for (const auto &x : v) out.push_back(mc::summarize(x, b));
    return out;
}

/// Finite union of open intervals (lo, hi); endpoints may be infinite.
using IntervalSet = std::vector<std::pair<double, double>>;

inline bool contains(const IntervalSet &D, double x) {
    return std::any_of(D.begin(), D.end(), [x](const auto &iv) { return x > iv.first && x < iv.second; });
}

/// E exp(-gamma * occupation time of D), left-endpoint Riemann sums.
inline FkEstimate estimate_occupation_laplace(const PathBatch &b, const IntervalSet &D, double gamma) {
    require(gamma >= 0, "occupation Laplace transform needs gamma >= 0");
    for (const auto &iv : D) require(iv.first < iv.second, "occupation set: need lo < hi");
    std::vector<double> v(b.n_paths);
    b.for_each_path([&](std::size_t i, const Vec &s) {
        double occ = 0.0;
        for (int k = 0; k < b.steps(); ++k)
            if (contains(D, s(k)))
                occ += b.times[static_cast<std::size_t>(k) + 1] - b.times[static_cast<std::size_t>(k)];
        v[i] = std::exp(-gamma * occ);
    });
    return mc::summarize(v, b);
}

struct EmpiricalCf {
    Complex value;
    double stderr_re = 0.0, stderr_im = 0.0;
};

/// Sample means of exp(i xi (L_T - x0)) for each xi, from one pass over the paths.
inline std::vector<EmpiricalCf> empirical_cf(const PathBatch &b, const std::vector<double> &xis) {
    const Vec L = b.terminal_values();
    std::vector<EmpiricalCf> out;
    std::vector<double> re(b.n_paths), im(b.n_paths);
    for (double xi : xis) {
        for (std::size_t i = 0; i < b.n_paths; ++i) {
            const double y = xi * (L(static_cast<Eigen::Index>(i)) - b.x0);
            re[i] = std::cos(y);
            im[i] = std::sin(y);
        }
        const auto r = mc::summarize(re, b), q = mc::summarize(im, b);
        out.push_back({Complex(r.mean, q.mean), r.stderr_, q.stderr_});
    }
    return out;
}

inline EmpiricalCf empirical_cf(const PathBatch &b, double xi) { return empirical_cf(b, std::vector<double>{xi})[0]; }

}  // namespace fkpide

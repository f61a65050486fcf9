#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "fkpide/core.hpp"
#include "fkpide/numerics/linalg.hpp"
#include "fkpide/numerics/quadrature.hpp"
#include "fkpide/parallel.hpp"
#include "fkpide/symbols/model.hpp"

namespace fkpide {

/// Uniform grid on (R1, R2) with n interior nodes; the hat basis lives on the
/// interior nodes and everything outside is constrained to zero.
struct TruncatedDomain {
    double R1 = 0, R2 = 0;
    int n = 0;
    double h = 0;

    /// Zero-based: node(0) = R1 + h, node(n-1) = R2 - h.
    double node(Eigen::Index j) const { return R1 + static_cast<double>(j + 1) * h; }
    Vec nodes() const {
        Vec x(n);
        for (int j = 0; j < n; ++j) x(j) = node(j);
        return x;
    }
    double hat(Eigen::Index j, double x) const { return std::max(0.0, 1.0 - std::abs(x - node(j)) / h); }
    Json to_json() const { return Json{{"R1", R1}, {"R2", R2}, {"n", n}, {"h", h}}; }
};

inline TruncatedDomain build_domain(double R1, double R2, int n) {
    if (!(std::isfinite(R1) && std::isfinite(R2) && R1 < R2)) throw DomainError("build_domain: need R1 < R2");
    if (n < 3) throw DomainError("build_domain: need at least 3 interior nodes");
    return {R1, R2, n, (R2 - R1) / (n + 1)};
}

/// Shifts the domain by less than h/2 so that x becomes a node. Payoff kinks
/// and killing thresholds on nodes keep the scheme second order.
inline TruncatedDomain align_domain(const TruncatedDomain &d, double x) {
    const double s = (x - d.R1) / d.h;
    const double shift = (s - std::round(s)) * d.h;
    return {d.R1 + shift, d.R2 + shift, d.n, d.h};
}

/// Same width up to one cell, with h adjusted so both x1 and x2 are nodes.
inline TruncatedDomain align_domain(const TruncatedDomain &d, double x1, double x2) {
    const double gap = std::abs(x2 - x1);
    if (gap < 1e-12 * (1 + std::abs(x1))) return align_domain(d, x1);
    const double h = gap / std::max(1.0, std::round(gap / d.h));
    const int n = static_cast<int>(std::lround((d.R2 - d.R1) / h)) - 1;
    require(n >= 1, "align_domain: domain narrower than the gap between the points");
    return align_domain(TruncatedDomain{d.R1, d.R1 + (n + 1) * h, n, h}, x1);
}

/// a + b e^x on (lo, hi]; the endpoints may be infinite.
struct ExpPiece {
    double lo, hi, a, b;
};

namespace detail {

// int_u^v (c0 + c1 y)(A + B e^y) dy, written to avoid cancellation on short intervals.
inline double lin_exp_integral(double c0, double c1, double A, double B, double u, double v) {
    if (!(v > u)) return 0.0;
    double s = 0.0;
    if (A != 0.0) s += A * (v - u) * (c0 + 0.5 * c1 * (u + v));
    if (B != 0.0) s += B * std::exp(u) * ((c0 - c1 + c1 * v) * std::expm1(v - u) + c1 * (v - u));
    return s;
}

inline Complex sinc(Complex z) {
    if (std::abs(z) < 1e-3) {
        const Complex z2 = z * z;
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
    }
    return std::sin(z) / z;
}

// Fourier transform of the unit hat of half-width h: h sinc^2(zeta h / 2).
inline Complex hat_transform(Complex zeta, double h) {
    const Complex s = sinc(0.5 * zeta * h);
    return h * s * s;
}

}  // namespace detail

/// Piecewise a + b e^x function with compact or exponentially damped pieces.
struct PiecewiseExp {
    std::vector<ExpPiece> pieces;

    bool zero() const {
        return std::all_of(pieces.begin(), pieces.end(), [](const ExpPiece &p) { return p.a == 0 && p.b == 0; });
    }
    double operator()(double x) const {
        double s = 0.0;
        for (const auto &p : pieces)
            if (x > p.lo && x <= p.hi) s += p.a + p.b * std::exp(x);
        return s;
    }
    std::vector<double> breakpoints() const {
        std::vector<double> out;
        for (const auto &p : pieces) {
            if (std::isfinite(p.lo)) out.push_back(p.lo);
            if (std::isfinite(p.hi)) out.push_back(p.hi);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    /// int e^{z x} psi(x) dx for complex z where it converges.
    Complex laplace(Complex z) const {
        Complex s = 0.0;
        auto prim = [](Complex w, double coef, double lo, double hi) -> Complex {
            if (coef == 0.0) return 0.0;
            if (std::abs(w) < 1e-300) return coef * (hi - lo);
            const Complex up = std::isfinite(hi) ? std::exp(w * hi) : Complex{};
            const Complex dn = std::isfinite(lo) ? std::exp(w * lo) : Complex{};
            return coef * (up - dn) / w;
        };
        for (const auto &p : pieces) s += prim(z, p.a, p.lo, p.hi) + prim(z + 1.0, p.b, p.lo, p.hi);
        return s;
    }

    /// Throws unless x -> psi(x) e^{eta x} is square integrable.
    void check_weight(double eta) const {
        for (const auto &p : pieces) {
            for (auto [coef, k] : {std::pair{p.a, 0.0}, std::pair{p.b, 1.0}}) {
                if (coef == 0.0) continue;
                if (std::isinf(p.hi) && !(eta + k < 0))
                    throw DomainError("payoff weight: right tail not damped, need eta < " + std::to_string(-k));
                if (std::isinf(p.lo) && !(eta + k > 0))
                    throw DomainError("payoff weight: left tail not damped, need eta > " + std::to_string(-k));
            }
        }
    }

    Json to_json() const {
        Json out = Json::array();
        auto enc = [](double x) -> Json {
            if (std::isfinite(x)) return x;
            return x > 0 ? "inf" : "-inf";
        };
        for (const auto &p : pieces) out.push_back(Json{{"lo", enc(p.lo)}, {"hi", enc(p.hi)}, {"a", p.a}, {"b", p.b}});
        return out;
    }
};

/// The function psi subtracted from the solution together with the damping
/// weight used for its transform.
struct PayoffModifier {
    PiecewiseExp psi;
    double eta = 0.0;

    double operator()(double x) const { return psi(x); }
    bool zero() const { return psi.zero(); }
    /// Damped transform int e^{i xi x} e^{eta x} psi(x) dx.
    Complex transform(double xi) const { return psi.laplace(Complex(eta, xi)); }
    Json to_json() const { return Json{{"eta", eta}, {"pieces", psi.to_json()}}; }
};

inline PayoffModifier zero_modifier() { return {}; }

/// psi(x) = max(S0 e^x - K, 0), damped with eta < -1.
inline PayoffModifier call_payoff_transform(double S0, double K, double eta) {
    if (!(S0 > 0 && K > 0)) throw DomainError("call payoff: need S0, K > 0");
    if (!(eta < -1)) throw DomainError("call payoff: weight must satisfy eta < -1");
    PayoffModifier m{{{{std::log(K / S0), std::numeric_limits<double>::infinity(), -K, S0}}}, eta};
    m.psi.check_weight(eta);
    return m;
}

/// 1_{(a, inf)} with eta < 0, or 1_{(-inf, a]} with eta > 0.
inline PayoffModifier indicator_transform(double a, double eta, bool right = true) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (right && !(eta < 0)) throw DomainError("indicator of (a, inf): weight must be negative");
    if (!right && !(eta > 0)) throw DomainError("indicator of (-inf, a]: weight must be positive");
    return right ? PayoffModifier{{{{a, inf, 1.0, 0.0}}}, eta} : PayoffModifier{{{{-inf, a, 1.0, 0.0}}}, eta};
}

struct KillingStep {
    double lo, hi, level;
};

/// Bounded step-function killing rate, sum of levels over disjoint intervals.
struct KillingRateSpec {
    std::vector<KillingStep> steps;

    static KillingRateSpec none() { return {}; }
    static KillingRateSpec constant(double level) {
        return {{{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), level}}};
    }
    /// lambda 1_{x < xB}
    static KillingRateSpec threshold(double lambda, double xB) {
        return {{{-std::numeric_limits<double>::infinity(), xB, lambda}}};
    }
    KillingRateSpec &add(double lo, double hi, double level) {
        steps.push_back({lo, hi, level});
        validate();
        return *this;
    }

    bool zero() const {
        return std::all_of(steps.begin(), steps.end(), [](const KillingStep &s) { return s.level == 0 || !(s.hi > s.lo); });
    }
    double operator()(double x) const {
        double k = 0.0;
        for (const auto &s : steps)
            if (x >= s.lo && x < s.hi) k += s.level;
        return k;
    }
    std::vector<double> breakpoints() const {
        std::vector<double> out;
        for (const auto &s : steps) {
            if (std::isfinite(s.lo)) out.push_back(s.lo);
            if (std::isfinite(s.hi)) out.push_back(s.hi);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
    double sup() const {
        double m = 0.0;
        for (const auto &s : steps) m += std::abs(s.level);
        return m;
    }
    void validate() const {
        for (const auto &s : steps)
            if (!std::isfinite(s.level) || !(s.hi >= s.lo)) throw DomainError("killing rate: invalid step");
        for (std::size_t i = 0; i < steps.size(); ++i)
            for (std::size_t k = i + 1; k < steps.size(); ++k)
                if (std::min(steps[i].hi, steps[k].hi) > std::max(steps[i].lo, steps[k].lo))
                    throw DomainError("killing rate: step intervals overlap");
    }
    Json to_json() const {
        Json out = Json::array();
        auto enc = [](double x) -> Json {
            if (std::isfinite(x)) return x;
            return x > 0 ? "inf" : "-inf";
        };
        for (const auto &s : steps) out.push_back(Json{{"lo", enc(s.lo)}, {"hi", enc(s.hi)}, {"level", s.level}});
        return out;
    }
};

inline Tridiagonal assemble_mass(const TruncatedDomain &dom) {
    Tridiagonal m(dom.n);
    m.diag.setConstant(2.0 * dom.h / 3.0);
    m.lower.setConstant(dom.h / 6.0);
    m.upper.setConstant(dom.h / 6.0);
    return m;
}

/// K_jk = int kappa w_j w_k, cells split at every step edge; Simpson is exact
/// for the quadratic products.
inline Tridiagonal assemble_killing(const KillingRateSpec &kappa, const TruncatedDomain &dom) {
    kappa.validate();
    Tridiagonal K(dom.n);
    if (kappa.zero()) return K;
    for (int c = 0; c <= dom.n; ++c) {
        const double x0 = dom.R1 + c * dom.h, x1 = x0 + dom.h;
        const int jl = c - 1, jr = c;  // hats touching this cell
        for (const auto &s : kappa.steps) {
            const double u = std::max(x0, s.lo), v = std::min(x1, s.hi);
            if (!(v > u) || s.level == 0) continue;
            auto simpson = [&](auto &&f) { return (v - u) / 6.0 * (f(u) + 4.0 * f(0.5 * (u + v)) + f(v)); };
            auto wl = [&](double x) { return (x1 - x) / dom.h; };
            auto wr = [&](double x) { return (x - x0) / dom.h; };
            if (jl >= 0) K.diag(jl) += s.level * simpson([&](double x) { return wl(x) * wl(x); });
            if (jr < dom.n) K.diag(jr) += s.level * simpson([&](double x) { return wr(x) * wr(x); });
            if (jl >= 0 && jr < dom.n) {
                const double off = s.level * simpson([&](double x) { return wl(x) * wr(x); });
                K.upper(jl) += off;
                K.lower(jl) += off;
            }
        }
    }
    return K;
}

struct FourierOptions {
    double time = 0.0;          // model time at which the symbol is frozen
    bool force_fourier = false;  // route the polynomial part through the frequency quadrature too
    double cutoff = 20.0;        // body ends at cutoff / h
    int gl_order = 16;
    int laguerre_order = 48;
};

struct Stiffness {
    Toeplitz matrix;
    bool local_exact = true;      // polynomial part from the closed-form stencil
    bool tail_rotated = true;     // tail by contour rotation (false: truncated with a bound)
    double quadrature_error = 0;  // absolute bound on any entry
};

namespace detail {

struct Panel {
    double a, b;
};

// Panels on [0, end]: graded near 0 on the analyticity scale rho, widths capped
// so the phase across a panel stays below 8 radians at frequency omega_max.
inline std::vector<Panel> graded_panels(double rho, double end, double omega_max) {
    const double wmax = 8.0 / std::max(omega_max, 1e-12);
    std::vector<Panel> out;
    double a = 0.0, w = std::min(0.25 * rho, wmax);
    while (a < end) {
        double b = a + w;
        if (b >= end || end - b < 0.25 * w) b = end;
        out.push_back({a, b});
        a = b;
        w = std::min(wmax, std::max(1.5 * w, 0.25 * a));
    }
    return out;
}

struct FrequencyNodes {
    std::vector<double> xi, w_hi, w_lo;  // w_lo: lower-order rule for the error estimate (0 where unused)
};

inline FrequencyNodes panel_nodes(const std::vector<Panel> &panels, int order) {
    const auto &hi = quad::gauss_legendre(order);
    const auto &lo = quad::gauss_legendre(std::max(4, order * 5 / 8));
    FrequencyNodes fn;
    for (const auto &p : panels) {
        const double c = 0.5 * (p.a + p.b), r = 0.5 * (p.b - p.a);
        for (std::size_t i = 0; i < hi.nodes.size(); ++i) {
            fn.xi.push_back(c + r * hi.nodes[i]);
            fn.w_hi.push_back(r * hi.weights[i]);
            fn.w_lo.push_back(0.0);
        }
        for (std::size_t i = 0; i < lo.nodes.size(); ++i) {
            fn.xi.push_back(c + r * lo.nodes[i]);
            fn.w_hi.push_back(0.0);
            fn.w_lo.push_back(r * lo.weights[i]);
        }
    }
    return fn;
}

// out[m] = sum_k f_k exp(i xi_k (offset + m step)), m = 0..count-1. The phase
// recurrence is restarted every block so rounding does not accumulate.
inline CVec phase_sums(const std::vector<double> &xi, const std::vector<Complex> &f, double offset, double step,
                       std::size_t count) {
    constexpr std::size_t block = 128;
    const std::size_t blocks = (count + block - 1) / block;
    CVec out = CVec::Zero(static_cast<Eigen::Index>(count));
    parallel_for(blocks, [&](std::size_t bi) {
        const std::size_t m0 = bi * block, m1 = std::min(count, m0 + block);
        std::vector<Complex> acc(m1 - m0, 0.0);
        for (std::size_t k = 0; k < xi.size(); ++k) {
            if (f[k] == Complex{}) continue;
            Complex p = f[k] * std::polar(1.0, xi[k] * (offset + static_cast<double>(m0) * step));
            const Complex r = std::polar(1.0, xi[k] * step);
            for (std::size_t m = m0; m < m1; ++m) {
                acc[m - m0] += p;
                p *= r;
            }
        }
        for (std::size_t m = m0; m < m1; ++m) out(static_cast<Eigen::Index>(m)) = acc[m - m0];
    });
    return out;
}

// int_{X}^inf g(xi) e^{i omega xi} d xi for g analytic and algebraically
// bounded on Re xi >= X. Returns value and a crude error estimate.
template <class G>
std::pair<Complex, double> oscillatory_tail(G &&g, double X, double omega, int order) {
    const double a = std::abs(omega);
    if (a * X >= 20.0) {
        const double sg = omega > 0 ? 1.0 : -1.0;
        auto rule_sum = [&](const quad::Rule &r) {
            Complex s = 0.0;
            for (std::size_t k = 0; k < r.nodes.size(); ++k) s += r.weights[k] * g(Complex(X, sg * r.nodes[k] / a));
            return s * Complex(0.0, sg / a) * std::polar(1.0, omega * X);
        };
        const Complex v = rule_sum(quad::gauss_laguerre(order));
        const Complex v2 = rule_sum(quad::gauss_laguerre(std::max(8, order * 2 / 3)));
        return {v, std::abs(v - v2)};
    }
    // slow or no oscillation: xi = X / t
    auto f = [&](double t) -> Complex {
        const double x = X / t;
        return g(Complex(x, 0.0)) * std::polar(1.0, omega * x) * (X / (t * t));
    };
    auto r = quad::adaptive(f, 0.0, 1.0, 1e-15, 1e-11, 2000);
    return {r.value, r.error};
}

inline double strip_distance(const LevyModel &model, double im) {
    const auto s = model.strip();
    if (s.empty()) return 1.0;
    return std::min(im - s[0].lo, s[0].hi - im);
}

}  // namespace detail

/// Toeplitz stiffness A_jk = a(w_k, w_j) = S(k - j) with
/// S(m) = (1/pi) Re int_0^inf A(xi) |w^(xi)|^2 e^{i xi m h} d xi.
/// The polynomial part of the symbol is assembled from its exact stencil; the
/// jump part by frequency quadrature with a rotated-contour tail.
inline Stiffness assemble_stiffness(const LevyModel &model, const TruncatedDomain &dom, const FourierOptions &opt = {}) {
    require(model.dim() == 1, "assemble_stiffness: the solver is one-dimensional");
    const auto &node = model.node();
    const double t = opt.time, h = dom.h;
    const auto n = static_cast<std::size_t>(dom.n);
    const LocalPart loc = node.local1(t);
    const double q2 = loc.q2.real(), b = (loc.q1 / kI).real(), q0 = loc.q0.real();
    if (q2 < 0) throw DomainError("assemble_stiffness: negative diffusion coefficient");

    Stiffness st;
    Vec row = Vec::Zero(dom.n), col = Vec::Zero(dom.n);
    const bool fourier_local = opt.force_fourier;
    st.local_exact = !fourier_local;
    if (!fourier_local) {
        row(0) += 2.0 * q2 / h + 2.0 * h * q0 / 3.0;
        col(0) = row(0);
        row(1) += -q2 / h - 0.5 * b + q0 * h / 6.0;
        col(1) += -q2 / h + 0.5 * b + q0 * h / 6.0;
    }

    const bool jumps = node.has_jumps();
    if (jumps || fourier_local) {
        auto local_poly = [&](Complex z) -> Complex {
            return fourier_local ? loc.q2 * z * z + loc.q1 * z + loc.q0 : Complex{};
        };
        auto symbol = [&](Complex z) -> Complex { return (jumps ? node.jump1(t, z) : Complex{}) + local_poly(z); };
        auto symbol_far = [&](Complex z) -> Complex { return (jumps ? node.jump1_far(t, z) : Complex{}) + local_poly(z); };

        const double far = jumps ? node.far_frequency(t) : 0.0;
        st.tail_rotated = node.continuable() && std::isfinite(far);
        const double X = std::max(opt.cutoff / h, std::isfinite(far) ? far : 0.0);

        // growth check on the real axis
        const double s1 = std::abs(symbol(X)), s2 = std::abs(symbol(2 * X));
        if (s1 > 0 && std::log(s2 / s1) / std::log(2.0) > 2.05)
            throw DomainError("assemble_stiffness: symbol grows faster than |xi|^2");

        const double rho = std::clamp(jumps ? detail::strip_distance(model, 0.0) : 1.0, 1e-3, 1.0);
        const double omega_max = (static_cast<double>(n) + 2.0) * h;
        const auto fn = detail::panel_nodes(detail::graded_panels(rho, X, omega_max), opt.gl_order);
        std::vector<Complex> fh(fn.xi.size()), fl(fn.xi.size());
        parallel_for(fn.xi.size(), [&](std::size_t k) {
            const double xi = fn.xi[k];
            const double w2 = std::norm(detail::hat_transform(xi, h));
            const Complex v = symbol(xi) * w2;
            fh[k] = fn.w_hi[k] * v;
            fl[k] = fn.w_lo[k] * v;
        });
        const CVec plus = detail::phase_sums(fn.xi, fh, 0.0, h, n), minus = detail::phase_sums(fn.xi, fh, 0.0, -h, n);
        const CVec plus_lo = detail::phase_sums(fn.xi, fl, 0.0, h, n);
        double err = (plus - plus_lo).cwiseAbs().maxCoeff() / kPi;

        // Tail: |w^|^2 = (6 - 4(e^{ixh} + e^{-ixh}) + (e^{2ixh} + e^{-2ixh})) / (h^2 xi^4),
        // so the tail of lag m is a combination of T(q) at q = m-2..m+2.
        CVec tail = CVec::Zero(static_cast<Eigen::Index>(2 * n + 5));  // q = -(n+2)..(n+2)
        const auto qoff = static_cast<long>(n) + 2;
        if (st.tail_rotated) {
            std::vector<double> terr(tail.size(), 0.0);
            auto g = [&](Complex z) { return symbol_far(z) / (z * z * z * z); };
            parallel_for(static_cast<std::size_t>(tail.size()), [&](std::size_t i) {
                const double q = static_cast<double>(static_cast<long>(i) - qoff);
                auto [v, e] = detail::oscillatory_tail(g, X, q * h, opt.laguerre_order);
                tail(static_cast<Eigen::Index>(i)) = v;
                terr[i] = e;
            });
            err += 16.0 / (h * h) * *std::max_element(terr.begin(), terr.end()) / kPi;
        } else {
            // truncated real-axis integral; bound the remainder assuming |A| grows at most quadratically
            err += 16.0 * std::abs(symbol(X)) / (kPi * h * h * X * X * X);
        }
        constexpr double c[5] = {1.0, -4.0, 6.0, -4.0, 1.0};
        auto tail_at = [&](long m) {
            Complex s = 0.0;
            for (int k = -2; k <= 2; ++k) s += c[k + 2] * tail(static_cast<Eigen::Index>(m + k + qoff));
            return s / (h * h);
        };
        for (std::size_t m = 0; m < n; ++m) {
            const auto mi = static_cast<Eigen::Index>(m);
            const long ml = static_cast<long>(m);
            const Complex tp = st.tail_rotated ? tail_at(ml) : Complex{};
            const Complex tm = st.tail_rotated ? tail_at(-ml) : Complex{};
            row(mi) += (plus(mi) + tp).real() / kPi;
            col(mi) += (minus(mi) + tm).real() / kPi;
        }
        col(0) = row(0);
        st.quadrature_error = err;
    }
    st.matrix = Toeplitz(row, col);
    return st;
}

namespace detail {

// Exact pairings of psi (and its distributional derivative) with hat j.
struct HatPairing {
    double value = 0, derivative = 0, derivative_hat = 0;  // <psi, w>, <psi', w>, <psi', w'>
};

inline HatPairing pair_with_hat(const PiecewiseExp &psi, const TruncatedDomain &dom, Eigen::Index j) {
    HatPairing out;
    const double xj = dom.node(j), h = dom.h;
    for (const auto &p : psi.pieces) {
        const double B = p.b * std::exp(xj);
        // left cell y in [-h, 0]: w = 1 + y/h; right cell y in [0, h]: w = 1 - y/h
        for (int side : {-1, 1}) {
            const double cu = side < 0 ? -h : 0.0, cv = side < 0 ? 0.0 : h;
            const double u = std::max(cu, p.lo - xj), v = std::min(cv, p.hi - xj);
            if (!(v > u)) continue;
            const double c1 = side < 0 ? 1.0 / h : -1.0 / h;
            out.value += lin_exp_integral(1.0, c1, p.a, B, u, v);
            out.derivative += lin_exp_integral(1.0, c1, 0.0, B, u, v);
            out.derivative_hat += lin_exp_integral(c1, 0.0, 0.0, B, u, v);
        }
        // jumps at finite endpoints
        for (auto [x, sign] : {std::pair{p.lo, 1.0}, std::pair{p.hi, -1.0}}) {
            if (!std::isfinite(x)) continue;
            const double y = x - xj;
            if (std::abs(y) >= h) continue;
            const double jump = sign * (p.a + p.b * std::exp(x));
            out.derivative += jump * (1.0 - std::abs(y) / h);
            double dw = y < 0 ? 1.0 / h : -1.0 / h;
            if (y == 0.0) dw = 0.0;
            out.derivative_hat += jump * dw;
        }
        for (double x : {p.lo, p.hi}) {  // kinks at the support edge: one-sided average
            if (!std::isfinite(x) || std::abs(std::abs(x - xj) - h) > 1e-14 * std::max(1.0, std::abs(x))) continue;
            const double jump = (x == p.lo ? 1.0 : -1.0) * (p.a + p.b * std::exp(x));
            out.derivative_hat += jump * (x < xj ? 0.5 / h : -0.5 / h);
        }
    }
    return out;
}

// <rate psi, w_j> with rate = r + kappa, exact per sub-interval.
inline double rate_pairing(const PiecewiseExp &psi, double r, const KillingRateSpec &kappa, const TruncatedDomain &dom,
                           Eigen::Index j) {
    const double xj = dom.node(j), h = dom.h;
    double s = 0.0;
    for (const auto &p : psi.pieces) {
        const double B = p.b * std::exp(xj);
        for (int side : {-1, 1}) {
            const double cu = side < 0 ? -h : 0.0, cv = side < 0 ? 0.0 : h;
            const double u = std::max(cu, p.lo - xj), v = std::min(cv, p.hi - xj);
            if (!(v > u)) continue;
            const double c1 = side < 0 ? 1.0 / h : -1.0 / h;
            if (r != 0.0) s += r * lin_exp_integral(1.0, c1, p.a, B, u, v);
            for (const auto &k : kappa.steps) {
                const double uu = std::max(u, k.lo - xj), vv = std::min(v, k.hi - xj);
                if (vv > uu && k.level != 0) s += k.level * lin_exp_integral(1.0, c1, p.a, B, uu, vv);
            }
        }
    }
    return s;
}

}  // namespace detail

/// Jump part of a(psi, w_j) for every j, through the weighted identity
/// a(psi, w_j) = e^{-eta x_j} (1/pi) Re int_0^inf J(s - i eta) psi^_eta(s) W(s - i eta) e^{-i s x_j} ds,
/// W the hat transform. Returns values and an error estimate.
inline std::pair<Vec, double> jump_load_pairing(const PayoffModifier &mod, const LevyModel &model,
                                                const TruncatedDomain &dom, const FourierOptions &opt = {}) {
    const auto &node = model.node();
    const double t = opt.time, h = dom.h, eta = mod.eta;
    const auto n = static_cast<std::size_t>(dom.n);
    Vec out = Vec::Zero(dom.n);
    if (!node.has_jumps() || mod.zero()) return {out, 0.0};
    if (!model.in_strip(vec1(-eta))) throw StripError("assemble_load: payoff weight outside the admissible strip");
    mod.psi.check_weight(eta);
    const Complex shift(0.0, -eta);  // z = s - i eta

    const double far = node.far_frequency(t);
    const bool rotate = node.continuable() && std::isfinite(far);
    const double X = std::max(opt.cutoff / h, std::isfinite(far) ? far : 0.0);

    const auto ends = mod.psi.breakpoints();
    double omega_max = (static_cast<double>(n) + 2.0) * h;
    for (double p : ends) omega_max = std::max({omega_max, std::abs(p - dom.node(0)) + h, std::abs(p - dom.node(dom.n - 1)) + h});
    double rho = detail::strip_distance(model, -eta);
    rho = std::min({rho, std::abs(eta), std::abs(eta + 1.0)});
    rho = std::clamp(rho, 1e-3, 1.0);

    const auto fn = detail::panel_nodes(detail::graded_panels(rho, X, omega_max), opt.gl_order);
    std::vector<Complex> fh(fn.xi.size()), fl(fn.xi.size());
    parallel_for(fn.xi.size(), [&](std::size_t k) {
        const double s = fn.xi[k];
        const Complex z = s + shift;
        const Complex v = node.jump1(t, z) * mod.transform(s) * detail::hat_transform(z, h);
        fh[k] = fn.w_hi[k] * v;
        fl[k] = fn.w_lo[k] * v;
    });
    const double x0 = dom.node(0);
    const CVec body = detail::phase_sums(fn.xi, fh, -x0, -h, n);
    const CVec body_lo = detail::phase_sums(fn.xi, fl, -x0, -h, n);

    // Tail, split by endpoint p and hat term l: frequency p + l h - x_j.
    struct Term {
        double p, sign, a, b;
    };
    std::vector<Term> terms;
    for (const auto &pc : mod.psi.pieces) {
        if (std::isfinite(pc.hi)) terms.push_back({pc.hi, 1.0, pc.a, pc.b});
        if (std::isfinite(pc.lo)) terms.push_back({pc.lo, -1.0, pc.a, pc.b});
    }
    Vec tail = Vec::Zero(dom.n);
    std::vector<double> terr(n, 0.0);
    if (rotate) {
        parallel_for(n, [&](std::size_t j) {
            const double xj = dom.node(static_cast<Eigen::Index>(j));
            Complex acc = 0.0;
            for (const auto &tm : terms) {
                for (int l = -1; l <= 1; ++l) {
                    const double dl = l == 0 ? 2.0 : -std::exp(l * eta * h);
                    auto g = [&](Complex s) -> Complex {
                        const Complex zs = kI * s + eta;  // Laplace variable
                        const Complex z = s + shift;
                        const Complex amp = tm.sign * std::exp(eta * tm.p) * (tm.a / zs + tm.b * std::exp(tm.p) / (zs + 1.0));
                        return node.jump1_far(t, z) * amp * dl / (h * z * z);
                    };
                    auto [v, e] = detail::oscillatory_tail(g, X, tm.p + l * h - xj, opt.laguerre_order);
                    acc += v;
                    terr[j] += e * std::exp(-eta * xj);
                }
            }
            tail(static_cast<Eigen::Index>(j)) = acc.real();
        });
    }
    double err = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        const double scale = std::exp(-eta * dom.node(ji)) / kPi;
        out(ji) = scale * (body(ji).real() + tail(ji));
        err = std::max(err, scale * std::abs(body(ji).real() - body_lo(ji).real()) + terr[j] / kPi);
    }
    return {out, err};
}

struct Load {
    Vec values;
    double quadrature_error = 0.0;
};

/// F_j = -a(psi, w_j) - <(r + kappa) psi, w_j>. The polynomial part of the
/// symbol is paired exactly in real space, the jump part in the weighted
/// Fourier domain.
inline Load assemble_load(const PayoffModifier &mod, const LevyModel &model, double r, const KillingRateSpec &kappa,
                          const TruncatedDomain &dom, const FourierOptions &opt = {}) {
    require(model.dim() == 1, "assemble_load: the solver is one-dimensional");
    Load L{Vec::Zero(dom.n), 0.0};
    if (mod.zero()) return L;
    const LocalPart loc = model.node().local1(opt.time);
    const double q2 = loc.q2.real(), b = (loc.q1 / kI).real(), q0 = loc.q0.real();
    for (Eigen::Index j = 0; j < dom.n; ++j) {
        const auto pr = detail::pair_with_hat(mod.psi, dom, j);
        // local operator -q2 psi'' - b psi' + q0 psi
        const double a_loc = q2 * pr.derivative_hat - b * pr.derivative + q0 * pr.value;
        L.values(j) = -a_loc - detail::rate_pairing(mod.psi, r, kappa, dom, j);
    }
    auto [jl, err] = jump_load_pairing(mod, model, dom, opt);
    L.values -= jl;
    L.quadrature_error = err;
    return L;
}

/// Everything the time stepper needs for one time segment.
struct AssembledSystem {
    TruncatedDomain domain;
    Tridiagonal mass;
    Toeplitz stiffness;
    bool stiffness_local_exact = true;
    double stiffness_error = 0.0;
    Tridiagonal killing;
    double rate = 0.0;
    Vec load;
    double load_error = 0.0;

    /// B = A + K + r M as a dense matrix.
    Mat operator_matrix() const {
        Mat B = stiffness.dense();
        B += killing.dense() + rate * mass.dense();
        return B;
    }
    Vec apply_operator(const Vec &v) const {
        Vec y = stiffness.size() > 512 ? stiffness.apply(v) : Vec(stiffness.dense() * v);
        return y + killing * v + rate * (mass * v);
    }

    Json to_json() const {
        auto vj = [](const Vec &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        return Json{{"schema_version", 1},
                    {"domain", domain.to_json()},
                    {"mass", {{"diag", vj(mass.diag)}, {"lower", vj(mass.lower)}, {"upper", vj(mass.upper)}}},
                    {"stiffness",
                     {{"row", vj(stiffness.row())},
                      {"col", vj(stiffness.col())},
                      {"toeplitz", true},
                      {"local_exact", stiffness_local_exact},
                      {"quadrature_error", stiffness_error}}},
                    {"killing", {{"diag", vj(killing.diag)}, {"lower", vj(killing.lower)}, {"upper", vj(killing.upper)}}},
                    {"rate", rate},
                    {"load", vj(load)},
                    {"load_error", load_error}};
    }

    static AssembledSystem from_json(const Json &j) {
        auto jv = [](const Json &a) {
            const auto v = a.get<std::vector<double>>();
            return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        AssembledSystem s;
        const auto &d = j.at("domain");
        s.domain = {d.at("R1").get<double>(), d.at("R2").get<double>(), d.at("n").get<int>(), d.at("h").get<double>()};
        s.mass.diag = jv(j.at("mass").at("diag"));
        s.mass.lower = jv(j.at("mass").at("lower"));
        s.mass.upper = jv(j.at("mass").at("upper"));
        s.stiffness = Toeplitz(jv(j.at("stiffness").at("row")), jv(j.at("stiffness").at("col")));
        s.stiffness_local_exact = j.at("stiffness").at("local_exact").get<bool>();
        s.stiffness_error = j.at("stiffness").at("quadrature_error").get<double>();
        s.killing.diag = jv(j.at("killing").at("diag"));
        s.killing.lower = jv(j.at("killing").at("lower"));
        s.killing.upper = jv(j.at("killing").at("upper"));
        s.rate = j.at("rate").get<double>();
        s.load = jv(j.at("load"));
        s.load_error = j.value("load_error", 0.0);
        return s;
    }
};

inline AssembledSystem assemble_system(const LevyModel &model, const TruncatedDomain &dom, const PayoffModifier &mod,
                                       double r, const KillingRateSpec &kappa, const FourierOptions &opt = {}) {
    AssembledSystem s;
    s.domain = dom;
    s.mass = assemble_mass(dom);
    auto st = assemble_stiffness(model, dom, opt);
    s.stiffness = std::move(st.matrix);
    s.stiffness_local_exact = st.local_exact;
    s.stiffness_error = st.quadrature_error;
    s.killing = assemble_killing(kappa, dom);
    s.rate = r;
    auto L = assemble_load(mod, model, r, kappa, dom, opt);
    s.load = std::move(L.values);
    s.load_error = L.quadrature_error;
    return s;
}

}  // namespace fkpide

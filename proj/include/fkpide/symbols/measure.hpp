#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fkpide/core.hpp"
#include "fkpide/numerics/quadrature.hpp"

namespace fkpide {

/// Truncation function h used to compensate small jumps.
enum class Truncation {
    UnitBall,  // h(x) = x 1{|x| <= 1}
    Full,      // h(x) = x
    Zero,      // h(x) = 0
};

inline std::string to_string(Truncation t) {
    switch (t) {
        case Truncation::UnitBall: return "unit_ball";
        case Truncation::Full: return "full";
        case Truncation::Zero: return "zero";
    }
    return "?";
}

inline Truncation truncation_from_string(const std::string &s) {
    if (s == "unit_ball") return Truncation::UnitBall;
    if (s == "full") return Truncation::Full;
    if (s == "zero") return Truncation::Zero;
    throw ConfigError("unknown truncation '" + s + "'");
}

struct NoJumps {};

/// Tempered stable density C+ e^{-M x} x^{-1-Y+} on x > 0 and
/// C- e^{-G|x|} |x|^{-1-Y-} on x < 0.
struct CgmyMeasure {
    double c_minus = 0, c_plus = 0, G = 1, M = 1, y_minus = 0.5, y_plus = 0.5;
};

/// Jump part of a normal inverse Gaussian process. `beta` carries the skew
/// sign of the symbol, so the density is proportional to e^{-<beta, x>}.
struct NigMeasure {
    double alpha = 1, delta = 1;
    Vec beta;
    Mat shape;  // positive definite, the Delta of the family
};

/// Compound Poisson with N(mean, stddev^2) jump sizes.
struct CompoundPoissonMeasure {
    double intensity = 0, mean = 0, stddev = 0;
};

/// Arbitrary one-dimensional Levy density. `singularity` is a with
/// f(x) ~ |x|^{-1-a} near 0; the tail rates bound f by e^{-rate |x|}.
struct UserDensity {
    std::function<double(double)> f;
    double singularity = 1.0;
    double left_rate = 0.0;
    double right_rate = 0.0;
    std::string label = "user";
};

using LevyMeasure = std::variant<NoJumps, CgmyMeasure, NigMeasure, CompoundPoissonMeasure, UserDensity>;

/// Open interval of admissible imaginary parts, per coordinate.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool contains(double v) const { return v > lo && v < hi; }
    Interval intersect(const Interval &o) const { return {std::max(lo, o.lo), std::min(hi, o.hi)}; }
    bool empty() const { return !(lo < hi); }
};

namespace measure {

// e^w - 1 - w without cancellation for small w.
inline Complex expm1_minus_linear(Complex w) {
    if (std::abs(w) < 0.2) {
        Complex term = w * w / 2.0, s = term;
        for (int k = 3; k < 20; ++k) {
            term *= w / double(k);
            s += term;
            if (std::abs(term) < 1e-18 * std::abs(s)) break;
        }
        return s;
    }
    return std::exp(w) - 1.0 - w;
}

inline int dim(const LevyMeasure &m) {
    if (auto *n = std::get_if<NigMeasure>(&m)) return static_cast<int>(n->beta.size());
    return 1;
}

inline bool has_jumps(const LevyMeasure &m) { return !std::holds_alternative<NoJumps>(m); }

inline void validate(const LevyMeasure &m) {
    std::visit(
        [](const auto &v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, CgmyMeasure>) {
                require(v.c_minus >= 0 && v.c_plus >= 0, "CGMY: C- and C+ must be nonnegative");
                require(v.c_minus + v.c_plus > 0, "CGMY: C- + C+ must be positive");
                require(v.G > 0 && v.M > 0, "CGMY: G and M must be positive");
                require(v.y_minus < 2 && v.y_plus < 2, "CGMY: Y- and Y+ must be below 2");
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                const auto d = v.beta.size();
                require(d >= 1, "NIG: empty beta");
                require(v.shape.rows() == static_cast<Eigen::Index>(d) && v.shape.cols() == static_cast<Eigen::Index>(d),
                        "NIG: shape matrix dimension mismatch");
                require(v.alpha >= 0 && v.delta >= 0, "NIG: alpha and delta must be nonnegative");
                require((v.shape - v.shape.transpose()).norm() <= 1e-12 * (1 + v.shape.norm()),
                        "NIG: shape matrix must be symmetric");
                Eigen::SelfAdjointEigenSolver<Mat> es(v.shape);
                require(es.eigenvalues().minCoeff() > 0, "NIG: shape matrix must be positive definite");
                require(v.alpha * v.alpha > v.beta.dot(v.shape * v.beta), "NIG: alpha^2 must exceed <beta, Delta beta>");
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                require(v.intensity >= 0 && v.stddev >= 0, "compound Poisson: negative intensity or stddev");
            } else if constexpr (std::is_same_v<T, UserDensity>) {
                require(static_cast<bool>(v.f), "user density: missing function");
                require(v.singularity < 2, "user density: singularity exponent must be below 2");
                require(v.left_rate >= 0 && v.right_rate >= 0, "user density: negative tail rate");
            }
        },
        m);
}

/// Levy density at x != 0 (d = 1).
inline double density(const LevyMeasure &m, double x) {
    return std::visit(
        [x](const auto &v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                if (x > 0) return v.c_plus * std::exp(-v.M * x) * std::pow(x, -1 - v.y_plus);
                if (x < 0) return v.c_minus * std::exp(v.G * x) * std::pow(-x, -1 - v.y_minus);
                return std::numeric_limits<double>::infinity();
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                require(v.beta.size() == 1, "NIG density is only available for d = 1");
                const double ax = std::abs(x);
                // A scalar shape rescales the jump axis: alpha -> alpha / sqrt(Delta).
                const double a = v.alpha / std::sqrt(v.shape(0, 0));
                const double y = a * ax;
                if (y > 500) {
                    // K1(y) e^y asymptotic; keeps the tilted tail free of inf * 0
                    const double k1s = std::sqrt(kPi / (2 * y)) * (1 + 0.375 / y - 0.1171875 / (y * y));
                    return v.delta * v.alpha / (kPi * ax) * k1s * std::exp(-v.beta(0) * x - y);
                }
                return v.delta * v.alpha / (kPi * ax) * std::exp(-v.beta(0) * x) * std::cyl_bessel_k(1.0, y);
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                if (v.stddev <= 0) return 0.0;
                const double u = (x - v.mean) / v.stddev;
                return v.intensity * std::exp(-0.5 * u * u) / (v.stddev * std::sqrt(2 * kPi));
            } else {
                return v.f(x);
            }
        },
        m);
}

/// Admissible imaginary parts of z for the jump part (d = 1 intervals,
/// per coordinate for NIG with the other coordinates at zero).
inline std::vector<Interval> strip(const LevyMeasure &m) {
    return std::visit(
        [](const auto &v) -> std::vector<Interval> {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps> || std::is_same_v<T, CompoundPoissonMeasure>) {
                return {Interval{}};
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                Interval iv;
                if (v.c_minus > 0) iv.lo = -v.G;
                if (v.c_plus > 0) iv.hi = v.M;
                return {iv};
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                // alpha^2 > (beta_j - v)^2 Delta_jj along coordinate j, others at beta.
                std::vector<Interval> out;
                for (Eigen::Index j = 0; j < v.beta.size(); ++j) {
                    // Solve alpha^2 > <beta - v e_j, Delta (beta - v e_j)> for v.
                    const double a = v.shape(j, j);
                    const double b = -2.0 * (v.shape * v.beta)(j);
                    const double c = v.beta.dot(v.shape * v.beta) - v.alpha * v.alpha;
                    const double disc = std::sqrt(std::max(0.0, b * b - 4 * a * c));
                    out.push_back({(-b - disc) / (2 * a), (-b + disc) / (2 * a)});
                }
                return out;
            } else {
                Interval iv;
                iv.lo = -v.left_rate;
                iv.hi = v.right_rate;
                return {iv};
            }
        },
        m);
}

/// Exact weight test for NIG (ellipsoid), interval test otherwise.
/// `v` is the imaginary part of the argument.
inline bool in_strip(const LevyMeasure &m, const Vec &v) {
    if (auto *n = std::get_if<NigMeasure>(&m)) {
        const Vec w = n->beta - v;
        return n->alpha * n->alpha > w.dot(n->shape * w);
    }
    const auto s = strip(m);
    for (Eigen::Index j = 0; j < v.size(); ++j)
        if (!s[std::min<std::size_t>(j, s.size() - 1)].contains(v(j))) return false;
    return true;
}

namespace detail {

// C Gamma(-Y) ((L + i s z)^Y - L^Y - i s z Y L^{Y-1}), the tempered stable
// Levy-Khinchine integral of one tail (s = +1 right tail with L = M,
// s = -1 left tail with L = G), with Y = 0 and Y = 1 as limits.
inline Complex tempered_tail(double C, double L, double Y, Complex w) {
    if (C == 0.0) return 0.0;
    const Complex u = L + w;
    if (std::abs(Y - 1.0) < 1e-12) return C * (u * std::log(u / L) - w);
    if (std::abs(Y) < 1e-12) return C * (-std::log(u / L) + w / L);
    return C * std::tgamma(-Y) * (std::pow(u, Y) - std::pow(L, Y) - w * Y * std::pow(L, Y - 1));
}

// C Gamma(1-Y) ((L-eta)^{Y-1} - L^{Y-1}) = C int_0^inf (e^{eta y}-1) y^{-Y} e^{-L y} dy.
inline double tempered_shift_moment(double C, double L, double Y, double eta) {
    if (C == 0.0 || eta == 0.0) return 0.0;
    if (std::abs(Y - 1.0) < 1e-12) return C * (std::log(L) - std::log(L - eta));
    return C * std::tgamma(1 - Y) * (std::pow(L - eta, Y - 1) - std::pow(L, Y - 1));
}

// Quadrature of -int (e^{-i z y} - 1 + i z y) f(y) dy over one half-line.
// sgn = +1 integrates y > 0, sgn = -1 integrates y < 0; `rate` is the
// exponential decay rate of f on that side.
template <class Density>
Complex lk_half_line(const Density &f, Complex z, int sgn, double singularity, double rate, double tol) {
    auto integrand = [&](double u) -> Complex {
        const double y = sgn * u;
        const double fy = f(y);
        if (fy == 0.0) return 0.0;
        return expm1_minus_linear(-kI * z * y) * fy;
    };
    // Near zero the integrand is ~ u^{1-a}; x = u^p with p >= 2 keeps it smooth.
    const double p = std::max(2.0, 2.0 / std::max(0.25, 2.0 - singularity));
    const double eff = std::min(rate, rate - sgn * z.imag());
    const double scale = eff > 0 ? std::min(1.0 / eff, 50.0) : 1.0;
    auto inner = quad::adaptive_singular_at_zero(integrand, 1.0, p, tol, tol, 20000);
    auto outer = quad::adaptive_to_infinity(integrand, 1.0, scale, tol, tol, 20000);
    return -(inner.value + outer.value);
}

}  // namespace detail

/// Levy-Khinchine integral -int (e^{-i z y} - 1 + i z y) F(dy) by adaptive
/// quadrature of the density (d = 1). Used as the independent route for
/// parametric families and as the only route for user densities.
inline Complex jump_full_quadrature(const LevyMeasure &m, Complex z, double tol = 1e-13) {
    if (!has_jumps(m)) return 0.0;
    double sing = 0.0;
    if (auto *c = std::get_if<CgmyMeasure>(&m)) sing = std::max(c->y_minus, c->y_plus);
    else if (auto *u = std::get_if<UserDensity>(&m)) sing = u->singularity;
    else if (std::holds_alternative<NigMeasure>(m)) sing = 1.0;
    require(dim(m) == 1, "quadrature symbol route is one-dimensional");
    const Interval s = strip(m)[0];
    const double lrate = std::isfinite(s.lo) ? -s.lo : 1.0;
    const double rrate = std::isfinite(s.hi) ? s.hi : 1.0;
    auto f = [&](double y) { return density(m, y); };
    return detail::lk_half_line(f, z, +1, sing, rrate, tol) + detail::lk_half_line(f, z, -1, sing, lrate, tol);
}

/// Closed-form jump part with full truncation, J(z) = -int (e^{-i<z,y>} - 1 + i<z,y>) F(dy).
/// Valid on the strip and, for the parametric families, its analytic
/// continuation to Re z > 0 (d = 1).
inline Complex jump_full(const LevyMeasure &m, const CVec &z) {
    return std::visit(
        [&z, &m](const auto &v) -> Complex {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                const Complex w = kI * z(0);
                return -(detail::tempered_tail(v.c_plus, v.M, v.y_plus, w) +
                         detail::tempered_tail(v.c_minus, v.G, v.y_minus, -w));
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                const CVec bz = v.beta.template cast<Complex>() + kI * z;
                const Complex q = (bz.transpose() * v.shape.template cast<Complex>() * bz)(0, 0);
                const double gamma = std::sqrt(v.alpha * v.alpha - v.beta.dot(v.shape * v.beta));
                const Complex lin = kI * (z.transpose() * (v.shape * v.beta).template cast<Complex>())(0, 0);
                return -v.delta * (gamma - std::sqrt(v.alpha * v.alpha - q)) + v.delta * lin / gamma;
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                const Complex e = -kI * z(0) * v.mean - 0.5 * z(0) * z(0) * v.stddev * v.stddev;
                return -v.intensity * (std::exp(e) - 1.0 + kI * z(0) * v.mean);
            } else {
                return jump_full_quadrature(m, z(0));
            }
        },
        m);
}

inline bool continuable(const LevyMeasure &m) { return !std::holds_alternative<UserDensity>(m); }

/// Frequency beyond which jump_full_far may replace jump_full on Re z >= it.
/// Only the Gaussian-jump compound Poisson needs this: its continuation grows
/// like a Gaussian off the real axis, while the far form drops the part that
/// is already below 1e-17 on the real axis.
inline double far_frequency(const LevyMeasure &m) {
    if (const auto *cp = std::get_if<CompoundPoissonMeasure>(&m))
        return cp->stddev > 0 ? 9.0 / cp->stddev : std::numeric_limits<double>::infinity();
    return 0.0;
}

/// Jump part for contour deformation at large |Re z| (d = 1).
inline Complex jump_full_far(const LevyMeasure &m, Complex z) {
    if (const auto *cp = std::get_if<CompoundPoissonMeasure>(&m)) return -cp->intensity * (kI * z * cp->mean - 1.0);
    return jump_full(m, cvec1(z));
}

/// int (y - h(y)) F(dy): drift correction between full and `h` truncation (d = 1).
inline double truncation_gap(const LevyMeasure &m, Truncation h) {
    if (!has_jumps(m) || h == Truncation::Full) return 0.0;
    if (auto *c = std::get_if<CompoundPoissonMeasure>(&m)) {
        if (h == Truncation::Zero) return c->intensity * c->mean;
    }
    if (auto *c = std::get_if<CgmyMeasure>(&m); c && h == Truncation::Zero) {
        require(std::max(c->y_minus, c->y_plus) < 1, "zero truncation needs finite variation jumps (Y < 1)");
        double s = 0;
        if (c->c_plus > 0) s += c->c_plus * std::tgamma(1 - c->y_plus) * std::pow(c->M, c->y_plus - 1);
        if (c->c_minus > 0) s -= c->c_minus * std::tgamma(1 - c->y_minus) * std::pow(c->G, c->y_minus - 1);
        return s;
    }
    require(dim(m) == 1, "truncation conversion is one-dimensional");
    auto yf = [&](double y) { return y * density(m, y); };
    double scale_r = 1.0, scale_l = 1.0;
    if (auto *c = std::get_if<CgmyMeasure>(&m)) {
        scale_r = std::min(1.0 / c->M, 50.0);
        scale_l = std::min(1.0 / c->G, 50.0);
    }
    auto right = quad::adaptive_to_infinity(yf, 1.0, scale_r, 1e-14, 1e-13, 20000);
    auto left = quad::adaptive_to_infinity([&](double u) { return yf(-u); }, 1.0, scale_l, 1e-14, 1e-13, 20000);
    double out = right.value + left.value;
    if (h == Truncation::Zero) {
        double sing = 1.0;
        if (auto *u = std::get_if<UserDensity>(&m)) sing = u->singularity;
        require(sing < 1, "zero truncation needs finite variation jumps");
        auto r0 = quad::adaptive_singular_at_zero(yf, 1.0, 4.0, 1e-14, 1e-13, 20000);
        auto l0 = quad::adaptive_singular_at_zero([&](double u) { return yf(-u); }, 1.0, 4.0, 1e-14, 1e-13, 20000);
        out += r0.value + l0.value;
    }
    return out;
}

/// int (e^{<eta,y>} - 1) y F(dy) (vector for NIG).
inline Vec shift_moment_full(const LevyMeasure &m, const Vec &eta) {
    return std::visit(
        [&](const auto &v) -> Vec {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                return Vec::Zero(eta.size());
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                const double e = eta(0);
                return vec1(detail::tempered_shift_moment(v.c_plus, v.M, v.y_plus, e) -
                            detail::tempered_shift_moment(v.c_minus, v.G, v.y_minus, -e));
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                // Mean of the jump part: -delta Delta beta / gamma; shifting maps beta -> beta - eta.
                auto mean = [&](const Vec &b) {
                    const double g = std::sqrt(v.alpha * v.alpha - b.dot(v.shape * b));
                    return Vec(-v.delta * (v.shape * b) / g);
                };
                const Vec nb = v.beta - eta;
                // Mean of a NIG jump part equals the drift compensation plus the
                // first moment, so the difference of means is the required integral.
                return Vec(mean(nb) - mean(v.beta));
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                const double e = eta(0);
                const double s2 = v.stddev * v.stddev;
                const double scale = std::exp(e * v.mean + 0.5 * e * e * s2);
                return vec1(v.intensity * (scale * (v.mean + e * s2) - v.mean));
            } else {
                const double e = eta(0);
                auto g = [&](double y) { return std::expm1(e * y) * y * v.f(y); };
                auto r0 = quad::adaptive_singular_at_zero(g, 1.0, 3.0, 1e-14, 1e-13, 20000);
                auto l0 = quad::adaptive_singular_at_zero([&](double u) { return g(-u); }, 1.0, 3.0, 1e-14, 1e-13, 20000);
                const double sr = v.right_rate - e > 0 ? 1.0 / (v.right_rate - e) : 1.0;
                const double sl = v.left_rate + e > 0 ? 1.0 / (v.left_rate + e) : 1.0;
                auto r1 = quad::adaptive_to_infinity(g, 1.0, std::min(sr, 50.0), 1e-14, 1e-13, 20000);
                auto l1 = quad::adaptive_to_infinity([&](double u) { return g(-u); }, 1.0, std::min(sl, 50.0), 1e-14,
                                                     1e-13, 20000);
                return vec1(r0.value + l0.value + r1.value + l1.value);
            }
        },
        m);
}

/// int (e^{eta y} - 1)(y - h(y)) F(dy), d = 1.
inline double shift_truncation_gap(const LevyMeasure &m, Truncation h, double eta) {
    if (!has_jumps(m) || h == Truncation::Full || eta == 0.0) return 0.0;
    if (h == Truncation::Zero) return shift_moment_full(m, vec1(eta))(0);
    auto g = [&](double y) { return std::expm1(eta * y) * y * density(m, y); };
    double sr = 1.0, sl = 1.0;
    if (auto *c = std::get_if<CgmyMeasure>(&m)) {
        sr = std::min(1.0 / (c->M - eta), 50.0);
        sl = std::min(1.0 / (c->G + eta), 50.0);
    }
    auto r = quad::adaptive_to_infinity(g, 1.0, sr, 1e-14, 1e-13, 20000);
    auto l = quad::adaptive_to_infinity([&](double u) { return g(-u); }, 1.0, sl, 1e-14, 1e-13, 20000);
    return r.value + l.value;
}

/// Exponentially tilted measure e^{<eta,y>} F(dy).
inline LevyMeasure tilt(const LevyMeasure &m, const Vec &eta) {
    return std::visit(
        [&](const auto &v) -> LevyMeasure {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                return v;
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                CgmyMeasure c = v;
                c.M = v.M - eta(0);
                c.G = v.G + eta(0);
                return c;
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                NigMeasure n = v;
                n.beta = v.beta - eta;
                return n;
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                CompoundPoissonMeasure c = v;
                const double e = eta(0), s2 = v.stddev * v.stddev;
                c.intensity = v.intensity * std::exp(e * v.mean + 0.5 * e * e * s2);
                c.mean = v.mean + e * s2;
                return c;
            } else {
                UserDensity u = v;
                const double e = eta(0);
                auto f = v.f;
                u.f = [f, e](double y) { return std::exp(e * y) * f(y); };
                u.right_rate = v.right_rate - e;
                u.left_rate = v.left_rate + e;
                u.label = v.label + "_tilted";
                return u;
            }
        },
        m);
}

/// Tail integral int_{|x|>1} e^{-<eta', x>} F(dx) (d = 1). Infinite when the
/// tail does not decay.
inline double tail_moment(const LevyMeasure &m, double eta) {
    if (!has_jumps(m)) return 0.0;
    const auto s = strip(m)[0];
    // e^{-eta x} F(dx) integrable on the tails iff -eta lies in the strip closure
    // interior; the strip is exactly the set of decay rates.
    if (!(s.contains(-eta))) return std::numeric_limits<double>::infinity();
    if (auto *c = std::get_if<CompoundPoissonMeasure>(&m); c && c->stddev == 0) {
        return std::abs(c->mean) > 1 ? c->intensity * std::exp(-eta * c->mean) : 0.0;
    }
    auto g = [&](double x) {
        const double f = density(m, x);
        return f == 0 ? 0.0 : std::exp(-eta * x) * f;  // underflowed tail, no inf * 0
    };
    double sr = 1.0, sl = 1.0;
    if (std::isfinite(s.hi)) sr = std::min(1.0 / (s.hi + eta), 50.0);
    if (std::isfinite(s.lo)) sl = std::min(1.0 / (-s.lo - eta), 50.0);
    auto r = quad::adaptive_to_infinity(g, 1.0, sr, 1e-14, 1e-10, 20000);
    auto l = quad::adaptive_to_infinity([&](double u) { return g(-u); }, 1.0, sl, 1e-14, 1e-10, 20000);
    const double v = r.value + l.value;
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

/// Sobolev index implied by the small-jump singularity (0 for finite activity).
inline double activity_index(const LevyMeasure &m) {
    return std::visit(
        [](const auto &v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, CgmyMeasure>) {
                double a = 0;
                if (v.c_plus > 0) a = std::max(a, v.y_plus);
                if (v.c_minus > 0) a = std::max(a, v.y_minus);
                return a;
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                return v.delta > 0 ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, UserDensity>) {
                return std::max(0.0, v.singularity);
            } else {
                return 0.0;
            }
        },
        m);
}

}  // namespace measure
}  // namespace fkpide

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <queue>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fkpide/core.hpp"

namespace fkpide::quad {

/// Nodes and weights of a fixed rule on a reference interval.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline Rule compute_gauss_legendre(int n) {
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    return r;
}

// Golub-Welsch on the Laguerre Jacobi matrix.
inline Rule compute_gauss_laguerre(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        J(i, i) = 2.0 * i + 1.0;
        if (i + 1 < n) {
            J(i, i + 1) = i + 1.0;
            J(i + 1, i) = i + 1.0;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        r.weights[i] = v0 * v0;
    }
    return r;
}

}  // namespace detail

/// Gauss-Legendre rule on [-1, 1]; cached per order.
inline const Rule &gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, Rule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
    return it->second;
}

/// Gauss-Laguerre rule for weight e^{-x} on [0, inf); cached per order.
inline const Rule &gauss_laguerre(int n) {
    static std::mutex mu;
    static std::map<int, Rule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_laguerre(n)).first;
    return it->second;
}

/// Fixed-order Gauss-Legendre on [a, b].
template <class F>
auto fixed_gl(F &&f, double a, double b, int n = 20) {
    const Rule &r = gauss_legendre(n);
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    using R = std::decay_t<decltype(f(a))>;
    R s{};
    for (int i = 0; i < n; ++i) s += r.weights[i] * f(c + h * r.nodes[i]);
    return s * h;
}

template <class R>
struct Result {
    R value{};
    double error = 0.0;
    int evaluations = 0;
    bool converged = true;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
auto gk15(F &f, double a, double b, double &err) {
    using R = std::decay_t<decltype(f(a))>;
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const R fc = f(c);
    R rk = fc * kWgk[7];
    R rg = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const R f1 = f(c - dx);
        const R f2 = f(c + dx);
        rk += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) rg += kWg[j / 2] * (f1 + f2);
    }
    err = std::abs(h * (rk - rg));
    return R(rk * h);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) with global bisection. `breaks` are interior
/// points where the integrand is known to be non-smooth.
template <class F>
auto adaptive(F &&f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-12,
              int max_intervals = 4000, const std::vector<double> &breaks = {}) {
    using R = std::decay_t<decltype(f(a))>;
    struct Seg {
        double a, b;
        R v;
        double e;
        bool operator<(const Seg &o) const { return e < o.e; }
    };
    std::vector<double> pts{a};
    for (double p : breaks)
        if (p > a && p < b) pts.push_back(p);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());

    std::priority_queue<Seg> pq;
    R total{};
    double err_total = 0.0;
    int evals = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1] <= pts[i]) continue;
        double e = 0.0;
        R v = detail::gk15(f, pts[i], pts[i + 1], e);
        evals += 15;
        pq.push({pts[i], pts[i + 1], v, e});
        total += v;
        err_total += e;
    }
    int count = static_cast<int>(pq.size());
    while (!pq.empty() && err_total > std::max(abs_tol, rel_tol * std::abs(total)) &&
           count < max_intervals) {
        Seg s = pq.top();
        pq.pop();
        const double m = 0.5 * (s.a + s.b);
        if (!(m > s.a && m < s.b)) {
            pq.push(s);
            break;
        }
        double e1 = 0.0, e2 = 0.0;
        R v1 = detail::gk15(f, s.a, m, e1);
        R v2 = detail::gk15(f, m, s.b, e2);
        evals += 30;
        total += v1 + v2 - s.v;
        err_total += e1 + e2 - s.e;
        pq.push({s.a, m, v1, e1});
        pq.push({m, s.b, v2, e2});
        ++count;
    }
    // Re-sum to remove drift from incremental updates.
    R sum{};
    double esum = 0.0;
    while (!pq.empty()) {
        sum += pq.top().v;
        esum += pq.top().e;
        pq.pop();
    }
    Result<R> res;
    res.value = sum;
    res.error = esum;
    res.evaluations = evals;
    res.converged = esum <= std::max(abs_tol, rel_tol * std::abs(sum)) * 1.0001;
    return res;
}

/// Integral over [a, inf) through x = a + s t/(1-t). `scale` sets where the
/// mass of the integrand lives.
template <class F>
auto adaptive_to_infinity(F &&f, double a, double scale = 1.0, double abs_tol = 1e-12,
                          double rel_tol = 1e-12, int max_intervals = 4000) {
    using R = std::decay_t<decltype(f(a))>;
    auto g = [&](double t) -> R {
        if (t >= 1.0) return R{};
        const double om = 1.0 - t;
        const double x = a + scale * t / om;
        return f(x) * (scale / (om * om));
    };
    return adaptive(g, 0.0, 1.0, abs_tol, rel_tol, max_intervals);
}

/// Integral over (0, b] of an integrand with an integrable power singularity
/// at 0, through x = b u^p which flattens |x|^{-q} for q < 1 when p >= 1/(1-q).
template <class F>
auto adaptive_singular_at_zero(F &&f, double b, double power, double abs_tol = 1e-12,
                               double rel_tol = 1e-12, int max_intervals = 4000) {
    using R = std::decay_t<decltype(f(b))>;
    auto g = [&](double u) -> R {
        if (u <= 0.0) return R{};
        const double x = b * std::pow(u, power);
        return f(x) * (b * power * std::pow(u, power - 1.0));
    };
    return adaptive(g, 0.0, 1.0, abs_tol, rel_tol, max_intervals);
}

}  // namespace fkpide::quad

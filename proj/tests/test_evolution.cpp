#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fkpide/evolution.hpp"
#include "oracles.hpp"

using namespace fkpide;

namespace {

constexpr double kC = 0.01560, kG = 0.0767, kM = 7.55, kY = 1.2996;

// Black-Scholes in log price: u(T, log S) is the call price.
PideProblem black_scholes(int n, double sigma = 0.2, double r = 0.03, double K = 100.0) {
    PideProblem p;
    p.model = make_brownian(sigma, r - 0.5 * sigma * sigma);
    p.domain = align_domain(build_domain(std::log(K) - 5, std::log(K) + 5, n), std::log(K));
    p.modifier = call_payoff_transform(1.0, K, -2.0);
    p.rate = r;
    return p;
}

double mass_norm(const Vec &v, const Tridiagonal &M) { return std::sqrt(v.dot(M * v)); }

}  // namespace

TEST(TimeMesh, Construction) {
    const auto u = TimeMesh::uniform(1.0, 8);
    EXPECT_NO_THROW(u.validate());
    EXPECT_NEAR(u.times().back(), 1.0, 1e-15);
    const auto g = TimeMesh::graded(2.0, 10, 1.3);
    EXPECT_NO_THROW(g.validate());
    EXPECT_LT(g.steps.front(), g.steps.back());
    const auto a = TimeMesh::aligned(1.0, 10, {0.25, 0.7});
    const auto t = a.times();
    EXPECT_TRUE(std::any_of(t.begin(), t.end(), [](double x) { return std::abs(x - 0.25) < 1e-14; }));
    EXPECT_TRUE(std::any_of(t.begin(), t.end(), [](double x) { return std::abs(x - 0.7) < 1e-14; }));
    TimeMesh bad{1.0, {0.5, 0.6}, 0};
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Projection, ReproducesPayoffAndHats) {
    const auto d = build_domain(-1, 1, 11);
    const auto mod = call_payoff_transform(1.0, 1.0, -2.0);
    const Vec a0 = project_initial([&](double x) { return mod(x) - mod(x); }, d);
    EXPECT_EQ(a0.cwiseAbs().maxCoeff(), 0.0);
    const Vec ak = project_initial([&](double x) { return d.hat(4, x); }, d, {d.node(4)});
    Vec e = Vec::Zero(d.n);
    e(4) = 1.0;
    EXPECT_LT((ak - e).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Projection, StepAtNode) {
    // h = 1, nodes 1..5, data 1_{x > 3}
    const auto d = build_domain(0, 6, 5);
    const Vec a = project_initial([](double x) { return x > 3 ? 1.0 : 0.0; }, d, {3.0});
    Mat M = Mat::Zero(5, 5);
    for (int i = 0; i < 5; ++i) {
        M(i, i) = 2.0 / 3;
        if (i + 1 < 5) M(i, i + 1) = M(i + 1, i) = 1.0 / 6;
    }
    Vec rhs(5);
    rhs << 0, 0, 0.5, 1, 1;
    const Vec ref = M.lu().solve(rhs);
    EXPECT_LT((a - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Evolution, ZeroSystemIsStationary) {
    const auto d = build_domain(-1, 1, 20);
    const auto sys = assemble_system(make_constant(0.0), d, zero_modifier(), 0.0, KillingRateSpec::none());
    const Vec a = Vec::LinSpaced(d.n, -1, 2);
    const auto s = solve_evolution(sys, TimeMesh::uniform(1.0, 10), a);
    EXPECT_LT((s.coefficients.back() - a).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Evolution, KillingDecay) {
    const double lambda = 1.5, T = 1.0;
    const auto d = build_domain(-1, 1, 20);
    const auto sys = assemble_system(make_constant(0.0), d, zero_modifier(), 0.0, KillingRateSpec::constant(lambda));
    const Vec a = Vec::Constant(d.n, 1.0);
    for (int steps : {20, 40}) {
        const auto s = solve_evolution(sys, TimeMesh::uniform(T, steps), a);
        const double err = (s.coefficients.back() - std::exp(-lambda * T) * a).cwiseAbs().maxCoeff();
        EXPECT_LT(err, 2e-3 * std::pow(20.0 / steps, 2)) << steps;
    }
}

TEST(Evolution, BlackScholesCall) {
    const auto p = black_scholes(1023);
    const auto s = solve_pide(p, TimeMesh::uniform(1.0, 256));
    for (double S0 : {60.0, 80.0, 100.0, 120.0, 140.0}) {
        const double ref = oracle::bs_call(S0, 100.0, 0.03, 0.2, 1.0);
        EXPECT_LT(std::abs(s.final_value(std::log(S0)) - ref), 1e-3 * ref + 3e-4) << S0;
    }
}

TEST(Evolution, DenseAndKrylovAgree) {
    auto p = black_scholes(300);
    p.model = make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03));
    p.modifier = call_payoff_transform(1.0, 100.0, -1.5);
    p.killing = KillingRateSpec::threshold(10.0, std::log(100.0));
    const auto mesh = TimeMesh::uniform(1.0, 20);
    EvolutionOptions dense, krylov;
    krylov.dense_limit = 10;
    krylov.tolerance = 1e-12;
    const auto a = solve_pide(p, mesh, dense), b = solve_pide(p, mesh, krylov);
    EXPECT_LT((a.coefficients.back() - b.coefficients.back()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Evaluate, InterpolationConventions) {
    const auto d = build_domain(0, 4, 3);
    SolutionSurface s;
    s.domain = d;
    s.modifier = call_payoff_transform(1.0, 1.0, -2.0);
    s.times = {0.0, 1.0};
    Vec c0(3), c1(3);
    c0 << 1, 2, 3;
    c1 << 3, 4, 5;
    s.coefficients = {c0, c1};
    EXPECT_DOUBLE_EQ(s.evaluate(1.0, 2.0), 4.0 + s.modifier(2.0));
    EXPECT_DOUBLE_EQ(s.evaluate(0.5, 2.0), 3.0 + s.modifier(2.0));
    EXPECT_DOUBLE_EQ(s.evaluate(1.0, 1.5), 0.5 * (3.0 + s.modifier(1.0)) + 0.5 * (4.0 + s.modifier(2.0)));
    EXPECT_DOUBLE_EQ(s.evaluate(1.0, 5.0), s.modifier(5.0));
    EXPECT_DOUBLE_EQ(s.evaluate(1.0, -1.0), 0.0);
    EXPECT_THROW(s.evaluate(2.0, 0.0), DomainError);
    std::ostringstream os;
    s.write_csv(os);
    EXPECT_NE(os.str().find("t,x,S,u\n"), std::string::npos);
}

TEST(Richardson, TemporalOrderTwo) {
    const auto p = black_scholes(256);
    const double x = std::log(100.0);
    const auto est = richardson_order([&](int k) { return solve_pide(p, TimeMesh::uniform(1.0, 8 << k)).final_value(x); },
                                      4);
    EXPECT_TRUE(est.conclusive);
    EXPECT_NEAR(est.order, 2.0, 0.3);
}

TEST(Richardson, SpatialOrderAtLeastOne) {
    const double x = std::log(110.0);
    const double ref = oracle::bs_call(110.0, 100.0, 0.03, 0.2, 1.0);
    const auto est = richardson_order(
        [&](int k) { return solve_pide(black_scholes(63 << k), TimeMesh::uniform(1.0, 200)).final_value(x); }, 4, ref);
    EXPECT_TRUE(est.conclusive);
    EXPECT_GE(est.order, 1.0);
}

TEST(Richardson, IdentitySystemIsExact) {
    const auto est = richardson_order([](int) { return 0.25; }, 3, 0.25);
    EXPECT_TRUE(est.exact);
    const auto bad = richardson_order([](int k) { return k == 1 ? 1.0 : 0.0; }, 3, 0.0);
    EXPECT_FALSE(bad.conclusive);
}

TEST(Evolution, StableInMassNorm) {
    // no load, no killing: the M-norm never grows for theta >= 1/2
    const auto d = build_domain(-3, 3, 64);
    const auto model = make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03));
    const auto sys = assemble_system(model, d, zero_modifier(), 0.0, KillingRateSpec::none());
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N;
    for (double theta : {0.5, 1.0}) {
        EvolutionOptions opt;
        opt.theta = theta;
        for (int trial = 0; trial < 100; ++trial) {
            Vec a(d.n);
            for (int i = 0; i < d.n; ++i) a(i) = N(rng);
            const auto s = solve_evolution(sys, TimeMesh::uniform(1.0, 10, 0), a, opt);
            const double n0 = mass_norm(a, sys.mass);
            for (const auto &v : s.coefficients) EXPECT_LE(mass_norm(v, sys.mass), n0 * (1 + 1e-10));
        }
    }
}

TEST(Evolution, KillingMonotonicity) {
    PideProblem p;
    p.model = make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03));
    p.domain = build_domain(std::log(100.0) - 3, std::log(100.0) + 3, 256);
    p.modifier = call_payoff_transform(1.0, 100.0, -1.5);
    p.rate = 0.03;
    std::vector<Vec> prices;
    for (double lambda : {1.0, 10.0, 100.0}) {
        p.killing = KillingRateSpec::threshold(lambda, std::log(100.0));
        const auto s = solve_pide(p, TimeMesh::uniform(1.0, 50));
        prices.push_back(s.coefficients.back() + Vec::NullaryExpr(p.domain.n, [&](Eigen::Index j) {
                             return p.modifier(p.domain.node(j));
                         }));
    }
    EXPECT_LE((prices[1] - prices[0]).maxCoeff(), 1e-8);
    EXPECT_LE((prices[2] - prices[1]).maxCoeff(), 1e-8);
}

TEST(Domain, AlignPutsPointOnNode) {
    const auto d = align_domain(build_domain(-1.0, 1.3, 40), 0.123);
    const double s = (0.123 - d.R1) / d.h;
    EXPECT_NEAR(s, std::round(s), 1e-9);
    EXPECT_NEAR(d.R2 - d.R1, 2.3, 1e-12);
}

TEST(Evolution, SemigroupConsistencyCgmy) {
    // kappa = 0: the PIDE call price equals the damped Fourier valuation; the
    // strike sits on a node
    PideProblem p;
    p.model = make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03));
    p.domain = build_domain(std::log(100.0) - 5, std::log(100.0) + 5, 1023);
    p.modifier = call_payoff_transform(1.0, 100.0, -1.5);
    p.rate = 0.03;
    const auto s = solve_pide(p, TimeMesh::uniform(1.0, 128));
    const double eta = -1.5, K = 100.0;
    auto ghat = [&](double xi) {
        const oracle::cd z(eta, xi);
        return K * std::exp(z * std::log(K)) / (z * (z + 1.0));
    };
    auto symbol = [&](oracle::cd z) { return p.model(0.0, Complex(z)); };
    for (double S0 : {80.0, 100.0, 125.0}) {
        const double ref = oracle::fourier_value(symbol, ghat, eta, std::log(S0), 1.0, 0.03, 400.0, 8000);
        EXPECT_LT(std::abs(s.final_value(std::log(S0)) - ref), 5e-4 * ref + 3e-4) << S0;
    }
}

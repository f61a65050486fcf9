#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fkpide/applications.hpp"
#include "oracles.hpp"

using namespace fkpide;

namespace {

constexpr double kC = 0.01560, kG = 0.0767, kM = 7.55, kY = 1.2996;
constexpr double kInf = std::numeric_limits<double>::infinity();

LevyModel cgmy(double r) { return make_cgmy(kC, kG, kM, kY, DriftMode::martingale(r)); }

// Brownian part plus Gaussian jumps with the drift making e^{L} grow at rate r.
LevyModel jump_diffusion(double sigma, double r) {
    const auto jumps = make_compound_poisson(0.5, -0.1, 0.15);
    const auto bare = sum_symbols(make_brownian(sigma), jumps);
    // E e^{L_1} = exp(-A(i)) for the drift-free model
    const double drift = r + bare(0.0, kI).real();
    return sum_symbols(make_brownian(sigma, drift), jumps);
}

TruncatedDomain log_grid(double K, double half, int n) { return build_domain(std::log(K) - half, std::log(K) + half, n); }

ContractSpec contract(double r, double B, double lambda) {
    ContractSpec c;
    c.B = B;
    c.lambda = lambda;
    c.rate = RatePath::constant(r);
    return c;
}

}  // namespace

TEST(RatePath, PiecewiseConstant) {
    const RatePath r{{0.5, 1.5}, {0.01, 0.02, 0.04}};
    EXPECT_NO_THROW(r.validate());
    EXPECT_EQ(r(0.0), 0.01);
    EXPECT_EQ(r(0.5), 0.02);
    EXPECT_EQ(r(2.0), 0.04);
    EXPECT_NEAR(r.integral(0.0, 2.0), 0.005 + 0.02 + 0.02, 1e-15);
    EXPECT_NEAR(r.integral(0.7, 1.0), 0.006, 1e-15);
    EXPECT_THROW((RatePath{{1.0}, {0.1}}).validate(), DomainError);
}

TEST(RatePath, PideDiscountsPiecewise) {
    // no dynamics: the bond is exp(-int r)
    PideProblem p;
    p.model = make_constant(0.0);
    p.domain = build_domain(-1, 1, 20);
    p.initial = [](double) { return 1.0; };
    p.rate_path = RatePath{{0.4}, {0.05, 0.01}};
    const auto s = solve_pide(p, TimeMesh::aligned(1.0, 40, {0.6}));
    // swapped segments would give exp(-0.6 * 0.05 - 0.4 * 0.01), 8e-3 away
    EXPECT_NEAR(s.coefficients.back()(10) / s.coefficients.front()(10), std::exp(-0.4 * 0.05 - 0.6 * 0.01), 1e-7);
}

TEST(Domain, TwoPointAlignment) {
    const auto d = align_domain(log_grid(100, 5, 1023), std::log(100.0), std::log(70.0));
    for (double x : {std::log(100.0), std::log(70.0)}) {
        const double s = (x - d.R1) / d.h;
        EXPECT_NEAR(s, std::round(s), 1e-8);
    }
    EXPECT_NEAR(d.R2 - d.R1, 10.0, d.h);
}

TEST(EmployeeOption, ZeroLambdaIsTheCall) {
    const auto m = cgmy(0.03);
    const auto c = contract(0.03, 100, 0.0);
    const auto grid = log_grid(100, 4, 255);
    const auto mesh = TimeMesh::uniform(1.0, 32);
    const std::vector<double> probes{80, 100, 125};
    const auto e = price_employee_option(m, c, grid, mesh, probes);
    PideProblem p;
    p.model = m;
    p.domain = align_domain(grid, std::log(100.0), std::log(100.0));
    p.modifier = call_payoff_transform(1.0, 100.0, -1.5);
    p.rate = 0.03;
    const auto call = solve_pide(p, mesh);
    for (std::size_t k = 0; k < probes.size(); ++k) EXPECT_EQ(e.value[k], call.final_value(std::log(probes[k])));
}

TEST(EmployeeOption, ThresholdBelowDomainIsInactive) {
    const auto m = cgmy(0.03);
    const auto grid = log_grid(100, 3, 127);
    const auto mesh = TimeMesh::uniform(1.0, 16);
    const auto a = price_employee_option(m, contract(0.03, 100, 0.0), grid, mesh, {90, 110});
    const auto b = price_employee_option(m, contract(0.03, std::exp(grid.R1 - 0.5), 50.0), grid, mesh, {90, 110});
    EXPECT_EQ(a.value, b.value);
}

TEST(EmployeeOption, MonotoneInLambdaAtEveryNode) {
    const auto m = cgmy(0.03);
    const auto grid = log_grid(100, 4, 255);
    const auto mesh = TimeMesh::uniform(1.0, 32);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.1, 50.0);
    for (double B : {100.0, 70.0}) {
        double l1 = U(rng), l2 = U(rng);
        if (l1 > l2) std::swap(l1, l2);
        const auto a = price_employee_option(m, contract(0.03, B, l1), grid, mesh);
        const auto b = price_employee_option(m, contract(0.03, B, l2), grid, mesh);
        const auto &d = a.surface.domain;
        for (int j = 0; j < d.n; ++j)
            EXPECT_LE(b.surface.final_value(d.node(j)), a.surface.final_value(d.node(j)) + 1e-10) << B << " " << j;
    }
}

TEST(EmployeeOption, DifferencePeaksNearBarrier) {
    // the peak sits below B and approaches it as lambda grows
    const auto m = cgmy(0.0);
    const auto grid = log_grid(100, 5, 511);
    const auto mesh = TimeMesh::uniform(1.0, 64);
    for (double B : {100.0, 70.0}) {
        const auto call = price_employee_option(m, contract(0.0, B, 0.0), grid, mesh);
        double last = -kInf;
        for (double lambda : {1.0, 10.0, 100.0}) {
            const auto e = price_employee_option(m, contract(0.0, B, lambda), grid, mesh);
            const auto &d = e.surface.domain;
            int best = 0;
            double top = -kInf;
            for (int j = 0; j < d.n; ++j) {
                const double diff = call.surface.final_value(d.node(j)) - e.surface.final_value(d.node(j));
                if (diff > top) top = diff, best = j;
            }
            const double off = d.node(best) - std::log(B);
            EXPECT_LT(std::abs(off), 0.05) << B << " " << lambda;
            EXPECT_GE(off, last - 1e-12);
            last = off;
        }
    }
}

TEST(EmployeeOption, RejectsBadInputs) {
    const auto grid = log_grid(100, 3, 63);
    const auto mesh = TimeMesh::uniform(1.0, 8);
    EXPECT_THROW(price_employee_option(cgmy(0.05), contract(0.03, 100, 1.0), grid, mesh), DomainError);
    EXPECT_THROW(price_employee_option(make_compound_poisson(1.0, 0.0, 0.2), contract(0.0, 100, 1.0), grid, mesh),
                 ConditionError);
    ApplicationOptions heavy;
    heavy.eta = -8.0;  // beyond the right tail rate M
    EXPECT_THROW(price_employee_option(cgmy(0.03), contract(0.03, 100, 1.0), grid, mesh, {}, heavy), ConditionError);
    EXPECT_THROW(price_employee_option(cgmy(0.03), contract(0.03, 100, -1.0), grid, mesh), DomainError);
    EXPECT_THROW(price_employee_option(cgmy(0.03), contract(0.03, 100, 1.0), grid, TimeMesh::uniform(2.0, 8)),
                 DomainError);
}

TEST(EmployeeOption, MatchesMonteCarlo) {
    const double r = 0.03;
    const auto m = jump_diffusion(0.2, r);
    const auto c = contract(r, 95, 10.0);
    const auto pide = price_employee_option(m, c, log_grid(100, 4, 511), TimeMesh::uniform(1.0, 128), {100.0});
    McSettings s;
    s.paths = 40000;
    s.steps = 400;
    s.seed = 17;
    const auto mc = mc_employee_option(m, c, 100.0, s);
    const Json cfg{{"contract", c.to_json()}, {"model", m.to_json()}};
    const auto v = cross_validate(pide.value[0], cfg, mc, cfg, {3.0, 0.005, 0.0});
    EXPECT_TRUE(v.pass) << v.to_json().dump();
}

TEST(EmployeeOption, CustomPayoutMatchesCall) {
    auto c = contract(0.0, 100, 5.0);
    c.payout = "custom";
    c.custom = [](double S) { return std::max(S - 100.0, 0.0); };
    const auto grid = log_grid(100, 5, 511);
    const auto mesh = TimeMesh::uniform(1.0, 64);
    const auto a = price_employee_option(make_brownian(0.2, -0.02), c, grid, mesh, {80, 100});
    const auto b = price_employee_option(make_brownian(0.2, -0.02), contract(0.0, 100, 5.0), grid, mesh, {80, 100});
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(a.value[k], b.value[k], 2e-3 * b.value[k] + 1e-4);
}

TEST(DomainSplit, OrthantsPartitionSpace) {
    const auto s = DomainSplit::orthants(Vec::Zero(3), 0.2);
    ASSERT_EQ(s.signs.size(), 8u);
    for (const auto &w : s.weights) EXPECT_NEAR(w.norm(), 0.2, 1e-14);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 200; ++trial) {
        Vec x(3);
        for (int i = 0; i < 3; ++i) x(i) = trial % 10 == 0 ? 0.0 : N(rng);
        int hits = 0;
        for (std::size_t j = 0; j < s.signs.size(); ++j) hits += s.contains(j, x);
        EXPECT_EQ(hits, 1);
    }
}

TEST(Bond, ConstantRateDiscounts) {
    const double r0 = 0.05, T = 2.0;
    const auto sol = price_zero_coupon_bond(make_nig(3.0, 0.5, 0.6), ShortRate::constant(r0), T,
                                            build_domain(-8, 8, 1023), TimeMesh::uniform(T, 64));
    for (double x : {-1.0, -0.3, 0.0, 0.4, 1.0}) EXPECT_NEAR(sol.value(x), std::exp(-r0 * T), 1e-3 * std::exp(-r0 * T)) << x;
}

TEST(Bond, StateDependentRateMatchesMonteCarlo) {
    const double T = 1.0;
    ShortRate r;
    r.state = KillingRateSpec::threshold(0.08, 0.0);
    r.time = RatePath::constant(0.01);
    const auto m = make_brownian(0.3, 0.02);
    const auto sol = price_zero_coupon_bond(m, r, T, build_domain(-5, 5, 511), TimeMesh::uniform(T, 64));
    McSettings s;
    s.paths = 20000;
    s.steps = 400;
    s.seed = 4;
    for (double x : {-0.2, 0.0, 0.3}) {
        const auto e = mc_zero_coupon_bond(m, r, T, x, s);
        EXPECT_LT(std::abs(sol.value(x) - e.mean), 3 * e.stderr_ + 2e-4) << x;
    }
}

TEST(Bond, WeightRobustness) {
    const double T = 1.0;
    ShortRate r;
    r.state = KillingRateSpec::threshold(0.1, 0.0);
    const auto m = cgmy(0.0);
    ApplicationOptions a, b;
    a.epsilon = 0.05;
    b.epsilon = 0.025;
    const auto grid = build_domain(-6, 6, 511);
    const auto mesh = TimeMesh::uniform(T, 32);
    const auto sa = price_zero_coupon_bond(m, r, T, grid, mesh, a), sb = price_zero_coupon_bond(m, r, T, grid, mesh, b);
    for (double x : {-1.0, 0.0, 1.0}) EXPECT_LT(std::abs(sa.value(x) - sb.value(x)), a.tolerance(sa.value(x)));
    // the left tail rate G is below 0.1, so the default radius is inadmissible
    EXPECT_THROW(price_zero_coupon_bond(m, r, T, grid, mesh), ConditionError);
}

TEST(Occupation, TrivialCases) {
    const auto m = make_nig(2.0, 0.3, 0.7);
    const auto grid = build_domain(-6, 6, 255);
    const auto mesh = TimeMesh::uniform(1.0, 32);
    const auto none = occupation_laplace(m, {{0.0, kInf}}, 0.0, 1.0, grid, mesh);
    const auto all = occupation_laplace(m, {{-kInf, kInf}}, 0.8, 1.0, grid, mesh);
    for (double x : {-1.0, 0.0, 0.5, 2.0}) {
        EXPECT_NEAR(none.value(x), 1.0, 1e-6);
        EXPECT_NEAR(all.value(x), std::exp(-0.8), ApplicationOptions{}.tolerance(std::exp(-0.8)));
    }
}

TEST(Occupation, ArcsineLaw) {
    const auto m = make_brownian(1.0);
    const auto u = occupation_laplace(m, {{0.0, kInf}}, 1.0, 1.0, build_domain(-6, 6, 1023), TimeMesh::uniform(1.0, 128));
    const double ref = oracle::arcsine_laplace(1.0);
    EXPECT_NEAR(u.value(0.0), ref, 1e-3 * ref);
    McSettings s;
    s.paths = 20000;
    s.steps = 1000;
    s.seed = 9;
    const auto e = mc_occupation_laplace(m, {{0.0, kInf}}, 1.0, 1.0, 0.0, s);
    EXPECT_LT(std::abs(u.value(0.0) - e.mean), 3 * e.stderr_);
}

TEST(Occupation, BoundsAndContinuity) {
    const double gamma = 2.0;
    const auto u = occupation_laplace(cgmy(0.0), {{-0.5, 0.7}}, gamma, 1.0, build_domain(-5, 5, 511),
                                      TimeMesh::uniform(1.0, 64), ApplicationOptions{.epsilon = 0.05});
    const auto &d = u.domain();
    double prev = u.value(d.node(0)), jump = 0.0;
    for (int j = 0; j < d.n; ++j) {
        const double v = u.value(d.node(j));
        if (std::abs(d.node(j)) < 3) {
            EXPECT_GE(v, std::exp(-gamma) - 1e-4);
            EXPECT_LE(v, 1.0 + 1e-4);
        }
        jump = std::max(jump, std::abs(v - prev));
        prev = v;
    }
    // alpha > 1: Hoelder continuous, no jumps at the edges of D
    EXPECT_LT(jump, 20 * d.h);
}

TEST(Barrier, PenalizationLimitExtrapolation) {
    std::vector<double> lam{10, 100, 1000}, v;
    for (double l : lam) v.push_back(1.0 + 2.0 / std::sqrt(l));
    const auto [lim, p] = penalization_limit(lam, v);
    ASSERT_TRUE(lim && p);
    EXPECT_NEAR(*lim, 1.0, 1e-12);
    EXPECT_NEAR(*p, 0.5, 1e-12);
    EXPECT_FALSE(penalization_limit({1, 2, 5}, v).first);
}

TEST(Barrier, SweepIsMonotoneAndMatchesHardKilling) {
    const double r = 0.02, sigma = 0.25;
    const auto m = make_brownian(sigma, r - 0.5 * sigma * sigma);
    const auto c = contract(r, 80, 0.0);
    const IntervalSet D{{std::log(80.0), std::log(140.0)}};
    const std::vector<double> lambdas{10, 100, 1000, 10000};
    const std::vector<double> probes{90, 100, 110, 120};
    const auto grid = log_grid(100, 3, 767);
    const auto mesh = TimeMesh::uniform(1.0, 200);
    const auto sweep = barrier_penalization_sweep(m, c, D, lambdas, grid, mesh, probes);
    EXPECT_TRUE(sweep.monotone);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        double prev = sweep.plain.value[k];
        for (const auto &cv : sweep.curves) {
            EXPECT_LE(cv.value[k], prev + 1e-8);
            prev = cv.value[k];
        }
    }
    // lambda = 0 in the sweep is the plain call on the same grid
    const auto plain = price_employee_option(m, c, grid, mesh, probes);
    for (std::size_t k = 0; k < probes.size(); ++k) EXPECT_EQ(sweep.plain.value[k], plain.value[k]);

    McSettings s;
    s.paths = 40000;
    s.steps = 2000;
    s.seed = 21;
    const auto e = mc_barrier(m, c, D, 100.0, s);
    const double last = sweep.curves.back().at(100.0);
    const double gap = sweep.limit_proxy ? std::abs(last - *sweep.limit_proxy) : std::abs(last - sweep.curves[2].at(100.0));
    // discrete monitoring shifts the barriers by about 0.5826 sigma sqrt(dt)
    const double shift = 0.5826 * sigma * std::sqrt(1.0 / s.steps);
    const auto near = mc_barrier(m, c, {{std::log(80.0) + shift, std::log(140.0) - shift}}, 100.0, s);
    const double monitoring = std::abs(e.mean - near.mean);
    EXPECT_LT(std::abs(last - e.mean), 3 * e.stderr_ + gap + monitoring) << last << " " << e.mean << " " << gap;
}

TEST(Barrier, RejectsBadSweeps) {
    const auto grid = log_grid(100, 3, 63);
    const auto mesh = TimeMesh::uniform(1.0, 8);
    const auto m = make_brownian(0.2, -0.02);
    const IntervalSet D{{std::log(80.0), std::log(140.0)}};
    EXPECT_THROW(barrier_penalization_sweep(m, contract(0.0, 100, 0), D, {10, 5}, grid, mesh), DomainError);
    EXPECT_THROW(barrier_penalization_sweep(m, contract(0.0, 100, 0), D, {}, grid, mesh), DomainError);
    EXPECT_THROW(barrier_penalization_sweep(m, contract(0.0, 100, 0), {{1.0, 0.5}}, {1}, grid, mesh), DomainError);
}

namespace {

// Fourier-exact free evolution of g(x) = exp(-x^2 / (2 s^2)).
double free_evolution(const SchroedingerConfig &cfg, double s, double T, double x) {
    auto f = [&](double xi) {
        const double ghat = s * std::sqrt(2 * oracle::pi) * std::exp(-0.5 * s * s * xi * xi);
        return ghat * std::cos(xi * x) * std::exp(-T * cfg.kinetic_energy(xi) / cfg.hbar);
    };
    return oracle::composite(f, 0.0, 12.0 / s, 200) / oracle::pi;
}

double l2_distance(const SolutionSurface &u, const std::function<double(double)> &ref) {
    const auto &d = u.domain;
    double acc = 0.0;
    for (int j = 0; j <= d.n; ++j) {
        const double a = d.R1 + j * d.h;
        for (const auto &[t, w] : oracle::gl16()) {
            const double x = a + 0.5 * d.h * (1 + t);
            acc += 0.5 * d.h * w * std::pow(u.final_value(x) - ref(x), 2);
        }
    }
    return std::sqrt(acc);
}

}  // namespace

TEST(Schroedinger, KineticEnergyIsTheScaledSymbol) {
    const SchroedingerConfig cfg{1.3, 0.8, 0.7, {}};
    const auto m = cfg.model();
    for (double xi : {0.0, 0.5, 3.0, 40.0})
        EXPECT_NEAR(cfg.hbar * m(0.0, Complex(xi, 0)).real(), cfg.kinetic_energy(xi), 1e-12 * (1 + xi));
}

TEST(Schroedinger, FreeParticleMatchesFourier) {
    const SchroedingerConfig cfg{};
    const double s = 0.5, T = 1.0;
    auto g = [s](double x) { return std::exp(-0.5 * x * x / (s * s)); };
    const auto grid = build_domain(-12, 12, 1023);
    const auto mesh = TimeMesh::uniform(T, 128);
    const auto u = schroedinger_evolve(cfg, g, T, grid, mesh);
    EXPECT_LT(l2_distance(u, [&](double x) { return free_evolution(cfg, s, T, x); }), 1e-3);

    SchroedingerConfig with_v = cfg;
    const double v0 = 0.4;
    with_v.potential = KillingRateSpec::constant(v0);
    const auto w = schroedinger_evolve(with_v, g, T, grid, mesh);
    EXPECT_LT(l2_distance(w, [&](double x) { return std::exp(-v0 * T) * u.final_value(x); }), 1e-3);
}

TEST(Schroedinger, StepPotentialMatchesMonteCarlo) {
    SchroedingerConfig cfg{1.0, 1.0, 1.0, {}};
    cfg.potential.add(0.0, kInf, 1.5);
    auto g = [](double x) { return std::exp(-0.5 * x * x); };
    const auto u = schroedinger_evolve(cfg, g, 1.0, build_domain(-12, 12, 1023), TimeMesh::uniform(1.0, 128));
    McSettings s;
    s.paths = 20000;
    s.steps = 400;
    s.seed = 12;
    for (double x : {-0.5, 0.0, 0.5}) {
        const auto e = mc_schroedinger(cfg, g, 1.0, x, s);
        EXPECT_LT(std::abs(u.final_value(x) - e.mean), 3 * e.stderr_ + 2e-3) << x;
    }
}

TEST(Schroedinger, RejectsWeightViolation) {
    const SchroedingerConfig cfg{0.5, 1.0, 1.0, {}};
    auto g = [](double x) { return std::exp(-x * x); };
    EXPECT_THROW(schroedinger_evolve(cfg, g, 1.0, build_domain(-5, 5, 63), TimeMesh::uniform(1.0, 8), 0.6), DomainError);
    EXPECT_THROW((SchroedingerConfig{-1.0, 1.0, 1.0, {}}).validate(), DomainError);
}

TEST(CrossValidate, DeterministicCaseIsExact) {
    const double kappa = 0.7, T = 1.0;
    PideProblem p;
    p.model = make_constant(0.0);
    p.domain = build_domain(-1, 1, 20);
    p.initial = [](double) { return 1.0; };
    p.killing = KillingRateSpec::constant(kappa);
    const auto s = solve_pide(p, TimeMesh::uniform(T, 400));
    const auto b = mc::simulate(make_brownian(0.0), 0.0, T, 10, 100, 1);
    const auto e = estimate_feynman_kac(b, [](double) { return 1.0; }, KillingRateSpec::constant(kappa), 0.0);
    EXPECT_LT(e.stderr_, 1e-15);
    EXPECT_NEAR(e.mean, std::exp(-kappa * T), 1e-14);
    const auto v = cross_validate(s.final_value(0.0), Json{{"kappa", kappa}}, e, Json{{"kappa", kappa}}, {3.0, 0.0, 1e-6});
    EXPECT_TRUE(v.pass);
}

TEST(CrossValidate, BlackScholesCall) {
    const double r = 0.03, sigma = 0.2;
    const auto m = make_brownian(sigma, r - 0.5 * sigma * sigma);
    const auto c = contract(r, 100, 0.0);
    const auto pide = price_employee_option(m, c, log_grid(100, 5, 1023), TimeMesh::uniform(1.0, 128));
    EXPECT_NEAR(pide.value[0], oracle::bs_call(100, 100, r, sigma, 1.0), 1e-3 * pide.value[0]);
    McSettings s;
    s.paths = 100000;
    s.steps = 1;
    s.seed = 2;
    const auto e = mc_employee_option(m, c, 100.0, s);
    const Json cfg{{"contract", c.to_json()}, {"model", m.to_json()}};
    const auto v = cross_validate(pide.value[0], cfg, e, cfg, {3.0, 1e-3, 0.0});
    EXPECT_TRUE(v.pass) << v.to_json().dump();
    EXPECT_EQ(v.to_json().at("schema_version"), 1);

    auto other = c;
    other.K = 105;
    EXPECT_THROW(cross_validate(pide.value[0], cfg, e, Json{{"contract", other.to_json()}, {"model", m.to_json()}}),
                 ConfigError);
}

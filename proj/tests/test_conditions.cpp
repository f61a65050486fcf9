#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fkpide/conditions.hpp"
#include "fkpide/discretization.hpp"
#include "oracles.hpp"

using namespace fkpide;

namespace {

constexpr double kC = 0.01560, kG = 0.0767, kM = 7.55, kY = 1.2996;

LevyModel experiment_cgmy() { return make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03)); }

// (1/pi) int_0^inf weight(xi) w_hat(xi)^2 |sum_k c_k e^{i xi x_k}|^2 dxi for the
// hat basis. w_hat^2 |P|^2 = Q(xi) (2/xi)^4 / h^2 with Q of period 2 pi / h; past
// K periods Q is replaced by its mean and the rest integrated in v = top / xi.
double fourier_form(const Vec &c, const TruncatedDomain &d, const std::function<double(double)> &weight) {
    const double h = d.h, period = 2 * oracle::pi / h;
    auto Q = [&](double xi) {
        oracle::cd p = 0;
        for (int k = 0; k < c.size(); ++k) p += c(k) * std::exp(oracle::cd(0, xi * d.node(k)));
        return std::pow(std::sin(0.5 * xi * h), 4) * std::norm(p);
    };
    auto envelope = [&](double xi) { return weight(xi) * 16.0 / (h * h * std::pow(xi, 4)); };
    auto integrand = [&](double xi) {
        const double s = 0.5 * xi * h;
        const double sinc = s == 0 ? 1.0 : std::sin(s) / s;
        oracle::cd p = 0;
        for (int k = 0; k < c.size(); ++k) p += c(k) * std::exp(oracle::cd(0, xi * d.node(k)));
        return weight(xi) * h * h * std::pow(sinc, 4) * std::norm(p);
    };
    const int K = 400;
    const double top = K * period;
    const double head = oracle::composite(integrand, 0.0, top, 16 * K);
    const double mean_q = oracle::composite(Q, 0.0, period, 64) / period;
    const double tail = oracle::composite([&](double v) { return envelope(top / v) * top / (v * v); }, 0.0, 1.0, 64);
    return (head + mean_q * tail) / oracle::pi;
}

}  // namespace

TEST(ExponentialMoment, CgmyCorners) {
    const auto m = experiment_cgmy();
    const auto ok = check_exponential_moment(m, -1.5);
    EXPECT_EQ(ok.verdict, Verdict::Pass);
    // tail integral at eta' = -1.5 by independent quadrature
    auto f = [](double y) { return oracle::cgmy_density(kC, kG, kM, kY, y); };
    const double right = oracle::composite([&](double u) { return std::exp(1.5 * (1 + u)) * f(1 + u); }, 0.0, 40.0, 400);
    const double left = oracle::composite([&](double u) { return std::exp(-1.5 * (1 + u)) * f(-1 - u); }, 0.0, 600.0, 3000);
    ASSERT_EQ(ok.tail_integrals.size(), 2u);
    EXPECT_NEAR(ok.tail_integrals[1], right + left, 1e-8 * (right + left));
    // the eta' = 0 corner has the least slack: G to the left
    EXPECT_NEAR(ok.margin, kG, 1e-12);

    const auto bad = check_exponential_moment(m, -8.0);
    EXPECT_EQ(bad.verdict, Verdict::Fail);
    ASSERT_TRUE(bad.divergent_corner.has_value());
    EXPECT_EQ((*bad.divergent_corner)(0), -8.0);
}

TEST(ExponentialMoment, ZeroWeightAlwaysPasses) {
    for (const auto &m : {experiment_cgmy(), make_nig(2.0, 0.5, 1.0), make_compound_poisson(1.0, 0.1, 0.2),
                          make_brownian(0.3)})
        EXPECT_EQ(check_exponential_moment(m, 0.0).verdict, Verdict::Pass);
}

TEST(Growth, BrownianIndexTwo) {
    const auto r = estimate_growth(make_brownian(1.0, 0.1), 0.5);
    EXPECT_NEAR(r.alpha_hat, 2.0, 0.01);
    EXPECT_EQ(r.verdict("A3"), Verdict::Pass);
    EXPECT_TRUE(r.passes());
    EXPECT_LT(r.beta, r.alpha_hat);
}

TEST(Growth, NigIndexOne) {
    const auto r = estimate_growth(make_nig(1.0, 0.0, 1.0), 0.0);
    EXPECT_NEAR(r.alpha_hat, 1.0, 0.05);
    EXPECT_EQ(r.verdict("A3"), Verdict::Pass);
    EXPECT_NEAR(r.bg_index, 1.0, 0.05);
}

TEST(Growth, CgmyIndex) {
    const auto r = estimate_growth(experiment_cgmy(), -1.5);
    EXPECT_NEAR(r.alpha_hat, kY, 0.05);
    EXPECT_EQ(r.verdict("A3"), Verdict::Pass);
    EXPECT_NEAR(r.bg_index, kY, 0.05);
}

TEST(Growth, CompoundPoissonFailsGarding) {
    const auto r = estimate_growth(make_compound_poisson(2.0, 0.1, 0.3), 0.0);
    EXPECT_EQ(r.verdict("A3"), Verdict::Fail);
    EXPECT_FALSE(r.passes());
    EXPECT_NEAR(r.bg_index, 0.0, 1e-12);
}

TEST(Growth, MomentFailureBlocksGrowth) {
    const auto r = estimate_growth(experiment_cgmy(), -8.0);
    EXPECT_EQ(r.verdict("A1"), Verdict::Fail);
    EXPECT_EQ(r.verdict("A3"), Verdict::Inconclusive);
}

TEST(Growth, WitnessesRealizeConstants) {
    const auto m = experiment_cgmy();
    const auto r = estimate_growth(m, -1.5);
    const auto &w = r.continuity_witness;
    const Complex a = m.node().eval(w.t, (w.xi.cast<Complex>() - kI * w.eta.cast<Complex>()).eval());
    EXPECT_NEAR(std::abs(a) / std::pow(1 + w.xi.norm(), r.alpha_hat), r.continuity_constant, 1e-12);
    const auto &g = r.garding_prime_witness;
    const Complex b = m.node().eval(g.t, (g.xi.cast<Complex>() - kI * g.eta.cast<Complex>()).eval());
    const double p = std::pow(1 + g.xi.norm(), r.alpha_hat), q = std::pow(1 + g.xi.norm(), r.beta);
    EXPECT_NEAR(r.G * p - r.G_prime * q, b.real(), 1e-9 * (1 + std::abs(b.real())));
    EXPECT_GT(r.alpha_hat, 0.0);
    EXPECT_LE(r.alpha_hat, 2.0);
}

TEST(Growth, EnvelopeHoldsOnFinerGrid) {
    const auto m = experiment_cgmy();
    const auto r = estimate_growth(m, -1.5);
    for (double xi = 0; xi < 2e4; xi = xi * 1.01 + 0.01)
        for (double e : {0.0, -0.7, -1.5}) {
            const double lower = r.G * std::pow(1 + xi, r.alpha_hat) - r.G_prime * std::pow(1 + xi, r.beta);
            EXPECT_GE(m(0.0, Complex(xi, -e)).real(), lower - 1e-9) << xi;
        }
}

TEST(Growth, LargerWindowDoesNotLowerIndex) {
    const auto m = experiment_cgmy();
    GrowthOptions small;
    small.xi_max = 1e3;
    const auto a = estimate_growth(m, -1.5, small), b = estimate_growth(m, -1.5);
    EXPECT_GE(b.alpha_hat, a.alpha_hat - a.alpha_uncertainty);
}

TEST(Growth, SumTakesLargerIndex) {
    const auto r = estimate_growth(sum_symbols(make_brownian(0.1), experiment_cgmy()), -1.5);
    EXPECT_NEAR(r.alpha_hat, 2.0, 0.05);
    const auto s = estimate_growth(sum_symbols(make_nig(2.0, 0.3, 0.02), experiment_cgmy()), -1.0);
    EXPECT_NEAR(s.alpha_hat, kY, 0.05);
    // comparable weights on the fit window: the local slope sits between the indices
    const auto mixed = estimate_growth(sum_symbols(make_nig(2.0, 0.3, 0.5), experiment_cgmy()), -1.0);
    EXPECT_GT(mixed.alpha_hat, 1.0);
    EXPECT_LT(mixed.alpha_hat, kY);
}

TEST(Growth, ReportJson) {
    const auto j = estimate_growth(make_brownian(0.3), 0.0).to_json();
    EXPECT_EQ(j.at("schema_version"), 1);
    EXPECT_EQ(j.at("flags").at("A3").at("verdict"), "pass");
    EXPECT_TRUE(j.contains("xi_grid"));
}

TEST(Cadlag, HomogeneousAndPiecewise) {
    const std::vector<CVec> zs{cvec1(Complex(1.0, 0.2)), cvec1(Complex(-3.0, 0.0))};
    EXPECT_EQ(check_cadlag(make_brownian(0.2), zs).verdict, Verdict::Pass);
    const auto pw = with_time_params({make_brownian(0.2), make_brownian(0.4)}, {0.5});
    const auto c = check_cadlag(pw, zs);
    EXPECT_EQ(c.verdict, Verdict::Pass);
    ASSERT_EQ(c.jumps.size(), 1u);
    EXPECT_EQ(c.jumps[0], 0.5);
    const auto left = with_time_params({make_brownian(0.2), make_brownian(0.4)}, {0.5}, false);
    EXPECT_EQ(check_cadlag(left, zs).verdict, Verdict::Fail);
}

TEST(DensityConditions, CgmyIndex) {
    auto f = [](double y) { return oracle::cgmy_density(kC, kG, kM, kY, y); };
    const auto r = check_density_conditions(f, kY, kY - 1.0, 1.0);
    EXPECT_EQ(r.f3.verdict, Verdict::Pass);
    EXPECT_NEAR(r.singularity, kY, 1e-3);
    EXPECT_EQ(r.f4.verdict, Verdict::Pass);
    // a smaller alpha cannot dominate the singularity
    EXPECT_EQ(check_density_conditions(f, 1.0, 0.5, 1.0).f3.verdict, Verdict::Fail);
}

TEST(DensityConditions, SymmetricDensity) {
    auto f = [](double y) { return oracle::cgmy_density(0.5, 3.0, 3.0, 0.7, y); };
    const auto r = check_density_conditions(f, 1.0, 0.5, 0.5);
    EXPECT_TRUE(r.symmetric);
    EXPECT_EQ(r.f4.verdict, Verdict::Pass);
}

TEST(DensityConditions, GaussianTailUnconstrained) {
    auto f = [](double y) { return std::exp(-0.5 * y * y); };
    const auto r = check_density_conditions(f, 0.5, 0.0, 1.0);
    EXPECT_TRUE(r.alpha_unconstrained);
    EXPECT_EQ(r.f3.verdict, Verdict::Pass);
}

TEST(DensityConditions, DriftForFiniteVariation) {
    auto f = [](double y) { return oracle::cgmy_density(1.0, 2.0, 3.0, 0.5, y); };
    DensityOptions zero;
    zero.drift = 0.0;
    zero.truncation = Truncation::Zero;
    EXPECT_EQ(check_density_conditions(f, 0.5, 0.25, 1.0, zero).drift.verdict, Verdict::Pass);
    DensityOptions full;
    full.drift = 0.1;
    EXPECT_EQ(check_density_conditions(f, 0.5, 0.25, 1.0, full).drift.verdict, Verdict::Fail);
    // int x F(dx) = C Gamma(1 - Y) (M^{Y-1} - G^{Y-1})
    full.drift = std::tgamma(0.5) * (std::pow(3.0, -0.5) - std::pow(2.0, -0.5));
    EXPECT_EQ(check_density_conditions(f, 0.5, 0.25, 1.0, full).drift.verdict, Verdict::Pass);
}

TEST(HeatKernel, Brownian) {
    const double sigma = 0.7;
    const auto h = heat_kernel_decay(make_brownian(sigma, 0.1), 0.0, 1.0);
    EXPECT_EQ(h.verdict, Verdict::Pass);
    EXPECT_NEAR(h.C2, 0.5 * sigma * sigma, 1e-3);
}

TEST(HeatKernel, NigLinearExponent) {
    const double delta = 0.8;
    const auto h = heat_kernel_decay(make_nig(3.0, 0.5, delta), 0.0, 1.0);
    EXPECT_EQ(h.verdict, Verdict::Pass);
    EXPECT_NEAR(h.alpha, 1.0, 0.05);
    EXPECT_NEAR(h.C2, delta, 0.05 * delta);
}

TEST(HeatKernel, CompoundPoissonFails) {
    EXPECT_EQ(heat_kernel_decay(make_compound_poisson(1.0, 0.0, 0.3), 0.0, 1.0).verdict, Verdict::Fail);
}

TEST(DiscreteGarding, QuadraticFormDominatesEnvelope) {
    const auto d = build_domain(-1.0, 1.0, 24);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    for (const auto &m : {make_brownian(0.3, 0.05), make_nig(2.0, 0.5, 0.8), experiment_cgmy()}) {
        const auto rep = estimate_growth(m, 0.0);
        ASSERT_EQ(rep.verdict("A3"), Verdict::Pass);
        const Mat A = assemble_stiffness(m, d).matrix.dense();
        for (int trial = 0; trial < 5; ++trial) {
            Vec c(d.n);
            for (int i = 0; i < d.n; ++i) c(i) = N(rng);
            const double form = c.dot(A * c);
            const double hi = fourier_form(c, d, [&](double xi) { return std::pow(1 + xi, rep.alpha_hat); });
            const double lo = fourier_form(c, d, [&](double xi) { return std::pow(1 + xi, rep.beta); });
            EXPECT_GE(form, rep.G * hi - rep.G_prime * lo - 1e-8 * std::abs(form));
            // the form itself is the Fourier integral of Re A
            const double direct = fourier_form(c, d, [&](double xi) { return m(0.0, Complex(xi, 0)).real(); });
            EXPECT_NEAR(form, direct, 1e-5 * std::abs(direct));
        }
    }
}

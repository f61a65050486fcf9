#include <gtest/gtest.h>

#include <cmath>

#include "fkpide/symbols/model.hpp"
#include "oracles.hpp"

using namespace fkpide;

namespace {

// Experiment parameters of the tempered stable model used throughout.
constexpr double kC = 0.01560, kG = 0.0767, kM = 7.55, kY = 1.2996;

LevyModel cgmy_full(double drift = 0.0) { return make_cgmy(kC, kG, kM, kY, DriftMode::explicit_drift(drift)); }

double rel(Complex a, Complex b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

std::vector<LevyModel> zoo() {
    return {make_brownian(0.3, 0.1),
            cgmy_full(0.2),
            make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03)),
            make_cgmy(0.5, 0.2, 3.0, 4.0, 0.4, 0.7, DriftMode::zero_truncation()),
            make_nig(2.0, 0.5, 0.7, 0.1),
            make_compound_poisson(3.0, -0.1, 0.2, 0.05),
            sum_symbols(make_brownian(0.2), cgmy_full())};
}

}  // namespace

TEST(Symbols, NormalizedAtZero) {
    for (const auto &m : zoo()) EXPECT_LT(std::abs(m(0.0, Complex(0.0))), 1e-14);
}

TEST(Symbols, HermitianOnRealAxis) {
    for (const auto &m : zoo())
        for (double xi : {0.1, 1.0, 7.0, 40.0}) {
            const Complex a = m(0.0, Complex(xi)), b = m(0.0, Complex(-xi));
            EXPECT_LT(std::abs(b - std::conj(a)), 1e-12 * (1 + std::abs(a)));
        }
}

TEST(Symbols, BrownianQuadraticForm) {
    const auto bm = make_brownian(1.0);
    EXPECT_LT(std::abs(bm(0.0, Complex(2.0)) - 2.0), 1e-15);
    const Complex z(0.7, 1.0);
    EXPECT_LT(std::abs(bm(0.0, z) - z * z / 2.0), 1e-15);
    const auto drift = make_jump_diffusion(vec1(0.5), mat1(0.0));
    EXPECT_LT(std::abs(drift(0.0, Complex(3.0)) - Complex(0, 1.5)), 1e-15);
}

TEST(Symbols, NigClosedFormTwoDimensional) {
    const auto nig = make_nig(1.0, Vec::Zero(2), 1.0, Vec::Zero(2), Mat::Identity(2, 2));
    CVec u(2);
    u << std::sqrt(3.0), 0.0;
    EXPECT_NEAR(std::abs(nig(0.0, u) - 1.0), 0.0, 1e-14);
    // ||beta||^2 + ||eta||^2 <= alpha^2 / ||Delta||
    const auto skew = make_nig(2.0, Vec::Constant(2, 0.5), 1.0, Vec::Zero(2), Mat::Identity(2, 2));
    Vec eta(2);
    eta << 1.2, -1.2;  // 0.5 + 2.88 <= 4
    for (double s : {0.0, 0.5, 1.0}) EXPECT_TRUE(skew.in_strip(-(s * eta)));
}

TEST(Symbols, NigMatchesBesselDensityQuadrature) {
    const double alpha = 2.0, beta = 0.6, delta = 0.8, shape = 1.5;
    const auto nig = make_nig(alpha, beta, delta, 0.0, shape);
    const auto *c = characteristics_of(nig);
    ASSERT_NE(c, nullptr);
    const double a = alpha / std::sqrt(shape);
    auto f = [&](double y) {
        return delta * alpha / (oracle::pi * std::abs(y)) * std::exp(-beta * y) * std::cyl_bessel_k(1.0, a * std::abs(y));
    };
    for (Complex z : {Complex(1.0), Complex(3.0, 0.4), Complex(0.2, -0.3)}) {
        const Complex expect = oracle::levy_khinchine(f, z, a - beta, a + beta) + kI * z * c->drift(0);
        EXPECT_LT(rel(nig(0.0, z), expect), 1e-8) << z;
    }
}

TEST(Symbols, CgmyClosedFormMatchesIndependentQuadrature) {
    const auto m = cgmy_full();
    auto f = [](double y) { return oracle::cgmy_density(kC, kG, kM, kY, y); };
    for (Complex z : {Complex(1.0), Complex(5.0, 1.5), Complex(0.3, -0.05), Complex(20.0), Complex(2.0, 6.0)}) {
        const Complex expect = oracle::levy_khinchine(f, z, kG, kM);
        EXPECT_LT(rel(m(0.0, z), expect), 1e-8) << z;
    }
}

TEST(Symbols, CgmyLibraryQuadratureAgreesAtTwoResolutions) {
    const LevyMeasure cm = CgmyMeasure{kC, kC, kG, kM, kY, kY};
    for (Complex z : {Complex(1.0), Complex(5.0, 1.5)}) {
        const Complex coarse = measure::jump_full_quadrature(cm, z, 1e-10);
        const Complex fine = measure::jump_full_quadrature(cm, z, 1e-13);
        EXPECT_LT(rel(coarse, fine), 1e-8);
        EXPECT_LT(rel(fine, measure::jump_full(cm, cvec1(z))), 1e-8);
    }
}

TEST(Symbols, CgmyIntegerIndexLimits) {
    for (double Y : {0.0, 1.0}) {
        const auto m = make_cgmy(0.4, 1.5, 2.5, Y);
        auto f = [Y](double y) { return oracle::cgmy_density(0.4, 1.5, 2.5, Y, y); };
        for (Complex z : {Complex(1.0), Complex(4.0, 0.5)}) {
            EXPECT_LT(rel(m(0.0, z), oracle::levy_khinchine(f, z, 1.5, 2.5)), 1e-8) << "Y=" << Y << " z=" << z;
        }
        const auto near = make_cgmy(0.4, 1.5, 2.5, Y + 1e-7);
        EXPECT_LT(rel(near(0.0, Complex(3.0)), m(0.0, Complex(3.0))), 1e-5);
    }
}

TEST(Symbols, UnitBallTruncationMatchesDirectIntegral) {
    const auto m = make_cgmy(0.3, 0.3, 1.2, 2.0, 1.5, 1.5, DriftMode::explicit_drift(0.1, Truncation::UnitBall));
    auto f = [](double y) { return oracle::cgmy_density(0.3, 1.2, 2.0, 1.5, y); };
    const Complex z(2.0, 0.3);
    // -int (e^{-izy} - 1 + iz y 1{|y|<=1}) F(dy) = full integral + iz int_{|y|>1} y F(dy)
    auto tail = [&](double y) { return y * f(y); };
    const double gap = oracle::composite(tail, 1.0, 60.0, 400) +
                       oracle::composite([&](double u) { return -u * f(-u); }, 1.0, 60.0, 400);
    const Complex expect = oracle::levy_khinchine(f, z, 1.2, 2.0) + kI * z * (gap + 0.1);
    EXPECT_LT(rel(m(0.0, z), expect), 1e-8);
}

TEST(Symbols, ZeroTruncationRejectedForInfiniteVariation) {
    EXPECT_THROW(make_cgmy(kC, kG, kM, kY, DriftMode::zero_truncation()), DomainError);
    EXPECT_THROW(make_cgmy(-1.0, kG, kM, kY), DomainError);
    EXPECT_THROW(make_cgmy(kC, kG, kM, 2.0), DomainError);
    EXPECT_THROW(make_nig(1.0, 1.0, 1.0), DomainError);
}

TEST(Symbols, MartingaleDriftGivesRiskNeutralGrowth) {
    const double r = 0.03;
    const auto m = make_cgmy(kC, kG, kM, kY, DriftMode::martingale(r));
    // E e^{L_1} = exp(-A(i)) = e^{r}
    EXPECT_NEAR(std::abs(characteristic_function(m, 1.0, 0.0, 1.0) - std::exp(r)), 0.0, 1e-13);
    // b = r - int (e^y - 1 - y) F(dy)
    auto f = [](double y) { return oracle::cgmy_density(kC, kG, kM, kY, y); };
    const double b = characteristics_of(m)->drift(0);
    EXPECT_NEAR(b, r + oracle::levy_khinchine(f, kI, kG, kM).real(), 1e-10);
}

TEST(Symbols, StripViolationThrows) {
    const auto m = cgmy_full();
    EXPECT_THROW(m(0.0, Complex(5.0, -1.5)), StripError);
    EXPECT_THROW(m(0.0, Complex(1.0, 8.0)), StripError);
    EXPECT_NO_THROW(m(0.0, Complex(5.0, 1.5)));
}

TEST(Symbols, SumRuleAndIndex) {
    const auto bm = make_brownian(0.2), cg = cgmy_full(), nig = make_nig(1.5, 0.2, 1.0);
    const auto s = sum_symbols(bm, cg);
    for (Complex z : {Complex(1.0), Complex(3.0, 0.05), Complex(-2.0)})
        EXPECT_LT(rel(s(0.0, z), bm(0.0, z) + cg(0.0, z)), 1e-12);
    EXPECT_DOUBLE_EQ(s.declared_index(), 2.0);
    const auto bn = sum_symbols(bm, nig);
    EXPECT_LT(rel(bn(0.0, Complex(1.0)), bm(0.0, Complex(1.0)) + nig(0.0, Complex(1.0))), 1e-12);
    const auto zero = sum_symbols(cg, make_constant(0.0));
    EXPECT_EQ(zero(0.0, Complex(2.0)), cg(0.0, Complex(2.0)));
    EXPECT_DOUBLE_EQ(cgmy_full().declared_index(), kY);
    const auto bm2 = make_nig(1.0, Vec::Zero(2), 1.0, Vec::Zero(2), Mat::Identity(2, 2));
    EXPECT_THROW(sum_symbols(cg, bm2), DomainError);
}

TEST(Symbols, TimeParamsRightContinuousAndIndex) {
    auto family = [](const Vec &p) { return make_cgmy(kC, kG, kM, p(0)); };
    TimeParameterPath path{{0.5}, {mat1(1.2), mat1(1.4)}};
    const auto m = with_time_params(family, path);
    EXPECT_NEAR(m.declared_index(), 1.4, 1e-15);
    const auto hi = make_cgmy(kC, kG, kM, 1.4), lo = make_cgmy(kC, kG, kM, 1.2);
    const Complex z(2.0);
    EXPECT_EQ(m(0.5, z), hi(0.5, z));
    EXPECT_EQ(m(0.49, z), lo(0.0, z));
    TimeParameterPath single{{}, {mat1(1.2)}};
    EXPECT_EQ(with_time_params(family, single)(0.3, z), lo(0.0, z));
    TimeParameterPath bad{{0.5}, {mat1(1.2), mat1(2.5)}};
    EXPECT_THROW(with_time_params(family, bad), DomainError);
}

TEST(Symbols, IntegrateExponentPiecewise) {
    const auto a = make_brownian(1.0), b = make_brownian(2.0);
    const auto m = with_time_params({a, b}, {1.0});
    const Complex z(1.5);
    EXPECT_LT(std::abs(integrate_exponent(m, 0.0, 2.0, z) - (a(0, z) + b(0, z))), 1e-14);
    EXPECT_EQ(integrate_exponent(m, 0.7, 0.7, z), Complex(0.0));
    EXPECT_LT(std::abs(integrate_exponent(a, 0.2, 0.9, z) - 0.7 * a(0, z)), 1e-15);
}

TEST(Symbols, IntegrandScalesArgument) {
    const auto bm = make_brownian(1.0);
    const auto x2 = with_integrand(bm, TimeParameterPath{{}, {mat1(2.0)}});
    EXPECT_LT(std::abs(x2(0.0, Complex(1.3)) - 2.0 * 1.3 * 1.3), 1e-14);
    const auto id = with_integrand(cgmy_full(), TimeParameterPath{{}, {mat1(1.0)}});
    EXPECT_EQ(id(0.0, Complex(2.0)), cgmy_full()(0.0, Complex(2.0)));
    const auto nig = make_nig(2.0, 0.3, 1.0);
    const double c = 0.6;
    const auto scaled = with_integrand(nig, TimeParameterPath{{}, {mat1(c)}});
    for (double xi : {0.5, 1.0, 3.0})
        EXPECT_EQ(characteristic_function(scaled, 1.0, xi), characteristic_function(nig, 1.0, c * xi));
    EXPECT_THROW(with_integrand(make_cgmy(0.5, 0.5, 2, 2, 0.5, 0.5, DriftMode::zero_truncation()),
                                TimeParameterPath{{}, {mat1(1.0)}}),
                 DomainError);
}

TEST(Symbols, BrownianCharacteristicFunction) {
    const auto bm = make_brownian(1.0);
    for (double t : {0.5, 2.0})
        for (double xi : {0.0, 0.7, 2.0})
            EXPECT_NEAR(std::abs(characteristic_function(bm, t, xi) - std::exp(-t * xi * xi / 2)), 0.0, 1e-15);
}

TEST(Symbols, ShiftBrownianExample) {
    LevyCharacteristics c;
    c.covariance = mat1(1.0);
    const auto s = shift_characteristics(c, 1.0);
    EXPECT_DOUBLE_EQ(s.characteristics.drift(0), 1.0);
    EXPECT_DOUBLE_EQ(s.killing_constant, -0.5);
    const auto z = shift_characteristics(c, 0.0);
    EXPECT_DOUBLE_EQ(z.characteristics.drift(0), 0.0);
    EXPECT_DOUBLE_EQ(z.killing_constant, 0.0);
}

namespace {

double shift_residual(const LevyModel &m, double eta) {
    const auto *c = characteristics_of(m);
    const auto s = shift_characteristics(*c, eta);
    const auto shifted = make_model(s.characteristics);
    double worst = 0;
    for (int k = 0; k < 64; ++k) {
        const double xi = -20.0 + 40.0 * k / 63.0;
        const Complex lhs = m(0.0, Complex(xi, eta));
        const Complex rhs = shifted(0.0, Complex(xi)) + s.killing_constant;
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace

TEST(Symbols, ShiftIdentityAllFamilies) {
    EXPECT_LT(shift_residual(make_brownian(0.4, 0.1), 1.0), 1e-12);
    EXPECT_LT(shift_residual(cgmy_full(0.1), 1.5), 1e-10);
    EXPECT_LT(shift_residual(make_cgmy(kC, kG, kM, kY, DriftMode::martingale(0.03)), 1.5), 1e-10);
    EXPECT_LT(shift_residual(make_cgmy(0.3, 0.3, 1.2, 2.0, 1.5, 1.5, DriftMode::explicit_drift(0, Truncation::UnitBall)), 0.8), 1e-9);
    EXPECT_LT(shift_residual(make_nig(2.0, 0.3, 1.1, 0.2), -1.0), 1e-12);
    EXPECT_LT(shift_residual(make_compound_poisson(2.0, 0.1, 0.3), 0.7), 1e-12);
    // weight outside the moment strip
    EXPECT_THROW(shift_characteristics(*characteristics_of(cgmy_full()), -1.5), DomainError);
}

TEST(Symbols, ShiftIdentityAgainstIndependentQuadrature) {
    const auto m = cgmy_full(0.05);
    const auto s = shift_characteristics(*characteristics_of(m), 1.5);
    const auto &cm = std::get<CgmyMeasure>(s.characteristics.measure);
    auto f = [&](double y) { return oracle::cgmy_density(kC, cm.G, cm.M, kY, y); };
    for (double xi : {-3.0, 0.5, 4.0}) {
        const Complex rhs = oracle::levy_khinchine(f, xi, cm.G, cm.M) + kI * xi * s.characteristics.drift(0) +
                            s.killing_constant;
        auto f0 = [](double y) { return oracle::cgmy_density(kC, kG, kM, kY, y); };
        const Complex lhs = oracle::levy_khinchine(f0, Complex(xi, 1.5), kG, kM) + kI * Complex(xi, 1.5) * 0.05;
        EXPECT_LT(std::abs(lhs - rhs), 1e-8);
    }
}

TEST(Symbols, JsonRoundTrip) {
    std::vector<LevyModel> ms = zoo();
    ms.push_back(with_time_params({make_brownian(0.2), cgmy_full()}, {0.4}));
    ms.push_back(with_integrand(make_nig(2.0, 0.3, 1.0), TimeParameterPath{{0.5}, {mat1(1.0), mat1(0.5)}}));
    for (const auto &m : ms) {
        const Json j = m.to_json();
        const auto back = model_from_json(Json::parse(j.dump()));
        EXPECT_EQ(back.to_json(), j);
        for (double t : {0.1, 0.7}) EXPECT_EQ(back(t, Complex(1.3, 0.01)), m(t, Complex(1.3, 0.01)));
    }
}

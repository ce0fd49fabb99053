#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "greeks/error.hpp"
#include "greeks/models.hpp"
#include "greeks/rng.hpp"

using namespace greeks;

namespace {

constexpr double kR = 0.05, kSigma = 0.2, kT = 1.0;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Textbook Black-Scholes put and delta, written out independently.
double oracle_put(double s, double k, double r, double v, double t) {
    const double d1 = (std::log(s / k) + (r + 0.5 * v * v) * t) / (v * std::sqrt(t));
    const double d2 = d1 - v * std::sqrt(t);
    return k * std::exp(-r * t) * norm_cdf(-d2) - s * norm_cdf(-d1);
}
double oracle_put_delta(double s, double k, double r, double v, double t) {
    const double d1 = (std::log(s / k) + (r + 0.5 * v * v) * t) / (v * std::sqrt(t));
    return norm_cdf(d1) - 1.0;
}

Payoff discounted_put(double strike) {
    Payoff::Params p;
    p.strike = strike;
    p.scale = std::exp(-kR * kT);
    return {PayoffType::put, p};
}

Payoff plain(PayoffType type, double strike = 100.0) {
    Payoff::Params p;
    p.strike = strike;
    return {type, p};
}

template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

} // namespace

TEST_CASE("Black-Scholes put value and delta") {
    const BlackScholesModel m(kR, kSigma, kT);
    const double oracle = oracle_put(100, 100, kR, kSigma, kT);
    CHECK(std::abs(oracle - 5.5735) < 1e-3);
    CHECK(std::abs(bs_true_value(m, discounted_put(100), 100) - oracle) < 1e-10);
    CHECK(std::abs(bs_true_value(m, discounted_put(100), 100) - 5.5735) < 1e-3);
    const double delta = oracle_put_delta(100, 100, kR, kSigma, kT);
    CHECK(std::abs(delta + 0.3632) < 5e-4);
    CHECK(std::abs(bs_true_greek(m, discounted_put(100), 100) - delta) < 1e-12);
    CHECK(bs_true_value(m, discounted_put(0.0), 100) == 0.0);
    CHECK(std::abs(bs_true_greek(m, discounted_put(100), 1e4)) < 1e-12);
}

TEST_CASE("quadrature path agrees with the closed form") {
    const BlackScholesModel m(kR, kSigma, kT);
    // smooth_put with a tiny blend is a put up to O(width^2)
    Payoff::Params p;
    p.strike = 100;
    p.width = 1e-3;
    p.scale = std::exp(-kR * kT);
    const Payoff sp(PayoffType::smooth_put, p);
    CHECK(bs_true_value(m, sp, 100) == doctest::Approx(oracle_put(100, 100, kR, kSigma, kT)).epsilon(1e-6));
    CHECK(bs_true_greek(m, sp, 100) == doctest::Approx(oracle_put_delta(100, 100, kR, kSigma, kT)).epsilon(1e-5));
}

TEST_CASE("digital, constant and truncated call oracles") {
    const BlackScholesModel m(kR, kSigma, kT);
    CHECK(bs_true_value(m, plain(PayoffType::digital, 1e-9), 100) == doctest::Approx(1.0).epsilon(1e-12));
    // P(S_T > K) = N(d2)
    const double d2 = (std::log(100.0 / 110) + (kR - 0.5 * kSigma * kSigma) * kT) / (kSigma * std::sqrt(kT));
    CHECK(bs_true_value(m, plain(PayoffType::digital, 110), 100) == doctest::Approx(norm_cdf(d2)).epsilon(1e-10));
    Payoff::Params c;
    c.level = 3.0;
    CHECK(std::abs(bs_true_greek(m, Payoff(PayoffType::constant, c), 100)) < 1e-8);

    Payoff::Params t;
    t.strike = 100;
    t.cap = 130;
    const Payoff tc(PayoffType::truncated_call, t);
    const double lv = kSigma * std::sqrt(kT), mu = (kR - 0.5 * kSigma * kSigma) * kT;
    auto dens = [&](double z) {
        const double x = (std::log(z / 100) - mu) / lv;
        return std::exp(-0.5 * x * x) / (z * lv * std::sqrt(2 * std::numbers::pi));
    };
    const double oracle = simpson([&](double z) { return (z - 100) * dens(z); }, 100, 130);
    CHECK(bs_true_value(m, tc, 100) == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("score: analytic form, zero point, finite-difference grid") {
    const BlackScholesModel m(kR, kSigma, kT);
    const double z0 = 100 * std::exp((kR - 0.5 * kSigma * kSigma) * kT);
    CHECK(std::abs(bs_score(m, 100, z0)) < 1e-15);
    CHECK_THROWS_AS(bs_score(m, 100, 0.0), DomainError);
    CHECK_THROWS_AS(bs_score(m, 100, -1.0), DomainError);

    auto log_dens = [&](double lam, double z) { return std::log(m.density({&lam, 1}, {&z, 1})); };
    {
        const double step = 1e-6 * 100;
        const double fd = (log_dens(100 + step, 110) - log_dens(100 - step, 110)) / (2 * step);
        CHECK(std::abs(bs_score(m, 100, 110) - fd) < 1e-6);
    }
    double worst = 0.0;
    for (int a = 0; a < 50; ++a) {
        const double lam = 60 + a * (80.0 / 49);
        for (int b = 0; b < 50; ++b) {
            const double z = 50 + b * (120.0 / 49);
            const double step = 1e-6 * lam;
            const double fd = (log_dens(lam + step, z) - log_dens(lam - step, z)) / (2 * step);
            const double s = bs_score(m, lam, z);
            worst = std::max(worst, std::abs(s - fd) / std::max(std::abs(fd), 1e-3));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("density integrates to one") {
    const BlackScholesModel m(kR, kSigma, kT);
    for (int k = 0; k < 10; ++k) {
        const double lam = 50 + 15 * k;
        const double total = simpson([&](double z) { return m.density({&lam, 1}, {&z, 1}); }, 1e-9, lam * 8, 200000);
        CHECK(std::abs(total - 1.0) < 1e-6);
    }
}

TEST_CASE("simulation is a deterministic function of the stream; scores have zero mean") {
    const BlackScholesModel m(kR, kSigma, kT);
    const double lam = 100;
    double a = 0, b = 0;
    Stream s1(5, 17), s2(5, 17);
    m.simulate({&lam, 1}, s1, {&a, 1});
    m.simulate({&lam, 1}, s2, {&b, 1});
    CHECK(a == b);

    const long n = 1000000;
    double sum = 0, sum2 = 0;
    for (long i = 0; i < n; ++i) {
        Stream rng(9, i);
        double z;
        m.simulate({&lam, 1}, rng, {&z, 1});
        const double s = bs_score(m, lam, z);
        sum += s;
        sum2 += s * s;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(double(n)));
    CHECK_THROWS_AS(m.simulate(std::vector<double>{-1.0}, s1, {&a, 1}), DomainError);
}

TEST_CASE("likelihood-ratio identity by Monte Carlo") {
    const BlackScholesModel m(kR, kSigma, kT);
    const Payoff put = discounted_put(100);
    const long n = 1000000;
    const double lam = 100;
    double sum = 0, sum2 = 0;
    for (long i = 0; i < n; ++i) {
        Stream rng(21, i);
        double z;
        m.simulate({&lam, 1}, rng, {&z, 1});
        const double y = put.evaluate({&z, 1}) * bs_score(m, lam, z);
        sum += y;
        sum2 += y * y;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - oracle_put_delta(100, 100, kR, kSigma, kT)) < 4 * se);
}

TEST_CASE("Euler: frozen path, GBM weak error, ellipticity") {
    const EulerDiffusionModel frozen(
        1, 1, 1, [](const Vector& l) { return l; }, [](double, const Vector&, const Vector&) { return Vector(Vector::Zero(1)); },
        [](double, const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); }, 1.0, 7);
    {
        Stream rng(1, 2);
        double z = 0, lam = 3.25;
        frozen.simulate({&lam, 1}, rng, {&z, 1});
        CHECK(z == 3.25);
    }

    const int steps = 512;
    const EulerDiffusionModel gbm = make_euler_gbm(kR, kSigma, kT, steps);
    const BlackScholesModel bs(kR, kSigma, kT);
    const Payoff put = plain(PayoffType::put);
    const long n = 100000;
    Vector lam = Vector::Constant(1, 100.0);
    std::vector<double> g(steps);
    double sum_diff = 0, sum_diff2 = 0;
    for (long i = 0; i < n; ++i) {
        Stream rng(33, i);
        double agg = 0;
        for (auto& x : g) {
            x = rng.normal();
            agg += x;
        }
        const double ze = gbm.simulate_with_increments(lam, g)(0);
        const double zb = bs.terminal(100, agg / std::sqrt(double(steps)));
        const double diff = put.evaluate({&ze, 1}) - put.evaluate({&zb, 1});
        sum_diff += diff;
        sum_diff2 += diff * diff;
    }
    const double mean = sum_diff / n;
    const double sd = std::sqrt(sum_diff2 / n - mean * mean);
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(double(n)) + 1e-2);

    const EulerDiffusionModel unit(
        1, 1, 1, [](const Vector& l) { return l; }, [](double, const Vector&, const Vector&) { return Vector(Vector::Zero(1)); },
        [](double, const Vector&, const Vector&) { return Matrix(Matrix::Identity(1, 1)); }, 1.0, 16, 1.0 + 1e-12);
    CHECK(unit.check_ellipticity(lam, 4, 20).satisfied);
    const EulerDiffusionModel ou = make_euler_linear(0.1, -0.5, 0.5, 1.0, 16);
    CHECK(ou.check_ellipticity(lam, 4, 5).satisfied);
    CHECK_THROWS_AS(gbm.check_ellipticity(lam, 1, 1), ConfigError);
}

TEST_CASE("Euler: non-finite state reports the step") {
    const EulerDiffusionModel blow(
        1, 1, 1, [](const Vector& l) { return l; },
        [](double, const Vector&, const Vector& x) { return Vector(Vector::Constant(1, x(0) * x(0) * 1e300)); },
        [](double, const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); }, 1.0, 10);
    std::vector<double> g(10, 0.0);
    // from 10 the first step is still finite (1e303); from 1e200 it overflows at once
    for (auto [x0, step] : {std::pair{10.0, 2L}, std::pair{1e200, 1L}}) {
        try {
            blow.simulate_with_increments(Vector::Constant(1, x0), g);
            FAIL("expected a simulation error");
        } catch (const SimulationError& e) {
            CHECK(e.step() == step);
        }
    }
}

TEST_CASE("payoff supports, derivatives and errors") {
    const Payoff put = plain(PayoffType::put);
    double z = 120;
    CHECK(put.evaluate({&z, 1}) == 0.0);
    z = 80;
    CHECK(put.evaluate({&z, 1}) == 20.0);
    CHECK(put.support_lo()[0] == 0.0);
    CHECK(put.support_hi()[0] == 100.0);
    CHECK(put.compact());
    double g = 0;
    z = 100;
    put.derivative({&z, 1}, {&g, 1});
    CHECK(g == 0.0);
    z = 50;
    put.derivative({&z, 1}, {&g, 1});
    CHECK(g == -1.0);
    const Payoff dig = plain(PayoffType::digital);
    CHECK_FALSE(dig.has_derivative());
    CHECK_THROWS_AS(dig.derivative({&z, 1}, {&g, 1}), ConfigError);
    CHECK_THROWS_AS(parse_payoff_type("asian"), ConfigError);

    Payoff::Params b;
    b.strike = 100;
    b.state_dim = 2;
    const Payoff basket(PayoffType::basket_put, b);
    double zz[2] = {90, 100};
    CHECK(basket.evaluate(zz) == 5.0);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "greeks/error.hpp"
#include "greeks/models.hpp"
#include "greeks/parallel.hpp"
#include "greeks/randomization.hpp"

using namespace greeks;

namespace {

// Independent closed forms of the unit-radius profiles.
double epa_profile(double x) { return std::abs(x) <= 1 ? 0.75 * (1 - x * x) : 0.0; }
double epa_cdf(double x) {
    if (x <= -1) return 0.0;
    if (x >= 1) return 1.0;
    return 0.5 + 0.75 * (x - x * x * x / 3.0);
}
double cos_profile(double x) { return std::abs(x) <= 1 ? (std::numbers::pi / 4) * std::cos(std::numbers::pi * x / 2) : 0.0; }
double cos_cdf(double x) {
    if (x <= -1) return 0.0;
    if (x >= 1) return 1.0;
    return 0.5 * (1 + std::sin(std::numbers::pi * x / 2));
}

template <class F>
double simpson(F f, double a, double b, int n = 4000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

BlackScholesModel bs() { return {0.05, 0.2, 1.0}; }

} // namespace

TEST_CASE("profiles match their closed forms and integrate to one") {
    const RandomizingDensity e(1, 2.0, EllProfile::epanechnikov_product);
    const RandomizingDensity c(1, 2.0, EllProfile::cosine_product);
    for (double u = -2.2; u <= 2.2; u += 0.1) {
        CHECK(e.evaluate({&u, 1}) == doctest::Approx(epa_profile(u / 2) / 2).epsilon(1e-13));
        CHECK(c.evaluate({&u, 1}) == doctest::Approx(cos_profile(u / 2) / 2).epsilon(1e-13));
    }
    for (const auto* ell : {&e, &c}) {
        CHECK(simpson([&](double u) { return ell->evaluate({&u, 1}); }, -2, 2) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(ell->at_origin() > 0.0);
    }
    // d = 2 product integrates to one on a tensor Simpson grid
    const RandomizingDensity e2(2, 0.5);
    const double total = simpson(
        [&](double a) { return simpson([&](double b) { double u[2] = {a, b}; return e2.evaluate(u); }, -0.5, 0.5, 400); },
        -0.5, 0.5, 400);
    CHECK(std::abs(total - 1.0) < 1e-8);
}

TEST_CASE("gradient matches finite differences at interior points") {
    std::mt19937_64 rng(11);
    for (EllProfile prof : {EllProfile::epanechnikov_product, EllProfile::cosine_product}) {
        const RandomizingDensity ell(2, 3.0, prof);
        std::uniform_real_distribution<double> unif(-2.9, 2.9);
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            double u[2] = {unif(rng), unif(rng)};
            double g[2];
            ell.gradient(u, g);
            for (int j = 0; j < 2; ++j) {
                double up[2] = {u[0], u[1]}, dn[2] = {u[0], u[1]};
                up[j] += 1e-6;
                dn[j] -= 1e-6;
                worst = std::max(worst, std::abs((ell.evaluate(up) - ell.evaluate(dn)) / 2e-6 - g[j]));
            }
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("log_grad_ell: zero at lambda0, finite differences of log ell elsewhere") {
    const RandomizingDensity ell(1, 0.8);
    Vector l0(1), lam(1);
    l0 << 1.0;
    CHECK(log_grad_ell(ell, l0, l0).norm() == 0.0);
    const double rho = 0.8;
    lam << 1.0 - rho / 2;  // u = lambda0 - lambda = rho / 2
    const double fd_step = 1e-7;
    auto log_ell = [&](double u) { return std::log(epa_profile(u / rho) / rho); };
    const double oracle = (log_ell(rho / 2 + fd_step) - log_ell(rho / 2 - fd_step)) / (2 * fd_step);
    CHECK(log_grad_ell(ell, lam, l0)(0) == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(oracle == doctest::Approx(-2 * (rho / 2) / (rho * rho - rho * rho / 4)).epsilon(1e-6));
    lam << 1.0 - 2 * rho;
    CHECK_THROWS_AS(log_grad_ell(ell, lam, l0), DomainError);
}

TEST_CASE("draw_sample: symmetric, compact, reproducible, thread-count independent") {
    const BlackScholesModel model = bs();
    Vector l0(1);
    l0 << 1.0;
    const RandomizingDensity ell(1, 0.1);
    set_thread_count(1);
    const RandomizedSample a = draw_sample(model, ell, l0, 100000, 99);
    set_thread_count(4);
    const RandomizedSample b = draw_sample(model, ell, l0, 100000, 99);
    set_thread_count(1);
    CHECK(a.lambdas == b.lambdas);
    CHECK(a.zs == b.zs);
    CHECK(a.lambdas.minCoeff() >= 0.9);
    CHECK(a.lambdas.maxCoeff() <= 1.1);
    const Eigen::ArrayXd dev = a.lambdas.col(0).array() - 1.0;
    const double mean = dev.mean();
    const double sd = std::sqrt((dev - mean).square().sum() / (dev.size() - 1));
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(double(dev.size())));
    CHECK_THROWS_AS(draw_sample(model, ell, l0, 0, 1), ArgumentError);
}

TEST_CASE("Kolmogorov-Smirnov against the profile CDF") {
    const BlackScholesModel model = bs();
    Vector l0(1);
    l0 << 100.0;
    for (EllProfile prof : {EllProfile::epanechnikov_product, EllProfile::cosine_product}) {
        const RandomizingDensity ell(1, 25.0, prof);
        const RandomizedSample s = draw_sample(model, ell, l0, 100000, 5);
        std::vector<double> x(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) x[i] = (100.0 - s.lambdas(i, 0)) / 25.0;
        std::sort(x.begin(), x.end());
        double ks = 0.0;
        const double n = static_cast<double>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double cdf = prof == EllProfile::epanechnikov_product ? epa_cdf(x[i]) : cos_cdf(x[i]);
            ks = std::max({ks, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
        }
        CHECK(ks < 1.628 / std::sqrt(n));  // 1% critical value
        CHECK(ell.profile_cdf(0.3) == doctest::Approx(prof == EllProfile::epanechnikov_product ? epa_cdf(0.3) : cos_cdf(0.3)));
    }
}

TEST_CASE("coordinate standard deviations") {
    CHECK(RandomizingDensity(1, 25.0).coordinate_sd() == doctest::Approx(25.0 * std::sqrt(0.2)));
    const double var = simpson([](double x) { return x * x * cos_profile(x); }, -1, 1);
    CHECK(RandomizingDensity(1, 2.0, EllProfile::cosine_product).coordinate_sd() ==
          doctest::Approx(2.0 * std::sqrt(var)).epsilon(1e-8));
}

TEST_CASE("profile names") {
    CHECK(parse_ell_profile("cosine_product") == EllProfile::cosine_product);
    CHECK_THROWS_AS(parse_ell_profile("gaussian"), ConfigError);
    CHECK_THROWS_AS(RandomizingDensity(1, 0.0), ArgumentError);
}

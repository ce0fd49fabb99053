#include <doctest.h>

#include <cmath>
#include <vector>

#include "greeks/error.hpp"
#include "greeks/estimator.hpp"
#include "greeks/parallel.hpp"
#include "oracles.hpp"

using namespace greeks;

namespace {

const BlackScholesModel kBs(0.05, 0.2, 1.0);

Payoff put(double strike) {
    Payoff::Params p;
    p.strike = strike;
    return {PayoffType::put, p};
}

EstimatorConfig epan_config(double h, std::optional<double> delta, bool binning) {
    BinningConfig b;
    b.enabled = binning;
    return EstimatorConfig(h, make_kernel("epanechnikov", 2, 1), make_kernel("epanechnikov", 2, 1), delta, b);
}

oracle::Draws copy(const RandomizedSample& s) {
    oracle::Draws d;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        d.lambda.push_back(s.lambdas(i, 0));
        d.z.push_back(s.zs(i, 0));
    }
    return d;
}

const Vector kLambda0 = Vector::Constant(1, 100.0);

} // namespace

TEST_CASE("beta_tilde matches the straight-line oracle on tiny samples") {
    const RandomizingDensity ell(1, 25.0);
    const Payoff p = put(130.0);
    auto pay = [](double z) { return std::max(130.0 - z, 0.0); };
    for (long n : {3L, 5L, 10L}) {
        for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
            const RandomizedSample s = draw_sample(kBs, ell, kLambda0, n, seed);
            const oracle::Draws raw = copy(s);
            for (double h : {20.0, 40.0}) {
                // the large delta forces truncation on most rows
                for (double delta : {1e-9, 1e-3}) {
                    const double want = oracle::beta_tilde(raw, 100.0, h, delta, 25.0, pay);
                    for (bool binning : {false, true}) {
                        const EstimateReport r = beta_tilde(s, epan_config(h, delta, binning), ell, kLambda0, p);
                        CAPTURE(n);
                        CAPTURE(seed);
                        CAPTURE(h);
                        CAPTURE(delta);
                        CAPTURE(binning);
                        CHECK(std::abs(r.beta_hat(0) - want) <= 1e-12 * std::max(std::abs(want), 1e-300));
                    }
                }
            }
        }
    }
}

TEST_CASE("binned and naive leave-one-out densities agree") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 3000, 5);
    const LooDensityEstimator naive(s, epan_config(4.0, 1e-6, false), 1e-6);
    const LooDensityEstimator binned(s, epan_config(4.0, 1e-6, true), 1e-6);
    CHECK_FALSE(naive.binned());
    CHECK(binned.binned());
    Stream rng(3, 0);
    for (int t = 0; t < 500; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.uniform() * 3000);
        const double lam = s.lambdas(i, 0) + 3.0 * (rng.uniform() - 0.5);
        const double z = s.zs(i, 0) + 3.0 * (rng.uniform() - 0.5);
        const LooDensityEval a = naive.evaluate(i, std::span<const double>(&lam, 1), std::span<const double>(&z, 1));
        const LooDensityEval b = binned.evaluate(i, std::span<const double>(&lam, 1), std::span<const double>(&z, 1));
        CHECK(std::abs(a.value - b.value) <= 1e-12 * std::max(std::abs(a.value), 1e-300));
        CHECK(std::abs(a.grad(0) - b.grad(0)) <= 1e-12 * std::max(std::abs(a.grad(0)), 1e-300));
    }
}

TEST_CASE("leave-one-out density: exclusion, truncation floor, oracle") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 200, 11);
    const oracle::Draws raw = copy(s);
    const double h = 6.0, delta = 1e-4;
    const EstimatorConfig cfg = epan_config(h, delta, true);
    Stream rng(12, 0);
    for (int t = 0; t < 300; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.uniform() * 200);
        const Vector lam = Vector::Constant(1, s.lambdas(i, 0));
        const Vector z = Vector::Constant(1, s.zs(i, 0));
        const LooDensityEval e = loo_density(s, cfg, i, lam, z, delta);
        const oracle::LooValue o = oracle::loo(raw, static_cast<std::size_t>(i), lam(0), z(0), h);
        CHECK(e.value == doctest::Approx(o.value).epsilon(1e-12));
        CHECK(e.grad(0) == doctest::Approx(o.grad).epsilon(1e-12));
        CHECK(e.truncated_value >= delta / 3.0);
        CHECK(e.was_truncated == (std::abs(e.value) < delta / 3.0));

        // the excluded row must not move the estimate: drop it and rescale
        RandomizedSample drop;
        drop.lambda0 = s.lambda0;
        drop.lambdas.resize(199, 1);
        drop.zs.resize(199, 1);
        for (Eigen::Index j = 0, k = 0; j < 200; ++j) {
            if (j == i) continue;
            drop.lambdas(k, 0) = s.lambdas(j, 0);
            drop.zs(k++, 0) = s.zs(j, 0);
        }
        // leave out a far-away row of the reduced sample instead (index 0 unless it is close)
        const LooDensityEstimator reduced(drop, cfg, delta);
        Eigen::Index far = 0;
        for (Eigen::Index j = 0; j < 199; ++j)
            if (std::abs(drop.lambdas(j, 0) - lam(0)) > h || std::abs(drop.zs(j, 0) - z(0)) > h) {
                far = j;
                break;
            }
        const LooDensityEval r = reduced.evaluate(far, std::span<const double>(lam.data(), 1),
                                                  std::span<const double>(z.data(), 1));
        CHECK(r.value * 198.0 == doctest::Approx(e.value * 199.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(loo_density(s, cfg, 200, Vector::Zero(1), Vector::Zero(1), delta), ArgumentError);
    CHECK_THROWS_AS(loo_density(s, cfg, 0, Vector::Zero(1), Vector::Zero(1), 0.0), ArgumentError);
}

TEST_CASE("truncate_density") {
    CHECK(truncate_density(0.0, 3.0) == 1.0);
    CHECK(truncate_density(-0.5, 3.0) == 1.0);
    CHECK(truncate_density(-2.0, 3.0) == -2.0);
    CHECK(truncate_density(1.0, 3.0) == 1.0);
    CHECK(truncate_density(5.0, 3.0) == 5.0);
}

TEST_CASE("density gradient agrees with finite differences") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 2000, 4);
    const double h = 5.0;
    const LooDensityEstimator est(s, epan_config(h, 1e-6, true), 1e-6);
    Stream rng(99, 0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.uniform() * 2000);
        const double lam = s.lambdas(i, 0), z = s.zs(i, 0);
        double g = 0, scratch = 0;
        est.evaluate_raw(i, &lam, &z, &g);
        const double step = 1e-6 * h;
        const double up = lam + step, dn = lam - step;
        const double fd = (est.evaluate_raw(i, &up, &z, &scratch) - est.evaluate_raw(i, &dn, &z, &scratch)) / (2 * step);
        worst = std::max(worst, std::abs(fd - g));
    }
    CHECK(worst < 1e-4 * std::pow(h, -3.0));
}

TEST_CASE("asymptotic variance plug-in and report fields") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 5000, 8);
    const Payoff p = put(100.0);
    const double h = 5.0;
    const EstimateReport r = beta_tilde(s, epan_config(h, std::nullopt, true), ell, kLambda0, p);
    double w = 0, w2 = 0;
    long used = 0, evaluated = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double k = oracle::epan((100.0 - s.lambdas(i, 0)) / h);
        if (k == 0.0) continue;
        ++used;
        const double pay = std::max(100.0 - s.zs(i, 0), 0.0);
        if (pay != 0.0) ++evaluated;
        w += k;
        w2 += k * pay * pay;
    }
    // int (int K(l2 - l1) K'(l1) dl1)^2 dl2 by midpoint sums
    double factor = 0.0;
    const int m = 1500;
    for (int a = 0; a < 2 * m; ++a) {
        const double l2 = -2.0 + (a + 0.5) * (2.0 / m);
        double inner = 0.0;
        for (int b = 0; b < m; ++b) {
            const double l1 = -1.0 + (b + 0.5) * (2.0 / m);
            inner += oracle::epan(l2 - l1) * oracle::epan_slope(l1);
        }
        inner *= 2.0 / m;
        factor += inner * inner * (2.0 / m);
    }
    const double want = (w2 / w) / (0.75 / 25.0) * factor / (5000.0 * h * h * h);
    CHECK(r.asym_var(0, 0) == doctest::Approx(want).epsilon(1e-5));
    CHECK(r.n_used == used);
    CHECK(r.n_evaluated == evaluated);
    CHECK(r.delta >= 1e-4);
    CHECK(r.delta_pilot_min.has_value());
    CHECK(r.truncation_rate >= 0.0);
    CHECK(r.truncation_rate <= 1.0);
    CHECK(r.ci_95[0].first < r.beta_hat(0));
    CHECK(r.ci_95[0].second > r.beta_hat(0));
    const auto j = r.to_json();
    CHECK(j["estimator"] == "beta_tilde");
    CHECK(j["config"]["N"] == 5000);
}

TEST_CASE("degenerate payoffs and empty windows") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 500, 3);
    Payoff::Params zp;
    const Payoff zero(PayoffType::zero, zp);
    const EstimateReport r = beta_tilde(s, epan_config(5.0, 1e-6, true), ell, kLambda0, zero);
    CHECK(r.beta_hat(0) == 0.0);
    CHECK(r.n_evaluated == 0);

    // the window [lambda0 - h, lambda0 + h] misses every draw
    const Vector far = Vector::Constant(1, 1000.0);
    CHECK_THROWS_AS(beta_tilde(s, epan_config(1.0, 1e-6, true), ell, far, put(100.0)), EstimationError);
    CHECK_THROWS_AS(beta_bar_oracle(s, epan_config(1.0, 1e-6, true), ell, far, put(100.0), kBs), EstimationError);
    CHECK_THROWS_AS(beta_tilde(s, epan_config(5.0, 1e-6, true), RandomizingDensity(2, 25.0), kLambda0, put(100.0)),
                    ArgumentError);
}

TEST_CASE("config validation and feasibility") {
    CHECK_THROWS_AS(epan_config(0.0, 1e-6, true), ArgumentError);
    CHECK_THROWS_AS(epan_config(-1.0, 1e-6, true), ArgumentError);
    CHECK_THROWS_AS(epan_config(std::nan(""), 1e-6, true), ArgumentError);
    CHECK_THROWS_AS(epan_config(1.0, 0.0, true), ArgumentError);
    const EstimatorConfig c = epan_config(2.0, std::nullopt, true);
    CHECK(c.dimension_ok());
    CHECK(c.min_order() == 2);
    CHECK(c.inner_bandwidth() == 2.0);
    const Feasibility f = c.feasibility(100000);
    CHECK(f.rate_condition == doctest::Approx(std::pow(std::log(1e5), 4) / (1e5 * 4.0)));
    CHECK(f.rate_condition_sqrt2 == doctest::Approx(std::pow(std::log(1e5), 4) / (1e5 * std::pow(2.0, 2 + std::sqrt(2.0)))));
    // n = 3 with order-2 kernels violates n < p ^ q + 1
    const EstimatorConfig wide(1.0, make_kernel("epanechnikov", 2, 1), make_kernel("epanechnikov", 2, 3));
    CHECK_FALSE(wide.dimension_ok());
}

TEST_CASE("beta_bar_oracle: overloads agree, variance is the term variance over N") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 4000, 17);
    const Payoff p = put(100.0);
    const double h = 5.0;
    const EstimatorConfig cfg = epan_config(h, 1e-6, true);
    const EstimateReport a = beta_bar_oracle(s, cfg, ell, kLambda0, p, kBs);
    const EstimateReport b = beta_bar_oracle(s, cfg, ell, kLambda0, p,
                                             [](std::span<const double> l, std::span<const double> z,
                                                std::span<double> out) { out[0] = bs_score(kBs, l[0], z[0]); });
    CHECK(a.beta_hat(0) == b.beta_hat(0));

    std::vector<double> y(4000, 0.0);
    double sum = 0;
    for (Eigen::Index i = 0; i < 4000; ++i) {
        const double k = oracle::epan((100.0 - s.lambdas(i, 0)) / h);
        const double pay = std::max(100.0 - s.zs(i, 0), 0.0);
        if (k != 0.0 && pay != 0.0) y[i] = pay * k * bs_score(kBs, s.lambdas(i, 0), s.zs(i, 0)) / ((0.75 / 25.0) * h);
        sum += y[i];
    }
    const double mean = sum / 4000;
    double ss = 0;
    for (double v : y) ss += (v - mean) * (v - mean);
    CHECK(a.beta_hat(0) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(a.asym_var(0, 0) == doctest::Approx(ss / 3999 / 4000).epsilon(1e-9));

    const EulerDiffusionModel euler = make_euler_gbm(0.05, 0.2, 1.0, 4);
    CHECK_THROWS_AS(beta_bar_oracle(s, cfg, ell, kLambda0, p, euler), ConfigError);
}

TEST_CASE("auto delta honours the floor") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 3000, 21);
    EstimatorConfig cfg = epan_config(5.0, std::nullopt, true);
    cfg.delta_floor = 1e-6;
    const DeltaChoice a = auto_delta(s, cfg, put(100.0), kLambda0);
    CHECK(a.delta >= 1e-6);
    CHECK(a.delta == std::max(0.5 * a.pilot_min, 1e-6));
    cfg.delta_floor = 0.5;
    CHECK(auto_delta(s, cfg, put(100.0), kLambda0).delta >= 0.5);
    // restricting C_phi to the bulk gives a positive pilot minimum
    cfg.delta_floor = 1e-12;
    cfg.pilot_zmin = 90.0;
    const DeltaChoice bulk = auto_delta(s, cfg, put(100.0), kLambda0);
    CHECK(bulk.pilot_min > 0.0);
    CHECK(bulk.delta == doctest::Approx(0.5 * bulk.pilot_min));
}

TEST_CASE("estimates do not depend on the thread count") {
    const RandomizingDensity ell(1, 25.0);
    const RandomizedSample s = draw_sample(kBs, ell, kLambda0, 20000, 31);
    const EstimatorConfig cfg = epan_config(6.0, std::nullopt, true);
    set_thread_count(1);
    const EstimateReport one = beta_tilde(s, cfg, ell, kLambda0, put(100.0));
    set_thread_count(4);
    const EstimateReport four = beta_tilde(s, cfg, ell, kLambda0, put(100.0));
    set_thread_count(1);
    CHECK(one.beta_hat(0) == four.beta_hat(0));
    CHECK(one.asym_var(0, 0) == four.asym_var(0, 0));
    CHECK(one.truncation_rate == four.truncation_rate);
}

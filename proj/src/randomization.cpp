#include "greeks/randomization.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "greeks/error.hpp"
#include "greeks/parallel.hpp"

namespace greeks {

EllProfile parse_ell_profile(std::string_view name) {
    if (name == "epanechnikov_product" || name == "epanechnikov") return EllProfile::epanechnikov_product;
    if (name == "cosine_product" || name == "cosine") return EllProfile::cosine_product;
    throw ConfigError("unknown randomizing profile '" + std::string(name) + "'");
}

std::string_view to_string(EllProfile profile) {
    return profile == EllProfile::epanechnikov_product ? "epanechnikov_product" : "cosine_product";
}

RandomizingDensity::RandomizingDensity(int dimension, double radius, EllProfile profile)
    : d_(dimension), radius_(radius), profile_(profile) {
    if (d_ < 1 || d_ > 16) throw ArgumentError("randomizing density dimension must be in [1, 16]");
    if (!(radius_ > 0.0) || !std::isfinite(radius_)) throw ArgumentError("randomizing radius must be positive");
}

double RandomizingDensity::profile_value(double x) const noexcept {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    if (profile_ == EllProfile::epanechnikov_product) return 0.75 * (1.0 - x * x);
    return 0.25 * std::numbers::pi * std::cos(0.5 * std::numbers::pi * x);
}

double RandomizingDensity::profile_slope(double x) const noexcept {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    if (profile_ == EllProfile::epanechnikov_product) return -1.5 * x;
    return -0.125 * std::numbers::pi * std::numbers::pi * std::sin(0.5 * std::numbers::pi * x);
}

double RandomizingDensity::profile_cdf(double x) const noexcept {
    if (x <= -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (profile_ == EllProfile::epanechnikov_product) return 0.25 * (2.0 + 3.0 * x - x * x * x);
    return 0.5 * (1.0 + std::sin(0.5 * std::numbers::pi * x));
}

double RandomizingDensity::profile_inverse_cdf(double u) const noexcept {
    // Epanechnikov: F(2 sin t) = (1 + sin 3t) / 2.
    if (profile_ == EllProfile::epanechnikov_product) return 2.0 * std::sin(std::asin(2.0 * u - 1.0) / 3.0);
    return 2.0 / std::numbers::pi * std::asin(2.0 * u - 1.0);
}

double RandomizingDensity::evaluate(std::span<const double> u) const noexcept {
    double value = 1.0;
    for (int j = 0; j < d_; ++j) value *= profile_value(u[j] / radius_) / radius_;
    return value;
}

double RandomizingDensity::gradient(std::span<const double> u, std::span<double> out) const noexcept {
    double values[16];
    double slopes[16];
    for (int j = 0; j < d_; ++j) {
        values[j] = profile_value(u[j] / radius_) / radius_;
        slopes[j] = profile_slope(u[j] / radius_) / (radius_ * radius_);
    }
    double product = 1.0;
    for (int i = 0; i < d_; ++i) {
        double g = slopes[i];
        for (int j = 0; j < d_; ++j)
            if (j != i) g *= values[j];
        out[i] = g;
        product *= values[i];
    }
    return product;
}

void RandomizingDensity::sample(Stream& rng, std::span<double> out) const noexcept {
    for (int j = 0; j < d_; ++j) out[j] = radius_ * profile_inverse_cdf(rng.uniform());
}

double RandomizingDensity::at_origin() const noexcept { return std::pow(profile_value(0.0) / radius_, d_); }

double RandomizingDensity::coordinate_sd() const noexcept {
    // Epanechnikov: E[x^2] = 1/5; cosine: E[x^2] = 1 - 8/pi^2.
    const double second = profile_ == EllProfile::epanechnikov_product
                              ? 0.2
                              : 1.0 - 8.0 / (std::numbers::pi * std::numbers::pi);
    return radius_ * std::sqrt(second);
}

RandomizedSample draw_sample(const Model& model, const RandomizingDensity& ell, const Vector& lambda0,
                             Eigen::Index n_draws, std::uint64_t seed) {
    if (n_draws <= 0) throw ArgumentError("draw_sample needs n_draws >= 1");
    const int d = model.param_dim();
    const int n = model.state_dim();
    if (lambda0.size() != d || ell.dimension() != d)
        throw ArgumentError("lambda0, ell and model disagree on the parameter dimension");

    RandomizedSample sample;
    sample.lambda0 = lambda0;
    sample.seed = seed;
    sample.lambdas.resize(n_draws, d);
    sample.zs.resize(n_draws, n);
    for_each_chunk(static_cast<std::size_t>(n_draws), 4096, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> offset(d);
        for (std::size_t i = begin; i < end; ++i) {
            Stream rng(seed, i);
            ell.sample(rng, offset);
            double* lam = sample.lambdas.row(static_cast<Eigen::Index>(i)).data();
            for (int j = 0; j < d; ++j) lam[j] = lambda0(j) - offset[j];
            model.simulate(std::span<const double>(lam, d), rng,
                           std::span<double>(sample.zs.row(static_cast<Eigen::Index>(i)).data(), n));
        }
    });
    return sample;
}

void log_grad_ell(const RandomizingDensity& ell, std::span<const double> lambda, std::span<const double> lambda0,
                  std::span<double> out) {
    const int d = ell.dimension();
    double u[16];
    for (int j = 0; j < d; ++j) u[j] = lambda0[j] - lambda[j];
    const double value = ell.gradient(std::span<const double>(u, d), out);
    if (!(value > RandomizingDensity::floor_eps))
        throw DomainError("log-gradient of ell requested outside its support");
    for (int j = 0; j < d; ++j) out[j] /= value;
}

Vector log_grad_ell(const RandomizingDensity& ell, const Vector& lambda, const Vector& lambda0) {
    Vector out(ell.dimension());
    log_grad_ell(ell, std::span<const double>(lambda.data(), lambda.size()),
                 std::span<const double>(lambda0.data(), lambda0.size()), std::span<double>(out.data(), out.size()));
    return out;
}

} // namespace greeks

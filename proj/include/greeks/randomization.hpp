#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "greeks/models.hpp"
#include "greeks/rng.hpp"
#include "greeks/types.hpp"

namespace greeks {

enum class EllProfile { epanechnikov_product, cosine_product };

EllProfile parse_ell_profile(std::string_view name);
std::string_view to_string(EllProfile profile);

/// Randomizing density ell on R^d: a product of identical univariate
/// profiles rescaled to [-radius, radius].
class RandomizingDensity {
public:
    /// Values of ell at or below this are treated as outside the support.
    static constexpr double floor_eps = 1e-300;

    RandomizingDensity(int dimension, double radius, EllProfile profile = EllProfile::epanechnikov_product);

    int dimension() const noexcept { return d_; }
    double radius() const noexcept { return radius_; }
    EllProfile profile() const noexcept { return profile_; }

    double evaluate(std::span<const double> u) const noexcept;
    /// grad ell(u) into `out`; returns ell(u).
    double gradient(std::span<const double> u, std::span<double> out) const noexcept;
    /// Inverse-CDF draw of one d-vector into `out`.
    void sample(Stream& rng, std::span<double> out) const noexcept;

    /// ell(0).
    double at_origin() const noexcept;
    /// Standard deviation of one coordinate.
    double coordinate_sd() const noexcept;

    /// Univariate profile on [-1, 1] and its CDF (unit radius).
    double profile_value(double x) const noexcept;
    double profile_cdf(double x) const noexcept;

private:
    double profile_slope(double x) const noexcept;
    double profile_inverse_cdf(double u) const noexcept;

    int d_;
    double radius_;
    EllProfile profile_;
};

/// Draws (Lambda_i, Z_i), i < N, from ell(lambda0 - lambda) f(lambda, z).
struct RandomizedSample {
    Vector lambda0;
    RowMatrix lambdas;  // N x d
    RowMatrix zs;       // N x n
    std::uint64_t seed = 0;

    Eigen::Index size() const noexcept { return lambdas.rows(); }
    int param_dim() const noexcept { return static_cast<int>(lambdas.cols()); }
    int state_dim() const noexcept { return static_cast<int>(zs.cols()); }
};

/// Row i uses the stream (seed, i): L_i ~ ell, Lambda_i = lambda0 - L_i,
/// Z_i = model.simulate(Lambda_i).
RandomizedSample draw_sample(const Model& model, const RandomizingDensity& ell, const Vector& lambda0,
                             Eigen::Index n_draws, std::uint64_t seed);

/// grad ell(lambda0 - lambda) / ell(lambda0 - lambda) into `out`; throws
/// DomainError where ell(lambda0 - lambda) <= floor_eps.
void log_grad_ell(const RandomizingDensity& ell, std::span<const double> lambda, std::span<const double> lambda0,
                  std::span<double> out);
Vector log_grad_ell(const RandomizingDensity& ell, const Vector& lambda, const Vector& lambda0);

} // namespace greeks

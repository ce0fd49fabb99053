#pragma once

#include <cstdint>
#include <string_view>

#include "greeks/estimator.hpp"
#include "greeks/models.hpp"
#include "greeks/types.hpp"

namespace greeks {

enum class FdScheme { forward, central };

FdScheme parse_fd_scheme(std::string_view name);
std::string_view to_string(FdScheme scheme);

struct BaselineConfig {
    double epsilon = 1.0;
    bool use_common_randoms = true;
    FdScheme scheme = FdScheme::central;
    /// Noise scale of the perturbed weight in the variance experiment.
    double noise_scale = 1.0;

    void validate() const;
};

/// Draw i of every plain estimator below uses the stream (seed, i).
EstimateReport finite_difference_greek(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                       const BaselineConfig& cfg, Eigen::Index n_draws, std::uint64_t seed);

EstimateReport likelihood_ratio_greek(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                      Eigen::Index n_draws, std::uint64_t seed);

EstimateReport pathwise_greek(const Model& model, const Payoff& payoff, const Vector& lambda0, Eigen::Index n_draws,
                              std::uint64_t seed);

struct WeightVarianceResult {
    Matrix var_optimal;
    Matrix var_perturbed;
    Vector mean_optimal;
    Vector mean_perturbed;
    /// Standard error of each coordinate of mean_perturbed - mean_optimal.
    Vector mean_gap_se;
    /// trace(var_perturbed) - trace(var_optimal) and its Monte Carlo standard error.
    double trace_gap = 0.0;
    double trace_gap_se = 0.0;
};

/// Compares the score weight s with s + eta, eta ~ noise_scale * N(0, I)
/// independent of Z, on shared draws.
WeightVarianceResult weight_variance_experiment(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                                Eigen::Index n_draws, double noise_scale, std::uint64_t seed);

} // namespace greeks

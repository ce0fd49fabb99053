#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "greeks/kernel.hpp"
#include "greeks/models.hpp"
#include "greeks/randomization.hpp"
#include "greeks/types.hpp"

namespace greeks {

enum class RateSource { analytic_quadrature, pilot_mc, rule_of_thumb };

RateSource parse_rate_source(std::string_view name);
std::string_view to_string(RateSource source);

struct RateConstants {
    Vector c1;
    Vector c2;
    Matrix sigma_tilde;
    RateSource source = RateSource::analytic_quadrature;
    /// E[phi(Z(lambda0))^2], the payoff part of sigma_tilde.
    double phi_sq_mean = 0.0;

    nlohmann::json to_json() const;
};

struct RateOptions {
    /// Finite-difference steps as a fraction of the lambda / z scale.
    double fd_step = 0.02;
    /// Pilot sample size (z-range discovery, pilot_mc moments).
    long pilot_size = 20000;
    std::uint64_t pilot_seed = 0x9d1f5eedULL;
    double rel_tol = 1e-8;
};

/// Bias and variance constants of beta_tilde for the given kernels.
/// analytic_quadrature needs a model density and d = n = 1; pilot_mc needs
/// only a simulator.
RateConstants compute_rate_constants(const Model& model, const Payoff& payoff, const RandomizingDensity& ell,
                                     const Vector& lambda0, const ProductKernel& kernel_k,
                                     const ProductKernel& kernel_h, RateSource method, const RateOptions& opts = {});

struct BandwidthDiagnostics {
    double rate_condition_sqrt2 = 0.0;
    double rate_condition = 0.0;
    bool undersmooth_flag = false;
};

struct BandwidthPlan {
    double h_star = 0.0;
    double rate_exponent = 0.0;
    bool feasible = false;
    BandwidthDiagnostics diagnostics;
    long n_draws = 0;
    int d = 1;
    int n = 1;
    int p = 2;
    int q = 2;
    RateSource source = RateSource::analytic_quadrature;
    /// Set by undersmoothed_bandwidth.
    std::optional<double> h_undersmoothed;
    double gamma = 0.0;

    /// d + 2 (p ^ q) + 2.
    int denominator() const noexcept;
    nlohmann::json to_json() const;
};

/// MSE-optimal h = ((d+2) tr Sigma / (2 m |C|^2 N))^{1/(d+2m+2)}, m = p ^ q,
/// with C = C1 1{p<=q} + C2 1{q<=p} (Euclidean norm for d > 1).
BandwidthPlan optimal_bandwidth(const RateConstants& constants, long n_draws, int p, int q, int d, int n = 1);

/// h = c0 * sd(ell) * N^{-1/(d+2m+2)}.
BandwidthPlan rule_of_thumb_bandwidth(const RandomizingDensity& ell, long n_draws, int p, int q, int n = 1,
                                      double c0 = 1.0);

/// h_star * N^{-gamma/(d+2m+2)}, i.e. h ~ N^{-(1+gamma)/(d+2m+2)}. Records the
/// result in the plan and sets undersmooth_flag when N h^{d+2+2m} < 1.
double undersmoothed_bandwidth(BandwidthPlan& plan, double gamma);

/// (ln N)^4 / (N h^{d+n+n sqrt 2}) and (ln N)^4 / (N h^{d+n}).
BandwidthDiagnostics bandwidth_diagnostics(long n_draws, double h, int d, int n);

} // namespace greeks

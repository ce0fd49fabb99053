#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "greeks/kernel.hpp"
#include "greeks/models.hpp"
#include "greeks/neighbor_grid.hpp"
#include "greeks/randomization.hpp"
#include "greeks/types.hpp"

namespace greeks {

struct BinningConfig {
    bool enabled = true;
    /// Cell edge; 0 picks h_inner times the largest kernel support radius.
    double cell_size = 0.0;
};

/// Feasibility diagnostics for a configuration at sample size N.
struct Feasibility {
    /// n < (p ^ q) + 1.
    bool dimension_ok = false;
    /// (ln N)^4 / (N h^{d + n + n sqrt 2}); kept alongside the tighter form below.
    double rate_condition_sqrt2 = 0.0;
    /// (ln N)^4 / (N h^{d + n}).
    double rate_condition = 0.0;
};

class EstimatorConfig {
public:
    EstimatorConfig(double h, ProductKernel kernel_k, ProductKernel kernel_h, std::optional<double> delta = std::nullopt,
                    BinningConfig binning = {}, std::optional<double> h_inner = std::nullopt);

    double h;
    /// Bandwidth of the leave-one-out density estimator; defaults to h.
    std::optional<double> h_inner;
    /// Truncation floor; nullopt selects it from a pilot density estimate.
    std::optional<double> delta;
    double delta_floor = 1e-4;
    /// Lower edge of C_phi used by the delta pilot; default lifts the payoff
    /// box's lower edge by 1e-3 of its width.
    std::optional<double> pilot_zmin;
    ProductKernel kernel_k;
    ProductKernel kernel_h;
    BinningConfig binning;

    double inner_bandwidth() const noexcept { return h_inner.value_or(h); }
    int param_dim() const noexcept { return kernel_k.dimension(); }
    int state_dim() const noexcept { return kernel_h.dimension(); }
    int min_order() const noexcept { return std::min(kernel_k.order(), kernel_h.order()); }
    /// Fixed at construction.
    bool dimension_ok() const noexcept { return dimension_ok_; }
    Feasibility feasibility(Eigen::Index n_draws) const;
    nlohmann::json to_json() const;

private:
    bool dimension_ok_;
};

/// Leave-one-out joint density estimate at one point.
struct LooDensityEval {
    double value = 0.0;
    Vector grad;
    double truncated_value = 0.0;
    bool was_truncated = false;
};

struct EstimateReport {
    std::string estimator;
    Vector beta_hat;
    /// Draws with a nonzero outer kernel weight.
    long n_used = 0;
    /// Draws whose score was evaluated (nonzero weight and payoff).
    long n_evaluated = 0;
    double truncation_rate = 0.0;
    Matrix asym_var;
    std::vector<std::pair<double, double>> ci_95;
    double timing = 0.0;
    double h = 0.0;
    double delta = 0.0;
    /// Pilot estimate of min phi over the kernel window times C_phi (auto delta only).
    std::optional<double> delta_pilot_min;
    nlohmann::json config_echo;

    Vector std_error() const;
    /// Symmetric interval beta_hat +- z * std_error.
    std::vector<std::pair<double, double>> interval(double z) const;
    nlohmann::json to_json() const;
};

/// Evaluates phi-hat^{-i} and its lambda-gradient against a fixed sample.
/// Keeps a reference to `sample` (which must outlive it); the kernels are copied.
class LooDensityEstimator {
public:
    LooDensityEstimator(const RandomizedSample& sample, const EstimatorConfig& cfg, double delta);

    LooDensityEval evaluate(Eigen::Index exclude, std::span<const double> lambda, std::span<const double> z) const;

    /// Unscaled-free hot path: returns phi-hat and writes its gradient to `grad`.
    double evaluate_raw(Eigen::Index exclude, const double* lambda, const double* z, double* grad) const;

    double delta() const noexcept { return delta_; }
    bool binned() const noexcept { return grid_ != nullptr; }

private:
    const RandomizedSample& sample_;
    ProductKernel k_;
    ProductKernel h_;
    int d_;
    int n_;
    double inv_bw_;
    double value_scale_;
    double grad_scale_;
    double delta_;
    int reach_ = 1;
    std::vector<double> joint_;  // N x (d + n) row-major, naive path
    std::unique_ptr<NeighborGrid> grid_;
};

/// Truncation rule: |v| < delta/3 -> delta/3, else v.
inline double truncate_density(double value, double delta) noexcept {
    return (std::abs(value) < delta / 3.0) ? delta / 3.0 : value;
}

LooDensityEval loo_density(const RandomizedSample& sample, const EstimatorConfig& cfg, Eigen::Index i,
                           const Vector& lambda, const Vector& z, double delta);

Vector score_hat(const RandomizedSample& sample, const EstimatorConfig& cfg, const RandomizingDensity& ell,
                 const Vector& lambda0, Eigen::Index i, const Vector& lambda, const Vector& z, double delta);

struct DeltaChoice {
    double delta;
    double pilot_min;
};

/// Truncation floor from a pilot density estimate: half the smallest pilot
/// value of phi over the kernel window around lambda0 times C_phi, floored.
DeltaChoice auto_delta(const RandomizedSample& sample, const EstimatorConfig& cfg, const Payoff& payoff,
                       const Vector& lambda0);

/// Double-kernel estimator with estimated score.
EstimateReport beta_tilde(const RandomizedSample& sample, const EstimatorConfig& cfg, const RandomizingDensity& ell,
                          const Vector& lambda0, const Payoff& payoff);

using ScoreFn = std::function<void(std::span<const double> lambda, std::span<const double> z, std::span<double> out)>;

/// Kernel estimator with the true score (not implementable in practice; oracle).
EstimateReport beta_bar_oracle(const RandomizedSample& sample, const EstimatorConfig& cfg,
                               const RandomizingDensity& ell, const Vector& lambda0, const Payoff& payoff,
                               const ScoreFn& score);
EstimateReport beta_bar_oracle(const RandomizedSample& sample, const EstimatorConfig& cfg,
                               const RandomizingDensity& ell, const Vector& lambda0, const Payoff& payoff,
                               const Model& model);

} // namespace greeks

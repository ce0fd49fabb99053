#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "greeks/bandwidth.hpp"
#include "greeks/baselines.hpp"
#include "greeks/estimator.hpp"
#include "greeks/kernel.hpp"
#include "greeks/models.hpp"
#include "greeks/randomization.hpp"

namespace greeks {

enum class BandwidthMethod { analytic, pilot, rule_of_thumb, fixed };

struct RunConfig {
    // model
    std::string model_type = "black_scholes";
    double rate = 0.05;
    double vol = 0.2;
    double maturity = 1.0;
    int steps = 64;
    double drift_const = 0.0;  // euler_custom: dX = (a + b X) dt + vol dW
    double drift_lin = 0.0;
    Vector lambda0 = Vector::Constant(1, 100.0);
    std::optional<double> true_greek;

    // payoff
    PayoffType payoff_type = PayoffType::put;
    Payoff::Params payoff_params;
    bool discount = false;
    std::optional<double> zmin;

    // ell; radius nullopt means "auto"
    EllProfile profile = EllProfile::epanechnikov_product;
    std::optional<double> radius = 25.0;
    bool match_kernel = false;
    bool couple_radius_to_h = false;

    // estimator
    std::string k_name = "epanechnikov";
    int k_order = 2;
    std::string h_name = "epanechnikov";
    int h_order = 2;
    std::optional<double> h_fixed;
    std::optional<double> h_inner;
    std::optional<double> delta;
    double delta_floor = 1e-4;
    BinningConfig binning;
    long run_n = 100000;

    // bandwidth
    BandwidthMethod method = BandwidthMethod::analytic;
    double gamma = 0.0;
    double c0 = 1.0;
    RateOptions rate_options;

    // baselines; epsilon nullopt means 0.01 |lambda0|
    std::optional<double> fd_epsilon;
    FdScheme fd_scheme = FdScheme::central;
    bool common_randoms = true;
    double noise_scale = 1.0;

    // sweep
    std::vector<long> ns;
    int replications = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> estimators;

    // clt
    long clt_n = 30000;
    int clt_replications = 200;
    double clt_gamma = 0.42;
    double oversmooth_factor = 2.5;

    std::string out_dir = "out";
    nlohmann::json raw;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    BaselineConfig baseline() const;
};

/// Immutable objects shared by every cell of an experiment.
struct Experiment {
    RunConfig config;
    std::shared_ptr<const Model> model;
    Payoff payoff;
    ProductKernel kernel_k;
    ProductKernel kernel_h;
    RandomizingDensity ell;
    /// NaN when no reference value is available.
    double beta0;
    std::optional<RateConstants> constants;

    BandwidthPlan plan(long n_draws) const;
    /// Bandwidth the estimators use at N (plan, then undersmoothing).
    double bandwidth(long n_draws) const;
    /// ell for a cell, honoring couple_radius_to_h.
    RandomizingDensity ell_for(double h) const;
    EstimatorConfig estimator_config(double h) const;
    std::vector<std::string> available_estimators() const;
};

Experiment build_experiment(const RunConfig& config);

/// Seed of cell (N, rep): base xor hash(N, rep).
std::uint64_t cell_seed(std::uint64_t base, long n_draws, int rep);

struct CellRecord {
    std::string estimator;
    long n_draws = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    double h = 0.0;
    Vector beta;
    Vector std_error;
    double truncation_rate = 0.0;
    long n_used = 0;
    bool ok = true;
    std::string error;
};

struct AggregateRow {
    std::string estimator;
    long n_draws = 0;
    int component = 0;
    int replications_ok = 0;
    double h = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    double mse = 0.0;
    double mse_se = 0.0;
    /// variance * N * h^{d+2}.
    double var_scaled = 0.0;
};

struct SlopeFit {
    std::string estimator;
    int component = 0;
    double slope = 0.0;
    double slope_se = 0.0;
    int points = 0;
    bool ok = false;
};

struct SweepResult {
    std::vector<CellRecord> cells;
    std::vector<AggregateRow> aggregates;
    std::vector<SlopeFit> slopes;
    std::vector<BandwidthPlan> plans;
    double beta0 = 0.0;
    int param_dim = 1;
    long failed_cells = 0;
    long total_cells = 0;
    nlohmann::json meta;

    const SlopeFit* slope_for(const std::string& estimator, int component = 0) const;
    /// max / min of var_scaled over N for one estimator.
    double variance_ratio(const std::string& estimator, int component = 0) const;
    bool failed() const noexcept { return total_cells > 0 && failed_cells * 10 > total_cells; }
};

/// Weighted least squares of log MSE on log N, weights 1/se(log MSE)^2.
SlopeFit fit_mse_slope(const std::vector<AggregateRow>& rows);

/// Per-(estimator, N, component) bias, variance (divisor R), MSE and slope fits.
void aggregate_sweep(SweepResult& result);

SweepResult run_sweep(const Experiment& experiment);

/// Estimates of every available estimator at one N and seed.
nlohmann::json run_single(const Experiment& experiment, long n_draws, std::uint64_t seed);

enum class PivotEstimator { beta_tilde, beta_bar_oracle };

struct CltResult {
    long n_draws = 0;
    double h = 0.0;
    int replications = 0;
    std::vector<double> pivots;
    double pivot_mean = 0.0;
    double pivot_var = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    bool pass = false;
    /// N h^{d+2+2(p^q)}.
    double undersmooth_product = 0.0;
    long failed = 0;

    nlohmann::json to_json() const;
};

/// Moment screen of (beta - beta0) / sqrt(asym_var) over R >= 200 replications.
CltResult clt_check(const Experiment& experiment, long n_draws, double h, int replications,
                    PivotEstimator which = PivotEstimator::beta_tilde);

/// Moment statistics and pass bands on a given set of pivots.
CltResult clt_screen(std::vector<double> pivots);

/// Writes sweep.csv, aggregate.csv, run.json and one gnuplot-ready mse_<estimator>.dat per estimator.
std::vector<std::filesystem::path> emit_reports(const SweepResult& result, const std::filesystem::path& dir);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& value);
/// Shortest round-trip decimal ("%.17g"); "nan" for NaN.
std::string format_double(double value);

void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace greeks

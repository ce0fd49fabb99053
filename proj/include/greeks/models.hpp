#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "greeks/rng.hpp"
#include "greeks/types.hpp"

namespace greeks {

struct Capabilities {
    bool has_density = false;
    bool has_score = false;
    bool has_true_greek = false;
    bool has_tangent = false;
};

/// A parameterized random variable Z(lambda) in R^n, lambda in R^d.
class Model {
public:
    virtual ~Model() = default;

    virtual int param_dim() const = 0;
    virtual int state_dim() const = 0;
    virtual Capabilities capabilities() const = 0;
    virtual std::string name() const = 0;

    /// Draws Z(lambda) into `z` using only `rng`.
    virtual void simulate(std::span<const double> lambda, Stream& rng, std::span<double> z) const = 0;

    /// Draws Z(lambda) and the tangent dZ/dlambda (n x d, row-major).
    virtual void simulate_with_tangent(std::span<const double> lambda, Stream& rng, std::span<double> z,
                                       std::span<double> tangent) const;

    /// Whether lambda lies in the parameter domain of the simulator.
    virtual bool admissible(std::span<const double> lambda) const;

    virtual double density(std::span<const double> lambda, std::span<const double> z) const;
    /// grad_lambda log f(lambda, z) into `out` (length d).
    virtual void score(std::span<const double> lambda, std::span<const double> z, std::span<double> out) const;
};

/// Terminal spot of geometric Brownian motion, parameterized by the initial
/// spot (d = n = 1).
class BlackScholesModel final : public Model {
public:
    BlackScholesModel(double rate, double vol, double maturity);

    int param_dim() const override { return 1; }
    int state_dim() const override { return 1; }
    Capabilities capabilities() const override { return {true, true, true, true}; }
    std::string name() const override { return "black_scholes"; }

    void simulate(std::span<const double> lambda, Stream& rng, std::span<double> z) const override;
    void simulate_with_tangent(std::span<const double> lambda, Stream& rng, std::span<double> z,
                               std::span<double> tangent) const override;
    bool admissible(std::span<const double> lambda) const override;
    double density(std::span<const double> lambda, std::span<const double> z) const override;
    void score(std::span<const double> lambda, std::span<const double> z, std::span<double> out) const override;

    /// lambda * exp((r - sigma^2/2) T + sigma sqrt(T) g).
    double terminal(double spot, double gaussian) const noexcept;
    /// Drift of log(Z / lambda): (r - sigma^2/2) T.
    double log_drift() const noexcept { return (r_ - 0.5 * sigma_ * sigma_) * t_; }
    /// Standard deviation of log Z: sigma sqrt(T).
    double log_vol() const noexcept;

    double rate() const noexcept { return r_; }
    double vol() const noexcept { return sigma_; }
    double maturity() const noexcept { return t_; }

private:
    double r_;
    double sigma_;
    double t_;
};

/// Explicit Euler-Maruyama discretization of
///   dX = mu(t, lambda, X) dt + sigma(t, lambda, X) dW,  X_0 = x0(lambda),
/// returning X_T.
class EulerDiffusionModel final : public Model {
public:
    using InitialFn = std::function<Vector(const Vector& lambda)>;
    using DriftFn = std::function<Vector(double t, const Vector& lambda, const Vector& x)>;
    using DiffusionFn = std::function<Matrix(double t, const Vector& lambda, const Vector& x)>;

    EulerDiffusionModel(int param_dim, int state_dim, int noise_dim, InitialFn x0, DriftFn mu, DiffusionFn sigma,
                        double horizon, int steps, std::optional<double> ellipticity_c = std::nullopt,
                        std::string label = "euler");

    int param_dim() const override { return d_; }
    int state_dim() const override { return n_; }
    int noise_dim() const noexcept { return m_; }
    int steps() const noexcept { return steps_; }
    double horizon() const noexcept { return horizon_; }
    const std::optional<double>& ellipticity_c() const noexcept { return ellipticity_c_; }
    Capabilities capabilities() const override { return {}; }
    std::string name() const override { return label_; }

    void simulate(std::span<const double> lambda, Stream& rng, std::span<double> z) const override;

    /// Euler path driven by the given standard-normal increments
    /// (steps x noise_dim, row-major).
    Vector simulate_with_increments(const Vector& lambda, std::span<const double> gaussians) const;

    struct EllipticityReport {
        double min_eigenvalue;
        double max_eigenvalue;
        long points_checked;
        bool satisfied;
    };

    /// Simulates `paths` paths and records the extreme eigenvalues of
    /// sigma sigma^T over every visited grid point; `satisfied` compares them
    /// with [1/c, c]. Requires ellipticity_c.
    EllipticityReport check_ellipticity(const Vector& lambda, std::uint64_t seed, int paths) const;

private:
    int d_;
    int n_;
    int m_;
    InitialFn x0_;
    DriftFn mu_;
    DiffusionFn sigma_;
    double horizon_;
    int steps_;
    std::optional<double> ellipticity_c_;
    std::string label_;
};

/// GBM through the Euler scheme: x0 = lambda, mu = r x, sigma = vol x.
EulerDiffusionModel make_euler_gbm(double rate, double vol, double maturity, int steps);

/// dX = (a + b X) dt + c dW, x0 = lambda (uniformly elliptic with c_sigma = max(c^2, 1/c^2) * (1 + 1e-12)).
EulerDiffusionModel make_euler_linear(double drift_const, double drift_lin, double vol, double maturity, int steps);

enum class PayoffType { put, truncated_call, digital, smooth_put, basket_put, constant, zero, linear };

PayoffType parse_payoff_type(std::string_view name);
std::string_view to_string(PayoffType type);

/// Payoff phi: R^n -> R. `scale` multiplies every value (used for the
/// discount factor when prices are quoted undiscounted).
class Payoff {
public:
    struct Params {
        double strike = 100.0;
        double cap = std::numeric_limits<double>::infinity();  // truncated_call upper cut
        double width = 1.0;                                    // smooth_put blending half-width
        double level = 1.0;                                    // constant payoff value
        double scale = 1.0;
        int state_dim = 1;
    };

    Payoff(PayoffType type, Params params);

    PayoffType type() const noexcept { return type_; }
    const Params& params() const noexcept { return p_; }
    double strike() const noexcept { return p_.strike; }
    double scale() const noexcept { return p_.scale; }
    int state_dim() const noexcept { return p_.state_dim; }

    double evaluate(std::span<const double> z) const noexcept;
    double operator()(std::span<const double> z) const noexcept { return evaluate(z); }

    /// Support box C_phi (may be unbounded for stress payoffs).
    const std::vector<double>& support_lo() const noexcept { return lo_; }
    const std::vector<double>& support_hi() const noexcept { return hi_; }
    bool compact() const noexcept;
    bool continuous() const noexcept { return continuous_; }
    bool has_derivative() const noexcept { return has_derivative_; }
    /// Gradient of phi (a.e.) into `out`; throws ConfigError when unavailable.
    void derivative(std::span<const double> z, std::span<double> out) const;
    /// Points where phi or phi' is not smooth in the first coordinate (for quadrature splitting).
    std::vector<double> kinks() const;

private:
    PayoffType type_;
    Params p_;
    std::vector<double> lo_;
    std::vector<double> hi_;
    bool continuous_ = true;
    bool has_derivative_ = true;
};

/// E[phi(Z(lambda))] for the Black-Scholes model; the put uses the closed
/// form, every other payoff 1-d quadrature against the lognormal law.
double bs_true_value(const BlackScholesModel& model, const Payoff& payoff, double lambda);

/// d/dlambda of bs_true_value; closed form for the put, Richardson-extrapolated
/// central differences (step 1e-5 lambda) otherwise.
double bs_true_greek(const BlackScholesModel& model, const Payoff& payoff, double lambda);

/// (ln(z / lambda) - (r - sigma^2/2) T) / (lambda sigma^2 T).
double bs_score(const BlackScholesModel& model, double lambda, double z);

/// Black-Scholes put price with the usual e^{-rT} discount on the strike.
double black_scholes_put(double spot, double strike, double rate, double vol, double maturity);

} // namespace greeks

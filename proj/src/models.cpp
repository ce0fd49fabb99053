#include "greeks/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "greeks/error.hpp"
#include "greeks/quadrature.hpp"

namespace greeks {

void Model::simulate_with_tangent(std::span<const double>, Stream&, std::span<double>, std::span<double>) const {
    throw ConfigError("model '" + name() + "' does not provide a tangent process");
}

bool Model::admissible(std::span<const double> lambda) const {
    return std::all_of(lambda.begin(), lambda.end(), [](double v) { return std::isfinite(v); });
}

double Model::density(std::span<const double>, std::span<const double>) const {
    throw ConfigError("model '" + name() + "' has no analytic density");
}

void Model::score(std::span<const double>, std::span<const double>, std::span<double>) const {
    throw ConfigError("model '" + name() + "' has no analytic score");
}

// ---------------------------------------------------------------------------

BlackScholesModel::BlackScholesModel(double rate, double vol, double maturity)
    : r_(rate), sigma_(vol), t_(maturity) {
    if (!(vol > 0.0)) throw ArgumentError("Black-Scholes volatility must be positive");
    if (!(maturity > 0.0)) throw ArgumentError("Black-Scholes maturity must be positive");
}

double BlackScholesModel::log_vol() const noexcept { return sigma_ * std::sqrt(t_); }

double BlackScholesModel::terminal(double spot, double gaussian) const noexcept {
    return spot * std::exp(log_drift() + log_vol() * gaussian);
}

bool BlackScholesModel::admissible(std::span<const double> lambda) const { return lambda[0] > 0.0; }

void BlackScholesModel::simulate(std::span<const double> lambda, Stream& rng, std::span<double> z) const {
    if (!(lambda[0] > 0.0)) throw DomainError("Black-Scholes spot must be positive");
    z[0] = terminal(lambda[0], rng.normal());
}

void BlackScholesModel::simulate_with_tangent(std::span<const double> lambda, Stream& rng, std::span<double> z,
                                              std::span<double> tangent) const {
    simulate(lambda, rng, z);
    tangent[0] = z[0] / lambda[0];
}

double BlackScholesModel::density(std::span<const double> lambda, std::span<const double> z) const {
    if (!(z[0] > 0.0) || !(lambda[0] > 0.0)) return 0.0;
    const double s = log_vol();
    const double x = (std::log(z[0] / lambda[0]) - log_drift()) / s;
    return std::exp(-0.5 * x * x) / (z[0] * s * std::sqrt(2.0 * std::numbers::pi));
}

void BlackScholesModel::score(std::span<const double> lambda, std::span<const double> z,
                              std::span<double> out) const {
    out[0] = bs_score(*this, lambda[0], z[0]);
}

double bs_score(const BlackScholesModel& model, double lambda, double z) {
    if (!(z > 0.0)) throw DomainError("score needs z > 0");
    if (!(lambda > 0.0)) throw DomainError("score needs lambda > 0");
    const double var = model.vol() * model.vol() * model.maturity();
    return (std::log(z / lambda) - model.log_drift()) / (lambda * var);
}

double black_scholes_put(double spot, double strike, double rate, double vol, double maturity) {
    if (strike <= 0.0) return 0.0;
    const boost::math::normal_distribution<> normal;
    const double sd = vol * std::sqrt(maturity);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sd;
    const double d2 = d1 - sd;
    return strike * std::exp(-rate * maturity) * boost::math::cdf(normal, -d2) - spot * boost::math::cdf(normal, -d1);
}

namespace {

double bs_quadrature_value(const BlackScholesModel& model, const Payoff& payoff, double lambda) {
    constexpr double g_range = 12.0;
    const double m = model.log_drift();
    const double s = model.log_vol();
    std::vector<double> breaks{-g_range, g_range};
    for (double k : payoff.kinks()) {
        if (k <= 0.0) continue;
        const double g = (std::log(k / lambda) - m) / s;
        if (g > -g_range && g < g_range) breaks.push_back(g);
    }
    std::sort(breaks.begin(), breaks.end());
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        total += quad::adaptive(
            [&](double g) {
                const double z = model.terminal(lambda, g);
                return payoff.evaluate(std::span<const double>(&z, 1)) * norm * std::exp(-0.5 * g * g);
            },
            breaks[k], breaks[k + 1], 1e-13);
    }
    return total;
}

} // namespace

double bs_true_value(const BlackScholesModel& model, const Payoff& payoff, double lambda) {
    if (!(lambda > 0.0)) throw ArgumentError("spot must be positive");
    if (payoff.state_dim() != 1) throw ArgumentError("Black-Scholes oracle needs a scalar payoff");
    if (payoff.type() == PayoffType::put) {
        if (!(payoff.strike() > 0.0)) return 0.0;
        const double growth = std::exp(model.rate() * model.maturity());
        return payoff.scale() * growth *
               black_scholes_put(lambda, payoff.strike(), model.rate(), model.vol(), model.maturity());
    }
    return bs_quadrature_value(model, payoff, lambda);
}

double bs_true_greek(const BlackScholesModel& model, const Payoff& payoff, double lambda) {
    if (!(lambda > 0.0)) throw ArgumentError("spot must be positive");
    if (payoff.type() == PayoffType::put) {
        if (!(payoff.strike() > 0.0)) return 0.0;
        const boost::math::normal_distribution<> normal;
        const double sd = model.log_vol();
        const double d1 =
            (std::log(lambda / payoff.strike()) + (model.rate() + 0.5 * model.vol() * model.vol()) * model.maturity()) / sd;
        return payoff.scale() * std::exp(model.rate() * model.maturity()) * (boost::math::cdf(normal, d1) - 1.0);
    }
    const double step = 1e-5 * lambda;
    auto central = [&](double e) {
        return (bs_true_value(model, payoff, lambda + e) - bs_true_value(model, payoff, lambda - e)) / (2.0 * e);
    };
    return (4.0 * central(0.5 * step) - central(step)) / 3.0;
}

// ---------------------------------------------------------------------------

EulerDiffusionModel::EulerDiffusionModel(int param_dim, int state_dim, int noise_dim, InitialFn x0, DriftFn mu,
                                         DiffusionFn sigma, double horizon, int steps,
                                         std::optional<double> ellipticity_c, std::string label)
    : d_(param_dim), n_(state_dim), m_(noise_dim), x0_(std::move(x0)), mu_(std::move(mu)), sigma_(std::move(sigma)),
      horizon_(horizon), steps_(steps), ellipticity_c_(ellipticity_c), label_(std::move(label)) {
    if (d_ < 1 || n_ < 1 || m_ < 1) throw ArgumentError("Euler model dimensions must be positive");
    if (steps_ < 1) throw ArgumentError("Euler scheme needs steps >= 1");
    if (!(horizon_ > 0.0)) throw ArgumentError("Euler horizon must be positive");
    if (ellipticity_c_ && !(*ellipticity_c_ > 1.0)) throw ArgumentError("ellipticity constant must exceed 1");
}

Vector EulerDiffusionModel::simulate_with_increments(const Vector& lambda, std::span<const double> gaussians) const {
    if (gaussians.size() != static_cast<std::size_t>(steps_) * m_)
        throw ArgumentError("increment array must hold steps x noise_dim values");
    const double dt = horizon_ / steps_;
    const double sqrt_dt = std::sqrt(dt);
    Vector x = x0_(lambda);
    Eigen::Map<const Eigen::VectorXd> all(gaussians.data(), static_cast<Eigen::Index>(gaussians.size()));
    for (int k = 0; k < steps_; ++k) {
        const double t = k * dt;
        x += mu_(t, lambda, x) * dt + sigma_(t, lambda, x) * (all.segment(static_cast<Eigen::Index>(k) * m_, m_) * sqrt_dt);
        if (!x.allFinite()) throw SimulationError("Euler path left the finite range", k + 1);
    }
    return x;
}

void EulerDiffusionModel::simulate(std::span<const double> lambda, Stream& rng, std::span<double> z) const {
    const Vector lam = Eigen::Map<const Vector>(lambda.data(), d_);
    std::vector<double> gaussians(static_cast<std::size_t>(steps_) * m_);
    for (auto& g : gaussians) g = rng.normal();
    const Vector x = simulate_with_increments(lam, gaussians);
    std::copy(x.data(), x.data() + n_, z.begin());
}

EulerDiffusionModel::EllipticityReport EulerDiffusionModel::check_ellipticity(const Vector& lambda,
                                                                              std::uint64_t seed, int paths) const {
    if (!ellipticity_c_) throw ConfigError("ellipticity check needs an ellipticity constant");
    const double dt = horizon_ / steps_;
    EllipticityReport report{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0,
                             true};
    auto visit = [&](double t, const Vector& x) {
        const Matrix s = sigma_(t, lambda, x);
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(s * s.transpose(), Eigen::EigenvaluesOnly);
        report.min_eigenvalue = std::min(report.min_eigenvalue, eig.eigenvalues().minCoeff());
        report.max_eigenvalue = std::max(report.max_eigenvalue, eig.eigenvalues().maxCoeff());
        ++report.points_checked;
    };
    for (int p = 0; p < paths; ++p) {
        Stream rng(seed, static_cast<std::uint64_t>(p));
        Vector x = x0_(lambda);
        Vector g(m_);
        for (int k = 0; k < steps_; ++k) {
            const double t = k * dt;
            visit(t, x);
            for (int j = 0; j < m_; ++j) g(j) = rng.normal();
            x += mu_(t, lambda, x) * dt + sigma_(t, lambda, x) * g * std::sqrt(dt);
            if (!x.allFinite()) throw SimulationError("Euler path left the finite range", k + 1);
        }
        visit(horizon_, x);
    }
    const double c = *ellipticity_c_;
    report.satisfied = report.min_eigenvalue >= 1.0 / c && report.max_eigenvalue <= c;
    return report;
}

EulerDiffusionModel make_euler_gbm(double rate, double vol, double maturity, int steps) {
    return EulerDiffusionModel(
        1, 1, 1, [](const Vector& lambda) { return lambda; },
        [rate](double, const Vector&, const Vector& x) { return Vector(rate * x); },
        [vol](double, const Vector&, const Vector& x) { return Matrix(Matrix::Constant(1, 1, vol * x(0))); },
        maturity, steps, std::nullopt, "euler_gbm");
}

EulerDiffusionModel make_euler_linear(double drift_const, double drift_lin, double vol, double maturity, int steps) {
    if (!(vol != 0.0)) throw ArgumentError("linear Euler model needs a nonzero volatility");
    const double v2 = vol * vol;
    const double c = std::max(v2, 1.0 / v2) * (1.0 + 1e-12);
    return EulerDiffusionModel(
        1, 1, 1, [](const Vector& lambda) { return lambda; },
        [drift_const, drift_lin](double, const Vector&, const Vector& x) {
            return Vector(Vector::Constant(1, drift_const + drift_lin * x(0)));
        },
        [vol](double, const Vector&, const Vector&) { return Matrix(Matrix::Constant(1, 1, vol)); }, maturity, steps,
        c, "euler_custom");
}

// ---------------------------------------------------------------------------

PayoffType parse_payoff_type(std::string_view name) {
    if (name == "put") return PayoffType::put;
    if (name == "truncated_call") return PayoffType::truncated_call;
    if (name == "digital") return PayoffType::digital;
    if (name == "smooth_put") return PayoffType::smooth_put;
    if (name == "basket_put") return PayoffType::basket_put;
    if (name == "constant") return PayoffType::constant;
    if (name == "zero") return PayoffType::zero;
    if (name == "linear") return PayoffType::linear;
    throw ConfigError("unknown payoff type '" + std::string(name) + "'");
}

std::string_view to_string(PayoffType type) {
    switch (type) {
    case PayoffType::put: return "put";
    case PayoffType::truncated_call: return "truncated_call";
    case PayoffType::digital: return "digital";
    case PayoffType::smooth_put: return "smooth_put";
    case PayoffType::basket_put: return "basket_put";
    case PayoffType::constant: return "constant";
    case PayoffType::zero: return "zero";
    case PayoffType::linear: return "linear";
    }
    return "unknown";
}

Payoff::Payoff(PayoffType type, Params params) : type_(type), p_(params) {
    if (p_.state_dim < 1) throw ArgumentError("payoff state dimension must be positive");
    if (type_ != PayoffType::basket_put && p_.state_dim != 1)
        throw ArgumentError("only basket_put accepts a multi-dimensional state");
    const double inf = std::numeric_limits<double>::infinity();
    const double k = p_.strike;
    lo_.assign(p_.state_dim, -inf);
    hi_.assign(p_.state_dim, inf);
    switch (type_) {
    case PayoffType::put:
        lo_[0] = 0.0;
        hi_[0] = std::max(k, 0.0);
        break;
    case PayoffType::truncated_call:
        if (!(p_.cap > k)) throw ArgumentError("truncated_call needs cap > strike");
        lo_[0] = k;
        hi_[0] = p_.cap;
        continuous_ = false;
        has_derivative_ = false;
        break;
    case PayoffType::digital:
        lo_[0] = k;
        continuous_ = false;
        has_derivative_ = false;
        break;
    case PayoffType::smooth_put:
        if (!(p_.width > 0.0)) throw ArgumentError("smooth_put needs a positive width");
        lo_[0] = 0.0;
        hi_[0] = k + p_.width;
        break;
    case PayoffType::basket_put:
        for (int j = 0; j < p_.state_dim; ++j) {
            lo_[j] = 0.0;
            hi_[j] = p_.state_dim * std::max(k, 0.0);
        }
        break;
    case PayoffType::zero:
        lo_[0] = hi_[0] = 0.0;
        break;
    case PayoffType::constant:
    case PayoffType::linear:
        break;
    }
}

bool Payoff::compact() const noexcept {
    for (std::size_t j = 0; j < lo_.size(); ++j)
        if (!std::isfinite(lo_[j]) || !std::isfinite(hi_[j])) return false;
    return true;
}

double Payoff::evaluate(std::span<const double> z) const noexcept {
    const double k = p_.strike;
    double value = 0.0;
    switch (type_) {
    case PayoffType::put:
        value = (z[0] >= 0.0 && z[0] < k) ? k - z[0] : 0.0;
        break;
    case PayoffType::truncated_call:
        value = (z[0] > k && z[0] <= p_.cap) ? z[0] - k : 0.0;
        break;
    case PayoffType::digital:
        value = z[0] > k ? 1.0 : 0.0;
        break;
    case PayoffType::smooth_put: {
        const double w = p_.width;
        if (z[0] < 0.0 || z[0] >= k + w) value = 0.0;
        else if (z[0] <= k - w) value = k - z[0];
        else value = (k + w - z[0]) * (k + w - z[0]) / (4.0 * w);
        break;
    }
    case PayoffType::basket_put: {
        double mean = 0.0;
        for (int j = 0; j < p_.state_dim; ++j) {
            if (z[j] < 0.0) return 0.0;
            mean += z[j];
        }
        mean /= p_.state_dim;
        value = mean < k ? k - mean : 0.0;
        break;
    }
    case PayoffType::constant:
        value = p_.level;
        break;
    case PayoffType::zero:
        value = 0.0;
        break;
    case PayoffType::linear:
        value = z[0];
        break;
    }
    return p_.scale * value;
}

void Payoff::derivative(std::span<const double> z, std::span<double> out) const {
    if (!has_derivative_)
        throw ConfigError("payoff '" + std::string(to_string(type_)) + "' has no usable derivative");
    const double k = p_.strike;
    std::fill(out.begin(), out.end(), 0.0);
    switch (type_) {
    case PayoffType::put:
        // phi'(K) := 0 at the kink.
        out[0] = (z[0] >= 0.0 && z[0] < k) ? -1.0 : 0.0;
        break;
    case PayoffType::smooth_put: {
        const double w = p_.width;
        if (z[0] < 0.0 || z[0] >= k + w) out[0] = 0.0;
        else if (z[0] <= k - w) out[0] = -1.0;
        else out[0] = -(k + w - z[0]) / (2.0 * w);
        break;
    }
    case PayoffType::basket_put: {
        double mean = 0.0;
        bool inside = true;
        for (int j = 0; j < p_.state_dim; ++j) {
            inside = inside && z[j] >= 0.0;
            mean += z[j];
        }
        mean /= p_.state_dim;
        if (inside && mean < k)
            for (int j = 0; j < p_.state_dim; ++j) out[j] = -1.0 / p_.state_dim;
        break;
    }
    case PayoffType::linear:
        out[0] = 1.0;
        break;
    default:
        break;
    }
    for (auto& v : out) v *= p_.scale;
}

std::vector<double> Payoff::kinks() const {
    switch (type_) {
    case PayoffType::put: return {0.0, p_.strike};
    case PayoffType::truncated_call: return {p_.strike, p_.cap};
    case PayoffType::digital: return {p_.strike};
    case PayoffType::smooth_put: return {0.0, p_.strike - p_.width, p_.strike + p_.width};
    default: return {};
    }
}

} // namespace greeks

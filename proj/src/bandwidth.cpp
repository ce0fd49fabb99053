#include "greeks/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "greeks/baselines.hpp"
#include "greeks/error.hpp"
#include "greeks/quadrature.hpp"
#include "greeks/rng.hpp"

namespace greeks {

namespace {

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

double binomial(int m, int j) { return factorial(m) / (factorial(j) * factorial(m - j)); }

/// m-th central difference of g at x with step s: O(s^2) error.
template <class G>
double central_difference(G&& g, double x, int m, double s) {
    double total = 0.0;
    for (int j = 0; j <= m; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        total += sign * binomial(m, j) * g(x + (0.5 * m - j) * s);
    }
    return total / std::pow(s, m);
}

/// Richardson extrapolation of the central difference (step s and s/2): O(s^4).
template <class G>
double derivative(G&& g, double x, int m, double s) {
    if (m == 0) return g(x);
    const double coarse = central_difference(g, x, m, s);
    const double fine = central_difference(g, x, m, 0.5 * s);
    return (4.0 * fine - coarse) / 3.0;
}

struct Pilot {
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
    double phi_sq = 0.0;
};

Pilot pilot_draws(const Model& model, const Payoff& payoff, const Vector& lambda0, const RateOptions& opts) {
    const int n = model.state_dim();
    Pilot p;
    p.min = std::numeric_limits<double>::infinity();
    p.max = -p.min;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<double> z(n);
    const std::span<const double> lam(lambda0.data(), static_cast<std::size_t>(lambda0.size()));
    for (long i = 0; i < opts.pilot_size; ++i) {
        Stream rng(opts.pilot_seed, static_cast<std::uint64_t>(i));
        model.simulate(lam, rng, z);
        sum += z[0];
        sum_sq += z[0] * z[0];
        p.min = std::min(p.min, z[0]);
        p.max = std::max(p.max, z[0]);
        const double v = payoff.evaluate(z);
        p.phi_sq += v * v;
    }
    const double nn = static_cast<double>(opts.pilot_size);
    p.mean = sum / nn;
    p.sd = std::sqrt(std::max(sum_sq / nn - p.mean * p.mean, 0.0));
    p.phi_sq /= nn;
    return p;
}

/// Integration panels over C_phi, clipped to the pilot range when unbounded.
std::vector<double> z_breaks(const Payoff& payoff, const Pilot& pilot) {
    double lo = payoff.support_lo()[0];
    double hi = payoff.support_hi()[0];
    if (!std::isfinite(lo)) lo = pilot.min - pilot.sd;
    if (!std::isfinite(hi)) hi = pilot.max + pilot.sd;
    std::vector<double> breaks{lo, hi};
    for (double k : payoff.kinks())
        if (k > lo && k < hi) breaks.push_back(k);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    return breaks;
}

template <class F>
double integrate_panels(F&& f, const std::vector<double>& breaks, double rel_tol) {
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < breaks.size(); ++s) total += quad::adaptive(f, breaks[s], breaks[s + 1], rel_tol);
    return total;
}

bool payoff_is_zero(const Payoff& payoff) {
    return payoff.type() == PayoffType::zero || payoff.scale() == 0.0 ||
           (payoff.support_lo() == payoff.support_hi());
}

RateConstants analytic_constants(const Model& model, const Payoff& payoff, const RandomizingDensity& ell,
                                 const Vector& lambda0, const ProductKernel& kernel_k, const ProductKernel& kernel_h,
                                 const RateOptions& opts) {
    if (!model.capabilities().has_density)
        throw ConfigError("analytic rate constants need a model density; use the pilot or rule_of_thumb method");
    if (model.param_dim() != 1 || model.state_dim() != 1)
        throw ConfigError("analytic rate constants are implemented for d = n = 1");

    const double l0 = lambda0(0);
    const int p = kernel_k.order();
    const int q = kernel_h.order();
    const double ell0 = ell.at_origin();
    const KernelConstants kc = compute_kernel_constants(kernel_k, kernel_h);

    RateConstants rc;
    rc.source = RateSource::analytic_quadrature;
    rc.c1 = Vector::Zero(1);
    rc.c2 = Vector::Zero(1);
    rc.sigma_tilde = Matrix::Zero(1, 1);
    if (payoff_is_zero(payoff)) return rc;

    const Pilot pilot = pilot_draws(model, payoff, lambda0, opts);
    const std::vector<double> breaks = z_breaks(payoff, pilot);
    const double s_lam = opts.fd_step * std::min(ell.coordinate_sd(), std::max(pilot.sd, 1e-12));
    const double s_inner = 0.25 * s_lam;
    const double s_z = opts.fd_step * std::max(pilot.sd, 1e-12);

    auto ell_at = [&](double lam) {
        const double u = l0 - lam;
        return ell.evaluate({&u, 1});
    };
    auto dens = [&](double lam, double z) { return model.density({&lam, 1}, {&z, 1}); };
    auto pay = [&](double z) { return payoff.evaluate({&z, 1}); };

    // xi operators in 1-d: (-1)^r / r! * mu_r * d^r.
    const double xi_k = ((p % 2 == 0) ? 1.0 : -1.0) / factorial(p) * kernel_k.factor(0).moment(p);
    const double xi_h = ((q % 2 == 0) ? 1.0 : -1.0) / factorial(q) * kernel_h.factor(0).moment(q);

    auto c1_integrand = [&](double z) {
        const double pz = pay(z);
        if (pz == 0.0) return 0.0;
        auto phi = [&](double lam) { return ell_at(lam) * dens(lam, z); };
        auto phi_lam = [&](double lam) { return derivative(phi, lam, 1, s_inner); };
        auto outer = [&](double lam) {
            return ell_at(lam) * derivative([&](double x) { return dens(x, z); }, lam, 1, s_inner) + phi_lam(lam);
        };
        const double base = phi(l0);
        double value = xi_k * derivative(outer, l0, p, s_lam);
        if (base > 1e-300) value -= phi_lam(l0) / base * xi_k * derivative(phi, l0, p, s_lam);
        return value * pz / ell0;
    };
    auto c2_integrand = [&](double z) {
        const double pz = pay(z);
        if (pz == 0.0) return 0.0;
        auto phi_z = [&](double x) { return ell_at(l0) * dens(l0, x); };
        auto phi_lam_z = [&](double x) {
            return derivative([&](double lam) { return ell_at(lam) * dens(lam, x); }, l0, 1, s_inner);
        };
        const double base = phi_z(z);
        double value = xi_h * derivative(phi_lam_z, z, q, s_z);
        if (base > 1e-300) value -= phi_lam_z(z) / base * xi_h * derivative(phi_z, z, q, s_z);
        return value * pz / ell0;
    };
    auto phi_sq = [&](double z) {
        const double pz = pay(z);
        return pz * pz * dens(l0, z);
    };

    rc.c1(0) = integrate_panels(c1_integrand, breaks, opts.rel_tol);
    rc.c2(0) = integrate_panels(c2_integrand, breaks, opts.rel_tol);
    rc.phi_sq_mean = integrate_panels(phi_sq, breaks, opts.rel_tol);
    if (!std::isfinite(rc.c1(0)) || !std::isfinite(rc.c2(0)) || !std::isfinite(rc.phi_sq_mean))
        throw NumericalError("rate-constant quadrature produced a non-finite value");
    rc.sigma_tilde = rc.phi_sq_mean / ell0 * kc.sigma_factor;
    return rc;
}

RateConstants pilot_constants(const Model& model, const Payoff& payoff, const RandomizingDensity& ell,
                              const Vector& lambda0, const ProductKernel& kernel_k, const ProductKernel& kernel_h,
                              const RateOptions& opts) {
    const int d = model.param_dim();
    const int p = kernel_k.order();
    const int q = kernel_h.order();
    const KernelConstants kc = compute_kernel_constants(kernel_k, kernel_h);
    const Pilot pilot = pilot_draws(model, payoff, lambda0, opts);

    // Magnitude of the Greek from a cheap baseline; the bias constants take
    // the form mu_r / r! * |beta| / scale^r.
    Vector beta;
    if (model.capabilities().has_score) {
        beta = likelihood_ratio_greek(model, payoff, lambda0, opts.pilot_size, opts.pilot_seed).beta_hat;
    } else {
        BaselineConfig fd;
        fd.epsilon = std::max(0.01 * lambda0.cwiseAbs().maxCoeff(), 1e-6);
        beta = finite_difference_greek(model, payoff, lambda0, fd, opts.pilot_size, opts.pilot_seed).beta_hat;
    }
    RateConstants rc;
    rc.source = RateSource::pilot_mc;
    rc.phi_sq_mean = pilot.phi_sq;
    const double mu_k = std::abs(kernel_k.factor(0).moment(p)) / factorial(p);
    const double mu_h = std::abs(kernel_h.factor(0).moment(q)) / factorial(q);
    const double sd_l = ell.coordinate_sd();
    const double sd_z = std::max(pilot.sd, 1e-12);
    rc.c1 = beta.cwiseAbs() * (mu_k / std::pow(sd_l, p));
    rc.c2 = beta.cwiseAbs() * (mu_h / std::pow(sd_z, q));
    rc.sigma_tilde = pilot.phi_sq / ell.at_origin() * kc.sigma_factor;
    (void)d;
    return rc;
}

} // namespace

RateSource parse_rate_source(std::string_view name) {
    if (name == "analytic" || name == "analytic_quadrature") return RateSource::analytic_quadrature;
    if (name == "pilot" || name == "pilot_mc") return RateSource::pilot_mc;
    if (name == "rule_of_thumb") return RateSource::rule_of_thumb;
    throw ConfigError("unknown bandwidth method '" + std::string(name) + "'");
}

std::string_view to_string(RateSource source) {
    switch (source) {
    case RateSource::analytic_quadrature: return "analytic_quadrature";
    case RateSource::pilot_mc: return "pilot_mc";
    case RateSource::rule_of_thumb: return "rule_of_thumb";
    }
    return "unknown";
}

nlohmann::json RateConstants::to_json() const {
    nlohmann::json j;
    j["source"] = to_string(source);
    j["c1"] = std::vector<double>(c1.data(), c1.data() + c1.size());
    j["c2"] = std::vector<double>(c2.data(), c2.data() + c2.size());
    std::vector<std::vector<double>> s(sigma_tilde.rows(), std::vector<double>(sigma_tilde.cols()));
    for (Eigen::Index r = 0; r < sigma_tilde.rows(); ++r)
        for (Eigen::Index c = 0; c < sigma_tilde.cols(); ++c) s[r][c] = sigma_tilde(r, c);
    j["sigma_tilde"] = s;
    j["phi_sq_mean"] = phi_sq_mean;
    return j;
}

RateConstants compute_rate_constants(const Model& model, const Payoff& payoff, const RandomizingDensity& ell,
                                     const Vector& lambda0, const ProductKernel& kernel_k,
                                     const ProductKernel& kernel_h, RateSource method, const RateOptions& opts) {
    if (lambda0.size() != model.param_dim() || kernel_k.dimension() != model.param_dim() ||
        kernel_h.dimension() != model.state_dim() || ell.dimension() != model.param_dim())
        throw ArgumentError("rate constants: dimensions of model, kernels and ell disagree");
    if (!(opts.fd_step > 0.0) || opts.pilot_size < 2) throw ArgumentError("rate constants: invalid options");
    switch (method) {
    case RateSource::analytic_quadrature:
        return analytic_constants(model, payoff, ell, lambda0, kernel_k, kernel_h, opts);
    case RateSource::pilot_mc:
        return pilot_constants(model, payoff, ell, lambda0, kernel_k, kernel_h, opts);
    case RateSource::rule_of_thumb:
        throw ConfigError("rule_of_thumb has no rate constants; use rule_of_thumb_bandwidth");
    }
    throw ConfigError("unknown rate-constant method");
}

int BandwidthPlan::denominator() const noexcept { return d + 2 * std::min(p, q) + 2; }

nlohmann::json BandwidthPlan::to_json() const {
    nlohmann::json j{{"h_star", h_star},
                     {"rate_exponent", rate_exponent},
                     {"feasible", feasible},
                     {"N", n_draws},
                     {"d", d},
                     {"n", n},
                     {"p", p},
                     {"q", q},
                     {"source", to_string(source)},
                     {"diagnostics",
                      {{"rate_condition_sqrt2", diagnostics.rate_condition_sqrt2},
                       {"rate_condition", diagnostics.rate_condition},
                       {"undersmooth_flag", diagnostics.undersmooth_flag}}}};
    if (h_undersmoothed) {
        j["h_undersmoothed"] = *h_undersmoothed;
        j["gamma"] = gamma;
    }
    return j;
}

BandwidthDiagnostics bandwidth_diagnostics(long n_draws, double h, int d, int n) {
    const double nn = static_cast<double>(n_draws);
    const double log4 = std::pow(std::log(nn), 4);
    BandwidthDiagnostics diag;
    diag.rate_condition_sqrt2 = log4 / (nn * std::pow(h, d + n + n * std::sqrt(2.0)));
    diag.rate_condition = log4 / (nn * std::pow(h, d + n));
    return diag;
}

namespace {

BandwidthPlan plan_skeleton(long n_draws, int p, int q, int d, int n) {
    if (n_draws < 2) throw ArgumentError("bandwidth plan needs N >= 2");
    if (p < 1 || q < 1 || d < 1 || n < 1) throw ArgumentError("bandwidth plan needs positive orders and dimensions");
    BandwidthPlan plan;
    plan.n_draws = n_draws;
    plan.d = d;
    plan.n = n;
    plan.p = p;
    plan.q = q;
    const int m = std::min(p, q);
    plan.rate_exponent = -2.0 * m / static_cast<double>(plan.denominator());
    plan.feasible = n < m + 1;
    return plan;
}

} // namespace

BandwidthPlan optimal_bandwidth(const RateConstants& constants, long n_draws, int p, int q, int d, int n) {
    BandwidthPlan plan = plan_skeleton(n_draws, p, q, d, n);
    plan.source = constants.source;
    if (constants.c1.size() != d || constants.c2.size() != d || constants.sigma_tilde.rows() != d)
        throw ArgumentError("rate constants have the wrong dimension");
    const int m = std::min(p, q);
    Vector dominant = Vector::Zero(d);
    if (p <= q) dominant += constants.c1;
    if (q <= p) dominant += constants.c2;
    const double bias_sq = dominant.squaredNorm();
    if (!(bias_sq > 0.0))
        throw DegeneratePlanError("dominant bias constant is zero; the optimal bandwidth is undefined. "
                                  "Use bandwidth.method = rule_of_thumb or fixed");
    const double trace = constants.sigma_tilde.trace();
    const double ratio = (d + 2.0) * trace / (2.0 * m * bias_sq * static_cast<double>(n_draws));
    plan.h_star = std::pow(ratio, 1.0 / plan.denominator());
    if (!(plan.h_star > 0.0) || !std::isfinite(plan.h_star))
        throw DegeneratePlanError("optimal bandwidth is not a positive finite number (trace of Sigma is " +
                                  std::to_string(trace) + ")");
    plan.diagnostics = bandwidth_diagnostics(n_draws, plan.h_star, d, n);
    return plan;
}

BandwidthPlan rule_of_thumb_bandwidth(const RandomizingDensity& ell, long n_draws, int p, int q, int n, double c0) {
    if (!(c0 > 0.0)) throw ArgumentError("rule-of-thumb constant must be positive");
    BandwidthPlan plan = plan_skeleton(n_draws, p, q, ell.dimension(), n);
    plan.source = RateSource::rule_of_thumb;
    plan.h_star = c0 * ell.coordinate_sd() * std::pow(static_cast<double>(n_draws), -1.0 / plan.denominator());
    plan.diagnostics = bandwidth_diagnostics(n_draws, plan.h_star, plan.d, n);
    return plan;
}

double undersmoothed_bandwidth(BandwidthPlan& plan, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("undersmoothing gamma must lie in [0, 1)");
    if (!(plan.h_star > 0.0)) throw ArgumentError("plan has no bandwidth");
    const double h = plan.h_star * std::pow(static_cast<double>(plan.n_draws), -gamma / plan.denominator());
    const int m = std::min(plan.p, plan.q);
    plan.h_undersmoothed = h;
    plan.gamma = gamma;
    plan.diagnostics.undersmooth_flag = static_cast<double>(plan.n_draws) * std::pow(h, plan.d + 2 + 2 * m) < 1.0;
    return h;
}

} // namespace greeks

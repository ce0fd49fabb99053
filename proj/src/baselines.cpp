#include "greeks/baselines.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "greeks/error.hpp"
#include "greeks/parallel.hpp"
#include "greeks/rng.hpp"

namespace greeks {

namespace {

constexpr std::size_t kChunk = 4096;
// Stream family for the independent second leg of FD without common randoms.
constexpr std::uint64_t kIndependentLeg = 0x5eed0f0dd1e9ULL;
constexpr std::uint64_t kNoiseFamily = 0x6e015e5ca1eULL;

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

struct Moments {
    Vector sum;
    Matrix outer;
};

/// Runs term(i, out) for every draw and returns mean and covariance of the
/// mean (sample covariance / N), reduced in chunk order.
template <class Term>
void iid_mean(Eigen::Index n_draws, int dim, Term&& term, Vector& mean, Matrix& var_of_mean) {
    const std::size_t n = static_cast<std::size_t>(n_draws);
    std::vector<Moments> partial(chunk_count(n, kChunk));
    for_each_chunk(n, kChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
        Moments m{Vector::Zero(dim), Matrix::Zero(dim, dim)};
        Vector y(dim);
        for (std::size_t i = begin; i < end; ++i) {
            term(static_cast<Eigen::Index>(i), y);
            m.sum += y;
            m.outer.noalias() += y * y.transpose();
        }
        partial[c] = std::move(m);
    });
    Vector sum = Vector::Zero(dim);
    Matrix outer = Matrix::Zero(dim, dim);
    for (const auto& m : partial) {
        sum += m.sum;
        outer += m.outer;
    }
    const double nn = static_cast<double>(n_draws);
    mean = sum / nn;
    const Matrix cov = n_draws > 1 ? Matrix((outer - nn * mean * mean.transpose()) / (nn - 1.0))
                                   : Matrix(Matrix::Zero(dim, dim));
    var_of_mean = cov / nn;
}

EstimateReport make_report(std::string name, const Vector& mean, const Matrix& var, Eigen::Index n,
                           std::chrono::steady_clock::time_point start, nlohmann::json echo) {
    EstimateReport r;
    r.estimator = std::move(name);
    r.beta_hat = mean;
    r.asym_var = var;
    r.n_used = static_cast<long>(n);
    r.n_evaluated = static_cast<long>(n);
    r.ci_95 = r.interval(1.96);
    r.config_echo = std::move(echo);
    r.timing = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

void check_common(const Model& model, const Payoff& payoff, const Vector& lambda0, Eigen::Index n_draws) {
    if (n_draws < 1) throw ArgumentError("n_draws must be positive");
    if (lambda0.size() != model.param_dim()) throw ArgumentError("lambda0 has the wrong dimension");
    if (payoff.state_dim() != model.state_dim()) throw ArgumentError("payoff and model state dimensions differ");
    if (!model.admissible(as_span(lambda0))) throw ArgumentError("lambda0 is outside the model's domain");
}

} // namespace

FdScheme parse_fd_scheme(std::string_view name) {
    if (name == "forward") return FdScheme::forward;
    if (name == "central") return FdScheme::central;
    throw ConfigError("unknown finite-difference scheme '" + std::string(name) + "'");
}

std::string_view to_string(FdScheme scheme) { return scheme == FdScheme::forward ? "forward" : "central"; }

void BaselineConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ArgumentError("baseline epsilon must be positive");
    if (!(noise_scale >= 0.0)) throw ArgumentError("noise_scale must be nonnegative");
}

EstimateReport finite_difference_greek(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                       const BaselineConfig& cfg, Eigen::Index n_draws, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    check_common(model, payoff, lambda0, n_draws);
    const int d = model.param_dim();
    const int n = model.state_dim();
    const bool central = cfg.scheme == FdScheme::central;
    const double eps = cfg.epsilon;

    for (int k = 0; k < d; ++k) {
        Vector up = lambda0;
        up(k) += eps;
        Vector down = lambda0;
        if (central) down(k) -= eps;
        if (!model.admissible(as_span(up)) || !model.admissible(as_span(down)))
            throw ArgumentError("lambda0 +- epsilon leaves the model's domain; reduce epsilon");
    }
    const std::uint64_t second_seed = cfg.use_common_randoms ? seed : hash_combine(seed, kIndependentLeg);

    // Per-draw difference quotients are i.i.d. across i in both modes, since
    // leg streams never mix indices.
    auto term = [&](Eigen::Index i, Vector& y) {
        std::vector<double> z(n);
        Vector lam(d);
        for (int k = 0; k < d; ++k) {
            lam = lambda0;
            lam(k) += eps;
            Stream a(seed, static_cast<std::uint64_t>(i));
            model.simulate(as_span(lam), a, z);
            const double hi = payoff.evaluate(z);
            lam = lambda0;
            if (central) lam(k) -= eps;
            Stream b(second_seed, static_cast<std::uint64_t>(i));
            model.simulate(as_span(lam), b, z);
            const double lo = payoff.evaluate(z);
            y(k) = (hi - lo) / (central ? 2.0 * eps : eps);
        }
    };
    Vector mean;
    Matrix var;
    iid_mean(n_draws, d, term, mean, var);
    nlohmann::json echo{{"epsilon", eps},
                        {"scheme", to_string(cfg.scheme)},
                        {"common_randoms", cfg.use_common_randoms},
                        {"N", n_draws}};
    return make_report("fd", mean, var, n_draws, start, std::move(echo));
}

EstimateReport likelihood_ratio_greek(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                      Eigen::Index n_draws, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    if (!model.capabilities().has_score) throw ConfigError("likelihood ratio needs a model with an analytic score");
    check_common(model, payoff, lambda0, n_draws);
    const int d = model.param_dim();
    const int n = model.state_dim();
    auto term = [&](Eigen::Index i, Vector& y) {
        std::vector<double> z(n);
        Stream rng(seed, static_cast<std::uint64_t>(i));
        model.simulate(as_span(lambda0), rng, z);
        const double pay = payoff.evaluate(z);
        if (pay == 0.0) {
            y.setZero();
            return;
        }
        model.score(as_span(lambda0), z, {y.data(), static_cast<std::size_t>(d)});
        y *= pay;
    };
    Vector mean;
    Matrix var;
    iid_mean(n_draws, d, term, mean, var);
    return make_report("lr", mean, var, n_draws, start, {{"N", n_draws}});
}

EstimateReport pathwise_greek(const Model& model, const Payoff& payoff, const Vector& lambda0, Eigen::Index n_draws,
                              std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    if (!model.capabilities().has_tangent) throw ConfigError("pathwise estimator needs a model tangent process");
    if (!payoff.has_derivative())
        throw ConfigError("pathwise estimator needs a payoff derivative; '" + std::string(to_string(payoff.type())) +
                          "' has none that carries the sensitivity");
    check_common(model, payoff, lambda0, n_draws);
    const int d = model.param_dim();
    const int n = model.state_dim();
    auto term = [&](Eigen::Index i, Vector& y) {
        std::vector<double> z(n), tangent(static_cast<std::size_t>(n) * d), grad(n);
        Stream rng(seed, static_cast<std::uint64_t>(i));
        model.simulate_with_tangent(as_span(lambda0), rng, z, tangent);
        payoff.derivative(z, grad);
        for (int k = 0; k < d; ++k) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += grad[j] * tangent[static_cast<std::size_t>(j) * d + k];
            y(k) = s;
        }
    };
    Vector mean;
    Matrix var;
    iid_mean(n_draws, d, term, mean, var);
    return make_report("pathwise", mean, var, n_draws, start, {{"N", n_draws}});
}

WeightVarianceResult weight_variance_experiment(const Model& model, const Payoff& payoff, const Vector& lambda0,
                                                Eigen::Index n_draws, double noise_scale, std::uint64_t seed) {
    if (!model.capabilities().has_score) throw ConfigError("variance experiment needs a model with an analytic score");
    if (!(noise_scale >= 0.0)) throw ArgumentError("noise_scale must be nonnegative");
    check_common(model, payoff, lambda0, n_draws);
    if (n_draws < 2) throw ArgumentError("variance experiment needs N >= 2");
    const int d = model.param_dim();
    const int n = model.state_dim();
    const std::uint64_t noise_seed = hash_combine(seed, kNoiseFamily);

    // Pass 1: store both weighted terms per draw; pass 2 centers them.
    const std::size_t count = static_cast<std::size_t>(n_draws);
    RowMatrix opt(n_draws, d), per(n_draws, d);
    for_each_chunk(count, kChunk, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> z(n), s(d);
        for (std::size_t i = begin; i < end; ++i) {
            Stream rng(seed, i);
            model.simulate(as_span(lambda0), rng, z);
            const double pay = payoff.evaluate(z);
            model.score(as_span(lambda0), z, s);
            Stream noise(noise_seed, i);
            for (int k = 0; k < d; ++k) {
                opt(i, k) = pay * s[k];
                per(i, k) = pay * (s[k] + noise_scale * noise.normal());
            }
        }
    });

    WeightVarianceResult r;
    const double nn = static_cast<double>(n_draws);
    r.mean_optimal = opt.colwise().mean().transpose();
    r.mean_perturbed = per.colwise().mean().transpose();
    const RowMatrix co = opt.rowwise() - r.mean_optimal.transpose();
    const RowMatrix cp = per.rowwise() - r.mean_perturbed.transpose();
    r.var_optimal = (co.transpose() * co) / (nn - 1.0);
    r.var_perturbed = (cp.transpose() * cp) / (nn - 1.0);
    r.trace_gap = r.var_perturbed.trace() - r.var_optimal.trace();

    // D_i = |cp_i|^2 - |co_i|^2 has mean ~ trace_gap; its sd gives the error.
    const Vector gap = cp.rowwise().squaredNorm() - co.rowwise().squaredNorm();
    const double gap_mean = gap.mean();
    r.trace_gap_se = std::sqrt((gap.array() - gap_mean).square().sum() / (nn - 1.0) / nn);
    const RowMatrix diff = per - opt;
    const RowMatrix cd = diff.rowwise() - diff.colwise().mean();
    r.mean_gap_se = (cd.array().square().colwise().sum() / (nn - 1.0) / nn).sqrt().transpose();
    return r;
}

} // namespace greeks

#include "greeks/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "greeks/error.hpp"
#include "greeks/parallel.hpp"

namespace greeks {

namespace {

constexpr std::size_t kChunk = 256;

nlohmann::json kernel_json(const ProductKernel& k) {
    return {{"name", k.factor(0).name()}, {"order", k.order()}, {"dimension", k.dimension()}};
}

} // namespace

EstimatorConfig::EstimatorConfig(double h_, ProductKernel kernel_k_, ProductKernel kernel_h_,
                                 std::optional<double> delta_, BinningConfig binning_, std::optional<double> h_inner_)
    : h(h_), h_inner(h_inner_), delta(delta_), kernel_k(std::move(kernel_k_)), kernel_h(std::move(kernel_h_)),
      binning(binning_) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ArgumentError("bandwidth h must be positive");
    if (h_inner && !(*h_inner > 0.0)) throw ArgumentError("inner bandwidth must be positive");
    if (delta && !(*delta > 0.0)) throw ArgumentError("truncation floor delta must be positive");
    if (binning.cell_size < 0.0) throw ArgumentError("binning cell size must be nonnegative");
    dimension_ok_ = kernel_h.dimension() < min_order() + 1;
}

Feasibility EstimatorConfig::feasibility(Eigen::Index n_draws) const {
    const double n = static_cast<double>(n_draws);
    const double log4 = std::pow(std::log(n), 4);
    const int d = param_dim();
    const int m = state_dim();
    Feasibility f;
    f.dimension_ok = dimension_ok_;
    f.rate_condition_sqrt2 = log4 / (n * std::pow(h, d + m + m * std::sqrt(2.0)));
    f.rate_condition = log4 / (n * std::pow(h, d + m));
    return f;
}

nlohmann::json EstimatorConfig::to_json() const {
    nlohmann::json j{{"h", h},
                     {"h_inner", inner_bandwidth()},
                     {"delta_floor", delta_floor},
                     {"kernel_K", kernel_json(kernel_k)},
                     {"kernel_H", kernel_json(kernel_h)},
                     {"binning", {{"enabled", binning.enabled}, {"cell_size", binning.cell_size}}}};
    j["delta"] = delta ? nlohmann::json(*delta) : nlohmann::json("auto");
    return j;
}

Vector EstimateReport::std_error() const { return asym_var.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::vector<std::pair<double, double>> EstimateReport::interval(double z) const {
    const Vector se = std_error();
    std::vector<std::pair<double, double>> out;
    for (Eigen::Index k = 0; k < beta_hat.size(); ++k)
        out.emplace_back(beta_hat(k) - z * se(k), beta_hat(k) + z * se(k));
    return out;
}

nlohmann::json EstimateReport::to_json() const {
    nlohmann::json j;
    j["estimator"] = estimator;
    j["beta_hat"] = std::vector<double>(beta_hat.data(), beta_hat.data() + beta_hat.size());
    j["n_used"] = n_used;
    j["n_evaluated"] = n_evaluated;
    j["truncation_rate"] = truncation_rate;
    std::vector<std::vector<double>> var(asym_var.rows(), std::vector<double>(asym_var.cols()));
    for (Eigen::Index r = 0; r < asym_var.rows(); ++r)
        for (Eigen::Index c = 0; c < asym_var.cols(); ++c) var[r][c] = asym_var(r, c);
    j["asym_var"] = var;
    j["ci_95"] = ci_95;
    j["timing_seconds"] = timing;
    j["h"] = h;
    j["delta"] = delta;
    if (delta_pilot_min) j["delta_pilot_min"] = *delta_pilot_min;
    j["config"] = config_echo;
    return j;
}

// ---------------------------------------------------------------------------

LooDensityEstimator::LooDensityEstimator(const RandomizedSample& sample, const EstimatorConfig& cfg, double delta)
    : sample_(sample), k_(cfg.kernel_k), h_(cfg.kernel_h), d_(sample.param_dim()), n_(sample.state_dim()),
      delta_(delta) {
    if (sample.size() < 2) throw ArgumentError("leave-one-out estimation needs N >= 2");
    if (k_.dimension() != d_ || h_.dimension() != n_)
        throw ArgumentError("kernel dimensions do not match the sample");
    if (d_ + n_ > 8) throw ArgumentError("joint dimension d + n must be at most 8");
    const double bw = cfg.inner_bandwidth();
    inv_bw_ = 1.0 / bw;
    const double norm = 1.0 / static_cast<double>(sample.size() - 1);
    value_scale_ = std::pow(bw, -(d_ + n_)) * norm;
    grad_scale_ = std::pow(bw, -(d_ + n_ + 1)) * norm;

    const Eigen::Index count = sample.size();
    const int dim = d_ + n_;
    std::vector<double> joint(static_cast<std::size_t>(count) * dim);
    for (Eigen::Index i = 0; i < count; ++i) {
        for (int k = 0; k < d_; ++k) joint[i * dim + k] = sample.lambdas(i, k);
        for (int k = 0; k < n_; ++k) joint[i * dim + d_ + k] = sample.zs(i, k);
    }
    if (cfg.binning.enabled) {
        const double reach_len = bw * std::max(k_.support_radius(), h_.support_radius());
        const double cell = cfg.binning.cell_size > 0.0 ? cfg.binning.cell_size : reach_len;
        reach_ = std::max(1, static_cast<int>(std::ceil(reach_len / cell - 1e-12)));
        auto grid = std::make_unique<NeighborGrid>(joint, dim, cell);
        if (grid->usable()) grid_ = std::move(grid);
    }
    if (!grid_) joint_ = std::move(joint);
}

double LooDensityEstimator::evaluate_raw(Eigen::Index exclude, const double* lambda, const double* z,
                                         double* grad) const {
    const int d = d_;
    const int n = n_;
    const double inv = inv_bw_;
    double value = 0.0;
    for (int k = 0; k < d; ++k) grad[k] = 0.0;

    auto term = [&](std::size_t j, const double* x) {
        if (static_cast<Eigen::Index>(j) == exclude) return;
        double hv = 1.0;
        for (int k = 0; k < n; ++k) {
            hv *= h_.factor(k).evaluate((z[k] - x[d + k]) * inv);
            if (hv == 0.0) return;
        }
        double kv[8];
        double ks[8];
        double kprod = 1.0;
        for (int k = 0; k < d; ++k) {
            const double u = (lambda[k] - x[k]) * inv;
            const auto& f = k_.factor(k);
            kv[k] = f.evaluate(u);
            ks[k] = f.derivative(u);
            kprod *= kv[k];
        }
        value += kprod * hv;
        for (int k = 0; k < d; ++k) {
            double g = ks[k];
            for (int m = 0; m < d; ++m)
                if (m != k) g *= kv[m];
            grad[k] += g * hv;
        }
    };

    if (grid_) {
        double query[8];
        for (int k = 0; k < d; ++k) query[k] = lambda[k];
        for (int k = 0; k < n; ++k) query[d + k] = z[k];
        grid_->for_each_candidate(query, reach_, term);
    } else {
        const int dim = d + n;
        const std::size_t count = static_cast<std::size_t>(sample_.size());
        for (std::size_t j = 0; j < count; ++j) term(j, &joint_[j * dim]);
    }
    for (int k = 0; k < d; ++k) grad[k] *= grad_scale_;
    return value * value_scale_;
}

LooDensityEval LooDensityEstimator::evaluate(Eigen::Index exclude, std::span<const double> lambda,
                                             std::span<const double> z) const {
    if (exclude < 0 || exclude >= sample_.size()) throw ArgumentError("leave-one-out index out of range");
    LooDensityEval out;
    out.grad.resize(d_);
    out.value = evaluate_raw(exclude, lambda.data(), z.data(), out.grad.data());
    out.truncated_value = truncate_density(out.value, delta_);
    out.was_truncated = std::abs(out.value) < delta_ / 3.0;
    return out;
}

LooDensityEval loo_density(const RandomizedSample& sample, const EstimatorConfig& cfg, Eigen::Index i,
                           const Vector& lambda, const Vector& z, double delta) {
    if (!(delta > 0.0)) throw ArgumentError("delta must be positive");
    const LooDensityEstimator est(sample, cfg, delta);
    return est.evaluate(i, {lambda.data(), static_cast<std::size_t>(lambda.size())},
                        {z.data(), static_cast<std::size_t>(z.size())});
}

Vector score_hat(const RandomizedSample& sample, const EstimatorConfig& cfg, const RandomizingDensity& ell,
                 const Vector& lambda0, Eigen::Index i, const Vector& lambda, const Vector& z, double delta) {
    const LooDensityEval eval = loo_density(sample, cfg, i, lambda, z, delta);
    return eval.grad / eval.truncated_value + log_grad_ell(ell, lambda, lambda0);
}

DeltaChoice auto_delta(const RandomizedSample& sample, const EstimatorConfig& cfg, const Payoff& payoff,
                       const Vector& lambda0) {
    const int d = sample.param_dim();
    const int n = sample.state_dim();
    const Eigen::Index pilot = std::min<Eigen::Index>(sample.size(), 2000);
    const double bw = cfg.inner_bandwidth();
    const double norm = std::pow(bw, -(d + n)) / static_cast<double>(pilot);

    // Window V(lambda0) = lambda0 +- h R_K; C_phi is the payoff box, with its
    // lower edge lifted by 1e-3 of its width and unbounded edges clipped to the pilot range.
    std::vector<double> zlo(n), zhi(n);
    for (int k = 0; k < n; ++k) {
        const double smin = sample.zs.col(k).head(pilot).minCoeff();
        const double smax = sample.zs.col(k).head(pilot).maxCoeff();
        double lo = std::isfinite(payoff.support_lo()[k]) ? payoff.support_lo()[k] : smin;
        double hi = std::isfinite(payoff.support_hi()[k]) ? payoff.support_hi()[k] : smax;
        if (cfg.pilot_zmin) lo = std::max(lo, *cfg.pilot_zmin);
        else if (hi > lo) lo += 1e-3 * (hi - lo);
        zlo[k] = lo;
        zhi[k] = hi;
    }
    constexpr int lam_points = 5;
    constexpr int z_points = 41;
    const double reach = cfg.h * cfg.kernel_k.support_radius();

    double smallest = std::numeric_limits<double>::infinity();
    std::vector<int> lam_idx(d, 0), z_idx(n, 0);
    std::vector<double> lam(d), zq(n);
    const long lam_total = static_cast<long>(std::pow(lam_points, d));
    const long z_total = static_cast<long>(std::pow(z_points, n));
    for (long a = 0; a < lam_total; ++a) {
        long rest = a;
        for (int k = 0; k < d; ++k) {
            const int t = static_cast<int>(rest % lam_points);
            rest /= lam_points;
            lam[k] = lambda0(k) - reach + 2.0 * reach * t / (lam_points - 1);
        }
        for (long b = 0; b < z_total; ++b) {
            long r2 = b;
            for (int k = 0; k < n; ++k) {
                const int t = static_cast<int>(r2 % z_points);
                r2 /= z_points;
                zq[k] = zlo[k] + (zhi[k] - zlo[k]) * t / (z_points - 1);
            }
            double value = 0.0;
            for (Eigen::Index j = 0; j < pilot; ++j) {
                double w = 1.0;
                for (int k = 0; k < d && w != 0.0; ++k)
                    w *= cfg.kernel_k.factor(k).evaluate((lam[k] - sample.lambdas(j, k)) / bw);
                for (int k = 0; k < n && w != 0.0; ++k)
                    w *= cfg.kernel_h.factor(k).evaluate((zq[k] - sample.zs(j, k)) / bw);
                value += w;
            }
            smallest = std::min(smallest, value * norm);
        }
    }
    return {std::max(0.5 * smallest, cfg.delta_floor), smallest};
}

// ---------------------------------------------------------------------------

namespace {

struct ChunkSums {
    std::vector<double> terms;
    long used = 0;
    long evaluated = 0;
    long truncated = 0;
    double weight = 0.0;
    double weighted_phi2 = 0.0;
};

void check_inputs(const RandomizedSample& sample, const EstimatorConfig& cfg, const RandomizingDensity& ell,
                  const Vector& lambda0, const Payoff& payoff) {
    if (sample.size() < 2) throw ArgumentError("kernel estimators need N >= 2");
    if (cfg.param_dim() != sample.param_dim() || ell.dimension() != sample.param_dim() ||
        lambda0.size() != sample.param_dim())
        throw ArgumentError("parameter dimensions disagree");
    if (cfg.state_dim() != sample.state_dim() || payoff.state_dim() != sample.state_dim())
        throw ArgumentError("state dimensions disagree");
}

nlohmann::json echo(const EstimatorConfig& cfg, const RandomizingDensity& ell, const Vector& lambda0,
                    const Payoff& payoff, Eigen::Index n) {
    nlohmann::json j = cfg.to_json();
    j["ell"] = {{"profile", to_string(ell.profile())}, {"radius", ell.radius()}};
    j["lambda0"] = std::vector<double>(lambda0.data(), lambda0.data() + lambda0.size());
    j["payoff"] = {{"type", to_string(payoff.type())}, {"strike", payoff.strike()}, {"scale", payoff.scale()}};
    j["N"] = n;
    return j;
}

} // namespace

EstimateReport beta_tilde(const RandomizedSample& sample, const EstimatorConfig& cfg, const RandomizingDensity& ell,
                          const Vector& lambda0, const Payoff& payoff) {
    const auto start = std::chrono::steady_clock::now();
    check_inputs(sample, cfg, ell, lambda0, payoff);
    const int d = sample.param_dim();
    const int n = sample.state_dim();
    const Eigen::Index count = sample.size();

    EstimateReport report;
    report.estimator = "beta_tilde";
    report.h = cfg.h;
    if (cfg.delta) {
        report.delta = *cfg.delta;
    } else {
        const DeltaChoice choice = auto_delta(sample, cfg, payoff, lambda0);
        report.delta = choice.delta;
        report.delta_pilot_min = choice.pilot_min;
    }
    const double delta = report.delta;
    const LooDensityEstimator density(sample, cfg, delta);
    const double inv_h = 1.0 / cfg.h;

    const std::size_t chunks = chunk_count(static_cast<std::size_t>(count), kChunk);
    std::vector<ChunkSums> partial(chunks);
    for_each_chunk(static_cast<std::size_t>(count), kChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
        ChunkSums sums;
        sums.terms.assign(d, 0.0);
        double u[8];
        double grad[8];
        double log_grad[8];
        for (std::size_t idx = begin; idx < end; ++idx) {
            const auto i = static_cast<Eigen::Index>(idx);
            const double* lam = sample.lambdas.data() + i * d;
            const double* z = sample.zs.data() + i * n;
            for (int k = 0; k < d; ++k) u[k] = (lambda0(k) - lam[k]) * inv_h;
            const double weight = cfg.kernel_k.evaluate(std::span<const double>(u, d));
            if (weight == 0.0) continue;
            ++sums.used;
            const double pay = payoff.evaluate(std::span<const double>(z, n));
            sums.weight += weight;
            sums.weighted_phi2 += weight * pay * pay;
            if (pay == 0.0) continue;
            ++sums.evaluated;
            const double value = density.evaluate_raw(i, lam, z, grad);
            const double denom = truncate_density(value, delta);
            if (std::abs(value) < delta / 3.0) ++sums.truncated;
            log_grad_ell(ell, std::span<const double>(lam, d), std::span<const double>(lambda0.data(), d),
                         std::span<double>(log_grad, d));
            for (int k = 0; k < d; ++k) sums.terms[k] += pay * weight * (grad[k] / denom + log_grad[k]);
        }
        partial[c] = std::move(sums);
    });

    Vector total = Vector::Zero(d);
    double weight = 0.0;
    double weighted_phi2 = 0.0;
    for (const auto& p : partial) {
        for (int k = 0; k < d; ++k) total(k) += p.terms[k];
        report.n_used += p.used;
        report.n_evaluated += p.evaluated;
        weight += p.weight;
        weighted_phi2 += p.weighted_phi2;
        report.truncation_rate += static_cast<double>(p.truncated);
    }
    if (report.n_used == 0)
        throw EstimationError("no draw falls inside the kernel window around lambda0; increase h or N");
    report.truncation_rate = report.n_evaluated > 0 ? report.truncation_rate / report.n_evaluated : 0.0;

    const double ell0 = ell.at_origin();
    const double nn = static_cast<double>(count);
    report.beta_hat = total / (ell0 * nn * std::pow(cfg.h, d));

    // Plug-in Sigma~ = E[phi^2 | window] / ell(0) * sigma_factor(K).
    const KernelConstants constants = compute_kernel_constants(cfg.kernel_k, cfg.kernel_h);
    const double phi2 = weight > 0.0 ? weighted_phi2 / weight : 0.0;
    report.asym_var = (phi2 / ell0) * constants.sigma_factor / (nn * std::pow(cfg.h, d + 2));
    report.ci_95 = report.interval(1.96);
    report.config_echo = echo(cfg, ell, lambda0, payoff, count);
    report.timing = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

EstimateReport beta_bar_oracle(const RandomizedSample& sample, const EstimatorConfig& cfg,
                               const RandomizingDensity& ell, const Vector& lambda0, const Payoff& payoff,
                               const ScoreFn& score) {
    const auto start = std::chrono::steady_clock::now();
    check_inputs(sample, cfg, ell, lambda0, payoff);
    const int d = sample.param_dim();
    const int n = sample.state_dim();
    const Eigen::Index count = sample.size();
    const double scale = 1.0 / (ell.at_origin() * std::pow(cfg.h, d));
    const double inv_h = 1.0 / cfg.h;

    // Per-chunk sums of the i.i.d. terms Y_i and of Y_i Y_i^T.
    struct Sums {
        Vector first;
        Matrix second;
        long used = 0;
    };
    const std::size_t chunks = chunk_count(static_cast<std::size_t>(count), kChunk);
    std::vector<Sums> partial(chunks);
    for_each_chunk(static_cast<std::size_t>(count), kChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
        Sums sums{Vector::Zero(d), Matrix::Zero(d, d), 0};
        double u[8];
        Vector s(d);
        for (std::size_t idx = begin; idx < end; ++idx) {
            const auto i = static_cast<Eigen::Index>(idx);
            const double* lam = sample.lambdas.data() + i * d;
            const double* z = sample.zs.data() + i * n;
            for (int k = 0; k < d; ++k) u[k] = (lambda0(k) - lam[k]) * inv_h;
            const double weight = cfg.kernel_k.evaluate(std::span<const double>(u, d));
            if (weight == 0.0) continue;
            ++sums.used;
            const double pay = payoff.evaluate(std::span<const double>(z, n));
            if (pay == 0.0) continue;
            score(std::span<const double>(lam, d), std::span<const double>(z, n), std::span<double>(s.data(), d));
            const Vector y = (pay * weight * scale) * s;
            sums.first += y;
            sums.second += y * y.transpose();
        }
        partial[c] = std::move(sums);
    });

    Vector first = Vector::Zero(d);
    Matrix second = Matrix::Zero(d, d);
    EstimateReport report;
    report.estimator = "beta_bar_oracle";
    report.h = cfg.h;
    for (const auto& p : partial) {
        first += p.first;
        second += p.second;
        report.n_used += p.used;
    }
    if (report.n_used == 0)
        throw EstimationError("no draw falls inside the kernel window around lambda0; increase h or N");
    const double nn = static_cast<double>(count);
    report.beta_hat = first / nn;
    report.n_evaluated = report.n_used;
    // The terms are i.i.d., so Var(mean) = sample covariance / N.
    const Matrix cov = (second - nn * report.beta_hat * report.beta_hat.transpose()) / (nn - 1.0);
    report.asym_var = cov / nn;
    report.ci_95 = report.interval(1.96);
    report.config_echo = echo(cfg, ell, lambda0, payoff, count);
    report.timing = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

EstimateReport beta_bar_oracle(const RandomizedSample& sample, const EstimatorConfig& cfg,
                               const RandomizingDensity& ell, const Vector& lambda0, const Payoff& payoff,
                               const Model& model) {
    if (!model.capabilities().has_score) throw ConfigError("beta_bar_oracle needs a model with an analytic score");
    return beta_bar_oracle(sample, cfg, ell, lambda0, payoff,
                           [&model](std::span<const double> lam, std::span<const double> z, std::span<double> out) {
                               model.score(lam, z, out);
                           });
}

} // namespace greeks

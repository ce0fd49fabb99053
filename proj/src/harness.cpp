#include "greeks/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "greeks/error.hpp"
#include "greeks/parallel.hpp"
#include "greeks/rng.hpp"
#include "greeks/version.hpp"

namespace greeks {

namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kFdStream = 0xfd;
constexpr std::uint64_t kLrStream = 0x1a;
constexpr std::uint64_t kPathwiseStream = 0x9a7;
constexpr std::uint64_t kCltStream = 0x636c74;

const json& block(const json& j, const char* name) {
    static const json empty = json::object();
    if (!j.contains(name)) return empty;
    const json& b = j.at(name);
    if (!b.is_object()) throw ConfigError(std::string("config block '") + name + "' must be an object");
    return b;
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const char* where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + where + "." + key + "' has the wrong type");
    }
}

/// Either a number or the string "auto" (nullopt).
std::optional<double> number_or_auto(const json& j, const char* key, std::optional<double> fallback,
                                     const char* where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    const json& v = j.at(key);
    if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
    if (v.is_number()) return v.get<double>();
    throw ConfigError(std::string("config key '") + where + "." + key + "' must be a number or \"auto\"");
}

BandwidthMethod parse_method(const std::string& name) {
    if (name == "analytic") return BandwidthMethod::analytic;
    if (name == "pilot") return BandwidthMethod::pilot;
    if (name == "rule_of_thumb") return BandwidthMethod::rule_of_thumb;
    if (name == "fixed") return BandwidthMethod::fixed;
    throw ConfigError("unknown bandwidth.method '" + name + "' (analytic, pilot, rule_of_thumb, fixed)");
}

const char* method_name(BandwidthMethod m) {
    switch (m) {
    case BandwidthMethod::analytic: return "analytic";
    case BandwidthMethod::pilot: return "pilot";
    case BandwidthMethod::rule_of_thumb: return "rule_of_thumb";
    case BandwidthMethod::fixed: return "fixed";
    }
    return "unknown";
}

void read_kernel(const json& j, std::string& name, int& order, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string("config key '") + where + "' must be an object");
    name = get_or<std::string>(j, "name", name, where);
    order = get_or<int>(j, "order", order, where);
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    c.raw = j;

    const json& m = block(j, "model");
    c.model_type = get_or<std::string>(m, "type", c.model_type, "model");
    if (c.model_type != "black_scholes" && c.model_type != "euler_gbm" && c.model_type != "euler_custom")
        throw ConfigError("unknown model.type '" + c.model_type + "' (black_scholes, euler_gbm, euler_custom)");
    c.rate = get_or<double>(m, "r", c.rate, "model");
    c.vol = get_or<double>(m, "sigma", c.vol, "model");
    c.maturity = get_or<double>(m, "T", c.maturity, "model");
    c.steps = get_or<int>(m, "steps", c.steps, "model");
    c.drift_const = get_or<double>(m, "a", c.drift_const, "model");
    c.drift_lin = get_or<double>(m, "b", c.drift_lin, "model");
    const char* l0_key = m.contains("lambda0") ? "lambda0" : (m.contains("S0") ? "S0" : nullptr);
    if (l0_key) {
        const json& v = m.at(l0_key);
        if (v.is_number()) {
            c.lambda0 = Vector::Constant(1, v.get<double>());
        } else if (v.is_array()) {
            const auto xs = v.get<std::vector<double>>();
            c.lambda0 = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        } else {
            throw ConfigError("model.lambda0 must be a number or an array");
        }
    }
    if (m.contains("true_greek") && !m.at("true_greek").is_null()) c.true_greek = m.at("true_greek").get<double>();

    const json& p = block(j, "payoff");
    c.payoff_type = parse_payoff_type(get_or<std::string>(p, "type", "put", "payoff"));
    c.payoff_params.strike = get_or<double>(p, "strike", c.payoff_params.strike, "payoff");
    c.payoff_params.cap = get_or<double>(p, "cap", c.payoff_params.cap, "payoff");
    c.payoff_params.width = get_or<double>(p, "width", c.payoff_params.width, "payoff");
    c.payoff_params.level = get_or<double>(p, "level", c.payoff_params.level, "payoff");
    c.payoff_params.state_dim = get_or<int>(p, "dim", c.payoff_params.state_dim, "payoff");
    c.discount = get_or<bool>(p, "discount", c.discount, "payoff");
    c.payoff_params.scale = get_or<double>(p, "scale", 1.0, "payoff");
    if (p.contains("zmin") && !p.at("zmin").is_null()) c.zmin = p.at("zmin").get<double>();

    const json& e = block(j, "ell");
    c.profile = parse_ell_profile(get_or<std::string>(e, "profile", "epanechnikov_product", "ell"));
    c.radius = number_or_auto(e, "radius", c.radius, "ell");
    c.match_kernel = get_or<bool>(e, "match_kernel", c.match_kernel, "ell");
    c.couple_radius_to_h = get_or<bool>(e, "couple_radius_to_h", c.couple_radius_to_h, "ell");

    const json& est = block(j, "estimator");
    // kernel blocks are accepted inside the estimator block or at top level
    for (const json* src : {&j, &est}) {
        if (src->contains("kernel_K")) read_kernel(src->at("kernel_K"), c.k_name, c.k_order, "kernel_K");
        if (src->contains("kernel_H")) read_kernel(src->at("kernel_H"), c.h_name, c.h_order, "kernel_H");
    }
    if (est.contains("h") && !est.at("h").is_null()) c.h_fixed = est.at("h").get<double>();
    if (est.contains("h_inner") && !est.at("h_inner").is_null()) c.h_inner = est.at("h_inner").get<double>();
    c.delta = number_or_auto(est, "delta", c.delta, "estimator");
    c.delta_floor = get_or<double>(est, "delta_floor", c.delta_floor, "estimator");
    if (!(c.delta_floor > 0.0)) throw ConfigError("estimator.delta_floor must be positive");
    if (est.contains("binning")) {
        const json& b = est.at("binning");
        if (b.is_boolean()) {
            c.binning.enabled = b.get<bool>();
        } else if (b.is_object()) {
            c.binning.enabled = get_or<bool>(b, "enabled", true, "estimator.binning");
            c.binning.cell_size = get_or<double>(b, "cell_size", 0.0, "estimator.binning");
        } else {
            throw ConfigError("estimator.binning must be a boolean or an object");
        }
    }
    c.run_n = get_or<long>(est, "N", c.run_n, "estimator");

    const json& bw = block(j, "bandwidth");
    c.method = parse_method(get_or<std::string>(bw, "method", "analytic", "bandwidth"));
    if (bw.contains("h") && !bw.at("h").is_null()) c.h_fixed = bw.at("h").get<double>();
    c.gamma = get_or<double>(bw, "gamma", c.gamma, "bandwidth");
    c.c0 = get_or<double>(bw, "c0", c.c0, "bandwidth");
    c.rate_options.fd_step = get_or<double>(bw, "fd_step", c.rate_options.fd_step, "bandwidth");
    c.rate_options.pilot_size = get_or<long>(bw, "pilot_size", c.rate_options.pilot_size, "bandwidth");
    if (c.method == BandwidthMethod::fixed && !c.h_fixed)
        throw ConfigError("bandwidth.method = fixed needs bandwidth.h (or estimator.h)");

    const json& base = block(j, "baseline");
    if (base.contains("epsilon") && !base.at("epsilon").is_null()) c.fd_epsilon = base.at("epsilon").get<double>();
    c.fd_scheme = parse_fd_scheme(get_or<std::string>(base, "scheme", "central", "baseline"));
    c.common_randoms = get_or<bool>(base, "common_randoms", c.common_randoms, "baseline");
    c.noise_scale = get_or<double>(base, "noise_scale", c.noise_scale, "baseline");

    const json& s = block(j, "sweep");
    c.ns = get_or<std::vector<long>>(s, "Ns", c.ns, "sweep");
    c.replications = get_or<int>(s, "replications", c.replications, "sweep");
    c.seed = get_or<std::uint64_t>(s, "seed", c.seed, "sweep");
    if (s.contains("seeds")) c.seed = get_or<std::uint64_t>(s, "seeds", c.seed, "sweep");
    c.estimators = get_or<std::vector<std::string>>(s, "estimators", c.estimators, "sweep");
    if (c.replications < 1) throw ConfigError("sweep.replications must be at least 1");
    for (std::size_t i = 0; i < c.ns.size(); ++i) {
        if (c.ns[i] < 2) throw ConfigError("sweep.Ns entries must be at least 2");
        if (i > 0 && c.ns[i] <= c.ns[i - 1]) throw ConfigError("sweep.Ns must be strictly increasing");
    }

    const json& clt = block(j, "clt");
    c.clt_n = get_or<long>(clt, "N", c.clt_n, "clt");
    c.clt_replications = get_or<int>(clt, "replications", c.clt_replications, "clt");
    c.clt_gamma = get_or<double>(clt, "gamma", c.clt_gamma, "clt");
    c.oversmooth_factor = get_or<double>(clt, "oversmooth_factor", c.oversmooth_factor, "clt");

    if (j.contains("outputs")) {
        const json& o = j.at("outputs");
        if (o.is_string()) c.out_dir = o.get<std::string>();
        else if (o.is_object()) c.out_dir = get_or<std::string>(o, "dir", c.out_dir, "outputs");
        else throw ConfigError("outputs must be a directory string or an object with 'dir'");
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["model"] = {{"type", model_type}, {"r", rate},       {"sigma", vol},
                  {"T", maturity},      {"steps", steps},  {"lambda0", to_vec(lambda0)}};
    if (model_type == "euler_custom") {
        j["model"]["a"] = drift_const;
        j["model"]["b"] = drift_lin;
    }
    if (true_greek) j["model"]["true_greek"] = *true_greek;
    j["payoff"] = {{"type", to_string(payoff_type)},
                   {"strike", payoff_params.strike},
                   {"discount", discount},
                   {"scale", payoff_params.scale},
                   {"dim", payoff_params.state_dim}};
    if (std::isfinite(payoff_params.cap)) j["payoff"]["cap"] = payoff_params.cap;
    if (zmin) j["payoff"]["zmin"] = *zmin;
    j["ell"] = {{"profile", to_string(profile)},
                {"match_kernel", match_kernel},
                {"couple_radius_to_h", couple_radius_to_h}};
    j["ell"]["radius"] = radius ? json(*radius) : json("auto");
    j["estimator"] = {{"kernel_K", {{"name", k_name}, {"order", k_order}}},
                      {"kernel_H", {{"name", h_name}, {"order", h_order}}},
                      {"binning", {{"enabled", binning.enabled}, {"cell_size", binning.cell_size}}},
                      {"N", run_n}};
    j["estimator"]["delta"] = delta ? json(*delta) : json("auto");
    j["estimator"]["delta_floor"] = delta_floor;
    if (h_fixed) j["estimator"]["h"] = *h_fixed;
    if (h_inner) j["estimator"]["h_inner"] = *h_inner;
    j["bandwidth"] = {{"method", method_name(method)},
                      {"gamma", gamma},
                      {"c0", c0},
                      {"fd_step", rate_options.fd_step},
                      {"pilot_size", rate_options.pilot_size}};
    j["baseline"] = {{"scheme", to_string(fd_scheme)}, {"common_randoms", common_randoms}, {"noise_scale", noise_scale}};
    j["baseline"]["epsilon"] = fd_epsilon ? json(*fd_epsilon) : json("auto");
    j["sweep"] = {{"Ns", ns}, {"replications", replications}, {"seed", seed}, {"estimators", estimators}};
    j["clt"] = {{"N", clt_n},
                {"replications", clt_replications},
                {"gamma", clt_gamma},
                {"oversmooth_factor", oversmooth_factor}};
    j["outputs"] = {{"dir", out_dir}};
    return j;
}

BaselineConfig RunConfig::baseline() const {
    BaselineConfig b;
    b.epsilon = fd_epsilon.value_or(0.01 * lambda0.cwiseAbs().maxCoeff());
    b.scheme = fd_scheme;
    b.use_common_randoms = common_randoms;
    b.noise_scale = noise_scale;
    return b;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

std::shared_ptr<const Model> build_model(const RunConfig& c) {
    if (c.model_type == "black_scholes") return std::make_shared<BlackScholesModel>(c.rate, c.vol, c.maturity);
    if (c.model_type == "euler_gbm")
        return std::make_shared<EulerDiffusionModel>(make_euler_gbm(c.rate, c.vol, c.maturity, c.steps));
    return std::make_shared<EulerDiffusionModel>(
        make_euler_linear(c.drift_const, c.drift_lin, c.vol, c.maturity, c.steps));
}

std::optional<RateConstants> constants_for(const Experiment& ex, const RandomizingDensity& ell) {
    const RunConfig& c = ex.config;
    if (c.method != BandwidthMethod::analytic && c.method != BandwidthMethod::pilot) return std::nullopt;
    const RateSource src =
        c.method == BandwidthMethod::analytic ? RateSource::analytic_quadrature : RateSource::pilot_mc;
    return compute_rate_constants(*ex.model, ex.payoff, ell, c.lambda0, ex.kernel_k, ex.kernel_h, src,
                                  c.rate_options);
}

} // namespace

Experiment build_experiment(const RunConfig& config) {
    RunConfig c = config;
    auto model = build_model(c);
    if (c.lambda0.size() != model->param_dim())
        throw ConfigError("model.lambda0 has " + std::to_string(c.lambda0.size()) + " entries; the model needs " +
                          std::to_string(model->param_dim()));
    if (!model->admissible({c.lambda0.data(), static_cast<std::size_t>(c.lambda0.size())}))
        throw ConfigError("model.lambda0 lies outside the model's domain");
    if (c.payoff_params.state_dim != model->state_dim())
        throw ConfigError("payoff.dim does not match the model state dimension");
    Payoff::Params pp = c.payoff_params;
    if (c.discount) pp.scale *= std::exp(-c.rate * c.maturity);
    const int d = model->param_dim();
    const int n = model->state_dim();

    if (c.match_kernel) {
        if (c.k_name != "epanechnikov")
            throw ConfigError("ell.match_kernel needs an epanechnikov kernel_K (the only kernel with a matching ell)");
        c.profile = EllProfile::epanechnikov_product;
    }

    ProductKernel kk = make_kernel(c.k_name, c.k_order, d);
    ProductKernel kh = make_kernel(c.h_name, c.h_order, n);
    const double initial_radius = c.radius.value_or(1.0);
    Experiment ex{c, model, Payoff(c.payoff_type, pp), kk, kh, RandomizingDensity(d, initial_radius, c.profile),
                  kNaN, std::nullopt};

    if (c.true_greek) {
        ex.beta0 = *c.true_greek;
    } else if (auto bs = std::dynamic_pointer_cast<const BlackScholesModel>(model)) {
        ex.beta0 = bs_true_greek(*bs, ex.payoff, c.lambda0(0));
    }

    // radius "auto": rho = 5 h R_K, a fixed point because h depends on rho
    // through ell(0) and the bias constants.
    if (!c.radius) {
        const double reach = 5.0 * kk.support_radius();
        const long n_ref = c.ns.empty() ? c.run_n : c.ns.front();
        if (c.method == BandwidthMethod::rule_of_thumb)
            throw ConfigError("ell.radius = auto has no fixed point with the rule_of_thumb bandwidth; set a radius");
        double rho = c.method == BandwidthMethod::fixed ? reach * *c.h_fixed : 1.0;
        if (c.method != BandwidthMethod::fixed) {
            bool converged = false;
            for (int it = 0; it < 200 && !converged; ++it) {
                const RandomizingDensity ell(d, rho, c.profile);
                const RateConstants rc = *constants_for(ex, ell);
                const double h = optimal_bandwidth(rc, n_ref, kk.order(), kh.order(), d, n).h_star;
                const double next = reach * h;
                converged = std::abs(next - rho) <= 1e-10 * rho;
                rho = next;
            }
            if (!converged) throw NumericalError("ell.radius = auto: fixed-point iteration did not converge");
        }
        ex.config.radius = rho;
    }
    ex.ell = RandomizingDensity(d, *ex.config.radius, c.profile);
    ex.constants = constants_for(ex, ex.ell);
    return ex;
}

BandwidthPlan Experiment::plan(long n_draws) const {
    const int d = model->param_dim();
    const int n = model->state_dim();
    const int p = kernel_k.order();
    const int q = kernel_h.order();
    BandwidthPlan plan;
    switch (config.method) {
    case BandwidthMethod::analytic:
    case BandwidthMethod::pilot:
        plan = optimal_bandwidth(*constants, n_draws, p, q, d, n);
        break;
    case BandwidthMethod::rule_of_thumb:
        plan = rule_of_thumb_bandwidth(ell, n_draws, p, q, n, config.c0);
        break;
    case BandwidthMethod::fixed: {
        // a fixed h reuses the plan bookkeeping with h_star = h
        RateConstants unit;
        unit.c1 = Vector::Ones(d);
        unit.c2 = Vector::Ones(d);
        unit.sigma_tilde = Matrix::Identity(d, d);
        plan = optimal_bandwidth(unit, n_draws, p, q, d, n);
        plan.source = RateSource::rule_of_thumb;
        plan.h_star = *config.h_fixed;
        plan.diagnostics = bandwidth_diagnostics(n_draws, plan.h_star, d, n);
        break;
    }
    }
    if (config.gamma > 0.0) undersmoothed_bandwidth(plan, config.gamma);
    return plan;
}

double Experiment::bandwidth(long n_draws) const {
    const BandwidthPlan p = plan(n_draws);
    return p.h_undersmoothed.value_or(p.h_star);
}

RandomizingDensity Experiment::ell_for(double h) const {
    if (config.couple_radius_to_h) return RandomizingDensity(ell.dimension(), h, ell.profile());
    return ell;
}

EstimatorConfig Experiment::estimator_config(double h) const {
    EstimatorConfig cfg(h, kernel_k, kernel_h, config.delta, config.binning, config.h_inner);
    cfg.pilot_zmin = config.zmin;
    cfg.delta_floor = config.delta_floor;
    return cfg;
}

std::vector<std::string> Experiment::available_estimators() const {
    const Capabilities caps = model->capabilities();
    std::vector<std::string> out{"beta_tilde"};
    if (caps.has_score) out.push_back("beta_bar_oracle");
    out.push_back("fd");
    if (caps.has_score) out.push_back("lr");
    if (caps.has_tangent && payoff.has_derivative()) out.push_back("pathwise");
    return out;
}

std::uint64_t cell_seed(std::uint64_t base, long n_draws, int rep) {
    return base ^ hash_combine(static_cast<std::uint64_t>(n_draws), static_cast<std::uint64_t>(rep));
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

EstimateReport run_estimator(const Experiment& ex, const std::string& name, const RandomizedSample* sample,
                             const EstimatorConfig& cfg, const RandomizingDensity& ell, long n_draws,
                             std::uint64_t seed) {
    const Vector& l0 = ex.config.lambda0;
    if (name == "beta_tilde") return beta_tilde(*sample, cfg, ell, l0, ex.payoff);
    if (name == "beta_bar_oracle") return beta_bar_oracle(*sample, cfg, ell, l0, ex.payoff, *ex.model);
    if (name == "fd")
        return finite_difference_greek(*ex.model, ex.payoff, l0, ex.config.baseline(), n_draws,
                                       hash_combine(seed, kFdStream));
    if (name == "lr") return likelihood_ratio_greek(*ex.model, ex.payoff, l0, n_draws, hash_combine(seed, kLrStream));
    if (name == "pathwise")
        return pathwise_greek(*ex.model, ex.payoff, l0, n_draws, hash_combine(seed, kPathwiseStream));
    throw ConfigError("unknown estimator '" + name + "' (beta_tilde, beta_bar_oracle, fd, lr, pathwise)");
}

std::vector<std::string> sweep_estimators(const Experiment& ex) {
    if (ex.config.estimators.empty()) return ex.available_estimators();
    for (const auto& name : ex.config.estimators) {
        const auto avail = ex.available_estimators();
        if (std::find(avail.begin(), avail.end(), name) == avail.end())
            throw ConfigError("estimator '" + name + "' is unknown or unavailable for this model and payoff");
    }
    return ex.config.estimators;
}

bool needs_sample(const std::string& name) { return name == "beta_tilde" || name == "beta_bar_oracle"; }

} // namespace

SweepResult run_sweep(const Experiment& ex) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig& c = ex.config;
    const auto names = sweep_estimators(ex);
    SweepResult result;
    result.beta0 = ex.beta0;
    result.param_dim = ex.model->param_dim();

    for (long n_draws : c.ns) {
        result.plans.push_back(ex.plan(n_draws));
        const double h = ex.bandwidth(n_draws);
        const RandomizingDensity ell = ex.ell_for(h);
        const EstimatorConfig cfg = ex.estimator_config(h);
        for (int rep = 0; rep < c.replications; ++rep) {
            const std::uint64_t seed = cell_seed(c.seed, n_draws, rep);
            std::optional<RandomizedSample> sample;
            std::string sample_error;
            if (std::any_of(names.begin(), names.end(), needs_sample)) {
                try {
                    sample = draw_sample(*ex.model, ell, c.lambda0, n_draws, seed);
                } catch (const std::exception& e) {
                    sample_error = e.what();
                }
            }
            for (const auto& name : names) {
                CellRecord cell;
                cell.estimator = name;
                cell.n_draws = n_draws;
                cell.rep = rep;
                cell.seed = seed;
                cell.h = h;
                try {
                    if (needs_sample(name) && !sample) throw SimulationError(sample_error, 0);
                    const EstimateReport r =
                        run_estimator(ex, name, sample ? &*sample : nullptr, cfg, ell, n_draws, seed);
                    cell.beta = r.beta_hat;
                    cell.std_error = r.std_error();
                    cell.truncation_rate = r.truncation_rate;
                    cell.n_used = r.n_used;
                } catch (const std::exception& e) {
                    cell.ok = false;
                    cell.error = e.what();
                    cell.beta = Vector::Constant(result.param_dim, kNaN);
                    cell.std_error = cell.beta;
                    ++result.failed_cells;
                }
                ++result.total_cells;
                result.cells.push_back(std::move(cell));
            }
        }
    }
    aggregate_sweep(result);

    json plans = json::array();
    for (const auto& p : result.plans) plans.push_back(p.to_json());
    result.meta = {{"config", c.to_json()},
                   {"version", kVersion},
                   {"base_seed", c.seed},
                   {"seed_rule", "cell seed = base xor hash(N, rep); fd/lr/pathwise streams hash the cell seed"},
                   {"beta0", std::isfinite(ex.beta0) ? json(ex.beta0) : json(nullptr)},
                   {"radius", ex.ell.radius()},
                   {"estimators", names},
                   {"plans", plans},
                   {"threads", thread_count()},
                   {"failed_cells", result.failed_cells},
                   {"total_cells", result.total_cells},
                   {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    if (ex.constants) result.meta["rate_constants"] = ex.constants->to_json();
    return result;
}

SlopeFit fit_mse_slope(const std::vector<AggregateRow>& rows) {
    SlopeFit fit;
    if (!rows.empty()) {
        fit.estimator = rows.front().estimator;
        fit.component = rows.front().component;
    }
    std::vector<double> x, y, w;
    bool weighted = true;
    for (const auto& r : rows) {
        if (!(r.mse > 0.0) || !std::isfinite(r.mse)) continue;
        x.push_back(std::log(static_cast<double>(r.n_draws)));
        y.push_back(std::log(r.mse));
        const double se_log = r.mse_se / r.mse;
        if (!(se_log > 0.0) || !std::isfinite(se_log)) weighted = false;
        w.push_back(se_log > 0.0 ? 1.0 / (se_log * se_log) : 1.0);
    }
    fit.points = static_cast<int>(x.size());
    if (fit.points < 4) {
        fit.slope = fit.slope_se = kNaN;
        return fit;
    }
    if (!weighted) std::fill(w.begin(), w.end(), 1.0);
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double xbar = sx / sw;
    const double ybar = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
        sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
    }
    fit.slope = sxy / sxx;
    fit.slope_se = weighted ? 1.0 / std::sqrt(sxx) : kNaN;
    fit.ok = std::isfinite(fit.slope);
    return fit;
}

void aggregate_sweep(SweepResult& result) {
    result.aggregates.clear();
    result.slopes.clear();
    std::vector<std::string> names;
    for (const auto& cell : result.cells)
        if (std::find(names.begin(), names.end(), cell.estimator) == names.end()) names.push_back(cell.estimator);
    std::vector<long> ns;
    for (const auto& cell : result.cells)
        if (std::find(ns.begin(), ns.end(), cell.n_draws) == ns.end()) ns.push_back(cell.n_draws);
    const int d = result.param_dim;

    for (const auto& name : names) {
        for (int k = 0; k < d; ++k) {
            std::vector<AggregateRow> rows;
            for (long n_draws : ns) {
                std::vector<double> xs;
                double h = 0.0;
                for (const auto& cell : result.cells) {
                    if (cell.estimator != name || cell.n_draws != n_draws) continue;
                    h = cell.h;
                    if (cell.ok) xs.push_back(cell.beta(k));
                }
                AggregateRow row;
                row.estimator = name;
                row.n_draws = n_draws;
                row.component = k;
                row.h = h;
                row.replications_ok = static_cast<int>(xs.size());
                if (xs.empty()) {
                    row.mean = row.bias = row.variance = row.mse = row.mse_se = row.var_scaled = kNaN;
                    rows.push_back(row);
                    continue;
                }
                const double r = static_cast<double>(xs.size());
                double sum = 0.0;
                for (double v : xs) sum += v;
                row.mean = sum / r;
                double ss = 0.0;
                for (double v : xs) ss += (v - row.mean) * (v - row.mean);
                row.variance = ss / r;
                row.bias = row.mean - result.beta0;
                double se2 = 0.0, se4 = 0.0;
                for (double v : xs) {
                    const double e2 = (v - result.beta0) * (v - result.beta0);
                    se2 += e2;
                    se4 += e2 * e2;
                }
                row.mse = se2 / r;
                row.mse_se = xs.size() > 1 ? std::sqrt(std::max(se4 / r - row.mse * row.mse, 0.0) * r / (r - 1.0) / r)
                                           : 0.0;
                row.var_scaled = row.variance * static_cast<double>(n_draws) * std::pow(h, d + 2);
                rows.push_back(row);
            }
            result.slopes.push_back(fit_mse_slope(rows));
            result.aggregates.insert(result.aggregates.end(), rows.begin(), rows.end());
        }
    }
}

const SlopeFit* SweepResult::slope_for(const std::string& estimator, int component) const {
    for (const auto& s : slopes)
        if (s.estimator == estimator && s.component == component) return &s;
    return nullptr;
}

double SweepResult::variance_ratio(const std::string& estimator, int component) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& r : aggregates) {
        if (r.estimator != estimator || r.component != component || !(r.var_scaled > 0.0)) continue;
        lo = std::min(lo, r.var_scaled);
        hi = std::max(hi, r.var_scaled);
    }
    return hi > 0.0 ? hi / lo : kNaN;
}

json run_single(const Experiment& ex, long n_draws, std::uint64_t seed) {
    const BandwidthPlan plan = ex.plan(n_draws);
    const double h = ex.bandwidth(n_draws);
    const RandomizingDensity ell = ex.ell_for(h);
    const EstimatorConfig cfg = ex.estimator_config(h);
    const auto names = sweep_estimators(ex);
    std::optional<RandomizedSample> sample;
    if (std::any_of(names.begin(), names.end(), needs_sample))
        sample = draw_sample(*ex.model, ell, ex.config.lambda0, n_draws, seed);

    json reports = json::object();
    for (const auto& name : names) {
        try {
            reports[name] = run_estimator(ex, name, sample ? &*sample : nullptr, cfg, ell, n_draws, seed).to_json();
        } catch (const std::exception& e) {
            reports[name] = {{"error", e.what()}};
        }
    }
    json out{{"config", ex.config.to_json()},
             {"version", kVersion},
             {"seed", seed},
             {"N", n_draws},
             {"h", h},
             {"radius", ell.radius()},
             {"plan", plan.to_json()},
             {"feasibility", cfg.dimension_ok()},
             {"reports", reports}};
    out["beta0"] = std::isfinite(ex.beta0) ? json(ex.beta0) : json(nullptr);
    if (ex.constants) out["rate_constants"] = ex.constants->to_json();
    return out;
}

// ---------------------------------------------------------------------------
// CLT screen

json CltResult::to_json() const {
    return {{"N", n_draws},
            {"h", h},
            {"replications", replications},
            {"failed", failed},
            {"pivot_mean", pivot_mean},
            {"pivot_var", pivot_var},
            {"skewness", skewness},
            {"excess_kurtosis", excess_kurtosis},
            {"undersmooth_product", undersmooth_product},
            {"pass", pass}};
}

CltResult clt_screen(std::vector<double> pivots) {
    CltResult out;
    const double r = static_cast<double>(pivots.size());
    out.replications = static_cast<int>(pivots.size());
    if (pivots.size() < 2) throw ArgumentError("clt screen needs at least two pivots");
    double sum = 0.0;
    for (double v : pivots) sum += v;
    out.pivot_mean = sum / r;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : pivots) {
        const double e = v - out.pivot_mean;
        m2 += e * e;
        m3 += e * e * e;
        m4 += e * e * e * e;
    }
    out.pivot_var = m2 / (r - 1.0);
    m2 /= r;
    m3 /= r;
    m4 /= r;
    out.skewness = m3 / std::pow(m2, 1.5);
    out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    out.pass = std::abs(out.pivot_mean) < 4.0 / std::sqrt(r) && std::abs(out.pivot_var - 1.0) < 0.35 &&
               std::abs(out.skewness) < 0.5 && std::abs(out.excess_kurtosis) < 1.0;
    out.pivots = std::move(pivots);
    return out;
}

CltResult clt_check(const Experiment& ex, long n_draws, double h, int replications, PivotEstimator which) {
    if (replications < 200) throw ArgumentError("clt_check needs at least 200 replications");
    if (!std::isfinite(ex.beta0)) throw ConfigError("clt_check needs a reference value beta0");
    if (which == PivotEstimator::beta_bar_oracle && !ex.model->capabilities().has_score)
        throw ConfigError("oracle pivots need a model with an analytic score");
    const RandomizingDensity ell = ex.ell_for(h);
    const EstimatorConfig cfg = ex.estimator_config(h);
    std::vector<double> pivots;
    long failed = 0;
    for (int rep = 0; rep < replications; ++rep) {
        const std::uint64_t seed = cell_seed(ex.config.seed ^ kCltStream, n_draws, rep);
        try {
            const RandomizedSample sample = draw_sample(*ex.model, ell, ex.config.lambda0, n_draws, seed);
            const EstimateReport r = which == PivotEstimator::beta_tilde
                                         ? beta_tilde(sample, cfg, ell, ex.config.lambda0, ex.payoff)
                                         : beta_bar_oracle(sample, cfg, ell, ex.config.lambda0, ex.payoff, *ex.model);
            pivots.push_back((r.beta_hat(0) - ex.beta0) / std::sqrt(r.asym_var(0, 0)));
        } catch (const Error&) {
            ++failed;
        }
    }
    if (failed * 10 > replications) throw EstimationError("more than 10% of CLT replications failed");
    CltResult out = clt_screen(std::move(pivots));
    out.n_draws = n_draws;
    out.h = h;
    out.failed = failed;
    const int m = std::min(ex.kernel_k.order(), ex.kernel_h.order());
    out.undersmooth_product = static_cast<double>(n_draws) * std::pow(h, ex.model->param_dim() + 2 + 2 * m);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
    std::string out = "\"";
    for (char ch : value) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::vector<std::filesystem::path> emit_reports(const SweepResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;

    std::ostringstream sweep;
    sweep << "estimator,N,rep,seed,h,component,beta_hat,std_error,truncation_rate,n_used,status\r\n";
    for (const auto& c : result.cells) {
        for (Eigen::Index k = 0; k < c.beta.size(); ++k) {
            sweep << csv_field(c.estimator) << ',' << c.n_draws << ',' << c.rep << ',' << c.seed << ','
                  << format_double(c.h) << ',' << k << ',' << format_double(c.beta(k)) << ','
                  << format_double(c.std_error(k)) << ',' << format_double(c.truncation_rate) << ',' << c.n_used
                  << ',' << csv_field(c.ok ? "ok" : "error: " + c.error) << "\r\n";
        }
    }
    written.push_back(dir / "sweep.csv");
    write_text(written.back(), sweep.str());

    std::ostringstream agg;
    agg << "estimator,N,component,replications_ok,h,mean,bias,variance,mse,mse_se,var_scaled,slope,slope_se\r\n";
    for (const auto& r : result.aggregates) {
        const SlopeFit* s = result.slope_for(r.estimator, r.component);
        agg << csv_field(r.estimator) << ',' << r.n_draws << ',' << r.component << ',' << r.replications_ok << ','
            << format_double(r.h) << ',' << format_double(r.mean) << ',' << format_double(r.bias) << ','
            << format_double(r.variance) << ',' << format_double(r.mse) << ',' << format_double(r.mse_se) << ','
            << format_double(r.var_scaled) << ',' << format_double(s ? s->slope : kNaN) << ','
            << format_double(s ? s->slope_se : kNaN) << "\r\n";
    }
    written.push_back(dir / "aggregate.csv");
    write_text(written.back(), agg.str());

    std::map<std::string, std::ostringstream> dat;
    for (const auto& r : result.aggregates) {
        if (r.component != 0) continue;
        auto& os = dat[r.estimator];
        if (os.tellp() == 0) os << "# N h mse mse_se variance var_scaled\n";
        os << r.n_draws << ' ' << format_double(r.h) << ' ' << format_double(r.mse) << ' '
           << format_double(r.mse_se) << ' ' << format_double(r.variance) << ' ' << format_double(r.var_scaled)
           << '\n';
    }
    for (auto& [name, os] : dat) {
        written.push_back(dir / ("mse_" + name + ".dat"));
        write_text(written.back(), os.str());
    }

    json meta = result.meta;
    json slopes = json::array();
    for (const auto& s : result.slopes)
        slopes.push_back({{"estimator", s.estimator},
                          {"component", s.component},
                          {"slope", std::isfinite(s.slope) ? json(s.slope) : json(nullptr)},
                          {"slope_se", std::isfinite(s.slope_se) ? json(s.slope_se) : json(nullptr)},
                          {"points", s.points}});
    meta["slopes"] = slopes;
    json ratios = json::object();
    for (const auto& s : result.slopes) {
        const double v = result.variance_ratio(s.estimator, s.component);
        ratios[s.estimator + "[" + std::to_string(s.component) + "]"] = std::isfinite(v) ? json(v) : json(nullptr);
    }
    meta["variance_scaling_ratio"] = ratios;
    meta["sweep_failed"] = result.failed();
    written.push_back(dir / "run.json");
    write_text(written.back(), meta.dump(2) + "\n");
    return written;
}

} // namespace greeks

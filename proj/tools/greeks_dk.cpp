// greeks-dk: command-line driver for sweeps, single runs, CLT screens and
// kernel verification.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "greeks/error.hpp"
#include "greeks/harness.hpp"
#include "greeks/kernel.hpp"
#include "greeks/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

greeks::RunConfig load_config(const std::string& path, const Common& common) {
    greeks::RunConfig cfg = greeks::RunConfig::load(path);
    if (common.seed) cfg.seed = *common.seed;
    if (!common.out.empty()) cfg.out_dir = common.out;
    return cfg;
}

int cmd_run(const std::string& path, const Common& common) {
    const greeks::RunConfig cfg = load_config(path, common);
    const greeks::Experiment ex = greeks::build_experiment(cfg);
    const json out = greeks::run_single(ex, cfg.run_n, cfg.seed);
    fs::create_directories(cfg.out_dir);
    greeks::write_text(fs::path(cfg.out_dir) / "run.json", out.dump(2) + "\n");
    std::cout << "N=" << cfg.run_n << " h=" << out["h"].get<double>() << " radius=" << out["radius"].get<double>()
              << '\n';
    if (!out["beta0"].is_null()) std::cout << "beta0 = " << out["beta0"].get<double>() << '\n';
    for (const auto& [name, r] : out["reports"].items()) {
        if (r.contains("error")) {
            std::cout << name << ": error: " << r["error"].get<std::string>() << '\n';
            continue;
        }
        const auto ci = r["ci_95"][0];
        std::printf("%-16s %.6f  ci95 [%.6f, %.6f]  %.3fs\n", name.c_str(), r["beta_hat"][0].get<double>(),
                    ci[0].get<double>(), ci[1].get<double>(), r["timing_seconds"].get<double>());
    }
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "run.json").string() << '\n';
    return 0;
}

int cmd_sweep(const std::string& path, const Common& common) {
    const greeks::RunConfig cfg = load_config(path, common);
    if (cfg.ns.empty()) throw greeks::ConfigError("sweep.Ns is empty");
    const greeks::Experiment ex = greeks::build_experiment(cfg);
    const greeks::SweepResult result = greeks::run_sweep(ex);
    for (const auto& p : greeks::emit_reports(result, cfg.out_dir)) std::cout << "wrote " << p.string() << '\n';
    for (const auto& s : result.slopes) {
        std::printf("%-16s slope %+.4f (se %.4f, %d points)  var ratio %.3f\n", s.estimator.c_str(), s.slope,
                    s.slope_se, s.points, result.variance_ratio(s.estimator, s.component));
    }
    std::cout << "failed cells: " << result.failed_cells << " / " << result.total_cells << '\n';
    if (result.failed()) {
        std::cerr << "sweep failed: more than 10% of cells failed\n";
        return 3;
    }
    return 0;
}

int cmd_clt(const std::string& path, int reps, const Common& common) {
    const greeks::RunConfig cfg = load_config(path, common);
    const greeks::Experiment ex = greeks::build_experiment(cfg);
    const int r = reps > 0 ? reps : cfg.clt_replications;
    greeks::BandwidthPlan plan = ex.plan(cfg.clt_n);
    const double h_under = greeks::undersmoothed_bandwidth(plan, cfg.clt_gamma);
    const double h_over = cfg.oversmooth_factor * plan.h_star;

    const greeks::CltResult under = greeks::clt_check(ex, cfg.clt_n, h_under, r);
    const greeks::CltResult over = greeks::clt_check(ex, cfg.clt_n, h_over, r);
    json out{{"config", cfg.to_json()}, {"plan", plan.to_json()}, {"undersmoothed", under.to_json()},
             {"oversmoothed", over.to_json()}};
    fs::create_directories(cfg.out_dir);
    greeks::write_text(fs::path(cfg.out_dir) / "clt.json", out.dump(2) + "\n");
    std::string csv = "rep,undersmoothed,oversmoothed\r\n";
    for (std::size_t i = 0; i < std::max(under.pivots.size(), over.pivots.size()); ++i) {
        csv += std::to_string(i) + ',' +
               (i < under.pivots.size() ? greeks::format_double(under.pivots[i]) : std::string()) + ',' +
               (i < over.pivots.size() ? greeks::format_double(over.pivots[i]) : std::string()) + "\r\n";
    }
    greeks::write_text(fs::path(cfg.out_dir) / "clt_pivots.csv", csv);
    for (const auto* res : {&under, &over}) {
        std::printf("%s h=%.4f mean %+.3f var %.3f skew %+.3f exkurt %+.3f -> %s\n",
                    res == &under ? "undersmoothed" : "oversmoothed ", res->h, res->pivot_mean, res->pivot_var,
                    res->skewness, res->excess_kurtosis, res->pass ? "pass" : "fail");
    }
    return 0;
}

int cmd_verify(const std::string& name, int order, int dim) {
    const greeks::ProductKernel k = greeks::make_kernel(name, order, dim);
    const int found = greeks::verify_order(k, 8);
    std::printf("kernel %s  dimension %d  declared order %d\n", k.describe().c_str(), dim, order);
    std::printf("integral      %.12f\n", k.integral());
    for (int r = 1; r <= std::min(8, order + 2); ++r)
        std::printf("moment u^%d    %+.3e\n", r, k.factor(0).moment(r));
    const greeks::KernelConstants kc = greeks::compute_kernel_constants(k, k);
    std::printf("sigma_factor  %.10g (first diagonal entry)\n", kc.sigma_factor(0, 0));
    std::printf("int K^2       %.10g\n", kc.k_sq_norm);
    std::printf("verified order %d -> %s\n", found, found == order ? "ok" : "MISMATCH");
    return found == order ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo Greeks with the double-kernel estimator"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--out", common.out, "output directory (overrides outputs.dir)");
    app.add_option("--seed", common.seed, "base seed (overrides sweep.seed)");
    app.add_option("--threads", common.threads, "worker threads; 0 = hardware concurrency (speed only)");

    std::string config_path;
    int reps = 0;
    auto* run = app.add_subcommand("run", "estimate once at estimator.N with every available estimator");
    run->add_option("config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "convergence sweep over sweep.Ns x sweep.replications");
    sweep->add_option("config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    auto* clt = app.add_subcommand("clt", "CLT moment screen, undersmoothed and oversmoothed");
    clt->add_option("config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    clt->add_option("--reps", reps, "replications (>= 200)");

    auto* kernels = app.add_subcommand("kernels", "kernel utilities");
    kernels->require_subcommand(1);
    auto* verify = kernels->add_subcommand("verify", "verify the moment order of a kernel");
    std::string kname;
    int korder = 2;
    int kdim = 1;
    verify->add_option("name", kname, "epanechnikov, quartic, triweight")->required();
    verify->add_option("order", korder, "declared order (2, 4, 6)")->required();
    verify->add_option("--dim", kdim, "dimension");

    for (auto* sub : {run, sweep, clt, verify}) {
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--seed", common.seed, "base seed");
        sub->add_option("--threads", common.threads, "worker threads");
    }

    CLI11_PARSE(app, argc, argv);
    try {
        greeks::set_thread_count(common.threads);
        if (*run) return cmd_run(config_path, common);
        if (*sweep) return cmd_sweep(config_path, common);
        if (*clt) return cmd_clt(config_path, reps, common);
        if (*verify) return cmd_verify(kname, korder, kdim);
    } catch (const greeks::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

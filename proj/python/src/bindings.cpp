// _core: thin pybind11 layer. Configs travel as JSON text; the Python package
// converts dicts and decodes the JSON reports.
#include <cstdint>
#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "greeks/baselines.hpp"
#include "greeks/error.hpp"
#include "greeks/harness.hpp"
#include "greeks/parallel.hpp"
#include "greeks/version.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

greeks::Experiment experiment(const std::string& config) {
    json j;
    try {
        j = json::parse(config);
    } catch (const json::exception& e) {
        throw greeks::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return greeks::build_experiment(greeks::RunConfig::from_json(j));
}

greeks::RandomizedSample as_sample(const greeks::Experiment& ex, const greeks::RowMatrix& lambdas,
                                   const greeks::RowMatrix& zs) {
    if (lambdas.rows() != zs.rows()) throw greeks::ArgumentError("lambdas and zs need the same number of rows");
    greeks::RandomizedSample s;
    s.lambda0 = ex.config.lambda0;
    s.lambdas = lambdas;
    s.zs = zs;
    return s;
}

double pick_h(const greeks::Experiment& ex, std::optional<double> h, long n) {
    return h ? *h : ex.bandwidth(n);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.attr("__version__") = greeks::kVersion;

    auto base = py::register_exception<greeks::Error>(m, "GreeksError", PyExc_RuntimeError);
    py::register_exception<greeks::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<greeks::ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<greeks::EstimationError>(m, "EstimationError", base.ptr());

    m.def("set_threads", &greeks::set_thread_count, py::arg("threads"));
    m.def("thread_count", &greeks::thread_count);

    m.def(
        "verify_kernel",
        [](const std::string& name, int order, int dim) {
            return greeks::verify_order(greeks::make_kernel(name, order, dim), 6);
        },
        py::arg("name"), py::arg("order"), py::arg("dim") = 1);

    m.def(
        "kernel_constants",
        [](const std::string& name, int order, int dim) {
            const greeks::ProductKernel k = greeks::make_kernel(name, order, dim);
            const greeks::KernelConstants c = greeks::compute_kernel_constants(k, k);
            py::dict out;
            out["sigma_factor"] = c.sigma_factor;
            out["h_sq_norm"] = c.h_sq_norm;
            out["k_sq_norm"] = c.k_sq_norm;
            out["integral"] = k.integral();
            return out;
        },
        py::arg("name"), py::arg("order"), py::arg("dim") = 1);

    m.def(
        "experiment_info",
        [](const std::string& config, long n) {
            const greeks::Experiment ex = experiment(config);
            json out{{"h", ex.bandwidth(n)}, {"radius", ex.ell.radius()}, {"plan", ex.plan(n).to_json()},
                     {"estimators", ex.available_estimators()}};
            out["beta0"] = std::isfinite(ex.beta0) ? json(ex.beta0) : json(nullptr);
            if (ex.constants) out["rate_constants"] = ex.constants->to_json();
            return out.dump();
        },
        py::arg("config"), py::arg("n"));

    m.def(
        "draw_sample",
        [](const std::string& config, long n, std::uint64_t seed) {
            const greeks::Experiment ex = experiment(config);
            greeks::RandomizedSample s = greeks::draw_sample(*ex.model, ex.ell, ex.config.lambda0, n, seed);
            return py::make_tuple(s.lambdas, s.zs);
        },
        py::arg("config"), py::arg("n"), py::arg("seed"));

    m.def(
        "beta_tilde",
        [](const std::string& config, const greeks::RowMatrix& lambdas, const greeks::RowMatrix& zs,
           std::optional<double> h) {
            const greeks::Experiment ex = experiment(config);
            const greeks::RandomizedSample s = as_sample(ex, lambdas, zs);
            const double bw = pick_h(ex, h, static_cast<long>(s.size()));
            py::gil_scoped_release release;
            return greeks::beta_tilde(s, ex.estimator_config(bw), ex.ell_for(bw), ex.config.lambda0, ex.payoff)
                .to_json()
                .dump();
        },
        py::arg("config"), py::arg("lambdas"), py::arg("zs"), py::arg("h") = py::none());

    m.def(
        "beta_bar_oracle",
        [](const std::string& config, const greeks::RowMatrix& lambdas, const greeks::RowMatrix& zs,
           std::optional<double> h) {
            const greeks::Experiment ex = experiment(config);
            const greeks::RandomizedSample s = as_sample(ex, lambdas, zs);
            const double bw = pick_h(ex, h, static_cast<long>(s.size()));
            py::gil_scoped_release release;
            return greeks::beta_bar_oracle(s, ex.estimator_config(bw), ex.ell_for(bw), ex.config.lambda0, ex.payoff,
                                           *ex.model)
                .to_json()
                .dump();
        },
        py::arg("config"), py::arg("lambdas"), py::arg("zs"), py::arg("h") = py::none());

    m.def(
        "baseline",
        [](const std::string& config, const std::string& which, long n, std::uint64_t seed) {
            const greeks::Experiment ex = experiment(config);
            const auto& l0 = ex.config.lambda0;
            py::gil_scoped_release release;
            if (which == "fd")
                return greeks::finite_difference_greek(*ex.model, ex.payoff, l0, ex.config.baseline(), n, seed)
                    .to_json()
                    .dump();
            if (which == "lr") return greeks::likelihood_ratio_greek(*ex.model, ex.payoff, l0, n, seed).to_json().dump();
            if (which == "pathwise") return greeks::pathwise_greek(*ex.model, ex.payoff, l0, n, seed).to_json().dump();
            throw greeks::ArgumentError("unknown baseline '" + which + "' (fd, lr, pathwise)");
        },
        py::arg("config"), py::arg("which"), py::arg("n"), py::arg("seed"));

    m.def(
        "run",
        [](const std::string& config, std::optional<long> n, std::optional<std::uint64_t> seed) {
            const greeks::Experiment ex = experiment(config);
            py::gil_scoped_release release;
            return greeks::run_single(ex, n.value_or(ex.config.run_n), seed.value_or(ex.config.seed)).dump();
        },
        py::arg("config"), py::arg("n") = py::none(), py::arg("seed") = py::none());

    m.def(
        "sweep",
        [](const std::string& config, const std::string& out_dir) {
            const greeks::Experiment ex = experiment(config);
            greeks::SweepResult r;
            {
                py::gil_scoped_release release;
                r = greeks::run_sweep(ex);
            }
            if (!out_dir.empty()) greeks::emit_reports(r, out_dir);
            json rows = json::array();
            for (const auto& a : r.aggregates)
                rows.push_back({{"estimator", a.estimator}, {"N", a.n_draws}, {"component", a.component},
                                {"h", a.h}, {"mean", a.mean}, {"bias", a.bias}, {"variance", a.variance},
                                {"mse", a.mse}, {"var_scaled", a.var_scaled}});
            json slopes = json::object();
            for (const auto& s : r.slopes) slopes[s.estimator] = {{"slope", s.slope}, {"slope_se", s.slope_se}};
            return json{{"aggregates", rows}, {"slopes", slopes}, {"failed_cells", r.failed_cells},
                        {"total_cells", r.total_cells}}
                .dump();
        },
        py::arg("config"), py::arg("out_dir") = "");

    m.def(
        "clt",
        [](const std::string& config, long n, double h, int reps, bool oracle) {
            const greeks::Experiment ex = experiment(config);
            py::gil_scoped_release release;
            return greeks::clt_check(ex, n, h, reps,
                                     oracle ? greeks::PivotEstimator::beta_bar_oracle
                                            : greeks::PivotEstimator::beta_tilde)
                .to_json()
                .dump();
        },
        py::arg("config"), py::arg("n"), py::arg("h"), py::arg("reps") = 200, py::arg("oracle") = false);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "greeks/error.hpp"

namespace greeks::quad {

/// Composite 20-point Gauss-Legendre rule with `panels` equal panels on [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b, int panels) {
    if (!(b > a)) return 0.0;
    const double width = (b - a) / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double lo = a + k * width;
        const double hi = (k + 1 == panels) ? b : lo + width;
        total += boost::math::quadrature::gauss<double, 20>::integrate(f, lo, hi);
    }
    return total;
}

/// Piecewise Gauss-Legendre on the intervals delimited by `breaks`, with
/// panel doubling until two successive results agree to `rel_tol` (relative
/// to the integral of |f|). Throws NumericalError after `max_refinements`.
template <class F>
double integrate_piecewise(F&& f, std::vector<double> breaks, double rel_tol = 1e-6,
                           int max_refinements = 4) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    if (breaks.size() < 2) return 0.0;

    auto pass = [&](int panels, double& abs_total) {
        double total = 0.0;
        abs_total = 0.0;
        for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
            total += gauss_legendre(f, breaks[s], breaks[s + 1], panels);
            abs_total += gauss_legendre([&](double x) { return std::abs(f(x)); }, breaks[s],
                                        breaks[s + 1], panels);
        }
        return total;
    };

    double scale = 0.0;
    double previous = pass(1, scale);
    int panels = 1;
    for (int r = 0; r < max_refinements; ++r) {
        panels *= 2;
        const double current = pass(panels, scale);
        if (std::abs(current - previous) <= rel_tol * std::max(scale, 1e-300)) return current;
        previous = current;
    }
    throw NumericalError("quadrature did not converge after panel doubling");
}

/// Adaptive Gauss-Kronrod on [a, b].
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol = 1e-10) {
    if (!(b > a)) return 0.0;
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, rel_tol, &error);
    if (!std::isfinite(value)) throw NumericalError("adaptive quadrature produced a non-finite value");
    return value;
}

} // namespace greeks::quad

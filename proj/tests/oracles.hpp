#pragma once

// Straight-line reference computations used by the unit and acceptance tests.
// Deliberately naive: plain loops, no library kernels, 1-d Epanechnikov only.

#include <cmath>
#include <vector>

namespace oracle {

inline double epan(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }
inline double epan_slope(double u) { return std::abs(u) <= 1.0 ? -1.5 * u : 0.0; }

struct Draws {
    std::vector<double> lambda;
    std::vector<double> z;
};

struct LooValue {
    double value;
    double grad;
};

// phi-hat^{-i}(lam, z) and its lambda-derivative with bandwidth b.
inline LooValue loo(const Draws& s, std::size_t i, double lam, double z, double b) {
    const std::size_t n = s.lambda.size();
    double v = 0.0, g = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double u = (lam - s.lambda[j]) / b;
        const double w = (z - s.z[j]) / b;
        v += epan(u) * epan(w);
        g += epan_slope(u) * epan(w);
    }
    const double m = static_cast<double>(n - 1);
    return {v / (m * b * b), g / (m * b * b * b)};
}

// beta-tilde for d = n = 1, Epanechnikov K = H, ell Epanechnikov with radius rho.
// payoff(z) is any callable.
template <class Pay>
double beta_tilde(const Draws& s, double lambda0, double h, double delta, double rho, Pay payoff) {
    const std::size_t n = s.lambda.size();
    const double ell0 = 0.75 / rho;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double k = epan((lambda0 - s.lambda[i]) / h);
        if (k == 0.0) continue;
        const double pay = payoff(s.z[i]);
        if (pay == 0.0) continue;
        const LooValue e = loo(s, i, s.lambda[i], s.z[i], h);
        const double denom = std::abs(e.value) < delta / 3.0 ? delta / 3.0 : e.value;
        const double u = lambda0 - s.lambda[i];
        const double ell_log_grad = -2.0 * u / (rho * rho - u * u);
        total += pay * k * (e.grad / denom + ell_log_grad);
    }
    return total / (ell0 * static_cast<double>(n) * h);
}

} // namespace oracle

#include "greeks/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "greeks/error.hpp"
#include "greeks/quadrature.hpp"

namespace greeks {

Polynomial Polynomial::derivative() const {
    if (coeffs.size() <= 1) return {{0.0}};
    Polynomial out;
    out.coeffs.resize(coeffs.size() - 1);
    for (std::size_t k = 1; k < coeffs.size(); ++k) out.coeffs[k - 1] = static_cast<double>(k) * coeffs[k];
    return out;
}

Polynomial Polynomial::operator*(const Polynomial& other) const {
    Polynomial out;
    out.coeffs.assign(coeffs.size() + other.coeffs.size() - 1, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i)
        for (std::size_t j = 0; j < other.coeffs.size(); ++j) out.coeffs[i + j] += coeffs[i] * other.coeffs[j];
    return out;
}

Polynomial Polynomial::shifted(double shift) const {
    // (x - s)^k = sum_j C(k, j) x^j (-s)^(k-j)
    Polynomial out;
    out.coeffs.assign(coeffs.size(), 0.0);
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        double binom = 1.0;
        for (std::size_t j = 0; j <= k; ++j) {
            if (j > 0) binom = binom * static_cast<double>(k - j + 1) / static_cast<double>(j);
            out.coeffs[j] += coeffs[k] * binom * std::pow(-shift, static_cast<double>(k - j));
        }
    }
    return out;
}

UnivariateKernel::UnivariateKernel(std::string name, double lo, double hi, Polynomial shape,
                                   int declared_order)
    : name_(std::move(name)), lo_(lo), hi_(hi), shape_(std::move(shape)), declared_order_(declared_order) {
    if (!(hi_ > lo_)) throw ConstructionError("kernel support must be a non-empty interval");
    if (shape_.coeffs.empty()) throw ConstructionError("kernel shape polynomial is empty");
    if (declared_order_ < 1) throw ConstructionError("kernel order must be positive");
    slope_ = shape_.derivative();

    double peak = 0.0;
    constexpr int samples = 2000;
    for (int s = 0; s <= samples; ++s) {
        const double u = lo_ + (hi_ - lo_) * s / samples;
        peak = std::max(peak, std::abs(shape_(u)));
        lipschitz_ = std::max(lipschitz_, std::abs(slope_(u)));
    }
    // A jump at the support edge would break the Lipschitz property.
    if (std::abs(shape_(lo_)) > 1e-12 * peak || std::abs(shape_(hi_)) > 1e-12 * peak)
        throw ConstructionError("kernel '" + name_ + "' does not vanish at its support boundary");
}

double UnivariateKernel::support_radius() const noexcept { return std::max(std::abs(lo_), std::abs(hi_)); }

bool UnivariateKernel::is_even() const noexcept {
    if (std::abs(lo_ + hi_) > 1e-15) return false;
    for (std::size_t k = 1; k < shape_.coeffs.size(); k += 2)
        if (shape_.coeffs[k] != 0.0) return false;
    return true;
}

double UnivariateKernel::moment(int r) const {
    return quad::integrate_piecewise([&](double u) { return std::pow(u, r) * shape_(u); }, {lo_, hi_}, 1e-12);
}

KernelName parse_kernel_name(std::string_view name) {
    if (name == "epanechnikov") return KernelName::epanechnikov;
    if (name == "quartic" || name == "biweight") return KernelName::quartic;
    if (name == "triweight") return KernelName::triweight;
    throw ConfigError("unknown kernel name '" + std::string(name) + "'");
}

std::string_view to_string(KernelName name) {
    switch (name) {
    case KernelName::epanechnikov: return "epanechnikov";
    case KernelName::quartic: return "quartic";
    case KernelName::triweight: return "triweight";
    }
    return "unknown";
}

UnivariateKernel univariate_kernel(KernelName name) {
    switch (name) {
    case KernelName::epanechnikov:
        return {"epanechnikov", -1.0, 1.0, {{0.75, 0.0, -0.75}}, 2};
    case KernelName::quartic: {
        constexpr double c = 15.0 / 16.0;
        return {"quartic", -1.0, 1.0, {{c, 0.0, -2.0 * c, 0.0, c}}, 2};
    }
    case KernelName::triweight: {
        constexpr double c = 35.0 / 32.0;
        return {"triweight", -1.0, 1.0, {{c, 0.0, -3.0 * c, 0.0, 3.0 * c, 0.0, -c}}, 2};
    }
    }
    throw ConfigError("unknown kernel");
}

UnivariateKernel shifted_epanechnikov(double shift) {
    const auto base = univariate_kernel(KernelName::epanechnikov);
    return {"epanechnikov-shifted", -1.0 + shift, 1.0 + shift, base.shape().shifted(shift), 1};
}

ProductKernel::ProductKernel(std::vector<UnivariateKernel> factors, int order)
    : factors_(std::move(factors)), order_(order) {
    if (factors_.empty()) throw ConstructionError("product kernel needs at least one factor");
    if (order_ < 1) throw ConstructionError("kernel order must be positive");
}

double ProductKernel::support_radius() const noexcept {
    double r = 0.0;
    for (const auto& f : factors_) r = std::max(r, f.support_radius());
    return r;
}

double ProductKernel::evaluate(std::span<const double> u) const noexcept {
    double value = 1.0;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
        value *= factors_[j].evaluate(u[j]);
        if (value == 0.0) return 0.0;
    }
    return value;
}

double ProductKernel::gradient(std::span<const double> u, std::span<double> out) const noexcept {
    const std::size_t d = factors_.size();
    double values[16];
    double slopes[16];
    for (std::size_t j = 0; j < d; ++j) {
        values[j] = factors_[j].evaluate(u[j]);
        slopes[j] = factors_[j].derivative(u[j]);
    }
    double product = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        double g = slopes[i];
        for (std::size_t j = 0; j < d; ++j)
            if (j != i) g *= values[j];
        out[i] = g;
        product *= values[i];
    }
    return product;
}

double ProductKernel::mixed_moment(std::span<const int> powers) const {
    double value = 1.0;
    for (std::size_t j = 0; j < factors_.size(); ++j) value *= factors_[j].moment(powers[j]);
    return value;
}

double ProductKernel::integral() const {
    std::vector<int> zeros(factors_.size(), 0);
    return mixed_moment(zeros);
}

std::string ProductKernel::describe() const {
    std::ostringstream os;
    os << factors_.front().name() << "^" << factors_.size() << " (order " << order_ << ")";
    return os.str();
}

ProductKernel make_standard_kernel(KernelName name, int dimension) {
    if (dimension < 1) throw ArgumentError("kernel dimension must be >= 1");
    return ProductKernel(std::vector<UnivariateKernel>(dimension, univariate_kernel(name)), 2);
}

ProductKernel make_standard_kernel(std::string_view name, int dimension) {
    return make_standard_kernel(parse_kernel_name(name), dimension);
}

ProductKernel make_high_order_kernel(const UnivariateKernel& base, int order, int dimension) {
    if (order != 2 && order != 4 && order != 6) throw ArgumentError("high-order kernels support order 2, 4 or 6");
    if (dimension < 1) throw ArgumentError("kernel dimension must be >= 1");
    if (!base.is_even()) throw ArgumentError("high-order construction needs an even base kernel");

    // Even correction polynomial sum_i c_i u^{2i}, i < m, with
    // sum_i c_i mu_{2i+2k} = [k == 0] for k < m.
    const int m = order / 2;
    Eigen::MatrixXd system(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(0) = 1.0;
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i) system(k, i) = base.moment(2 * i + 2 * k);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) throw ConstructionError("singular moment system");
    const Eigen::VectorXd c = lu.solve(rhs);

    Polynomial correction;
    correction.coeffs.assign(2 * m - 1, 0.0);
    for (int i = 0; i < m; ++i) correction.coeffs[2 * i] = c(i);

    std::string name = base.name();
    if (order > 2) name += "-o" + std::to_string(order);
    UnivariateKernel factor(name, base.lo(), base.hi(), correction * base.shape(), order);
    return ProductKernel(std::vector<UnivariateKernel>(dimension, factor), order);
}

ProductKernel make_kernel(std::string_view name, int order, int dimension) {
    if (order == 2) return make_standard_kernel(name, dimension);
    return make_high_order_kernel(univariate_kernel(parse_kernel_name(name)), order, dimension);
}

std::vector<std::vector<int>> multi_indices(int dimension, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> current(dimension, 0);
    auto recurse = [&](auto&& self, int slot, int remaining) -> void {
        if (slot == dimension - 1) {
            current[slot] = remaining;
            out.push_back(current);
            return;
        }
        for (int k = remaining; k >= 0; --k) {
            current[slot] = k;
            self(self, slot + 1, remaining - k);
        }
    };
    recurse(recurse, 0, degree);
    return out;
}

int verify_order(const ProductKernel& k, int max_order) {
    if (max_order < 1 || max_order > 8) throw ArgumentError("verify_order supports max_order in [1, 8]");
    constexpr double zero_tol = 1e-8;
    constexpr double nonzero_tol = 1e-6;
    for (int r = 1; r <= max_order; ++r) {
        double largest = 0.0;
        for (const auto& powers : multi_indices(k.dimension(), r))
            largest = std::max(largest, std::abs(k.mixed_moment(powers)));
        if (largest > nonzero_tol) return r;
        if (largest > zero_tol)
            throw VerificationError("degree-" + std::to_string(r) +
                                    " moment is neither zero nor clearly nonzero");
    }
    throw VerificationError("kernel order exceeds " + std::to_string(max_order));
}

namespace {

struct FactorIntegrals {
    double grad_sq;    // int g^2, g(x) = int k(x - t) k'(t) dt
    double conv_sq;    // int c^2, c(x) = int k(x - t) k(t) dt
    double grad_conv;  // int g c
    double k_dk;       // int k k'
    double k_sq;       // int k^2
    double k_int;      // int k
};

FactorIntegrals factor_integrals(const UnivariateKernel& k) {
    const double lo = k.lo();
    const double hi = k.hi();
    auto inner = [&](double x, bool with_slope) {
        const double a = std::max(lo, x - hi);
        const double b = std::min(hi, x - lo);
        return quad::gauss_legendre(
            [&](double t) { return k.evaluate(x - t) * (with_slope ? k.derivative(t) : k.evaluate(t)); }, a, b,
            1);
    };
    const std::vector<double> outer{2 * lo, lo + hi, 2 * hi};
    FactorIntegrals out{};
    out.grad_sq = quad::integrate_piecewise([&](double x) { const double g = inner(x, true); return g * g; },
                                            outer, 1e-10);
    out.conv_sq = quad::integrate_piecewise([&](double x) { const double c = inner(x, false); return c * c; },
                                            outer, 1e-10);
    out.grad_conv = quad::integrate_piecewise([&](double x) { return inner(x, true) * inner(x, false); }, outer,
                                              1e-10);
    out.k_dk = quad::integrate_piecewise([&](double t) { return k.evaluate(t) * k.derivative(t); }, {lo, hi},
                                         1e-10);
    out.k_sq = quad::integrate_piecewise([&](double t) { const double v = k.evaluate(t); return v * v; },
                                         {lo, hi}, 1e-10);
    out.k_int = k.moment(0);
    return out;
}

std::vector<MomentEntry> nonzero_moments(const ProductKernel& k) {
    std::vector<MomentEntry> out;
    for (auto& powers : multi_indices(k.dimension(), k.order())) {
        const double value = k.mixed_moment(powers);
        if (std::abs(value) > 1e-8) out.push_back({std::move(powers), value});
    }
    return out;
}

} // namespace

KernelConstants compute_kernel_constants(const ProductKernel& k, const ProductKernel& h) {
    const int d = k.dimension();
    std::vector<FactorIntegrals> parts;
    parts.reserve(d);
    for (const auto& f : k.factors()) parts.push_back(factor_integrals(f));

    KernelConstants out;
    out.sigma_factor = Eigen::MatrixXd::Zero(d, d);
    out.c3_factor = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double value = 1.0;
            for (int m = 0; m < d; ++m) {
                if (i == j)
                    value *= (m == i) ? parts[m].grad_sq : parts[m].conv_sq;
                else
                    value *= (m == i || m == j) ? parts[m].grad_conv : parts[m].conv_sq;
            }
            out.sigma_factor(i, j) = value;
        }
        double c3 = 1.0;
        for (int m = 0; m < d; ++m) c3 *= parts[m].k_int * ((m == i) ? parts[m].k_dk : parts[m].k_sq);
        out.c3_factor(i) = c3;
    }

    out.k_sq_norm = 1.0;
    for (const auto& p : parts) out.k_sq_norm *= p.k_sq;
    out.h_sq_norm = 1.0;
    for (const auto& f : h.factors())
        out.h_sq_norm *= quad::integrate_piecewise([&](double v) { const double x = f.evaluate(v); return x * x; },
                                                   {f.lo(), f.hi()}, 1e-10);
    out.k_moments = nonzero_moments(k);
    out.h_moments = nonzero_moments(h);
    return out;
}

} // namespace greeks

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace greeks {

/// Dense polynomial, coefficients in increasing degree.
struct Polynomial {
    std::vector<double> coeffs;

    double operator()(double x) const noexcept {
        double acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
        return acc;
    }
    int degree() const noexcept { return static_cast<int>(coeffs.size()) - 1; }
    Polynomial derivative() const;
    Polynomial operator*(const Polynomial& other) const;
    /// p(x - shift) expanded in powers of x.
    Polynomial shifted(double shift) const;
};

/// A univariate kernel that is a single polynomial piece on [lo, hi] and zero
/// elsewhere. Every kernel the library ships has this form, which makes the
/// evaluation branch-light and lets quadrature integrate moments exactly.
class UnivariateKernel {
public:
    UnivariateKernel(std::string name, double lo, double hi, Polynomial shape, int declared_order);

    double evaluate(double u) const noexcept { return (u < lo_ || u > hi_) ? 0.0 : shape_(u); }
    double derivative(double u) const noexcept { return (u < lo_ || u > hi_) ? 0.0 : slope_(u); }

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    double support_radius() const noexcept;
    int declared_order() const noexcept { return declared_order_; }
    const std::string& name() const noexcept { return name_; }
    const Polynomial& shape() const noexcept { return shape_; }
    /// max |K'| over the support, i.e. the Lipschitz constant on the support.
    double lipschitz() const noexcept { return lipschitz_; }
    bool is_even() const noexcept;

    /// int u^r K(u) du, exact up to rounding (Gauss-Legendre on a polynomial).
    double moment(int r) const;

private:
    std::string name_;
    double lo_;
    double hi_;
    Polynomial shape_;
    Polynomial slope_;
    int declared_order_;
    double lipschitz_ = 0.0;
};

enum class KernelName { epanechnikov, quartic, triweight };

KernelName parse_kernel_name(std::string_view name);
std::string_view to_string(KernelName name);

/// Base univariate kernels on [-1, 1].
UnivariateKernel univariate_kernel(KernelName name);

/// Epanechnikov kernel translated by `shift`; not centred, so of order 1.
UnivariateKernel shifted_epanechnikov(double shift);

/// d-dimensional product of univariate kernels with declared order p.
class ProductKernel {
public:
    ProductKernel(std::vector<UnivariateKernel> factors, int order);

    int dimension() const noexcept { return static_cast<int>(factors_.size()); }
    int order() const noexcept { return order_; }
    const std::vector<UnivariateKernel>& factors() const noexcept { return factors_; }
    const UnivariateKernel& factor(int j) const { return factors_.at(j); }
    /// Largest support radius over the factors.
    double support_radius() const noexcept;

    double evaluate(std::span<const double> u) const noexcept;
    /// Writes grad K(u) into `out` (length = dimension) and returns K(u).
    double gradient(std::span<const double> u, std::span<double> out) const noexcept;

    /// Mixed moment int prod_j l_j^{powers_j} K(l) dl.
    double mixed_moment(std::span<const int> powers) const;
    double integral() const;
    std::string describe() const;

private:
    std::vector<UnivariateKernel> factors_;
    int order_;
};

ProductKernel make_standard_kernel(KernelName name, int dimension);
ProductKernel make_standard_kernel(std::string_view name, int dimension);

/// Polynomial-modified kernel (c0 + c1 u^2 + ... ) * base(u) whose moments
/// 1..order-1 vanish; order must be 2, 4 or 6 and base must be even.
ProductKernel make_high_order_kernel(const UnivariateKernel& base, int order, int dimension);

/// Kernel by name and order: order 2 gives the standard kernel, higher
/// orders go through make_high_order_kernel.
ProductKernel make_kernel(std::string_view name, int order, int dimension);

/// Smallest r <= max_order with a degree-r mixed moment above 1e-6 in
/// magnitude; every lower nonzero degree must sit below 1e-8.
int verify_order(const ProductKernel& k, int max_order);

/// All exponent vectors of total degree `degree` in `dimension` variables.
std::vector<std::vector<int>> multi_indices(int dimension, int degree);

struct MomentEntry {
    std::vector<int> powers;
    double value;
};

/// Kernel-only factors of the rate constants.
struct KernelConstants {
    /// int { int K(l2 - l1) grad K(l1) dl1 }{...}^T dl2, d x d.
    Eigen::MatrixXd sigma_factor;
    /// int int K(l2 - l1) K(l1) grad K(l1) dl1 dl2.
    Eigen::VectorXd c3_factor;
    /// int H(v)^2 dv.
    double h_sq_norm = 0.0;
    /// int K(l)^2 dl.
    double k_sq_norm = 0.0;
    /// Nonzero order-p moments of K and order-q moments of H.
    std::vector<MomentEntry> k_moments;
    std::vector<MomentEntry> h_moments;
};

KernelConstants compute_kernel_constants(const ProductKernel& k, const ProductKernel& h);

} // namespace greeks

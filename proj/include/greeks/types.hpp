#pragma once

#include <Eigen/Dense>

namespace greeks {

/// Row-major dense array; one row per draw.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

} // namespace greeks

#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace skipq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// ||x||_M = sqrt(x' M x) for a positive semidefinite M.
inline double weighted_norm(const Vector& x, const Matrix& m) {
    return std::sqrt(std::max(0.0, x.dot(m * x)));
}

}  // namespace skipq

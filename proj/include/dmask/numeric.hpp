#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace dmask {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Numerically stable row-wise softmax.
template <class Derived>
Mat softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  Mat y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <class Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad_scalar(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

}  // namespace dmask

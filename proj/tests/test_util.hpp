#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dmask/rng.hpp"
#include "dmask/tape.hpp"

namespace dmask::testutil {

inline Mat random_mat(int rows, int cols, RngStream& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, scale);
  return m;
}

/// Backprop gradient of a scalar-valued graph w.r.t. one input matrix.
/// builder receives a fresh tape and the input leaf, returns the 1x1 loss.
template <class Builder>
Mat backprop_grad(const Mat& base, Builder&& builder) {
  Tape tape;
  const Var x = tape.leaf(base, /*requires_grad=*/true);
  const Var loss = builder(tape, x);
  tape.backward(loss);
  return tape.grad(x.id);
}

/// Central finite differences of the same scalar function.
template <class Builder>
Mat finite_diff_grad(const Mat& base, Builder&& builder, double step = 1e-6) {
  Mat g(base.rows(), base.cols());
  for (Eigen::Index r = 0; r < base.rows(); ++r)
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      Mat hi = base, lo = base;
      hi(r, c) += step;
      lo(r, c) -= step;
      Tape t1, t2;
      const double f_hi = builder(t1, t1.leaf(hi, false)).scalar();
      const double f_lo = builder(t2, t2.leaf(lo, false)).scalar();
      g(r, c) = (f_hi - f_lo) / (2.0 * step);
    }
  return g;
}

inline double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double denom = std::max({std::abs(a(r, c)), std::abs(b(r, c)), 1e-8});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  return worst;
}

/// Unique scratch directory under the build tree; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() /
            ("dmask_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace dmask::testutil

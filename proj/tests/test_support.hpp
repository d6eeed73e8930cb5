#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "anchorroute/motion.hpp"
#include "anchorroute/rng.hpp"

namespace anchorroute::testing {

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  }
  return m;
}

inline Motion random_motion(Rng& rng, std::size_t frames, std::size_t joints,
                            double scale = 1.0) {
  Motion m(frames, joints);
  for (double& v : m.flat()) v = scale * rng.normal();
  return m;
}

/// |a - b| / max(|a|, |b|, floor), Frobenius norms for matrices.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             double floor = 1e-12) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

/// Central-difference gradient of a scalar function of a matrix.
inline Eigen::MatrixXd central_difference(
    const std::function<double(const Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& x, double h) {
  Eigen::MatrixXd grad(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double saved = probe(r, c);
      probe(r, c) = saved + h;
      const double up = f(probe);
      probe(r, c) = saved - h;
      const double down = f(probe);
      probe(r, c) = saved;
      grad(r, c) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace anchorroute::testing

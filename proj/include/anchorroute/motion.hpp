#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace anchorroute {

/// Frame-indexed joint positions, T x J x 3, stored row-major as
/// data[(t * J + j) * 3 + axis]. Units are meters.
///
/// The same layout doubles as a motion-space cotangent in vector-Jacobian
/// products.
class Motion {
 public:
  Motion() = default;

  /// Zero motion. Throws ShapeError unless frames >= 2 and joints >= 1.
  Motion(std::size_t frames, std::size_t joints);

  /// Takes ownership of flat row-major data; checks size and finiteness.
  Motion(std::size_t frames, std::size_t joints, std::vector<double> data);

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }

  double& at(std::size_t t, std::size_t j, std::size_t axis) {
    return data_[(t * joints_ + j) * 3 + axis];
  }
  double at(std::size_t t, std::size_t j, std::size_t axis) const {
    return data_[(t * joints_ + j) * 3 + axis];
  }

  Eigen::Vector3d position(std::size_t t, std::size_t j) const {
    return {at(t, j, 0), at(t, j, 1), at(t, j, 2)};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const Motion& other) const {
    return frames_ == other.frames_ && joints_ == other.joints_;
  }

  friend bool operator==(const Motion&, const Motion&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<double> data_;
};

}  // namespace anchorroute

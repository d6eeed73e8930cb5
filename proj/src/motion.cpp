#include "anchorroute/motion.hpp"

#include <cmath>
#include <string>

#include "anchorroute/error.hpp"

namespace anchorroute {

namespace {

void check_dims(std::size_t frames, std::size_t joints) {
  if (frames < 2 || joints < 1) {
    throw ShapeError("motion needs at least 2 frames and 1 joint, got T=" +
                     std::to_string(frames) + " J=" + std::to_string(joints));
  }
}

}  // namespace

Motion::Motion(std::size_t frames, std::size_t joints)
    : frames_(frames), joints_(joints) {
  check_dims(frames, joints);
  data_.assign(frames * joints * 3, 0.0);
}

Motion::Motion(std::size_t frames, std::size_t joints, std::vector<double> data)
    : frames_(frames), joints_(joints), data_(std::move(data)) {
  check_dims(frames, joints);
  if (data_.size() != frames * joints * 3) {
    throw ShapeError("motion data has " + std::to_string(data_.size()) +
                     " values, expected T*J*3 = " +
                     std::to_string(frames * joints * 3));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NonFiniteError("motion contains non-finite value");
  }
}

}  // namespace anchorroute

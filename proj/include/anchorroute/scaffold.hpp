#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "anchorroute/motion.hpp"

namespace anchorroute {

enum class FamilyKind { Root3D, PlanarRoot, BodyPoint };

/// Which geometric quantity a sparse-control problem constrains.
///
/// Root3D observes joint 0 (x, y, z); PlanarRoot observes joint 0 in the
/// horizontal (x, z) plane; BodyPoint observes (x, y, z) of `joint`.
/// `tolerance` is the residual scale rho_f used to turn anchor errors into
/// interval activities.
struct ControlFamily {
  FamilyKind kind = FamilyKind::Root3D;
  std::size_t joint = 0;
  double tolerance = 0.05;

  static ControlFamily root3d(double tolerance = 0.05) {
    return {FamilyKind::Root3D, 0, tolerance};
  }
  static ControlFamily planar_root(double tolerance = 0.05) {
    return {FamilyKind::PlanarRoot, 0, tolerance};
  }
  static ControlFamily body_point(std::size_t joint, double tolerance = 0.05) {
    return {FamilyKind::BodyPoint, joint, tolerance};
  }

  /// Dimension d_f of the control space.
  std::size_t dim() const { return kind == FamilyKind::PlanarRoot ? 2 : 3; }

  /// Joint whose position is observed.
  std::size_t observed_joint() const {
    return kind == FamilyKind::BodyPoint ? joint : 0;
  }

  /// Position axis feeding control component k.
  std::size_t axis(std::size_t k) const {
    return kind == FamilyKind::PlanarRoot ? (k == 0 ? 0 : 2) : k;
  }

  /// Throws InvalidFamilyError if the tolerance is not positive or the
  /// observed joint does not exist in a motion with `joints` joints.
  void validate(std::size_t joints) const;

  friend bool operator==(const ControlFamily&, const ControlFamily&) = default;
};

const char* family_name(FamilyKind kind);
FamilyKind parse_family(const std::string& name);

/// One sparse constraint (tau, m, y). The selector identifies the
/// controlled component: the observed joint for BodyPoint, 0 otherwise.
struct Anchor {
  std::size_t frame = 0;
  std::size_t selector = 0;
  Eigen::VectorXd target;
};

/// Anchors of a single control family, sorted by frame with unique
/// (frame, selector) pairs. This is also the observed scaffold.
class AnchorSet {
 public:
  explicit AnchorSet(ControlFamily family) : family_(family) {}

  /// Sorts by frame. Throws ConfigError on a selector that does not match
  /// the family, a wrong target dimension, a non-finite target or a
  /// duplicate (frame, selector) pair.
  AnchorSet(ControlFamily family, std::vector<Anchor> anchors);

  /// Convenience: build from (frame, target) pairs; selectors come from the
  /// family.
  static AnchorSet from_targets(
      ControlFamily family,
      const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& targets);

  const ControlFamily& family() const { return family_; }
  const std::vector<Anchor>& anchors() const { return anchors_; }
  std::size_t size() const { return anchors_.size(); }
  bool empty() const { return anchors_.empty(); }
  const Anchor& operator[](std::size_t n) const { return anchors_[n]; }

  /// Throws InvalidFamilyError / DomainError if any anchor falls outside a
  /// motion of the given shape.
  void validate_for(std::size_t frames, std::size_t joints) const;

 private:
  ControlFamily family_;
  std::vector<Anchor> anchors_;
};

/// O_f(x): T x d_f control trajectory.
Eigen::MatrixXd observe(const Motion& motion, const ControlFamily& family);

/// Row t of observe() without materializing the whole trajectory.
Eigen::VectorXd observe_frame(const Motion& motion, const ControlFamily& family,
                              std::size_t t);

/// Sum of squared control-space distances between the motion and each anchor
/// target.
double anchor_loss(const Motion& motion, const AnchorSet& anchors);

struct InterpPrior {
  Eigen::MatrixXd values;  // T x d_f, zero where mask is 0
  Eigen::VectorXd mask;    // T, 1 on [first anchor frame, last anchor frame]
};

/// Interpolation prior through the anchor values: natural cubic spline per
/// component with three or more anchors, linear with two, constant with one.
/// No extrapolation beyond the outermost anchors.
InterpPrior interp_prior(const AnchorSet& anchors, std::size_t frames);

/// Frame-level anchor-condition features.
///
/// Row t holds [m_a*a (d_f), m_p*p (d_f), dp (d_f), m_p, m_a], so the width
/// is 3*d_f + 2.
struct ScaffoldFeatures {
  Eigen::MatrixXd values;
  std::size_t control_dim = 0;

  std::size_t frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t width() const { return 3 * control_dim + 2; }

  auto anchor_values(std::size_t t) const {
    return values.row(t).segment(0, control_dim);
  }
  auto prior_values(std::size_t t) const {
    return values.row(t).segment(control_dim, control_dim);
  }
  auto prior_difference(std::size_t t) const {
    return values.row(t).segment(2 * control_dim, control_dim);
  }
  double prior_mask(std::size_t t) const { return values(t, 3 * control_dim); }
  double anchor_mask(std::size_t t) const {
    return values(t, 3 * control_dim + 1);
  }
};

/// Assemble the per-frame feature rows. The prior difference is zero at
/// frame 0 and wherever either of the two frames lies outside the prior's
/// support.
ScaffoldFeatures build_features(const AnchorSet& anchors, std::size_t frames);

/// Frame -> index of its nearest anchor, over all frames within `radius` of
/// some anchor (clipped to [0, frames)). Equidistant ties go to the lower
/// anchor index.
std::map<std::size_t, std::size_t> support_assignment(const AnchorSet& anchors,
                                                      std::size_t radius,
                                                      std::size_t frames);

/// Supervised anchor loss: squared control-space distance between `motion`
/// and `gt_motion` summed over the support set. Throws ShapeError on
/// mismatched motions.
double supervised_anchor_loss(const Motion& motion, const Motion& gt_motion,
                              const AnchorSet& anchors, std::size_t radius);

struct ResidualScaffold {
  AnchorSet anchors;
  std::vector<Eigen::VectorXd> residuals;  // one per anchor, observed - target
};

ResidualScaffold residuals(const Motion& motion, const AnchorSet& anchors);

/// Closed frame range [start, end] with start < end.
struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

struct IntervalPartition {
  std::vector<Interval> intervals;

  std::size_t size() const { return intervals.size(); }
  const Interval& operator[](std::size_t i) const { return intervals[i]; }
};

/// Consecutive pairs of the sorted unique set {0, anchor frames, T-1}.
/// Throws ShapeError if frames < 2.
IntervalPartition build_intervals(const AnchorSet& anchors, std::size_t frames);

}  // namespace anchorroute

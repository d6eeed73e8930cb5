#include "anchorroute/scaffold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "anchorroute/error.hpp"

namespace anchorroute {

void ControlFamily::validate(std::size_t joints) const {
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
    throw InvalidFamilyError("control tolerance must be positive and finite");
  }
  if (kind == FamilyKind::BodyPoint && joint >= joints) {
    throw InvalidFamilyError("body-point joint " + std::to_string(joint) +
                             " out of range for " + std::to_string(joints) +
                             " joints");
  }
}

const char* family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Root3D:
      return "root3d";
    case FamilyKind::PlanarRoot:
      return "planar_root";
    case FamilyKind::BodyPoint:
      return "body_point";
  }
  return "unknown";
}

FamilyKind parse_family(const std::string& name) {
  if (name == "root3d") return FamilyKind::Root3D;
  if (name == "planar_root") return FamilyKind::PlanarRoot;
  if (name == "body_point") return FamilyKind::BodyPoint;
  throw ConfigError("unknown control family '" + name + "'");
}

AnchorSet::AnchorSet(ControlFamily family, std::vector<Anchor> anchors)
    : family_(family), anchors_(std::move(anchors)) {
  const std::size_t dim = family_.dim();
  for (const Anchor& a : anchors_) {
    if (a.selector != family_.observed_joint()) {
      throw ConfigError("anchor selector " + std::to_string(a.selector) +
                        " does not match the family's observed joint");
    }
    if (static_cast<std::size_t>(a.target.size()) != dim) {
      throw ConfigError("anchor target has dimension " +
                        std::to_string(a.target.size()) + ", family needs " +
                        std::to_string(dim));
    }
    if (!a.target.allFinite()) throw NonFiniteError("anchor target not finite");
  }
  std::stable_sort(anchors_.begin(), anchors_.end(),
                   [](const Anchor& a, const Anchor& b) {
                     return a.frame < b.frame;
                   });
  for (std::size_t n = 1; n < anchors_.size(); ++n) {
    if (anchors_[n].frame == anchors_[n - 1].frame &&
        anchors_[n].selector == anchors_[n - 1].selector) {
      throw ConfigError("duplicate anchor at frame " +
                        std::to_string(anchors_[n].frame));
    }
  }
}

AnchorSet AnchorSet::from_targets(
    ControlFamily family,
    const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& targets) {
  std::vector<Anchor> anchors;
  anchors.reserve(targets.size());
  for (const auto& [frame, target] : targets) {
    anchors.push_back({frame, family.observed_joint(), target});
  }
  return AnchorSet(family, std::move(anchors));
}

void AnchorSet::validate_for(std::size_t frames, std::size_t joints) const {
  family_.validate(joints);
  for (const Anchor& a : anchors_) {
    if (a.frame >= frames) {
      throw DomainError("anchor frame " + std::to_string(a.frame) +
                        " outside motion of " + std::to_string(frames) +
                        " frames");
    }
  }
}

Eigen::MatrixXd observe(const Motion& motion, const ControlFamily& family) {
  family.validate(motion.joints());
  const std::size_t dim = family.dim();
  const std::size_t joint = family.observed_joint();
  Eigen::MatrixXd out(motion.frames(), dim);
  for (std::size_t t = 0; t < motion.frames(); ++t) {
    for (std::size_t k = 0; k < dim; ++k) {
      out(t, k) = motion.at(t, joint, family.axis(k));
    }
  }
  return out;
}

Eigen::VectorXd observe_frame(const Motion& motion, const ControlFamily& family,
                              std::size_t t) {
  const std::size_t dim = family.dim();
  const std::size_t joint = family.observed_joint();
  Eigen::VectorXd out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    out(k) = motion.at(t, joint, family.axis(k));
  }
  return out;
}

double anchor_loss(const Motion& motion, const AnchorSet& anchors) {
  anchors.validate_for(motion.frames(), motion.joints());
  double loss = 0.0;
  for (const Anchor& a : anchors.anchors()) {
    loss += (observe_frame(motion, anchors.family(), a.frame) - a.target)
                .squaredNorm();
  }
  return loss;
}

namespace {

// Natural cubic spline through (xs[i], ys[i]); second derivatives vanish at
// both ends. Returns second derivatives at the knots.
std::vector<double> natural_spline_moments(const std::vector<double>& xs,
                                           const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  std::vector<double> moments(n, 0.0);
  if (n < 3) return moments;
  // Tridiagonal system for interior moments 1..n-2 (Thomas algorithm).
  const std::size_t m = n - 2;
  std::vector<double> diag(m), upper(m), rhs(m);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = xs[i] - xs[i - 1];
    const double h1 = xs[i + 1] - xs[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < m; ++i) {
    const double lower = xs[i + 1] - xs[i];  // h_{i} for row i+1
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  moments[m] = rhs[m - 1] / diag[m - 1];
  for (std::size_t i = m - 1; i >= 1; --i) {
    moments[i] = (rhs[i - 1] - upper[i - 1] * moments[i + 1]) / diag[i - 1];
  }
  return moments;
}

double eval_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                   const std::vector<double>& moments, double x) {
  std::size_t seg = static_cast<std::size_t>(
      std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  seg = std::clamp<std::size_t>(seg, 1, xs.size() - 1) - 1;
  const double h = xs[seg + 1] - xs[seg];
  const double left = xs[seg + 1] - x;
  const double right = x - xs[seg];
  return moments[seg] * left * left * left / (6.0 * h) +
         moments[seg + 1] * right * right * right / (6.0 * h) +
         (ys[seg] / h - moments[seg] * h / 6.0) * left +
         (ys[seg + 1] / h - moments[seg + 1] * h / 6.0) * right;
}

}  // namespace

InterpPrior interp_prior(const AnchorSet& anchors, std::size_t frames) {
  if (frames < 1) throw ShapeError("interp_prior needs at least one frame");
  const std::size_t dim = anchors.family().dim();
  InterpPrior prior{Eigen::MatrixXd::Zero(frames, dim),
                    Eigen::VectorXd::Zero(frames)};
  if (anchors.empty()) return prior;
  for (const Anchor& a : anchors.anchors()) {
    if (a.frame >= frames) throw DomainError("anchor frame outside sequence");
  }

  // Frames are unique because selectors are fixed per family.
  std::vector<double> xs;
  for (const Anchor& a : anchors.anchors()) {
    xs.push_back(static_cast<double>(a.frame));
  }
  const std::size_t first = anchors.anchors().front().frame;
  const std::size_t last = anchors.anchors().back().frame;

  for (std::size_t k = 0; k < dim; ++k) {
    std::vector<double> ys;
    for (const Anchor& a : anchors.anchors()) ys.push_back(a.target(k));
    const auto moments = natural_spline_moments(xs, ys);
    for (std::size_t t = first; t <= last; ++t) {
      prior.values(t, k) =
          xs.size() == 1 ? ys[0]
                         : eval_spline(xs, ys, moments, static_cast<double>(t));
    }
    // Pin knots to the exact anchor values.
    for (const Anchor& a : anchors.anchors()) {
      prior.values(a.frame, k) = a.target(k);
    }
  }
  prior.mask.segment(first, last - first + 1).setOnes();
  return prior;
}

ScaffoldFeatures build_features(const AnchorSet& anchors, std::size_t frames) {
  const std::size_t dim = anchors.family().dim();
  ScaffoldFeatures features{Eigen::MatrixXd::Zero(frames, 3 * dim + 2), dim};
  const InterpPrior prior = interp_prior(anchors, frames);

  for (const Anchor& a : anchors.anchors()) {
    features.values.row(a.frame).segment(0, dim) = a.target.transpose();
    features.values(a.frame, 3 * dim + 1) = 1.0;
  }
  for (std::size_t t = 0; t < frames; ++t) {
    features.values.row(t).segment(dim, dim) = prior.values.row(t);
    if (t > 0 && prior.mask(t) > 0.0 && prior.mask(t - 1) > 0.0) {
      features.values.row(t).segment(2 * dim, dim) =
          prior.values.row(t) - prior.values.row(t - 1);
    }
    features.values(t, 3 * dim) = prior.mask(t);
  }
  return features;
}

std::map<std::size_t, std::size_t> support_assignment(const AnchorSet& anchors,
                                                      std::size_t radius,
                                                      std::size_t frames) {
  std::map<std::size_t, std::size_t> assignment;
  std::map<std::size_t, std::size_t> best_distance;
  for (std::size_t n = 0; n < anchors.size(); ++n) {
    const std::size_t tau = anchors[n].frame;
    const std::size_t lo = tau > radius ? tau - radius : 0;
    const std::size_t hi = std::min(tau + radius, frames - 1);
    for (std::size_t t = lo; t <= hi && t < frames; ++t) {
      const std::size_t dist = t > tau ? t - tau : tau - t;
      auto it = best_distance.find(t);
      // Strict comparison keeps the earlier (lower) anchor on ties.
      if (it == best_distance.end() || dist < it->second) {
        best_distance[t] = dist;
        assignment[t] = n;
      }
    }
  }
  return assignment;
}

double supervised_anchor_loss(const Motion& motion, const Motion& gt_motion,
                              const AnchorSet& anchors, std::size_t radius) {
  if (!motion.same_shape(gt_motion)) {
    throw ShapeError("supervised_anchor_loss: motion and ground truth differ in shape");
  }
  anchors.validate_for(motion.frames(), motion.joints());
  double loss = 0.0;
  for (const auto& [t, n] : support_assignment(anchors, radius, motion.frames())) {
    (void)n;  // every anchor of a family shares one subspace
    loss += (observe_frame(motion, anchors.family(), t) -
             observe_frame(gt_motion, anchors.family(), t))
                .squaredNorm();
  }
  return loss;
}

ResidualScaffold residuals(const Motion& motion, const AnchorSet& anchors) {
  anchors.validate_for(motion.frames(), motion.joints());
  ResidualScaffold out{anchors, {}};
  out.residuals.reserve(anchors.size());
  for (const Anchor& a : anchors.anchors()) {
    out.residuals.push_back(observe_frame(motion, anchors.family(), a.frame) -
                            a.target);
  }
  return out;
}

IntervalPartition build_intervals(const AnchorSet& anchors, std::size_t frames) {
  if (frames < 2) throw ShapeError("build_intervals needs at least two frames");
  std::vector<std::size_t> ends{0, frames - 1};
  for (const Anchor& a : anchors.anchors()) {
    if (a.frame >= frames) throw DomainError("anchor frame outside sequence");
    ends.push_back(a.frame);
  }
  std::sort(ends.begin(), ends.end());
  ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
  IntervalPartition partition;
  for (std::size_t i = 0; i + 1 < ends.size(); ++i) {
    partition.intervals.push_back({ends[i], ends[i + 1]});
  }
  return partition;
}

}  // namespace anchorroute

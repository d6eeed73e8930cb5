#include "anchorroute/routesolver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "anchorroute/error.hpp"

namespace anchorroute {

SoftTokens::SoftTokens(Eigen::MatrixXd initial)
    : values_(initial), initial_(std::move(initial)) {
  if (!initial_.allFinite()) throw NonFiniteError("soft tokens not finite");
}

SoftTokens soft_init(const TokenSeq& tokens, const Codebook& codebook) {
  check_tokens(tokens, codebook.size());
  Eigen::MatrixXd u(tokens.size(), codebook.dim());
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    u.row(n) = codebook.embedding(tokens[n]);
  }
  return SoftTokens(std::move(u));
}

void SolverConfig::validate() const {
  for (double w : {smooth_weight, trust_weight, feasibility_weight, ridge,
                   max_root_speed}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("solver weights must be finite and nonnegative");
    }
  }
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("solver step size must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("heavy-ball momentum must lie in [0, 1)");
  }
}

SolverConfig SolverConfig::preset(const std::string& name) {
  SolverConfig config;
  if (name == "rs100") {
    config.steps = 100;
  } else if (name == "rs200") {
    config.steps = 200;
  } else if (name == "rs500") {
    config.steps = 500;
  } else {
    throw ConfigError("unknown solver preset '" + name + "'");
  }
  return config;
}

double smoothness_loss(const Eigen::MatrixXd& trajectory) {
  const Eigen::Index frames = trajectory.rows();
  if (frames < 3) throw ShapeError("smoothness term needs at least 3 frames");
  double sum = 0.0;
  for (Eigen::Index t = 0; t + 2 < frames; ++t) {
    sum += (trajectory.row(t + 2) - 2.0 * trajectory.row(t + 1) +
            trajectory.row(t))
               .squaredNorm();
  }
  return sum / static_cast<double>(frames - 2);
}

double feasibility_loss(const Eigen::MatrixXd& root, double max_speed) {
  const Eigen::Index frames = root.rows();
  if (frames < 2) throw ShapeError("feasibility term needs at least 2 frames");
  double sum = 0.0;
  for (Eigen::Index t = 0; t + 1 < frames; ++t) {
    const double excess =
        std::max((root.row(t + 1) - root.row(t)).norm() - max_speed, 0.0);
    sum += excess * excess;
  }
  return sum / static_cast<double>(frames - 1);
}

namespace {

Eigen::MatrixXd root_trajectory(const Motion& motion) {
  return observe(motion, ControlFamily::root3d());
}

ObjectiveParts motion_terms(const Motion& motion, const AnchorSet& anchors,
                            const SolverConfig& config) {
  ObjectiveParts parts;
  parts.anchor = anchor_loss(motion, anchors);
  if (config.smooth_weight > 0.0) {
    parts.smooth = config.smooth_weight *
                   smoothness_loss(observe(motion, anchors.family()));
  }
  if (config.feasibility_weight > 0.0) {
    parts.feasibility =
        config.feasibility_weight *
        feasibility_loss(root_trajectory(motion), config.max_root_speed);
  }
  return parts;
}

// Gradient of the motion-space terms (anchor, smooth, feasibility) with
// respect to the motion.
Motion motion_cotangent(const Motion& motion, const AnchorSet& anchors,
                        const SolverConfig& config) {
  Motion grad(motion.frames(), motion.joints());
  const ControlFamily& family = anchors.family();
  const std::size_t joint = family.observed_joint();
  const std::size_t dim = family.dim();

  for (const Anchor& a : anchors.anchors()) {
    const Eigen::VectorXd r = observe_frame(motion, family, a.frame) - a.target;
    for (std::size_t k = 0; k < dim; ++k) {
      grad.at(a.frame, joint, family.axis(k)) += 2.0 * r(k);
    }
  }

  if (config.smooth_weight > 0.0) {
    const Eigen::MatrixXd q = observe(motion, family);
    const Eigen::Index frames = q.rows();
    if (frames < 3) throw ShapeError("smoothness term needs at least 3 frames");
    const double scale =
        2.0 * config.smooth_weight / static_cast<double>(frames - 2);
    for (Eigen::Index t = 0; t + 2 < frames; ++t) {
      const Eigen::RowVectorXd s = q.row(t + 2) - 2.0 * q.row(t + 1) + q.row(t);
      for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t axis = family.axis(k);
        grad.at(t, joint, axis) += scale * s(k);
        grad.at(t + 1, joint, axis) -= 2.0 * scale * s(k);
        grad.at(t + 2, joint, axis) += scale * s(k);
      }
    }
  }

  if (config.feasibility_weight > 0.0) {
    const Eigen::MatrixXd root = root_trajectory(motion);
    const Eigen::Index frames = root.rows();
    const double scale =
        2.0 * config.feasibility_weight / static_cast<double>(frames - 1);
    for (Eigen::Index t = 0; t + 1 < frames; ++t) {
      const Eigen::RowVectorXd v = root.row(t + 1) - root.row(t);
      const double speed = v.norm();
      const double excess = speed - config.max_root_speed;
      if (!(excess > 0.0) || speed == 0.0) continue;
      const Eigen::RowVectorXd g = scale * excess * v / speed;
      for (std::size_t axis = 0; axis < 3; ++axis) {
        grad.at(t + 1, 0, axis) += g(axis);
        grad.at(t, 0, axis) -= g(axis);
      }
    }
  }
  return grad;
}

void check_decoder(const SoftTokens& tokens, const DecoderModel& decoder) {
  if (tokens.length() != decoder.length() || tokens.dim() != decoder.token_dim()) {
    throw ShapeError("soft tokens do not match the decoder's input shape");
  }
}

ObjectiveParts evaluate(const SoftTokens& tokens, const Motion& motion,
                        const AnchorSet& anchors, const SolverConfig& config) {
  ObjectiveParts parts = motion_terms(motion, anchors, config);
  if (config.trust_weight > 0.0) {
    parts.trust = config.trust_weight *
                  (tokens.values() - tokens.initial()).squaredNorm();
  }
  return parts;
}

Eigen::MatrixXd gradient_at(const SoftTokens& tokens, const Motion& motion,
                            const DecoderModel& decoder, const AnchorSet& anchors,
                            const SolverConfig& config) {
  Eigen::MatrixXd grad =
      decoder.vjp(tokens.values(), motion_cotangent(motion, anchors, config));
  if (config.trust_weight > 0.0) {
    grad += 2.0 * config.trust_weight * (tokens.values() - tokens.initial());
  }
  if (!grad.allFinite()) throw NonFiniteError("objective gradient not finite");
  return grad;
}

}  // namespace

ObjectiveParts objective(const SoftTokens& tokens, const DecoderModel& decoder,
                         const AnchorSet& anchors, const SolverConfig& config) {
  check_decoder(tokens, decoder);
  return evaluate(tokens, decoder.decode(tokens.values()), anchors, config);
}

Eigen::MatrixXd grad_objective(const SoftTokens& tokens,
                               const DecoderModel& decoder,
                               const AnchorSet& anchors,
                               const SolverConfig& config) {
  check_decoder(tokens, decoder);
  return gradient_at(tokens, decoder.decode(tokens.values()), decoder, anchors,
                     config);
}

Eigen::MatrixXd opt_step(const Eigen::MatrixXd& grad, const SolverConfig& config,
                         OptimizerState& state) {
  if (config.optimizer == Optimizer::GradientDescent) {
    return -config.step_size * grad;
  }
  if (state.velocity.size() == 0) {
    state.velocity = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
  }
  if (state.velocity.rows() != grad.rows() || state.velocity.cols() != grad.cols()) {
    throw ShapeError("optimizer state shape differs from gradient");
  }
  state.velocity = config.momentum * state.velocity - config.step_size * grad;
  return state.velocity;
}

BasisMatrix build_basis(const IntervalPartition& intervals, std::size_t length,
                        std::size_t frames_per_token) {
  if (frames_per_token < 1) throw ShapeError("frames_per_token must be >= 1");
  const std::size_t count = intervals.size();
  BasisMatrix basis{Eigen::MatrixXd::Zero(length, 2 * count),
                    std::vector<std::optional<std::size_t>>(length)};
  for (std::size_t i = 0; i < count; ++i) {
    if (intervals[i].end <= intervals[i].start) {
      throw ShapeError("empty interval in partition");
    }
  }
  const double half_window = (static_cast<double>(frames_per_token) - 1.0) / 2.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double center =
        static_cast<double>(n * frames_per_token) + half_window;
    for (std::size_t i = 0; i < count; ++i) {
      const auto start = static_cast<double>(intervals[i].start);
      const auto end = static_cast<double>(intervals[i].end);
      const bool last = i + 1 == count;
      if (center >= start && (center < end || (last && center <= end))) {
        const double s = (center - start) / (end - start);
        basis.matrix(n, 2 * i) = 1.0;
        basis.matrix(n, 2 * i + 1) = 2.0 * s - 1.0;
        basis.token_interval[n] = i;
        break;
      }
    }
  }
  return basis;
}

Eigen::VectorXd activities(const Motion& motion, const AnchorSet& anchors,
                           const IntervalPartition& intervals, double tolerance) {
  if (!(tolerance > 0.0)) throw DomainError("activity tolerance must be positive");
  anchors.validate_for(motion.frames(), motion.joints());
  std::map<std::size_t, double> error_at;
  for (const Anchor& a : anchors.anchors()) {
    error_at[a.frame] =
        (observe_frame(motion, anchors.family(), a.frame) - a.target).norm();
  }
  auto endpoint_error = [&](std::size_t frame) {
    const auto it = error_at.find(frame);
    return it == error_at.end() ? 0.0 : it->second;
  };
  Eigen::VectorXd a(intervals.size());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const double e = std::max(endpoint_error(intervals[i].start),
                              endpoint_error(intervals[i].end));
    a(i) = std::clamp(e / tolerance, 0.0, 1.0);
  }
  return a;
}

RouteResult route(const Eigen::MatrixXd& raw_update, const BasisMatrix& basis,
                  const Eigen::VectorXd& activity, double ridge) {
  const Eigen::MatrixXd& b = basis.matrix;
  if (raw_update.rows() != b.rows()) {
    throw ShapeError("route: update rows differ from basis rows");
  }
  if (static_cast<std::size_t>(activity.size()) != basis.intervals()) {
    throw ShapeError("route: one activity per interval required");
  }
  if (!(ridge >= 0.0)) throw DomainError("ridge weight must be nonnegative");

  const Eigen::Index cols = b.cols();
  Eigen::VectorXd penalty(cols);
  for (Eigen::Index i = 0; i < activity.size(); ++i) {
    const double w = 1.0 - std::clamp(activity(i), 0.0, 1.0);
    penalty(2 * i) = w;
    penalty(2 * i + 1) = w;
  }
  Eigen::MatrixXd system = b.transpose() * b;
  system.diagonal() += ridge * penalty;
  const Eigen::MatrixXd rhs = b.transpose() * raw_update;

  RouteResult result;
  const bool definite = ridge > 0.0 && (penalty.array() > 0.0).all();
  if (definite) {
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    result.coefficients = llt.solve(rhs);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(system);
    cod.setThreshold(1e-12);
    if (cod.rank() == cols) {
      Eigen::LLT<Eigen::MatrixXd> llt(system);
      if (llt.info() == Eigen::Success) {
        result.coefficients = llt.solve(rhs);
      } else {
        result.coefficients = cod.solve(rhs);
      }
    } else if (ridge == 0.0) {
      throw SingularSystemError(
          "route: basis is rank deficient and no ridge weight was given");
    } else {
      result.coefficients = cod.solve(rhs);
    }
  }
  result.update = b * result.coefficients;
  return result;
}

RefineResult refine(const SoftTokens& start, const DecoderModel& decoder,
                    const AnchorSet& anchors, const IntervalPartition& intervals,
                    const SolverConfig& config, std::size_t frames_per_token) {
  config.validate();
  check_decoder(start, decoder);
  anchors.validate_for(decoder.frames(), decoder.joints());

  RefineResult result{start, {}};
  const BasisMatrix basis =
      build_basis(intervals, start.length(), frames_per_token);
  const double tolerance = anchors.family().tolerance;
  OptimizerState state;

  for (std::size_t k = 0; k < config.steps; ++k) {
    SoftTokens& u = result.tokens;
    const Motion motion = decoder.decode(u.values());
    const Eigen::VectorXd activity =
        activities(motion, anchors, intervals, tolerance);
    const ObjectiveParts parts = evaluate(u, motion, anchors, config);
    const Eigen::MatrixXd grad =
        gradient_at(u, motion, decoder, anchors, config);
    const Eigen::MatrixXd raw = opt_step(grad, config, state);
    const RouteResult routed = route(raw, basis, activity, config.ridge);
    u.values() += routed.update;
    result.trace.push_back({k, parts.total(), parts.anchor,
                            activity.size() > 0 ? activity.mean() : 0.0,
                            routed.update.norm()});
  }
  return result;
}

}  // namespace anchorroute

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "anchorroute/motion.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/tmd.hpp"

namespace anchorroute {

/// Continuous token embeddings being refined, together with the embedding
/// they started from. The initial snapshot never changes.
class SoftTokens {
 public:
  explicit SoftTokens(Eigen::MatrixXd initial);

  Eigen::MatrixXd& values() { return values_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const Eigen::MatrixXd& initial() const { return initial_; }

  std::size_t length() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }

 private:
  Eigen::MatrixXd values_;
  Eigen::MatrixXd initial_;
};

/// u0 = E[z]: codebook lookup per token.
SoftTokens soft_init(const TokenSeq& tokens, const Codebook& codebook);

/// Differentiable map from soft tokens (L x d_u) to a motion (T x J x 3).
/// Implementations must be safe for concurrent const use.
class DecoderModel {
 public:
  virtual ~DecoderModel() = default;
  virtual std::size_t length() const = 0;
  virtual std::size_t token_dim() const = 0;
  virtual std::size_t frames() const = 0;
  virtual std::size_t joints() const = 0;

  virtual Motion decode(const Eigen::MatrixXd& u) const = 0;

  /// Exact vector-Jacobian product: gradient w.r.t. u of <cotangent, decode(u)>.
  virtual Eigen::MatrixXd vjp(const Eigen::MatrixXd& u,
                              const Motion& cotangent) const = 0;
};

enum class Optimizer { GradientDescent, HeavyBall };

/// Weights and step controls for refinement. The activity tolerance comes
/// from the anchor set's control family.
struct SolverConfig {
  double smooth_weight = 0.1;     // gamma_sm
  double trust_weight = 0.01;     // gamma_tr
  double feasibility_weight = 0;  // gamma_feas, off by default
  double ridge = 0.1;             // lambda
  double max_root_speed = 0.1;    // v_max, meters per frame
  double step_size = 0.05;        // eta
  std::size_t steps = 200;
  Optimizer optimizer = Optimizer::GradientDescent;
  double momentum = 0.9;  // heavy-ball only

  /// Throws ConfigError on negative or non-finite weights, a non-positive
  /// step size or a negative ridge weight.
  void validate() const;

  /// Tuned defaults with `steps` = 100, 200 or 500 for "rs100", "rs200",
  /// "rs500"; ConfigError otherwise.
  static SolverConfig preset(const std::string& name);
};

struct ObjectiveParts {
  double anchor = 0.0;
  double smooth = 0.0;       // already weighted by gamma_sm
  double trust = 0.0;        // already weighted by gamma_tr
  double feasibility = 0.0;  // already weighted by gamma_feas

  double total() const { return anchor + smooth + trust + feasibility; }
};

/// Mean squared second difference of a T x d trajectory, normalized by T-2.
double smoothness_loss(const Eigen::MatrixXd& trajectory);

/// Mean squared hinge max(|r_{t+1} - r_t| - v_max, 0)^2, normalized by T-1.
double feasibility_loss(const Eigen::MatrixXd& root, double max_speed);

ObjectiveParts objective(const SoftTokens& tokens, const DecoderModel& decoder,
                         const AnchorSet& anchors, const SolverConfig& config);

/// Exact gradient of objective() with respect to the soft tokens.
Eigen::MatrixXd grad_objective(const SoftTokens& tokens,
                               const DecoderModel& decoder,
                               const AnchorSet& anchors,
                               const SolverConfig& config);

struct OptimizerState {
  Eigen::MatrixXd velocity;  // empty until the first heavy-ball step
};

/// Raw update proposed by the optimizer; not applied.
Eigen::MatrixXd opt_step(const Eigen::MatrixXd& grad, const SolverConfig& config,
                         OptimizerState& state);

/// Blockwise piecewise-affine basis over token positions.
///
/// Columns 2i and 2i+1 belong to interval i and hold phi0 = 1 and
/// phi1 = 2s - 1 on the tokens whose center frame n*q + (q-1)/2 falls in the
/// interval (intervals are right-open except the last). Tokens whose center
/// lies past the final frame belong to no interval and have a zero row.
struct BasisMatrix {
  Eigen::MatrixXd matrix;                              // L x 2|I|
  std::vector<std::optional<std::size_t>> token_interval;  // per token

  std::size_t intervals() const {
    return static_cast<std::size_t>(matrix.cols()) / 2;
  }
};

BasisMatrix build_basis(const IntervalPartition& intervals, std::size_t length,
                        std::size_t frames_per_token);

/// Per-interval activity clip(max(e_left, e_right) / rho_f, 0, 1). Endpoints
/// that are sequence boundaries rather than anchors contribute zero error.
Eigen::VectorXd activities(const Motion& motion, const AnchorSet& anchors,
                           const IntervalPartition& intervals, double tolerance);

struct RouteResult {
  Eigen::MatrixXd update;        // Delta* = B alpha*, L x d_u
  Eigen::MatrixXd coefficients;  // alpha*, 2|I| x d_u
};

/// Activity-weighted ridge projection of a raw update onto the basis.
///
/// Solves (B^T B + lambda W) alpha = B^T Delta with W = diag(1 - a_i)
/// repeated per block. With ridge = 0 the basis must have full column rank
/// (SingularSystemError otherwise). With ridge > 0 and saturated activities a
/// rank-deficient block gets the minimum-norm solution.
RouteResult route(const Eigen::MatrixXd& raw_update, const BasisMatrix& basis,
                  const Eigen::VectorXd& activity, double ridge);

struct RefineTraceRow {
  std::size_t step = 0;
  double objective = 0.0;
  double anchor_loss = 0.0;
  double mean_activity = 0.0;
  double update_norm = 0.0;
};

struct RefineResult {
  SoftTokens tokens;
  std::vector<RefineTraceRow> trace;
};

/// Routed refinement loop. The basis is built once; activities, gradient
/// and raw update are recomputed every step from the current decoded motion.
RefineResult refine(const SoftTokens& start, const DecoderModel& decoder,
                    const AnchorSet& anchors, const IntervalPartition& intervals,
                    const SolverConfig& config, std::size_t frames_per_token);

}  // namespace anchorroute

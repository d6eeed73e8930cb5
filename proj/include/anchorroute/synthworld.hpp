#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "anchorroute/motion.hpp"
#include "anchorroute/routesolver.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/tmd.hpp"

namespace anchorroute {

enum class MotionKind { Line, Circle, Sinusoid, RandomWalk };

const char* motion_kind_name(MotionKind kind);
MotionKind parse_motion_kind(const std::string& name);

/// Parameters of a synthetic motion. Root trajectories:
///   line        origin + velocity * t
///   circle      center + radius * (cos w t, 0, sin w t), w = 2 pi / period
///   sinusoid    origin + velocity * t + (0, amplitude * sin w t, 0)
///   random-walk origin + cumulative N(0, step^2) increments per axis
/// Other joints sit at fixed offsets from the root (rig_offset). Optional
/// i.i.d. Gaussian noise of scale `noise` is added to every coordinate.
struct SynthTask {
  MotionKind kind = MotionKind::Line;
  std::size_t frames = 64;
  std::size_t joints = 6;
  double noise = 0.0;
  std::uint64_t seed = 0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d(0.05, 0.0, 0.0);
  double radius = 1.0;
  double amplitude = 0.1;
  double period = 32.0;
  double step = 0.02;

  /// Throws ConfigError unless frames >= 8, joints >= 1 and the scalar
  /// parameters are finite (period and radius positive).
  void validate() const;
};

/// Offset of joint j from the root; zero for the root itself.
Eigen::Vector3d rig_offset(std::size_t joint);

Motion make_motion(const SynthTask& task);

/// V unit-norm rows whose pairwise cosine similarity is at most
/// 1 - separation. Rows are rejection-sampled one at a time from the
/// isotropic Gaussian; with separation >= 1 and V <= d_e a random
/// orthonormal frame is returned instead. Throws InvalidCodebookError when a
/// row cannot be placed within `max_attempts` draws.
Codebook make_codebook(std::size_t vocab, std::size_t dim, double separation,
                       std::uint64_t seed, std::size_t max_attempts = 100000);

double max_pairwise_cosine(const Codebook& codebook);

/// Dense linear decoder: decode(u) = reshape(vec(u) W) with vec row-major,
/// W of shape (L d_u) x (T J 3).
class LinearDecoder : public DecoderModel {
 public:
  LinearDecoder(Eigen::MatrixXd weights, std::size_t length, std::size_t token_dim,
                std::size_t frames, std::size_t joints);

  /// i.i.d. N(0, 1 / d_u) weights.
  static LinearDecoder random(std::size_t length, std::size_t token_dim,
                              std::size_t frames, std::size_t joints,
                              std::uint64_t seed);

  std::size_t length() const override { return length_; }
  std::size_t token_dim() const override { return token_dim_; }
  std::size_t frames() const override { return frames_; }
  std::size_t joints() const override { return joints_; }
  const Eigen::MatrixXd& weights() const { return weights_; }

  Motion decode(const Eigen::MatrixXd& u) const override;
  Eigen::MatrixXd vjp(const Eigen::MatrixXd& u,
                      const Motion& cotangent) const override;

 private:
  Eigen::MatrixXd weights_;
  std::size_t length_;
  std::size_t token_dim_;
  std::size_t frames_;
  std::size_t joints_;
};

/// Decoder/encoder pair for the toy tokenizer.
///
/// Token n drives frames [n q, (n+1) q): frame offset k gets
/// pose = G u_n + ((k - (q-1)/2) / q) G' u_n with G, G' of shape (3J) x d_u.
/// The window mean is exactly G u_n, so `encoder` = pinv(G) recovers u_n when
/// 3J >= d_u.
struct TokenCodec {
  LinearDecoder decoder;
  Eigen::MatrixXd encoder;  // d_u x 3J
  std::size_t frames_per_token;
};

TokenCodec make_token_codec(std::size_t length, std::size_t token_dim,
                            std::size_t frames_per_token, std::size_t joints,
                            std::uint64_t seed);

/// Window means of the flattened per-frame pose (last window padded by
/// repeating the final frame), projected by `encoder` (d_e x 3J), then
/// snapped to the nearest codebook row; ties go to the lower id.
TokenSeq tokenize(const Motion& motion, const Codebook& codebook,
                  std::size_t frames_per_token, const Eigen::MatrixXd& encoder);

/// Mean unsquared control-space distance to the anchor targets, in meters.
/// Returns 0 for an empty anchor set.
double control_error(const Motion& motion, const AnchorSet& anchors);

/// Test double for the learned denoiser: proposes the clean sequence with
/// each position independently replaced by a uniform id with probability
/// `confusion`.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(TokenSeq clean, std::size_t vocab, double confusion,
                 std::uint64_t seed);
  TokenSeq propose(const TokenSeq& current, double t,
                   const Eigen::MatrixXd& context) override;

 private:
  TokenSeq clean_;
  std::size_t vocab_;
  double confusion_;
  Rng rng_;
};

/// Proposes independent uniform ids; an uninformed prior.
class UniformDenoiser : public Denoiser {
 public:
  UniformDenoiser(std::size_t vocab, std::uint64_t seed)
      : vocab_(vocab), rng_(seed) {}
  TokenSeq propose(const TokenSeq& current, double t,
                   const Eigen::MatrixXd& context) override;

 private:
  std::size_t vocab_;
  Rng rng_;
};

}  // namespace anchorroute

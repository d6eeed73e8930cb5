#include "anchorroute/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/QR>

#include "anchorroute/error.hpp"
#include "anchorroute/rng.hpp"

namespace anchorroute {

namespace {
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

const char* motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::Line:
      return "line";
    case MotionKind::Circle:
      return "circle";
    case MotionKind::Sinusoid:
      return "sinusoid";
    case MotionKind::RandomWalk:
      return "random_walk";
  }
  return "unknown";
}

MotionKind parse_motion_kind(const std::string& name) {
  if (name == "line") return MotionKind::Line;
  if (name == "circle") return MotionKind::Circle;
  if (name == "sinusoid") return MotionKind::Sinusoid;
  if (name == "random_walk") return MotionKind::RandomWalk;
  throw ConfigError("unknown motion kind '" + name + "'");
}

void SynthTask::validate() const {
  if (frames < 8) throw ConfigError("synthetic task needs at least 8 frames");
  if (joints < 1) throw ConfigError("synthetic task needs at least 1 joint");
  if (!origin.allFinite() || !velocity.allFinite() || !std::isfinite(noise) ||
      !std::isfinite(amplitude) || !std::isfinite(step) || noise < 0.0 ||
      step < 0.0) {
    throw ConfigError("synthetic task parameters must be finite and nonnegative");
  }
  if (!(radius > 0.0) || !(period > 0.0) || !std::isfinite(radius) ||
      !std::isfinite(period)) {
    throw ConfigError("radius and period must be positive");
  }
}

Eigen::Vector3d rig_offset(std::size_t joint) {
  if (joint == 0) return Eigen::Vector3d::Zero();
  const double j = static_cast<double>(joint);
  return {0.15 * std::sin(1.3 * j), 0.2 * j, 0.15 * std::cos(1.3 * j)};
}

Motion make_motion(const SynthTask& task) {
  task.validate();
  Motion motion(task.frames, task.joints);
  Rng rng(task.seed);
  Rng walk = rng.fork(1);
  Rng jitter = rng.fork(2);
  const double omega = 2.0 * std::numbers::pi / task.period;

  Eigen::Vector3d walker = task.origin;
  for (std::size_t t = 0; t < task.frames; ++t) {
    const double time = static_cast<double>(t);
    Eigen::Vector3d root;
    switch (task.kind) {
      case MotionKind::Line:
        root = task.origin + task.velocity * time;
        break;
      case MotionKind::Circle:
        root = task.origin + task.radius * Eigen::Vector3d(std::cos(omega * time), 0.0,
                                                           std::sin(omega * time));
        break;
      case MotionKind::Sinusoid:
        root = task.origin + task.velocity * time +
               Eigen::Vector3d(0.0, task.amplitude * std::sin(omega * time), 0.0);
        break;
      case MotionKind::RandomWalk:
        if (t > 0) {
          for (int axis = 0; axis < 3; ++axis) walker(axis) += task.step * walk.normal();
        }
        root = walker;
        break;
    }
    for (std::size_t j = 0; j < task.joints; ++j) {
      const Eigen::Vector3d p = root + rig_offset(j);
      for (std::size_t axis = 0; axis < 3; ++axis) {
        motion.at(t, j, axis) =
            p(axis) + (task.noise > 0.0 ? task.noise * jitter.normal() : 0.0);
      }
    }
  }
  return motion;
}

Codebook make_codebook(std::size_t vocab, std::size_t dim, double separation,
                       std::uint64_t seed, std::size_t max_attempts) {
  if (vocab < 2) throw InvalidCodebookError("codebook needs at least two rows");
  if (dim < 1) throw InvalidCodebookError("codebook dimension must be positive");
  Rng rng(seed);
  Eigen::MatrixXd table(vocab, dim);

  auto gaussian_row = [&] {
    Eigen::RowVectorXd row(dim);
    for (std::size_t k = 0; k < dim; ++k) row(k) = rng.normal();
    return row;
  };

  if (separation >= 1.0 && vocab <= dim) {
    Eigen::MatrixXd gauss(dim, vocab);
    for (std::size_t i = 0; i < vocab; ++i) gauss.col(i) = gaussian_row().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    const Eigen::MatrixXd q =
        qr.householderQ() * Eigen::MatrixXd::Identity(dim, vocab);
    table = q.transpose();
    return Codebook(table);
  }

  const double max_cos = 1.0 - separation;
  for (std::size_t i = 0; i < vocab; ++i) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      Eigen::RowVectorXd row = gaussian_row();
      const double norm = row.norm();
      if (!(norm > 0.0)) continue;
      row /= norm;
      placed = true;
      for (std::size_t j = 0; j < i && placed; ++j) {
        placed = row.dot(table.row(j)) <= max_cos;
      }
      if (placed) table.row(i) = row;
    }
    if (!placed) {
      throw InvalidCodebookError("could not place codebook row " +
                                 std::to_string(i) + " at separation " +
                                 std::to_string(separation));
    }
  }
  return Codebook(table);
}

double max_pairwise_cosine(const Codebook& codebook) {
  double worst = -1.0;
  for (std::size_t i = 0; i < codebook.size(); ++i) {
    for (std::size_t j = i + 1; j < codebook.size(); ++j) {
      worst = std::max(worst, codebook.cosine(i, j));
    }
  }
  return worst;
}

LinearDecoder::LinearDecoder(Eigen::MatrixXd weights, std::size_t length,
                             std::size_t token_dim, std::size_t frames,
                             std::size_t joints)
    : weights_(std::move(weights)),
      length_(length),
      token_dim_(token_dim),
      frames_(frames),
      joints_(joints) {
  if (static_cast<std::size_t>(weights_.rows()) != length * token_dim ||
      static_cast<std::size_t>(weights_.cols()) != frames * joints * 3) {
    throw ShapeError("decoder weights must be (L d_u) x (T J 3)");
  }
  if (frames < 2 || joints < 1) throw ShapeError("decoder output shape invalid");
  if (!weights_.allFinite()) throw NonFiniteError("decoder weights not finite");
}

LinearDecoder LinearDecoder::random(std::size_t length, std::size_t token_dim,
                                    std::size_t frames, std::size_t joints,
                                    std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd w(length * token_dim, frames * joints * 3);
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * rng.normal();
  }
  return LinearDecoder(std::move(w), length, token_dim, frames, joints);
}

Motion LinearDecoder::decode(const Eigen::MatrixXd& u) const {
  if (static_cast<std::size_t>(u.rows()) != length_ ||
      static_cast<std::size_t>(u.cols()) != token_dim_) {
    throw ShapeError("decode: soft tokens have the wrong shape");
  }
  const RowMajorMatrix rows = u;
  const Eigen::Map<const Eigen::RowVectorXd> flat_u(rows.data(), rows.size());
  const Eigen::RowVectorXd out = flat_u * weights_;
  return Motion(frames_, joints_, std::vector<double>(out.data(), out.data() + out.size()));
}

Eigen::MatrixXd LinearDecoder::vjp(const Eigen::MatrixXd& u,
                                   const Motion& cotangent) const {
  if (static_cast<std::size_t>(u.rows()) != length_ ||
      static_cast<std::size_t>(u.cols()) != token_dim_) {
    throw ShapeError("vjp: soft tokens have the wrong shape");
  }
  if (cotangent.frames() != frames_ || cotangent.joints() != joints_) {
    throw ShapeError("vjp: cotangent has the wrong shape");
  }
  const auto flat = cotangent.flat();
  const Eigen::Map<const Eigen::RowVectorXd> g(flat.data(),
                                               static_cast<Eigen::Index>(flat.size()));
  const Eigen::RowVectorXd back = g * weights_.transpose();
  return Eigen::Map<const RowMajorMatrix>(back.data(), static_cast<Eigen::Index>(length_),
                                    static_cast<Eigen::Index>(token_dim_));
}

TokenCodec make_token_codec(std::size_t length, std::size_t token_dim,
                            std::size_t frames_per_token, std::size_t joints,
                            std::uint64_t seed) {
  if (frames_per_token < 1) throw ShapeError("frames_per_token must be >= 1");
  Rng rng(seed);
  const std::size_t pose = 3 * joints;
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  Eigen::MatrixXd base(pose, token_dim), slope(pose, token_dim);
  for (Eigen::Index c = 0; c < base.cols(); ++c) {
    for (Eigen::Index r = 0; r < base.rows(); ++r) base(r, c) = scale * rng.normal();
  }
  for (Eigen::Index c = 0; c < slope.cols(); ++c) {
    for (Eigen::Index r = 0; r < slope.rows(); ++r) slope(r, c) = scale * rng.normal();
  }

  const std::size_t frames = length * frames_per_token;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(length * token_dim, frames * pose);
  const double half = (static_cast<double>(frames_per_token) - 1.0) / 2.0;
  for (std::size_t n = 0; n < length; ++n) {
    for (std::size_t k = 0; k < frames_per_token; ++k) {
      const double offset =
          (static_cast<double>(k) - half) / static_cast<double>(frames_per_token);
      const Eigen::MatrixXd frame_map = base + offset * slope;  // pose x d_u
      const std::size_t t = n * frames_per_token + k;
      w.block(n * token_dim, t * pose, token_dim, pose) = frame_map.transpose();
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(base);
  return {LinearDecoder(std::move(w), length, token_dim, frames, joints),
          cod.pseudoInverse(), frames_per_token};
}

TokenSeq tokenize(const Motion& motion, const Codebook& codebook,
                  std::size_t frames_per_token, const Eigen::MatrixXd& encoder) {
  if (frames_per_token < 1) throw ShapeError("frames_per_token must be >= 1");
  const std::size_t pose = 3 * motion.joints();
  if (static_cast<std::size_t>(encoder.cols()) != pose ||
      static_cast<std::size_t>(encoder.rows()) != codebook.dim()) {
    throw ShapeError("tokenize: encoder must be d_e x 3J");
  }
  const std::size_t frames = motion.frames();
  const std::size_t length = (frames + frames_per_token - 1) / frames_per_token;
  const auto flat = motion.flat();
  TokenSeq tokens(length);
  for (std::size_t n = 0; n < length; ++n) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(pose);
    for (std::size_t k = 0; k < frames_per_token; ++k) {
      const std::size_t t = std::min(n * frames_per_token + k, frames - 1);
      mean += Eigen::Map<const Eigen::VectorXd>(flat.data() + t * pose,
                                                static_cast<Eigen::Index>(pose));
    }
    mean /= static_cast<double>(frames_per_token);
    const Eigen::RowVectorXd feature = (encoder * mean).transpose();
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < codebook.size(); ++i) {
      const double dist = (feature - codebook.embedding(i)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    tokens[n] = best;
  }
  return tokens;
}

double control_error(const Motion& motion, const AnchorSet& anchors) {
  anchors.validate_for(motion.frames(), motion.joints());
  if (anchors.empty()) return 0.0;
  double total = 0.0;
  for (const Anchor& a : anchors.anchors()) {
    total += (observe_frame(motion, anchors.family(), a.frame) - a.target).norm();
  }
  return total / static_cast<double>(anchors.size());
}

OracleDenoiser::OracleDenoiser(TokenSeq clean, std::size_t vocab, double confusion,
                               std::uint64_t seed)
    : clean_(std::move(clean)), vocab_(vocab), confusion_(confusion), rng_(seed) {
  if (!(confusion >= 0.0 && confusion < 1.0)) {
    throw DomainError("oracle confusion must lie in [0, 1)");
  }
  check_tokens(clean_, vocab_);
}

TokenSeq OracleDenoiser::propose(const TokenSeq& current, double /*t*/,
                                 const Eigen::MatrixXd& /*context*/) {
  if (current.size() != clean_.size()) {
    throw ShapeError("oracle denoiser queried with a different length");
  }
  TokenSeq out = clean_;
  if (confusion_ > 0.0) {
    for (auto& id : out) {
      if (rng_.uniform() < confusion_) id = rng_.index(vocab_);
    }
  }
  return out;
}

TokenSeq UniformDenoiser::propose(const TokenSeq& current, double /*t*/,
                                  const Eigen::MatrixXd& /*context*/) {
  TokenSeq out(current.size());
  for (auto& id : out) id = rng_.index(vocab_);
  return out;
}

}  // namespace anchorroute

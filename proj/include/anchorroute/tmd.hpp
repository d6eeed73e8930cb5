#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "anchorroute/rng.hpp"

namespace anchorroute {

/// Finite embedding table, one row per token.
class Codebook {
 public:
  /// Throws InvalidCodebookError on an empty table, a zero-norm row or a
  /// non-finite entry.
  explicit Codebook(Eigen::MatrixXd embeddings);

  std::size_t size() const { return static_cast<std::size_t>(table_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(table_.cols()); }
  const Eigen::MatrixXd& embeddings() const { return table_; }
  auto embedding(std::size_t i) const { return table_.row(i); }

  double cosine(std::size_t i, std::size_t j) const;

 private:
  Eigen::MatrixXd table_;
  Eigen::MatrixXd unit_;  // row-normalized copy
};

/// Token ids; every id is below the codebook size it is used with.
using TokenSeq = std::vector<std::size_t>;

/// Checks every id against `vocab`; throws DomainError otherwise.
void check_tokens(const TokenSeq& tokens, std::size_t vocab);

/// Corruption schedule beta(t) = c * (t / (1 - t))^a with a uniform sampling
/// grid of `steps` points on (0, t_max].
struct TMDSchedule {
  double exponent = 0.9;
  double scale = 3.0;
  std::size_t steps = 64;
  double t_max = 1.0 - 1e-3;

  /// Throws DomainError unless 0 < t_max < 1, steps >= 1, exponent > 0 and
  /// scale > 0.
  void validate() const;
};

double metric_distance(const Codebook& codebook, std::size_t i, std::size_t x1);

/// beta(t); DomainError for t outside [0, 1).
double beta(double t, const TMDSchedule& schedule);

/// d beta / dt. For exponent < 1 the derivative diverges at 0, so the
/// domain is t in (0, 1); at t = 0 the right limit is returned when it is
/// finite.
double beta_prime(double t, const TMDSchedule& schedule);

/// q_t(. | x1): softmin of the metric distances at inverse temperature
/// beta(t).
Eigen::VectorXd corruption_dist(const Codebook& codebook, std::size_t x1, double t,
                                const TMDSchedule& schedule);

/// Independent per-position draws from q_t(. | clean_n).
TokenSeq corrupt(const TokenSeq& clean, double t, const Codebook& codebook,
                 const TMDSchedule& schedule, Rng& rng);

/// Sum over positions of -log softmax(logits_n)[clean_n]. Throws
/// NonFiniteError on non-finite logits and ShapeError on a length mismatch.
double denoise_loss(const Eigen::MatrixXd& logits, const TokenSeq& clean);

/// L_CE + lambda_anc * L_anc^sup.
double training_objective(double ce, double anchor_sup, double lambda_anc = 0.3);

/// u_t(i | x_t, x1_hat) for every candidate i.
Eigen::VectorXd jump_rates(const Codebook& codebook, std::size_t current,
                           std::size_t proposal, double t,
                           const TMDSchedule& schedule);

/// Clean-token proposal source queried once per sampling step.
///
/// `context` is the token-aligned condition memory; implementations are free
/// to ignore it.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual TokenSeq propose(const TokenSeq& current, double t,
                           const Eigen::MatrixXd& context) = 0;
};

/// Per-row argmax with lowest-id tie-break; turns logits into hard
/// proposals.
TokenSeq argmax_proposal(const Eigen::MatrixXd& logits);

/// Adapts a logits-producing callable into a Denoiser via argmax_proposal.
class LogitsDenoiser : public Denoiser {
 public:
  using Fn = std::function<Eigen::MatrixXd(const TokenSeq&, double,
                                           const Eigen::MatrixXd&)>;
  explicit LogitsDenoiser(Fn fn) : fn_(std::move(fn)) {}
  TokenSeq propose(const TokenSeq& current, double t,
                   const Eigen::MatrixXd& context) override {
    return argmax_proposal(fn_(current, t, context));
  }

 private:
  Fn fn_;
};

struct StepStats {
  std::size_t updates = 0;
};

/// One jump-process step of size h for every position. Position n jumps
/// with probability 1 - exp(-h * lambda_n) to a token drawn from the
/// normalized rates. Randomness is consumed in position order: one uniform
/// for the update decision, then one for the destination when it fires.
TokenSeq step(const TokenSeq& current, const TokenSeq& proposal, double t,
              double h, const Codebook& codebook, const TMDSchedule& schedule,
              Rng& rng, StepStats* stats = nullptr);

struct SampleTraceRow {
  std::size_t step = 0;
  double t = 0.0;
  std::size_t updates = 0;
  double mean_distance = 0.0;  // mean d(z_n, x1_hat_n) after the step
};

/// Full sampler: uniform random initial tokens, then for k = 1..K query the
/// denoiser at t_k = k * t_max / K and apply step() with h = t_max / K.
/// Throws ShapeError if the denoiser returns the wrong length.
TokenSeq sample(Denoiser& denoiser, std::size_t length, const Codebook& codebook,
                const TMDSchedule& schedule, const Eigen::MatrixXd& context,
                Rng& rng, std::vector<SampleTraceRow>* trace = nullptr);

}  // namespace anchorroute

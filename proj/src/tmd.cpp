#include "anchorroute/tmd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "anchorroute/error.hpp"

namespace anchorroute {

Codebook::Codebook(Eigen::MatrixXd embeddings) : table_(std::move(embeddings)) {
  if (table_.rows() == 0 || table_.cols() == 0) {
    throw InvalidCodebookError("codebook must have at least one row and column");
  }
  if (!table_.allFinite()) throw InvalidCodebookError("codebook not finite");
  unit_ = table_;
  for (Eigen::Index i = 0; i < table_.rows(); ++i) {
    const double norm = table_.row(i).norm();
    if (!(norm > 0.0)) {
      throw InvalidCodebookError("codebook row " + std::to_string(i) +
                                 " has zero norm");
    }
    unit_.row(i) /= norm;
  }
}

double Codebook::cosine(std::size_t i, std::size_t j) const {
  return std::clamp(unit_.row(i).dot(unit_.row(j)), -1.0, 1.0);
}

void check_tokens(const TokenSeq& tokens, std::size_t vocab) {
  for (std::size_t id : tokens) {
    if (id >= vocab) {
      throw DomainError("token id " + std::to_string(id) +
                        " out of range for vocabulary " + std::to_string(vocab));
    }
  }
}

void TMDSchedule::validate() const {
  if (!(t_max > 0.0 && t_max < 1.0)) throw DomainError("t_max must lie in (0, 1)");
  if (steps < 1) throw DomainError("schedule needs at least one step");
  if (!(exponent > 0.0) || !(scale > 0.0)) {
    throw DomainError("schedule exponent and scale must be positive");
  }
}

double metric_distance(const Codebook& codebook, std::size_t i, std::size_t x1) {
  if (i >= codebook.size() || x1 >= codebook.size()) {
    throw DomainError("token id out of range");
  }
  const double gap = 2.0 - 2.0 * codebook.cosine(i, x1);
  return gap * gap;
}

double beta(double t, const TMDSchedule& schedule) {
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("beta: t must lie in [0, 1)");
  return schedule.scale * std::pow(t / (1.0 - t), schedule.exponent);
}

double beta_prime(double t, const TMDSchedule& schedule) {
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("beta': t must lie in [0, 1)");
  const double a = schedule.exponent;
  if (t == 0.0) {
    if (a < 1.0) throw DomainError("beta' diverges at t = 0 for exponent < 1");
    return a == 1.0 ? schedule.scale : 0.0;
  }
  const double odds = t / (1.0 - t);
  return schedule.scale * a * std::pow(odds, a - 1.0) / ((1.0 - t) * (1.0 - t));
}

namespace {

// Row of distances from every token to `target`.
Eigen::VectorXd distances_to(const Codebook& codebook, std::size_t target) {
  Eigen::VectorXd d(codebook.size());
  for (std::size_t i = 0; i < codebook.size(); ++i) {
    d(i) = metric_distance(codebook, i, target);
  }
  return d;
}

Eigen::VectorXd softmin(const Eigen::VectorXd& distances, double inv_temp) {
  Eigen::VectorXd logits = -inv_temp * distances;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

}  // namespace

Eigen::VectorXd corruption_dist(const Codebook& codebook, std::size_t x1, double t,
                                const TMDSchedule& schedule) {
  return softmin(distances_to(codebook, x1), beta(t, schedule));
}

TokenSeq corrupt(const TokenSeq& clean, double t, const Codebook& codebook,
                 const TMDSchedule& schedule, Rng& rng) {
  check_tokens(clean, codebook.size());
  const double inv_temp = beta(t, schedule);
  TokenSeq out(clean.size());
  for (std::size_t n = 0; n < clean.size(); ++n) {
    const Eigen::VectorXd q = softmin(distances_to(codebook, clean[n]), inv_temp);
    out[n] = rng.categorical({q.data(), static_cast<std::size_t>(q.size())});
  }
  return out;
}

double denoise_loss(const Eigen::MatrixXd& logits, const TokenSeq& clean) {
  if (static_cast<std::size_t>(logits.rows()) != clean.size()) {
    throw ShapeError("denoise_loss: logits rows do not match sequence length");
  }
  if (!logits.allFinite()) throw NonFiniteError("denoise_loss: non-finite logits");
  check_tokens(clean, static_cast<std::size_t>(logits.cols()));
  double loss = 0.0;
  for (Eigen::Index n = 0; n < logits.rows(); ++n) {
    const double peak = logits.row(n).maxCoeff();
    const double log_norm =
        peak + std::log((logits.row(n).array() - peak).exp().sum());
    loss += log_norm - logits(n, static_cast<Eigen::Index>(clean[n]));
  }
  return loss;
}

double training_objective(double ce, double anchor_sup, double lambda_anc) {
  return ce + lambda_anc * anchor_sup;
}

Eigen::VectorXd jump_rates(const Codebook& codebook, std::size_t current,
                           std::size_t proposal, double t,
                           const TMDSchedule& schedule) {
  const Eigen::VectorXd d = distances_to(codebook, proposal);
  const Eigen::VectorXd q = softmin(d, beta(t, schedule));
  const double speed = beta_prime(t, schedule);
  const double d_current = d(static_cast<Eigen::Index>(current));
  Eigen::VectorXd rates(codebook.size());
  for (Eigen::Index i = 0; i < rates.size(); ++i) {
    const double gain = d_current - d(i);
    rates(i) = gain > 0.0 ? q(i) * speed * gain : 0.0;
  }
  return rates;
}

TokenSeq argmax_proposal(const Eigen::MatrixXd& logits) {
  TokenSeq out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index n = 0; n < logits.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.cols(); ++i) {
      if (logits(n, i) > logits(n, best)) best = i;
    }
    out[static_cast<std::size_t>(n)] = static_cast<std::size_t>(best);
  }
  return out;
}

TokenSeq step(const TokenSeq& current, const TokenSeq& proposal, double t,
              double h, const Codebook& codebook, const TMDSchedule& schedule,
              Rng& rng, StepStats* stats) {
  if (current.size() != proposal.size()) {
    throw ShapeError("step: proposal length differs from current sequence");
  }
  if (!(h > 0.0)) throw DomainError("step size must be positive");
  if (!(t > 0.0 && t <= schedule.t_max)) {
    throw DomainError("step: t must lie in (0, t_max]");
  }
  check_tokens(current, codebook.size());
  check_tokens(proposal, codebook.size());

  TokenSeq next = current;
  std::size_t updates = 0;
  for (std::size_t n = 0; n < current.size(); ++n) {
    const Eigen::VectorXd rates =
        jump_rates(codebook, current[n], proposal[n], t, schedule);
    const double total = rates.sum();
    if (!(total > 0.0)) continue;
    const double p_update = -std::expm1(-h * total);
    if (rng.uniform() < p_update) {
      next[n] = rng.categorical(
          {rates.data(), static_cast<std::size_t>(rates.size())});
      ++updates;
    }
  }
  if (stats) stats->updates = updates;
  return next;
}

TokenSeq sample(Denoiser& denoiser, std::size_t length, const Codebook& codebook,
                const TMDSchedule& schedule, const Eigen::MatrixXd& context,
                Rng& rng, std::vector<SampleTraceRow>* trace) {
  schedule.validate();
  TokenSeq tokens(length);
  for (auto& id : tokens) id = rng.index(codebook.size());

  const double h = schedule.t_max / static_cast<double>(schedule.steps);
  for (std::size_t k = 1; k <= schedule.steps; ++k) {
    const double t = k == schedule.steps
                         ? schedule.t_max
                         : static_cast<double>(k) * h;
    const TokenSeq proposal = denoiser.propose(tokens, t, context);
    if (proposal.size() != length) {
      throw ShapeError("denoiser returned " + std::to_string(proposal.size()) +
                       " tokens, expected " + std::to_string(length));
    }
    StepStats stats;
    tokens = step(tokens, proposal, t, h, codebook, schedule, rng, &stats);
    if (trace) {
      double mean_d = 0.0;
      for (std::size_t n = 0; n < length; ++n) {
        mean_d += metric_distance(codebook, tokens[n], proposal[n]);
      }
      if (length > 0) mean_d /= static_cast<double>(length);
      trace->push_back({k, t, stats.updates, mean_d});
    }
  }
  return tokens;
}

}  // namespace anchorroute

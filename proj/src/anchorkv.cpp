#include "anchorroute/anchorkv.hpp"

#include <cmath>
#include <string>

#include "anchorroute/error.hpp"

namespace anchorroute {

void AnchorKVLayer::validate(std::size_t width) const {
  const auto d = static_cast<Eigen::Index>(width);
  if (down.cols() < 1) throw ShapeError("AnchorKV rank must be at least 1");
  if (down.rows() != d || key_up.rows() != down.cols() || key_up.cols() != d ||
      value_up.rows() != down.cols() || value_up.cols() != d) {
    throw ShapeError("AnchorKV layer shapes inconsistent with memory width " +
                     std::to_string(width));
  }
}

ConditionMemory encode_memory(const ScaffoldFeatures& features,
                              std::size_t frames_per_token,
                              const Eigen::MatrixXd& w_in) {
  if (frames_per_token < 1) throw ShapeError("frames_per_token must be >= 1");
  const std::size_t frames = features.frames();
  if (frames == 0) throw ShapeError("encode_memory: no frames");
  if (static_cast<std::size_t>(w_in.rows()) != features.width() ||
      static_cast<std::size_t>(features.values.cols()) != features.width()) {
    throw ShapeError("encode_memory: input map expects " +
                     std::to_string(w_in.rows()) + " features, got " +
                     std::to_string(features.values.cols()));
  }
  const std::size_t length = (frames + frames_per_token - 1) / frames_per_token;
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(length, features.values.cols());
  for (std::size_t n = 0; n < length; ++n) {
    for (std::size_t k = 0; k < frames_per_token; ++k) {
      const std::size_t t = std::min(n * frames_per_token + k, frames - 1);
      pooled.row(n) += features.values.row(t);
    }
  }
  pooled /= static_cast<double>(frames_per_token);
  return {pooled * w_in};
}

KeyValues project_kv(const ConditionMemory& memory, const AnchorKVLayer& layer) {
  layer.validate(memory.width());
  const Eigen::MatrixXd reduced = memory.values * layer.down;
  return {reduced * layer.key_up, reduced * layer.value_up};
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& queries,
                                  const Eigen::MatrixXd& keys,
                                  const Eigen::MatrixXd& scaffold_keys) {
  const Eigen::Index d = queries.cols();
  if (d == 0) throw ShapeError("attention width must be positive");
  if (keys.cols() != d || (scaffold_keys.rows() > 0 && scaffold_keys.cols() != d)) {
    throw ShapeError("attention: key width differs from query width");
  }
  const Eigen::Index n_base = keys.rows();
  const Eigen::Index n_total = n_base + scaffold_keys.rows();
  if (n_total == 0) throw ShapeError("attention: no keys");

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Eigen::MatrixXd scores(queries.rows(), n_total);
  scores.leftCols(n_base) = queries * keys.transpose() * scale;
  if (scaffold_keys.rows() > 0) {
    scores.rightCols(scaffold_keys.rows()) =
        queries * scaffold_keys.transpose() * scale;
  }
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    scores.row(r).array() -= scores.row(r).maxCoeff();
    scores.row(r) = scores.row(r).array().exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return scores;
}

Eigen::MatrixXd attend(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                       const Eigen::MatrixXd& values,
                       const Eigen::MatrixXd& scaffold_keys,
                       const Eigen::MatrixXd& scaffold_values) {
  if (keys.rows() != values.rows() ||
      scaffold_keys.rows() != scaffold_values.rows()) {
    throw ShapeError("attention: key and value counts differ");
  }
  if (values.cols() != queries.cols() ||
      (scaffold_values.rows() > 0 && scaffold_values.cols() != queries.cols())) {
    throw ShapeError("attention: value width differs from query width");
  }
  const Eigen::MatrixXd weights = attention_weights(queries, keys, scaffold_keys);
  Eigen::MatrixXd out = weights.leftCols(keys.rows()) * values;
  if (scaffold_values.rows() > 0) {
    out += weights.rightCols(scaffold_values.rows()) * scaffold_values;
  }
  return out;
}

}  // namespace anchorroute

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "anchorroute/scaffold.hpp"

namespace anchorroute {

/// Token-aligned scaffold memory H^s, one row per motion token.
struct ConditionMemory {
  Eigen::MatrixXd values;  // L x d

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(values.cols()); }
};

/// Low-rank key/value projections for one attention layer:
/// K^s = H P U_K, V^s = H P U_V.
struct AnchorKVLayer {
  Eigen::MatrixXd down;      // P:   d x r
  Eigen::MatrixXd key_up;    // U_K: r x d
  Eigen::MatrixXd value_up;  // U_V: r x d

  std::size_t rank() const { return static_cast<std::size_t>(down.cols()); }
  /// Throws ShapeError on inconsistent shapes or rank 0.
  void validate(std::size_t width) const;
};

struct AnchorKVParams {
  std::vector<AnchorKVLayer> layers;
};

/// Shape-only stand-in for the pooled text context.
struct TextContext {
  Eigen::VectorXd values;
};

/// Reference scaffold encoder: mean of the feature rows in each window of
/// `frames_per_token` frames, then `w_in` ((3 d_f + 2) x d). When T is not a
/// multiple of the window the last window is padded by repeating the final
/// frame, so L = ceil(T / q).
ConditionMemory encode_memory(const ScaffoldFeatures& features,
                              std::size_t frames_per_token,
                              const Eigen::MatrixXd& w_in);

struct KeyValues {
  Eigen::MatrixXd keys;    // L x d
  Eigen::MatrixXd values;  // L x d
};

KeyValues project_kv(const ConditionMemory& memory, const AnchorKVLayer& layer);

/// Attention weights softmax(Q [K; K^s]^T / sqrt(d)), n_q x (n_k + L).
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& queries,
                                  const Eigen::MatrixXd& keys,
                                  const Eigen::MatrixXd& scaffold_keys);

/// Single-head attention with scaffold keys/values appended after the base
/// keys/values. Throws ShapeError when d = 0 or column counts disagree.
Eigen::MatrixXd attend(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                       const Eigen::MatrixXd& values,
                       const Eigen::MatrixXd& scaffold_keys,
                       const Eigen::MatrixXd& scaffold_values);

}  // namespace anchorroute

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "anchorroute/motion.hpp"
#include "anchorroute/routesolver.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/tmd.hpp"

namespace anchorroute {

/// Dense float64 array with row-major data; the shared container for
/// motions (shape [T, J, 3]), codebooks and parameter matrices ([rows, cols]).
///
/// JSON form: {"shape": [...], "data": [...]}. Doubles are written in
/// shortest round-trip form, so a JSON round trip is exact.
///
/// Binary form (little-endian):
///   bytes 0..3   magic "ARB1"
///   uint32       ndim
///   uint64[ndim] shape
///   float64[]    data, row-major, product(shape) values
struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t element_count() const;
};

nlohmann::json to_json(const NdArray& array);
NdArray array_from_json(const nlohmann::json& doc);

void write_binary(std::ostream& out, const NdArray& array);
NdArray read_binary(std::istream& in);

/// Writes JSON when the extension is ".json", binary otherwise.
void save_array(const std::filesystem::path& path, const NdArray& array);
/// Detects the format from the leading magic bytes.
NdArray load_array(const std::filesystem::path& path);

NdArray to_array(const Motion& motion);
Motion motion_from_array(const NdArray& array);
NdArray to_array(const Eigen::MatrixXd& matrix);
Eigen::MatrixXd matrix_from_array(const NdArray& array);

/// {"family": "root3d"|"planar_root"|"body_point", "joint": int (body_point
///  only), "tolerance": float (optional), "anchors": [{"frame": int,
///  "target": [...]}]}. Unknown keys are rejected with ConfigError.
nlohmann::json to_json(const AnchorSet& anchors);
AnchorSet anchors_from_json(const nlohmann::json& doc);

/// Mirrors SolverConfig field by field; "optimizer" is "gd" or "heavy_ball".
/// Missing keys keep their defaults, unknown keys are rejected.
nlohmann::json to_json(const SolverConfig& config);
SolverConfig solver_config_from_json(const nlohmann::json& doc,
                                     SolverConfig base = {});

/// CSV: step,t,updates,mean_d
void write_sample_trace(std::ostream& out, const std::vector<SampleTraceRow>& rows);
/// CSV: step,objective,anchor_loss,mean_activity,update_norm
void write_refine_trace(std::ostream& out, const std::vector<RefineTraceRow>& rows);

/// Throws ConfigError listing the first key of `doc` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& doc,
                         std::initializer_list<const char*> allowed,
                         const char* context);

}  // namespace anchorroute

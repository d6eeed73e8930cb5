#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorroute/anchorkv.hpp"
#include "anchorroute/routesolver.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/synthworld.hpp"
#include "anchorroute/tmd.hpp"

namespace anchorroute {

enum class DenoiserKind { Oracle, Uniform };

/// Everything one CLI invocation needs. Parsed strictly from JSON: every key
/// is optional, unknown keys are errors.
struct RunConfig {
  SynthTask task;
  ControlFamily family = ControlFamily::root3d();
  // Either explicit anchors or a count sampled at distinct uniform frames
  // with targets read off the ground-truth motion.
  std::optional<AnchorSet> explicit_anchors;
  std::size_t anchor_count = 4;
  std::size_t support_radius = 2;

  std::size_t frames_per_token = 4;
  std::size_t vocab = 32;
  std::size_t embed_dim = 16;
  double separation = 0.3;

  TMDSchedule schedule;
  DenoiserKind denoiser = DenoiserKind::Oracle;
  double confusion = 0.0;
  std::optional<TokenSeq> initial_tokens;  // skip sampling in refine

  std::size_t memory_width = 16;
  std::size_t memory_rank = 4;
  std::size_t memory_layers = 2;

  SolverConfig solver;
  std::size_t bench_repeats = 3;
  std::uint64_t seed = 0;

  /// Token count L = ceil(T / q).
  std::size_t length() const {
    return (task.frames + frames_per_token - 1) / frames_per_token;
  }
};

/// Throws ConfigError on malformed input or unknown keys.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Seed derivation: every stochastic component draws from
/// Rng(seed).fork(stream) with a fixed stream id.
enum SeedStream : std::uint64_t {
  kStreamTask = 1,
  kStreamAnchors = 2,
  kStreamCodebook = 3,
  kStreamCodec = 4,
  kStreamMemory = 5,
  kStreamDenoiser = 6,
  kStreamSampler = 7,
};

/// Deterministic synthetic world built from a RunConfig.
struct World {
  Motion ground_truth;
  AnchorSet anchors;
  Codebook codebook;
  TokenCodec codec;
  TokenSeq clean_tokens;
  ScaffoldFeatures features;
  ConditionMemory memory;
  AnchorKVParams kv_params;
};

World build_world(const RunConfig& config);

struct SampleOutcome {
  TokenSeq tokens;
  Motion motion;
  std::vector<SampleTraceRow> trace;
  double token_match = 0.0;  // fraction equal to the clean tokenization
};

SampleOutcome run_sample(const RunConfig& config, const World& world);

struct RefineOutcome {
  TokenSeq tokens;
  Motion initial_motion;
  Motion refined_motion;
  ResidualScaffold residual_scaffold;
  std::vector<RefineTraceRow> trace;
  double control_error_before = 0.0;
  double control_error_after = 0.0;
  double anchor_loss_before = 0.0;
  double anchor_loss_after = 0.0;
  double wall_time = 0.0;  // seconds spent in refine()
};

RefineOutcome run_refine(const RunConfig& config, const World& world);

/// Output files: summary.json, trace.csv, motion.json (+ tokens.json).
nlohmann::json cmd_sample(const RunConfig& config,
                          const std::filesystem::path& out_dir);

/// Output files: summary.json, trace.csv, motion_initial.json,
/// motion_refined.json, anchors.json. summary.json carries
/// control_error_before/after, steps and wall_time.
nlohmann::json cmd_refine(const RunConfig& config,
                          const std::filesystem::path& out_dir);

struct BenchRow {
  std::string setting;
  std::size_t steps = 0;
  double time_per_sample = 0.0;
};

/// Times TMD sampling and refinement at rs0/rs100/rs200/rs500. Writes
/// bench.csv with columns setting,steps,time_per_sample_s.
std::vector<BenchRow> cmd_bench(const RunConfig& config,
                                const std::filesystem::path& out_dir);

}  // namespace anchorroute

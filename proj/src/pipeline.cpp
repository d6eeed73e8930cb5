#include "anchorroute/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "anchorroute/error.hpp"
#include "anchorroute/io.hpp"
#include "anchorroute/rng.hpp"

namespace anchorroute {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& field) {
  if (doc.contains(key)) doc.at(key).get_to(field);
}

Eigen::Vector3d read_vec3(const nlohmann::json& doc, const char* key,
                          const Eigen::Vector3d& fallback) {
  if (!doc.contains(key)) return fallback;
  const auto v = doc.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(std::string(key) + " must have 3 entries");
  return {v[0], v[1], v[2]};
}

Eigen::MatrixXd gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                                double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * rng.normal();
  }
  return m;
}

AnchorSet sample_anchors(const RunConfig& config, const Motion& gt, Rng rng) {
  const std::size_t frames = gt.frames();
  if (config.anchor_count > frames) {
    throw ConfigError("more anchors requested than frames available");
  }
  std::vector<std::size_t> pool(frames);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first anchor_count entries are a uniform
  // subset of distinct frames.
  for (std::size_t i = 0; i < config.anchor_count; ++i) {
    std::swap(pool[i], pool[i + rng.index(frames - i)]);
  }
  std::vector<std::pair<std::size_t, Eigen::VectorXd>> targets;
  for (std::size_t i = 0; i < config.anchor_count; ++i) {
    targets.emplace_back(pool[i], observe_frame(gt, config.family, pool[i]));
  }
  return AnchorSet::from_targets(config.family, targets);
}

double token_match(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty()) return 0.0;
  std::size_t same = 0;
  for (std::size_t n = 0; n < a.size(); ++n) same += a[n] == b[n] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc,
                      {"task", "family", "joint", "tolerance", "anchors",
                       "support_radius", "tokens", "schedule", "denoiser",
                       "initial_tokens", "memory", "solver", "preset", "bench",
                       "seed"},
                      "config");
  RunConfig config;
  try {
    if (doc.contains("task")) {
      const auto& t = doc.at("task");
      reject_unknown_keys(t,
                          {"kind", "frames", "joints", "noise", "origin", "velocity",
                           "radius", "amplitude", "period", "step"},
                          "task");
      if (t.contains("kind")) {
        config.task.kind = parse_motion_kind(t.at("kind").get<std::string>());
      }
      read_key(t, "frames", config.task.frames);
      read_key(t, "joints", config.task.joints);
      read_key(t, "noise", config.task.noise);
      read_key(t, "radius", config.task.radius);
      read_key(t, "amplitude", config.task.amplitude);
      read_key(t, "period", config.task.period);
      read_key(t, "step", config.task.step);
      config.task.origin = read_vec3(t, "origin", config.task.origin);
      config.task.velocity = read_vec3(t, "velocity", config.task.velocity);
    }
    if (doc.contains("family")) {
      config.family.kind = parse_family(doc.at("family").get<std::string>());
    }
    read_key(doc, "joint", config.family.joint);
    read_key(doc, "tolerance", config.family.tolerance);
    if (doc.contains("anchors")) {
      const auto& a = doc.at("anchors");
      reject_unknown_keys(a, {"count", "explicit"}, "anchors");
      if (a.contains("count") && a.contains("explicit")) {
        throw ConfigError("anchors: give either 'count' or 'explicit'");
      }
      read_key(a, "count", config.anchor_count);
      if (a.contains("explicit")) {
        nlohmann::json set{{"family", family_name(config.family.kind)},
                           {"tolerance", config.family.tolerance},
                           {"anchors", a.at("explicit")}};
        if (config.family.kind == FamilyKind::BodyPoint) {
          set["joint"] = config.family.joint;
        }
        config.explicit_anchors = anchors_from_json(set);
      }
    }
    read_key(doc, "support_radius", config.support_radius);
    if (doc.contains("tokens")) {
      const auto& t = doc.at("tokens");
      reject_unknown_keys(t, {"frames_per_token", "vocab", "dim", "separation"},
                          "tokens");
      read_key(t, "frames_per_token", config.frames_per_token);
      read_key(t, "vocab", config.vocab);
      read_key(t, "dim", config.embed_dim);
      read_key(t, "separation", config.separation);
    }
    if (doc.contains("schedule")) {
      const auto& s = doc.at("schedule");
      reject_unknown_keys(s, {"exponent", "scale", "steps", "t_max"}, "schedule");
      read_key(s, "exponent", config.schedule.exponent);
      read_key(s, "scale", config.schedule.scale);
      read_key(s, "steps", config.schedule.steps);
      read_key(s, "t_max", config.schedule.t_max);
    }
    if (doc.contains("denoiser")) {
      const auto& d = doc.at("denoiser");
      reject_unknown_keys(d, {"kind", "confusion"}, "denoiser");
      if (d.contains("kind")) {
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "oracle") {
          config.denoiser = DenoiserKind::Oracle;
        } else if (kind == "uniform") {
          config.denoiser = DenoiserKind::Uniform;
        } else {
          throw ConfigError("denoiser: unknown kind '" + kind + "'");
        }
      }
      read_key(d, "confusion", config.confusion);
    }
    if (doc.contains("initial_tokens")) {
      config.initial_tokens = doc.at("initial_tokens").get<TokenSeq>();
    }
    if (doc.contains("memory")) {
      const auto& m = doc.at("memory");
      reject_unknown_keys(m, {"width", "rank", "layers"}, "memory");
      read_key(m, "width", config.memory_width);
      read_key(m, "rank", config.memory_rank);
      read_key(m, "layers", config.memory_layers);
    }
    if (doc.contains("preset")) {
      config.solver = SolverConfig::preset(doc.at("preset").get<std::string>());
    }
    if (doc.contains("solver")) {
      config.solver = solver_config_from_json(doc.at("solver"), config.solver);
    }
    if (doc.contains("bench")) {
      const auto& b = doc.at("bench");
      reject_unknown_keys(b, {"repeats"}, "bench");
      read_key(b, "repeats", config.bench_repeats);
    }
    read_key(doc, "seed", config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  config.task.validate();
  config.family.validate(config.task.joints);
  config.schedule.validate();
  config.solver.validate();
  if (config.frames_per_token < 1 ||
      config.task.frames % config.frames_per_token != 0) {
    throw ConfigError("task frames must be a multiple of frames_per_token");
  }
  if (config.vocab < 2 || config.embed_dim < 1) {
    throw ConfigError("tokens: vocab >= 2 and dim >= 1 required");
  }
  if (!(config.confusion >= 0.0 && config.confusion < 1.0)) {
    throw ConfigError("denoiser: confusion must lie in [0, 1)");
  }
  if (config.memory_width < 1 || config.memory_rank < 1) {
    throw ConfigError("memory: width and rank must be positive");
  }
  if (config.explicit_anchors) {
    config.explicit_anchors->validate_for(config.task.frames, config.task.joints);
  } else if (config.anchor_count > config.task.frames) {
    throw ConfigError("anchors: count exceeds frame count");
  }
  if (config.initial_tokens) {
    if (config.initial_tokens->size() != config.length()) {
      throw ConfigError("initial_tokens: length must equal frames / frames_per_token");
    }
    for (std::size_t id : *config.initial_tokens) {
      if (id >= config.vocab) throw ConfigError("initial_tokens: id out of range");
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

World build_world(const RunConfig& config) {
  const Rng root(config.seed);
  SynthTask task = config.task;
  task.seed = root.fork(kStreamTask).next_u64();
  Motion gt = make_motion(task);

  AnchorSet anchors = config.explicit_anchors
                          ? *config.explicit_anchors
                          : sample_anchors(config, gt, root.fork(kStreamAnchors));

  Codebook codebook = make_codebook(config.vocab, config.embed_dim, config.separation,
                                    root.fork(kStreamCodebook).next_u64());
  TokenCodec codec =
      make_token_codec(config.length(), config.embed_dim, config.frames_per_token,
                       config.task.joints, root.fork(kStreamCodec).next_u64());
  TokenSeq clean = tokenize(gt, codebook, config.frames_per_token, codec.encoder);

  ScaffoldFeatures features = build_features(anchors, config.task.frames);
  Rng param_rng = root.fork(kStreamMemory);
  const std::size_t width = config.memory_width;
  const std::size_t rank = config.memory_rank;
  const Eigen::MatrixXd w_in = gaussian_matrix(
      param_rng, features.width(), width,
      1.0 / std::sqrt(static_cast<double>(features.width())));
  ConditionMemory memory = encode_memory(features, config.frames_per_token, w_in);
  AnchorKVParams params;
  for (std::size_t l = 0; l < config.memory_layers; ++l) {
    params.layers.push_back(
        {gaussian_matrix(param_rng, width, rank, 1.0 / std::sqrt(double(width))),
         gaussian_matrix(param_rng, rank, width, 1.0 / std::sqrt(double(rank))),
         gaussian_matrix(param_rng, rank, width, 1.0 / std::sqrt(double(rank)))});
  }

  return {std::move(gt),       std::move(anchors),  std::move(codebook),
          std::move(codec),    std::move(clean),    std::move(features),
          std::move(memory),   std::move(params)};
}

SampleOutcome run_sample(const RunConfig& config, const World& world) {
  const Rng root(config.seed);
  std::unique_ptr<Denoiser> denoiser;
  const std::uint64_t denoiser_seed = root.fork(kStreamDenoiser).next_u64();
  if (config.denoiser == DenoiserKind::Oracle) {
    denoiser = std::make_unique<OracleDenoiser>(world.clean_tokens, config.vocab,
                                                config.confusion, denoiser_seed);
  } else {
    denoiser = std::make_unique<UniformDenoiser>(config.vocab, denoiser_seed);
  }
  Rng sampler = root.fork(kStreamSampler);
  SampleOutcome out{{}, Motion(world.codec.decoder.frames(), world.codec.decoder.joints()),
                    {}, 0.0};
  out.tokens = sample(*denoiser, config.length(), world.codebook, config.schedule,
                      world.memory.values, sampler, &out.trace);
  out.motion =
      world.codec.decoder.decode(soft_init(out.tokens, world.codebook).values());
  out.token_match = token_match(out.tokens, world.clean_tokens);
  return out;
}

RefineOutcome run_refine(const RunConfig& config, const World& world) {
  TokenSeq tokens = config.initial_tokens ? *config.initial_tokens
                                          : run_sample(config, world).tokens;
  const SoftTokens start = soft_init(tokens, world.codebook);
  const LinearDecoder& decoder = world.codec.decoder;
  Motion initial = decoder.decode(start.values());
  ResidualScaffold scaffold = residuals(initial, world.anchors);
  const IntervalPartition intervals = build_intervals(world.anchors, decoder.frames());

  const auto t0 = Clock::now();
  RefineResult refined = refine(start, decoder, world.anchors, intervals,
                                config.solver, config.frames_per_token);
  const double elapsed = seconds_since(t0);
  Motion final_motion = decoder.decode(refined.tokens.values());

  RefineOutcome out{std::move(tokens),
                    initial,
                    final_motion,
                    std::move(scaffold),
                    std::move(refined.trace),
                    control_error(initial, world.anchors),
                    control_error(final_motion, world.anchors),
                    anchor_loss(initial, world.anchors),
                    anchor_loss(final_motion, world.anchors),
                    elapsed};
  return out;
}

nlohmann::json cmd_sample(const RunConfig& config,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const World world = build_world(config);
  const SampleOutcome out = run_sample(config, world);

  save_array(out_dir / "motion.json", to_array(out.motion));
  write_json(out_dir / "tokens.json",
             {{"tokens", out.tokens}, {"clean", world.clean_tokens}});
  auto trace = open_text(out_dir / "trace.csv");
  write_sample_trace(trace, out.trace);

  nlohmann::json summary{{"command", "sample"},
                         {"seed", config.seed},
                         {"length", config.length()},
                         {"vocab", config.vocab},
                         {"steps", config.schedule.steps},
                         {"token_match", out.token_match},
                         {"memory",
                          {{"length", world.memory.length()},
                           {"width", world.memory.width()},
                           {"layers", world.kv_params.layers.size()}}}};
  write_json(out_dir / "summary.json", summary);
  return summary;
}

nlohmann::json cmd_refine(const RunConfig& config,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const World world = build_world(config);
  const RefineOutcome out = run_refine(config, world);

  save_array(out_dir / "motion_initial.json", to_array(out.initial_motion));
  save_array(out_dir / "motion_refined.json", to_array(out.refined_motion));
  write_json(out_dir / "anchors.json", to_json(world.anchors));
  auto trace = open_text(out_dir / "trace.csv");
  write_refine_trace(trace, out.trace);

  nlohmann::json summary{{"command", "refine"},
                         {"seed", config.seed},
                         {"family", family_name(world.anchors.family().kind)},
                         {"anchor_count", world.anchors.size()},
                         {"anchors_empty", world.anchors.empty()},
                         {"steps", config.solver.steps},
                         {"control_error_before", out.control_error_before},
                         {"control_error_after", out.control_error_after},
                         {"anchor_loss_before", out.anchor_loss_before},
                         {"anchor_loss_after", out.anchor_loss_after},
                         {"wall_time", out.wall_time}};
  write_json(out_dir / "summary.json", summary);
  return summary;
}

std::vector<BenchRow> cmd_bench(const RunConfig& config,
                                const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const World world = build_world(config);
  const std::size_t repeats = std::max<std::size_t>(1, config.bench_repeats);
  std::vector<BenchRow> rows;

  auto t0 = Clock::now();
  TokenSeq tokens;
  for (std::size_t r = 0; r < repeats; ++r) tokens = run_sample(config, world).tokens;
  rows.push_back({"sample", config.schedule.steps,
                  seconds_since(t0) / static_cast<double>(repeats)});

  RunConfig fixed = config;
  fixed.initial_tokens = tokens;
  for (std::size_t steps : {0, 100, 200, 500}) {
    fixed.solver.steps = steps;
    t0 = Clock::now();
    for (std::size_t r = 0; r < repeats; ++r) run_refine(fixed, world);
    rows.push_back({"rs" + std::to_string(steps), steps,
                    seconds_since(t0) / static_cast<double>(repeats)});
  }

  auto csv = open_text(out_dir / "bench.csv");
  csv << "setting,steps,time_per_sample_s\n";
  for (const auto& row : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", row.time_per_sample);
    csv << row.setting << ',' << row.steps << ',' << buf << '\n';
  }
  return rows;
}

}  // namespace anchorroute

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "anchorroute/anchorkv.hpp"
#include "anchorroute/pipeline.hpp"
#include "anchorroute/routesolver.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/synthworld.hpp"
#include "anchorroute/tmd.hpp"
#include "test_support.hpp"

namespace ar = anchorroute;
namespace fs = std::filesystem;
using ar::testing::random_matrix;
using ar::testing::relative_error;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double time_limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0 && elapsed >= time_limit_s) {
    v.pass = false;
    v.detail += " [runtime limit " + std::to_string(time_limit_s) + " s exceeded]";
  }
  if (!v.pass) ++failures;
  std::printf("%s  %2d  %-34s %s (%.3f s)\n", v.pass ? "PASS" : "FAIL", id, name,
              v.detail.c_str(), elapsed);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

ar::Codebook random_codebook(ar::Rng& rng, std::size_t vocab, std::size_t dim) {
  return ar::Codebook(random_matrix(rng, vocab, dim));
}

// Partition of [0, frames - 1] into `count` intervals of at least `min_len`.
ar::IntervalPartition random_partition(ar::Rng& rng, std::size_t frames, std::size_t count,
                                       std::size_t min_len) {
  std::vector<std::size_t> cuts{0};
  std::size_t slack = frames - 1 - count * min_len;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const std::size_t extra = slack > 0 ? rng.index(slack + 1) / 2 : 0;
    slack -= extra;
    cuts.push_back(cuts.back() + min_len + extra);
  }
  cuts.push_back(frames - 1);
  ar::IntervalPartition p;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) p.intervals.push_back({cuts[i], cuts[i + 1]});
  return p;
}

struct RouteInstance {
  ar::BasisMatrix basis;
  Eigen::MatrixXd delta;
  Eigen::VectorXd activity;
  double ridge;
};

// L <= 64 tokens, 1..8 intervals, each interval holding at least two token
// centers so the unpenalized problem is well posed.
RouteInstance random_route_instance(ar::Rng& rng, double max_activity) {
  const std::size_t q = 1 + rng.index(4);
  const std::size_t count = 1 + rng.index(8);
  const std::size_t min_len = 2 * q + 1;
  const std::size_t max_frames = 64 * q;
  const std::size_t need = count * min_len + 1;
  const std::size_t frames = need + rng.index(max_frames - need + 1);
  const std::size_t length = (frames + q - 1) / q;
  RouteInstance inst{ar::build_basis(random_partition(rng, frames, count, min_len), length, q),
                     random_matrix(rng, length, 1 + rng.index(8)),
                     Eigen::VectorXd(count), std::pow(10.0, -3.0 + 4.0 * rng.uniform())};
  for (std::size_t i = 0; i < count; ++i) inst.activity(i) = max_activity * rng.uniform();
  return inst;
}

// Dense normal equations solved by full-pivot LU.
Eigen::MatrixXd normal_equation_oracle(const RouteInstance& r) {
  const Eigen::MatrixXd& b = r.basis.matrix;
  Eigen::MatrixXd system = b.transpose() * b;
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    system(c, c) += r.ridge * (1.0 - r.activity(c / 2));
  }
  return system.fullPivLu().solve(b.transpose() * r.delta);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  std::printf("anchorroute acceptance suite\n");

  run(1, "corruption normalization", 1.0, [] {
    ar::Rng rng(101);
    const ar::TMDSchedule s;
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const std::size_t vocab = 2 + rng.index(63), dim = 1 + rng.index(16);
      const ar::Codebook cb = random_codebook(rng, vocab, dim);
      const double t = s.t_max * rng.uniform();
      worst = std::max(worst, std::abs(ar::corruption_dist(cb, rng.index(vocab), t, s).sum() - 1.0));
    }
    return Verdict{worst <= 1e-9, fmt("max |sum - 1| = %.3g over 1000 triples", worst)};
  });

  run(2, "corruption concentration", 0, [] {
    ar::Rng rng(202);
    const ar::TMDSchedule s;
    int violations = 0;
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t vocab = 2 + rng.index(31);
      const ar::Codebook cb = random_codebook(rng, vocab, 1 + rng.index(16));
      const std::size_t x1 = rng.index(vocab);
      double prev = -1.0;
      for (int k = 0; k < 50; ++k) {
        const double q = ar::corruption_dist(cb, x1, s.t_max * k / 49.0, s)(x1);
        violations += q < prev;
        prev = q;
      }
    }
    return Verdict{violations == 0,
                   fmt("%.0f decreases across 100 instances x 50 grid points", violations)};
  });

  run(3, "oracle-sampler convergence", 30.0, [] {
    const ar::TMDSchedule s;  // K = 64
    double match = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      ar::Rng rng(3000 + seed);
      const ar::Codebook cb = ar::make_codebook(32, 16, 0.3, rng.next_u64());
      ar::TokenSeq clean(16);
      for (auto& id : clean) id = rng.index(32);
      ar::OracleDenoiser oracle(clean, 32, 0.0, rng.next_u64());
      const ar::TokenSeq out = ar::sample(oracle, 16, cb, s, Eigen::MatrixXd(), rng);
      for (std::size_t n = 0; n < 16; ++n) match += out[n] == clean[n];
    }
    match /= 1600.0;
    return Verdict{match >= 0.95, fmt("mean token match %.4f over 100 seeds", match)};
  });

  run(4, "rate positivity / zero-set", 0, [] {
    ar::Rng rng(404);
    const ar::TMDSchedule s;
    long checked = 0, mismatches = 0;
    for (std::size_t vocab = 2; vocab <= 8; ++vocab) {
      for (int book = 0; book < 5; ++book) {
        const ar::Codebook cb = random_codebook(rng, vocab, 1 + rng.index(4));
        for (double t : {0.05, 0.25, 0.5, 0.75, 0.9}) {
          for (std::size_t cur = 0; cur < vocab; ++cur) {
            for (std::size_t prop = 0; prop < vocab; ++prop) {
              const Eigen::VectorXd u = ar::jump_rates(cb, cur, prop, t, s);
              const double d_cur = ar::metric_distance(cb, cur, prop);
              for (std::size_t i = 0; i < vocab; ++i) {
                const bool farther = ar::metric_distance(cb, i, prop) >= d_cur;
                mismatches += (u(i) == 0.0) != farther || u(i) < 0.0;
                ++checked;
              }
            }
          }
        }
      }
    }
    return Verdict{mismatches == 0, fmt("%.0f mismatches in %.0f rate entries (t <= 0.9)",
                                         double(mismatches), double(checked))};
  });

  run(5, "routed-solve oracle equivalence", 5.0, [] {
    ar::Rng rng(505);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      const RouteInstance inst = random_route_instance(rng, 0.95);
      const ar::RouteResult r = ar::route(inst.delta, inst.basis, inst.activity, inst.ridge);
      const Eigen::MatrixXd alpha = normal_equation_oracle(inst);
      worst = std::max({worst, relative_error(r.coefficients, alpha),
                        relative_error(r.update, inst.basis.matrix * alpha)});
    }
    return Verdict{worst <= 1e-8, fmt("max relative error %.3g over 200 instances", worst)};
  });

  run(6, "projection idempotence", 0, [] {
    ar::Rng rng(606);
    double worst = 0.0;
    int rank_deficient = 0;
    for (int k = 0; k < 100; ++k) {
      const RouteInstance inst = random_route_instance(rng, 0.0);
      const Eigen::VectorXd w_zero = Eigen::VectorXd::Ones(inst.activity.size());
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(inst.basis.matrix);
      rank_deficient += cod.rank() != inst.basis.matrix.cols();
      const Eigen::MatrixXd once = ar::route(inst.delta, inst.basis, w_zero, inst.ridge).update;
      const Eigen::MatrixXd twice = ar::route(once, inst.basis, w_zero, inst.ridge).update;
      worst = std::max(worst, (twice - once).norm() / inst.delta.norm());
    }
    return Verdict{worst <= 1e-8 && rank_deficient == 0,
                   fmt("max ||P(P d) - P d|| / ||d|| = %.3g, rank-deficient bases: %.0f", worst,
                       rank_deficient)};
  });

  run(7, "span confinement", 0, [] {
    ar::Rng rng(707);
    double worst_block = 0.0, outside = 0.0;
    long outside_rows = 0;
    for (int k = 0; k < 100; ++k) {
      RouteInstance inst = random_route_instance(rng, 1.0);
      // Extra tokens past the final frame belong to no interval.
      const std::size_t extra = rng.index(4);
      const Eigen::Index length = inst.basis.matrix.rows();
      if (extra > 0) {
        inst.basis.matrix.conservativeResize(length + extra, Eigen::NoChange);
        inst.basis.matrix.bottomRows(extra).setZero();
        inst.basis.token_interval.resize(length + extra);
        inst.delta.conservativeResize(length + extra, Eigen::NoChange);
        inst.delta.bottomRows(extra) = random_matrix(rng, extra, inst.delta.cols());
      }
      const ar::RouteResult full = ar::route(inst.delta, inst.basis, inst.activity, inst.ridge);
      for (std::size_t n = 0; n < inst.basis.token_interval.size(); ++n) {
        if (!inst.basis.token_interval[n]) {
          outside = std::max(outside, full.update.row(n).cwiseAbs().maxCoeff());
          ++outside_rows;
        }
      }
      // Each block solved alone, from its own rows and columns only.
      for (std::size_t i = 0; i < inst.basis.intervals(); ++i) {
        std::vector<Eigen::Index> rows;
        for (std::size_t n = 0; n < inst.basis.token_interval.size(); ++n) {
          if (inst.basis.token_interval[n] == std::optional<std::size_t>(i)) rows.push_back(n);
        }
        Eigen::MatrixXd bi(rows.size(), 2), di(rows.size(), inst.delta.cols()),
            got(rows.size(), inst.delta.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          bi.row(r) = inst.basis.matrix.block(rows[r], 2 * i, 1, 2);
          di.row(r) = inst.delta.row(rows[r]);
          got.row(r) = full.update.row(rows[r]);
        }
        Eigen::Matrix2d sys = bi.transpose() * bi;
        sys.diagonal().array() += inst.ridge * (1.0 - inst.activity(i));
        const Eigen::MatrixXd alpha = sys.fullPivLu().solve(bi.transpose() * di);
        worst_block = std::max(worst_block, relative_error(got, bi * alpha));
      }
    }
    return Verdict{worst_block <= 1e-10 && outside == 0.0,
                   fmt("block-local max rel err %.3g; max |row| outside blocks %.3g (%.0f rows)",
                       worst_block, outside, double(outside_rows))};
  });

  run(8, "gradient check", 0, [] {
    struct Terms {
      bool anchor;
      double smooth, trust, feas;
    };
    const Terms configs[] = {{true, 0, 0, 0}, {false, 0.5, 0, 0}, {false, 0, 0.3, 0},
                             {false, 0, 0, 2.0}, {true, 0.1, 0.01, 0.5}};
    const ar::ControlFamily families[] = {ar::ControlFamily::root3d(),
                                          ar::ControlFamily::planar_root(),
                                          ar::ControlFamily::body_point(2)};
    ar::Rng rng(808);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
      const ar::LinearDecoder dec = ar::LinearDecoder::random(4, 3, 12, 3, 8000 + inst);
      const ar::ControlFamily fam = families[inst % 3];
      for (const Terms& terms : configs) {
        std::vector<std::pair<std::size_t, Eigen::VectorXd>> targets;
        if (terms.anchor) {
          for (std::size_t f : {0u, 5u, 11u}) targets.emplace_back(f, random_matrix(rng, fam.dim(), 1));
        }
        const ar::AnchorSet anchors = ar::AnchorSet::from_targets(fam, targets);
        ar::SolverConfig cfg;
        cfg.smooth_weight = terms.smooth;
        cfg.trust_weight = terms.trust;
        cfg.feasibility_weight = terms.feas;
        cfg.max_root_speed = 0.5;
        ar::SoftTokens u(random_matrix(rng, 4, 3));
        u.values() += random_matrix(rng, 4, 3, 0.3);
        const Eigen::MatrixXd fd = ar::testing::central_difference(
            [&](const Eigen::MatrixXd& x) {
              ar::SoftTokens probe = u;
              probe.values() = x;
              return ar::objective(probe, dec, anchors, cfg).total();
            },
            u.values(), 1e-4);
        worst = std::max(worst, relative_error(ar::grad_objective(u, dec, anchors, cfg), fd));
      }
    }
    return Verdict{worst <= 1e-5,
                   fmt("max relative error %.3g (20 instances x 4 single terms + joint)", worst)};
  });

  run(9, "end-to-end refinement", 10.0, [] {
    std::vector<double> after;
    double before = 0.0;
    for (const char* preset : {"rs100", "rs200", "rs500"}) {
      const ar::RunConfig c = ar::run_config_from_json(
          {{"task", {{"kind", "line"}, {"frames", 64}}},
           {"family", "root3d"},
           {"anchors", {{"count", 4}}},
           {"tokens", {{"frames_per_token", 4}}},
           {"preset", preset},
           {"seed", 0}});
      const ar::RefineOutcome out = ar::run_refine(c, ar::build_world(c));
      before = out.control_error_before;
      after.push_back(out.control_error_after);
    }
    const bool converged = after[1] <= 0.1 * before;
    const bool monotone = after[0] >= after[1] && after[1] >= after[2];
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "before %.4f; after rs100 %.4f, rs200 %.4f (ratio %.4f), rs500 %.4f", before,
                  after[0], after[1], after[1] / before, after[2]);
    return Verdict{converged && monotone, buf};
  });

  run(10, "activity routing", 0, [] {
    // Intervals [0, 8) and [8, 16] with q = 2 share the same slope values.
    const ar::Motion m(17, 1);
    const ar::AnchorSet anchors = ar::AnchorSet::from_targets(
        ar::ControlFamily::root3d(), {{0, Eigen::Vector3d(0.3, 0.0, 0.0)},
                                      {8, Eigen::Vector3d::Zero()},
                                      {16, Eigen::Vector3d::Zero()}});
    const ar::IntervalPartition p = ar::build_intervals(anchors, 17);
    const Eigen::VectorXd a = ar::activities(m, anchors, p, anchors.family().tolerance);
    const ar::BasisMatrix b = ar::build_basis(p, 8, 2);
    ar::Rng rng(1010);
    double worst_margin = 1e300;
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::MatrixXd delta(8, 4);
      delta.topRows(4) = random_matrix(rng, 4, 4);
      const Eigen::MatrixXd rot = random_matrix(rng, 4, 4).householderQr().householderQ();
      delta.bottomRows(4) = delta.topRows(4) * rot;  // equal block energy
      for (double ridge : {0.01, 0.1, 1.0}) {
        const ar::RouteResult r = ar::route(delta, b, a, ridge);
        worst_margin = std::min(worst_margin, r.coefficients.topRows(2).norm() -
                                                  r.coefficients.bottomRows(2).norm());
      }
    }
    return Verdict{a(0) == 1.0 && a(1) == 0.0 && worst_margin >= 0.0,
                   fmt("activities (%.2f, %.2f); min ||a_violated|| - ||a_satisfied|| = %.3g",
                       a(0), a(1), worst_margin)};
  });

  run(11, "scaffold exactness", 0, [] {
    ar::Rng rng(1111);
    double prior_err = 0.0, duality = 0.0;
    bool widths = true;
    const ar::ControlFamily families[] = {ar::ControlFamily::root3d(),
                                          ar::ControlFamily::planar_root(),
                                          ar::ControlFamily::body_point(3)};
    for (int inst = 0; inst < 300; ++inst) {
      const ar::ControlFamily fam = families[inst % 3];
      const std::size_t frames = 8 + rng.index(120);
      const std::size_t count = 1 + rng.index(std::min<std::size_t>(frames, 12));
      std::vector<std::size_t> pool(frames);
      for (std::size_t t = 0; t < frames; ++t) pool[t] = t;
      std::vector<std::pair<std::size_t, Eigen::VectorXd>> targets;
      for (std::size_t k = 0; k < count; ++k) {
        std::swap(pool[k], pool[k + rng.index(frames - k)]);
        targets.emplace_back(pool[k], random_matrix(rng, fam.dim(), 1, 2.0));
      }
      const ar::AnchorSet anchors = ar::AnchorSet::from_targets(fam, targets);
      const ar::InterpPrior prior = ar::interp_prior(anchors, frames);
      for (const ar::Anchor& a : anchors.anchors()) {
        prior_err = std::max(prior_err,
                             (prior.values.row(a.frame).transpose() - a.target).cwiseAbs().maxCoeff());
      }
      const ar::ScaffoldFeatures f = ar::build_features(anchors, frames);
      widths = widths && static_cast<std::size_t>(f.values.cols()) == 3 * fam.dim() + 2 &&
               f.width() == 3 * fam.dim() + 2;
      const ar::Motion m = ar::testing::random_motion(rng, frames, 5);
      const ar::ResidualScaffold res = ar::residuals(m, anchors);
      double sum = 0.0;
      for (const auto& r : res.residuals) sum += r.squaredNorm();
      const double loss = ar::anchor_loss(m, anchors);
      duality = std::max(duality, std::abs(sum - loss) / std::max(1.0, loss));
    }
    return Verdict{prior_err <= 1e-9 && widths && duality <= 1e-12,
                   fmt("prior max knot error %.3g; loss/residual gap %.3g", prior_err, duality) +
                       (widths ? "; widths 3d+2 for all families" : "; feature width mismatch")};
  });

  run(12, "AnchorKV identity", 0, [] {
    ar::Rng rng(1212);
    bool bit_exact = true;
    double row_sum = 0.0, ref_err = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const Eigen::Index d = 1 + rng.index(16), nq = 1 + rng.index(10), nk = 1 + rng.index(12);
      const Eigen::MatrixXd q = random_matrix(rng, nq, d), k = random_matrix(rng, nk, d),
                            v = random_matrix(rng, nk, d);
      const Eigen::MatrixXd none(0, d);
      const Eigen::MatrixXd got = ar::attend(q, k, v, none, none);

      // Plain softmax attention over (K, V) alone.
      Eigen::MatrixXd s = q * k.transpose() * (1.0 / std::sqrt(static_cast<double>(d)));
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        s.row(r).array() -= s.row(r).maxCoeff();
        s.row(r) = s.row(r).array().exp();
        s.row(r) /= s.row(r).sum();
      }
      const Eigen::MatrixXd plain = s * v;
      bit_exact = bit_exact && (got.array() == plain.array()).all();

      // Naive loop reference, for numerical agreement only.
      Eigen::MatrixXd naive = Eigen::MatrixXd::Zero(nq, d);
      for (Eigen::Index i = 0; i < nq; ++i) {
        std::vector<double> e(nk);
        double mx = -1e300, z = 0.0;
        for (Eigen::Index j = 0; j < nk; ++j) {
          e[j] = q.row(i).dot(k.row(j)) / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, e[j]);
        }
        for (double& x : e) z += (x = std::exp(x - mx));
        for (Eigen::Index j = 0; j < nk; ++j) naive.row(i) += e[j] / z * v.row(j);
      }
      ref_err = std::max(ref_err, relative_error(got, naive));

      const Eigen::MatrixXd w =
          ar::attention_weights(q, k, random_matrix(rng, 1 + rng.index(8), d));
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        row_sum = std::max(row_sum, std::abs(w.row(r).sum() - 1.0));
      }
    }
    return Verdict{bit_exact && row_sum <= 1e-12 && ref_err <= 1e-12,
                   std::string("empty-memory output ") + (bit_exact ? "bit-exact" : "DIFFERS") +
                       fmt("; max |row sum - 1| %.3g; naive-reference rel err %.3g", row_sum,
                           ref_err)};
  });

  run(13, "determinism", 0, [] {
    const fs::path root = fs::temp_directory_path() / "anchorroute_acceptance";
    fs::remove_all(root);
    const ar::RunConfig c = ar::run_config_from_json({{"seed", 1313}, {"preset", "rs100"}});
    ar::cmd_sample(c, root / "sample_a");
    ar::cmd_sample(c, root / "sample_b");
    ar::cmd_refine(c, root / "refine_a");
    ar::cmd_refine(c, root / "refine_b");
    int compared = 0, differing = 0;
    for (const char* dir : {"sample", "refine"}) {
      for (const auto& entry : fs::directory_iterator(root / (std::string(dir) + "_a"))) {
        const fs::path other = root / (std::string(dir) + "_b") / entry.path().filename();
        std::string a = slurp(entry.path()), b = slurp(other);
        if (std::string(dir) == "refine" && entry.path().filename() == "summary.json") {
          // Wall-clock timing is the one nondeterministic field.
          auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
          ja.erase("wall_time");
          jb.erase("wall_time");
          a = ja.dump();
          b = jb.dump();
        }
        ++compared;
        differing += a != b;
      }
    }
    fs::remove_all(root);
    return Verdict{compared == 9 && differing == 0,
                   fmt("%.0f files compared, %.0f differ (refine wall_time excluded)", compared,
                       differing)};
  });

  std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}

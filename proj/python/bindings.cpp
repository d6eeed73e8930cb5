#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "anchorroute/anchorkv.hpp"
#include "anchorroute/error.hpp"
#include "anchorroute/io.hpp"
#include "anchorroute/pipeline.hpp"
#include "anchorroute/routesolver.hpp"
#include "anchorroute/scaffold.hpp"
#include "anchorroute/synthworld.hpp"
#include "anchorroute/tmd.hpp"

namespace py = pybind11;
namespace ar = anchorroute;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ar::Motion to_motion(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw ar::ShapeError("motion arrays must have shape (T, J, 3)");
  }
  const auto frames = static_cast<std::size_t>(a.shape(0));
  const auto joints = static_cast<std::size_t>(a.shape(1));
  return ar::Motion(frames, joints, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_motion(const ar::Motion& m) {
  Array out({m.frames(), m.joints(), std::size_t{3}});
  std::copy(m.flat().begin(), m.flat().end(), out.mutable_data());
  return out;
}

ar::ControlFamily make_family(const std::string& name, std::size_t joint, double tolerance) {
  ar::ControlFamily f{ar::parse_family(name), joint, tolerance};
  if (f.kind != ar::FamilyKind::BodyPoint) f.joint = 0;
  return f;
}

// anchors: list of (frame, target) pairs
ar::AnchorSet make_anchors(const std::string& family, std::size_t joint, double tolerance,
                           const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& anchors) {
  return ar::AnchorSet::from_targets(make_family(family, joint, tolerance), anchors);
}

ar::RunConfig config_from(const std::string& json_text) {
  try {
    return ar::run_config_from_json(nlohmann::json::parse(json_text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ar::ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_anchorroute, m) {
  m.doc() = "Sparse-anchor motion synthesis: scaffold, TMD sampler, RouteSolver";

  auto base = py::register_exception<ar::Error>(m, "AnchorRouteError", PyExc_RuntimeError);
  py::register_exception<ar::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ar::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ar::DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ar::NonFiniteError>(m, "NonFiniteError", base.ptr());
  py::register_exception<ar::SingularSystemError>(m, "SingularSystemError", base.ptr());
  py::register_exception<ar::InvalidCodebookError>(m, "InvalidCodebookError", base.ptr());
  py::register_exception<ar::InvalidFamilyError>(m, "InvalidFamilyError", base.ptr());

  // scaffold
  m.def(
      "observe",
      [](const Array& motion, const std::string& family, std::size_t joint) {
        return ar::observe(to_motion(motion), make_family(family, joint, 0.05));
      },
      py::arg("motion"), py::arg("family") = "root3d", py::arg("joint") = 0);
  m.def(
      "anchor_loss",
      [](const Array& motion, const std::string& family,
         const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& anchors, std::size_t joint) {
        return ar::anchor_loss(to_motion(motion), make_anchors(family, joint, 0.05, anchors));
      },
      py::arg("motion"), py::arg("family"), py::arg("anchors"), py::arg("joint") = 0);
  m.def(
      "control_error",
      [](const Array& motion, const std::string& family,
         const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& anchors, std::size_t joint) {
        return ar::control_error(to_motion(motion), make_anchors(family, joint, 0.05, anchors));
      },
      py::arg("motion"), py::arg("family"), py::arg("anchors"), py::arg("joint") = 0);
  m.def(
      "interp_prior",
      [](const std::string& family,
         const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& anchors, std::size_t frames,
         std::size_t joint) {
        ar::InterpPrior p = ar::interp_prior(make_anchors(family, joint, 0.05, anchors), frames);
        return py::make_tuple(p.values, p.mask);
      },
      py::arg("family"), py::arg("anchors"), py::arg("frames"), py::arg("joint") = 0,
      "Returns (values T x d_f, mask T).");
  m.def(
      "build_features",
      [](const std::string& family,
         const std::vector<std::pair<std::size_t, Eigen::VectorXd>>& anchors, std::size_t frames,
         std::size_t joint) {
        return ar::build_features(make_anchors(family, joint, 0.05, anchors), frames).values;
      },
      py::arg("family"), py::arg("anchors"), py::arg("frames"), py::arg("joint") = 0);

  // tmd
  m.def(
      "make_codebook",
      [](std::size_t vocab, std::size_t dim, double separation, std::uint64_t seed) {
        return ar::make_codebook(vocab, dim, separation, seed).embeddings();
      },
      py::arg("vocab"), py::arg("dim"), py::arg("separation"), py::arg("seed") = 0);
  m.def(
      "beta",
      [](double t, double exponent, double scale) {
        ar::TMDSchedule s;
        s.exponent = exponent;
        s.scale = scale;
        return ar::beta(t, s);
      },
      py::arg("t"), py::arg("exponent") = 0.9, py::arg("scale") = 3.0);
  m.def(
      "corruption_dist",
      [](const Eigen::MatrixXd& codebook, std::size_t x1, double t) {
        return ar::corruption_dist(ar::Codebook(codebook), x1, t, ar::TMDSchedule{});
      },
      py::arg("codebook"), py::arg("x1"), py::arg("t"));
  m.def(
      "jump_rates",
      [](const Eigen::MatrixXd& codebook, std::size_t current, std::size_t proposal, double t) {
        return ar::jump_rates(ar::Codebook(codebook), current, proposal, t, ar::TMDSchedule{});
      },
      py::arg("codebook"), py::arg("current"), py::arg("proposal"), py::arg("t"));
  m.def(
      "sample_oracle",
      [](const Eigen::MatrixXd& codebook, const ar::TokenSeq& clean, double confusion,
         std::size_t steps, std::uint64_t seed) {
        const ar::Codebook cb(codebook);
        ar::TMDSchedule s;
        s.steps = steps;
        ar::Rng rng(seed);
        ar::OracleDenoiser oracle(clean, cb.size(), confusion, rng.fork(1).next_u64());
        py::gil_scoped_release release;
        return ar::sample(oracle, clean.size(), cb, s, Eigen::MatrixXd(), rng);
      },
      py::arg("codebook"), py::arg("clean"), py::arg("confusion") = 0.0, py::arg("steps") = 64,
      py::arg("seed") = 0, "Run the jump-process sampler against an oracle denoiser.");

  // anchorkv
  m.def(
      "attend",
      [](const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
         std::optional<Eigen::MatrixXd> ks, std::optional<Eigen::MatrixXd> vs) {
        const Eigen::MatrixXd empty(0, q.cols());
        return ar::attend(q, k, v, ks ? *ks : empty, vs ? *vs : empty);
      },
      py::arg("queries"), py::arg("keys"), py::arg("values"), py::arg("scaffold_keys") = py::none(),
      py::arg("scaffold_values") = py::none());

  // routesolver
  m.def(
      "build_basis",
      [](const std::vector<std::pair<std::size_t, std::size_t>>& intervals, std::size_t length,
         std::size_t frames_per_token) {
        ar::IntervalPartition p;
        for (auto [s, e] : intervals) p.intervals.push_back({s, e});
        return ar::build_basis(p, length, frames_per_token).matrix;
      },
      py::arg("intervals"), py::arg("length"), py::arg("frames_per_token"));
  m.def(
      "route",
      [](const Eigen::MatrixXd& delta, const Eigen::MatrixXd& basis,
         const Eigen::VectorXd& activity, double ridge) {
        // Token membership is recovered from the nonzero constant column.
        ar::BasisMatrix b{basis, std::vector<std::optional<std::size_t>>(basis.rows())};
        for (Eigen::Index n = 0; n < basis.rows(); ++n) {
          for (Eigen::Index i = 0; 2 * i < basis.cols(); ++i) {
            if (basis(n, 2 * i) != 0.0) b.token_interval[n] = static_cast<std::size_t>(i);
          }
        }
        const ar::RouteResult r = ar::route(delta, b, activity, ridge);
        return py::make_tuple(r.update, r.coefficients);
      },
      py::arg("delta"), py::arg("basis"), py::arg("activity"), py::arg("ridge"),
      "Returns (routed update, coefficients).");

  // synthworld
  m.def(
      "make_motion",
      [](const std::string& kind, std::size_t frames, std::size_t joints, double noise,
         std::uint64_t seed) {
        ar::SynthTask task;
        task.kind = ar::parse_motion_kind(kind);
        task.frames = frames;
        task.joints = joints;
        task.noise = noise;
        task.seed = seed;
        return from_motion(ar::make_motion(task));
      },
      py::arg("kind") = "line", py::arg("frames") = 64, py::arg("joints") = 6,
      py::arg("noise") = 0.0, py::arg("seed") = 0);

  // pipeline, driven by the same JSON config as the command-line tool
  m.def(
      "run_sample",
      [](const std::string& config_json) {
        const ar::RunConfig c = config_from(config_json);
        const ar::World w = ar::build_world(c);
        ar::SampleOutcome out;
        {
          py::gil_scoped_release release;
          out = ar::run_sample(c, w);
        }
        py::dict d;
        d["tokens"] = out.tokens;
        d["clean_tokens"] = w.clean_tokens;
        d["token_match"] = out.token_match;
        d["motion"] = from_motion(out.motion);
        return d;
      },
      py::arg("config_json") = "{}");
  m.def(
      "run_refine",
      [](const std::string& config_json) {
        const ar::RunConfig c = config_from(config_json);
        const ar::World w = ar::build_world(c);
        std::optional<ar::RefineOutcome> out;
        {
          py::gil_scoped_release release;
          out = ar::run_refine(c, w);
        }
        py::dict d;
        d["control_error_before"] = out->control_error_before;
        d["control_error_after"] = out->control_error_after;
        d["anchor_loss_before"] = out->anchor_loss_before;
        d["anchor_loss_after"] = out->anchor_loss_after;
        d["steps"] = c.solver.steps;
        d["wall_time"] = out->wall_time;
        d["initial_motion"] = from_motion(out->initial_motion);
        d["refined_motion"] = from_motion(out->refined_motion);
        py::list objective;
        for (const auto& row : out->trace) objective.append(row.objective);
        d["objective_trace"] = objective;
        return d;
      },
      py::arg("config_json") = "{}");
  m.def(
      "cmd_sample",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        return ar::cmd_sample(config_from(config_json), out_dir).dump();
      },
      py::arg("config_json"), py::arg("out_dir"), "Writes output files; returns summary JSON.");
  m.def(
      "cmd_refine",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        return ar::cmd_refine(config_from(config_json), out_dir).dump();
      },
      py::arg("config_json"), py::arg("out_dir"), "Writes output files; returns summary JSON.");
}

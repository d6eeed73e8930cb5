#include "anchorroute/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>

#include "anchorroute/error.hpp"

namespace anchorroute {

static_assert(std::endian::native == std::endian::little,
              "binary container assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'R', 'B', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("truncated binary array");
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t NdArray::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void reject_unknown_keys(const nlohmann::json& doc,
                         std::initializer_list<const char*> allowed,
                         const char* context) {
  if (!doc.is_object()) {
    throw ConfigError(std::string(context) + ": expected a JSON object");
  }
  for (const auto& item : doc.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) {
      throw ConfigError(std::string(context) + ": unknown key '" + item.key() + "'");
    }
  }
}

nlohmann::json to_json(const NdArray& array) {
  return {{"shape", array.shape}, {"data", array.data}};
}

NdArray array_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"shape", "data"}, "array");
  try {
    NdArray array{doc.at("shape").get<std::vector<std::size_t>>(),
                  doc.at("data").get<std::vector<double>>()};
    if (array.element_count() != array.data.size()) {
      throw ConfigError("array data length does not match its shape");
    }
    return array;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("array: ") + e.what());
  }
}

void write_binary(std::ostream& out, const NdArray& array) {
  if (array.element_count() != array.data.size()) {
    throw ShapeError("array data length does not match its shape");
  }
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(array.shape.size()));
  for (std::size_t dim : array.shape) put<std::uint64_t>(out, dim);
  out.write(reinterpret_cast<const char*>(array.data.data()),
            static_cast<std::streamsize>(array.data.size() * sizeof(double)));
}

NdArray read_binary(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a binary array container");
  }
  NdArray array;
  const auto ndim = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < ndim; ++i) {
    array.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
  }
  array.data.resize(array.element_count());
  in.read(reinterpret_cast<char*>(array.data.data()),
          static_cast<std::streamsize>(array.data.size() * sizeof(double)));
  if (!in) throw ConfigError("truncated binary array");
  return array;
}

void save_array(const std::filesystem::path& path, const NdArray& array) {
  if (path.extension() == ".json") {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << to_json(array).dump() << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_binary(out, array);
}

NdArray load_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  char head[4] = {};
  in.read(head, sizeof(head));
  in.clear();
  in.seekg(0);
  if (std::memcmp(head, kMagic, sizeof(kMagic)) == 0) return read_binary(in);
  try {
    return array_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

NdArray to_array(const Motion& motion) {
  const auto flat = motion.flat();
  return {{motion.frames(), motion.joints(), 3},
          std::vector<double>(flat.begin(), flat.end())};
}

Motion motion_from_array(const NdArray& array) {
  if (array.shape.size() != 3 || array.shape[2] != 3) {
    throw ShapeError("motion array must have shape [T, J, 3]");
  }
  return Motion(array.shape[0], array.shape[1], array.data);
}

NdArray to_array(const Eigen::MatrixXd& matrix) {
  NdArray array{{static_cast<std::size_t>(matrix.rows()),
                 static_cast<std::size_t>(matrix.cols())},
                {}};
  array.data.reserve(static_cast<std::size_t>(matrix.size()));
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) array.data.push_back(matrix(r, c));
  }
  return array;
}

Eigen::MatrixXd matrix_from_array(const NdArray& array) {
  if (array.shape.size() != 2) throw ShapeError("matrix array must be 2-D");
  if (array.element_count() != array.data.size()) {
    throw ShapeError("array data length does not match its shape");
  }
  Eigen::MatrixXd m(array.shape[0], array.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = array.data[k++];
  }
  return m;
}

nlohmann::json to_json(const AnchorSet& anchors) {
  const ControlFamily& family = anchors.family();
  nlohmann::json doc{{"family", family_name(family.kind)},
                     {"tolerance", family.tolerance},
                     {"anchors", nlohmann::json::array()}};
  if (family.kind == FamilyKind::BodyPoint) doc["joint"] = family.joint;
  for (const Anchor& a : anchors.anchors()) {
    doc["anchors"].push_back(
        {{"frame", a.frame},
         {"target", std::vector<double>(a.target.data(),
                                        a.target.data() + a.target.size())}});
  }
  return doc;
}

AnchorSet anchors_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"family", "joint", "tolerance", "anchors"}, "anchor set");
  try {
    ControlFamily family;
    family.kind = parse_family(doc.at("family").get<std::string>());
    if (doc.contains("joint")) {
      if (family.kind != FamilyKind::BodyPoint) {
        throw ConfigError("anchor set: 'joint' only applies to body_point");
      }
      family.joint = doc.at("joint").get<std::size_t>();
    } else if (family.kind == FamilyKind::BodyPoint) {
      throw ConfigError("anchor set: body_point requires 'joint'");
    }
    if (doc.contains("tolerance")) family.tolerance = doc.at("tolerance").get<double>();
    std::vector<Anchor> anchors;
    for (const auto& item : doc.at("anchors")) {
      reject_unknown_keys(item, {"frame", "target"}, "anchor");
      const auto target = item.at("target").get<std::vector<double>>();
      anchors.push_back({item.at("frame").get<std::size_t>(), family.observed_joint(),
                         Eigen::Map<const Eigen::VectorXd>(
                             target.data(), static_cast<Eigen::Index>(target.size()))});
    }
    return AnchorSet(family, std::move(anchors));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("anchor set: ") + e.what());
  }
}

nlohmann::json to_json(const SolverConfig& config) {
  return {{"smooth_weight", config.smooth_weight},
          {"trust_weight", config.trust_weight},
          {"feasibility_weight", config.feasibility_weight},
          {"ridge", config.ridge},
          {"max_root_speed", config.max_root_speed},
          {"step_size", config.step_size},
          {"steps", config.steps},
          {"optimizer",
           config.optimizer == Optimizer::HeavyBall ? "heavy_ball" : "gd"},
          {"momentum", config.momentum}};
}

SolverConfig solver_config_from_json(const nlohmann::json& doc, SolverConfig base) {
  reject_unknown_keys(doc,
                      {"smooth_weight", "trust_weight", "feasibility_weight", "ridge",
                       "max_root_speed", "step_size", "steps", "optimizer",
                       "momentum"},
                      "solver");
  try {
    auto read = [&](const char* key, auto& field) {
      if (doc.contains(key)) doc.at(key).get_to(field);
    };
    read("smooth_weight", base.smooth_weight);
    read("trust_weight", base.trust_weight);
    read("feasibility_weight", base.feasibility_weight);
    read("ridge", base.ridge);
    read("max_root_speed", base.max_root_speed);
    read("step_size", base.step_size);
    read("steps", base.steps);
    read("momentum", base.momentum);
    if (doc.contains("optimizer")) {
      const auto name = doc.at("optimizer").get<std::string>();
      if (name == "gd") {
        base.optimizer = Optimizer::GradientDescent;
      } else if (name == "heavy_ball") {
        base.optimizer = Optimizer::HeavyBall;
      } else {
        throw ConfigError("solver: unknown optimizer '" + name + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  base.validate();
  return base;
}

void write_sample_trace(std::ostream& out, const std::vector<SampleTraceRow>& rows) {
  out << "step,t,updates,mean_d\n";
  for (const auto& row : rows) {
    out << row.step << ',' << format_double(row.t) << ',' << row.updates << ','
        << format_double(row.mean_distance) << '\n';
  }
}

void write_refine_trace(std::ostream& out, const std::vector<RefineTraceRow>& rows) {
  out << "step,objective,anchor_loss,mean_activity,update_norm\n";
  for (const auto& row : rows) {
    out << row.step << ',' << format_double(row.objective) << ','
        << format_double(row.anchor_loss) << ',' << format_double(row.mean_activity)
        << ',' << format_double(row.update_norm) << '\n';
  }
}

}  // namespace anchorroute

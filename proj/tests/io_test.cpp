#include "anchorroute/io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "anchorroute/error.hpp"
#include "test_support.hpp"

namespace anchorroute {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("anchorroute_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(ArrayTest, JsonRoundTripIsExact) {
  Rng rng(1);
  const Motion m = testing::random_motion(rng, 5, 3);
  const NdArray a = to_array(m);
  EXPECT_EQ(a.shape, (std::vector<std::size_t>{5, 3, 3}));
  const nlohmann::json doc = nlohmann::json::parse(to_json(a).dump());
  EXPECT_EQ(motion_from_array(array_from_json(doc)), m);
}

TEST(ArrayTest, BinaryLayout) {
  NdArray a{{2, 2}, {1.0, -2.5, 3.25, 1e-300}};
  std::stringstream buf;
  write_binary(buf, a);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 2 * 8u + 4 * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "ARB1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2);  // ndim, little-endian
  double second;
  std::memcpy(&second, bytes.data() + 4 + 4 + 16 + 8, 8);
  EXPECT_EQ(second, -2.5);
  const NdArray back = read_binary(buf);
  EXPECT_EQ(back.shape, a.shape);
  EXPECT_EQ(back.data, a.data);
}

TEST(ArrayTest, SaveLoadBothFormats) {
  const fs::path dir = scratch_dir("save");
  Rng rng(2);
  const Eigen::MatrixXd m = testing::random_matrix(rng, 4, 7);
  save_array(dir / "m.json", to_array(m));
  save_array(dir / "m.bin", to_array(m));
  EXPECT_EQ(matrix_from_array(load_array(dir / "m.json")), m);
  EXPECT_EQ(matrix_from_array(load_array(dir / "m.bin")), m);
  EXPECT_THROW(load_array(dir / "missing.bin"), ConfigError);
}

TEST(ArrayTest, MalformedInputRejected) {
  EXPECT_THROW(array_from_json({{"shape", {2, 2}}, {"data", {1.0}}}), ConfigError);
  EXPECT_THROW(array_from_json({{"shape", {1}}, {"data", {1.0}}, {"extra", 1}}), ConfigError);
  std::stringstream junk("XXXX");
  EXPECT_THROW(read_binary(junk), ConfigError);
  EXPECT_THROW(motion_from_array(NdArray{{2, 2}, {1, 2, 3, 4}}), ShapeError);
}

TEST(AnchorJsonTest, RoundTrip) {
  const AnchorSet a = AnchorSet::from_targets(
      ControlFamily::body_point(3, 0.02),
      {{7, Eigen::Vector3d(0.1, 0.2, 0.3)}, {2, Eigen::Vector3d(-1, 0, 1)}});
  const AnchorSet back = anchors_from_json(nlohmann::json::parse(to_json(a).dump()));
  EXPECT_EQ(back.family(), a.family());
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_EQ(back[n].frame, a[n].frame);
    EXPECT_EQ(back[n].target, a[n].target);
  }
}

TEST(AnchorJsonTest, StrictParsing) {
  using nlohmann::json;
  EXPECT_THROW(anchors_from_json(json{{"family", "root3d"}, {"anchors", json::array()}, {"x", 1}}),
               ConfigError);
  EXPECT_THROW(anchors_from_json(json{{"family", "body_point"}, {"anchors", json::array()}}),
               ConfigError);
  EXPECT_THROW(anchors_from_json(json{{"family", "root3d"}, {"joint", 1}, {"anchors", json::array()}}),
               ConfigError);
  EXPECT_THROW(anchors_from_json(json{{"family", "planar_root"},
                                      {"anchors", {{{"frame", 1}, {"target", {1, 2, 3}}}}}}),
               ConfigError);
  const AnchorSet planar = anchors_from_json(
      json{{"family", "planar_root"}, {"anchors", {{{"frame", 1}, {"target", {1, 2}}}}}});
  EXPECT_EQ(planar.family().kind, FamilyKind::PlanarRoot);
}

TEST(SolverJsonTest, RoundTripAndDefaults) {
  SolverConfig c;
  c.optimizer = Optimizer::HeavyBall;
  c.steps = 17;
  c.ridge = 0.25;
  const SolverConfig back = solver_config_from_json(to_json(c));
  EXPECT_EQ(back.optimizer, Optimizer::HeavyBall);
  EXPECT_EQ(back.steps, 17u);
  EXPECT_EQ(back.ridge, 0.25);
  EXPECT_EQ(solver_config_from_json(nlohmann::json::object()).steps, SolverConfig{}.steps);
  EXPECT_THROW(solver_config_from_json({{"stepz", 3}}), ConfigError);
  EXPECT_THROW(solver_config_from_json({{"optimizer", "adam"}}), ConfigError);
}

TEST(TraceCsvTest, Headers) {
  std::ostringstream s, r;
  write_sample_trace(s, {{1, 0.5, 3, 0.25}});
  write_refine_trace(r, {{0, 1.5, 1.0, 0.5, 0.125}});
  EXPECT_EQ(s.str(), "step,t,updates,mean_d\n1,0.5,3,0.25\n");
  EXPECT_EQ(r.str(), "step,objective,anchor_loss,mean_activity,update_norm\n0,1.5,1,0.5,0.125\n");
}

}  // namespace
}  // namespace anchorroute

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "cello/csv.hpp"
#include "cello/dataset.hpp"
#include "cello/io_util.hpp"
#include "cello/scene.hpp"

namespace cello {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("cello_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
  }
  std::string error_of(const std::function<void()>& f) const {
    try {
      f();
    } catch (const std::runtime_error& e) {
      return e.what();
    }
    return {};
  }
};

TEST(Pairs, HandEnumeratedExamples) {
  EXPECT_EQ(enumerate_pairs(6).size(), 14u);
  EXPECT_EQ(enumerate_pairs(2), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
  EXPECT_TRUE(enumerate_pairs(1).empty());
}

TEST(Pairs, ExhaustiveRuleCheck) {
  for (std::size_t l = 2; l <= 20; ++l) {
    std::set<std::pair<std::size_t, std::size_t>> expected;
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j)
        if (i < j && j - i <= 4) expected.insert({i, j});
    const auto got = enumerate_pairs(l);
    EXPECT_EQ(std::set(got.begin(), got.end()), expected) << "l = " << l;
    EXPECT_EQ(got.size(), expected.size());
  }
}

TEST(Csv, DoublesRoundTrip) {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 6.02214076e23, 0.0}) {
    double back = 0;
    ASSERT_TRUE(csv::parse_double(csv::format_double(v), back));
    EXPECT_EQ(back, v);
  }
  double x = 0;
  EXPECT_FALSE(csv::parse_double("1.5abc", x));
  const auto f = csv::split(" a , b,c ");
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0], "a");
  EXPECT_EQ(f[2], "c");
}

TEST(Csv, MatrixRoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2.5, -3, 1e-17, 0, 7;
  std::ostringstream out;
  write_matrix_csv(out, m);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "# shape: 2 x 3");
  std::istringstream in(out.str());
  EXPECT_EQ(read_matrix_csv(in), m);
}

TEST_F(TempDir, IdentityPoseRow) {
  write("poses.csv", "1,0,0,0, 0,1,0,0, 0,0,1,0\n");
  const auto poses = read_poses_csv(dir / "poses.csv");
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].matrix(), Eigen::Matrix4d::Identity());
}

TEST_F(TempDir, ErrorsNameFileAndRow) {
  write("poses.csv", "1,0,0,0,0,1,0,0,0,0,1,0\n1,0,0,0,0,1,0,0,0,0,1.01,0\n");
  std::string msg = error_of([&] { read_poses_csv(dir / "poses.csv"); });
  EXPECT_NE(msg.find("poses.csv: row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("orthonormal"), std::string::npos) << msg;

  write("bad.csv", "x,y,z\n1,2,3\n4,five,6\n");
  msg = error_of([&] { read_cloud_csv(dir / "bad.csv"); });
  EXPECT_NE(msg.find("bad.csv: row 3"), std::string::npos) << msg;

  write("short.csv", "x,y,z\n1,2\n");
  msg = error_of([&] { read_cloud_csv(dir / "short.csv"); });
  EXPECT_NE(msg.find("expected 3 values"), std::string::npos) << msg;

  write("header.csv", "a,b,c\n");
  msg = error_of([&] { read_cloud_csv(dir / "header.csv"); });
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
}

TEST_F(TempDir, CountMismatchIsReported) {
  write("poses.csv", "1,0,0,0,0,1,0,0,0,0,1,0\n1,0,0,0,0,1,0,0,0,0,1,0\n");
  write("a.csv", "x,y,z\n1,2,3\n");
  const std::string msg = error_of([&] { load_dataset(dir); });
  EXPECT_NE(msg.find("2 poses for 1 cloud files"), std::string::npos) << msg;
  fs::remove(dir / "poses.csv");
  EXPECT_NE(error_of([&] { load_dataset(dir); }).find("missing"), std::string::npos);
}

TEST_F(TempDir, DatasetRoundTripIsLossless) {
  const SequenceDataset ds = generate_corridor_sequence(SceneSpec{.archetype = Archetype::hallway, .points = 300, .sigma = 0.01, .seed = 4}, 4, 0.5);
  save_dataset(ds, dir / "seq");
  const SequenceDataset back = load_dataset(dir / "seq");
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.clouds[i].points(), ds.clouds[i].points());
    EXPECT_EQ(back.poses[i].matrix(), ds.poses[i].matrix());
    EXPECT_EQ(back.names[i], ds.names[i]);
  }
  save_dataset(back, dir / "again");
  EXPECT_EQ(read_file(dir / "seq" / "poses.csv"), read_file(dir / "again" / "poses.csv"));
  EXPECT_EQ(read_file(dir / "seq" / "cloud_0002.csv"), read_file(dir / "again" / "cloud_0002.csv"));
}

TEST_F(TempDir, AtomicWriteLeavesNoTemporaries) {
  write_file_atomic(dir / "out.txt", "first");
  write_file_atomic(dir / "out.txt", "second");
  EXPECT_EQ(read_file(dir / "out.txt"), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 1);
  EXPECT_THROW(read_file(dir / "nope"), std::runtime_error);
}

// Distance from p to the surface of the centered cube of edge s.
double cube_surface_distance(const Eigen::Vector3d& p, double s) {
  const Eigen::Vector3d q = p.cwiseAbs() - Eigen::Vector3d::Constant(s / 2);
  if (q.maxCoeff() > 0) return q.cwiseMax(0.0).norm();
  return -q.maxCoeff();
}

TEST(Scene, NoiselessCubeLiesOnSurface) {
  const Scene sc = generate_scene(SceneSpec{.points = 2000, .motion = Twist()});
  for (const PointCloud* c : {&sc.reference, &sc.reading}) {
    for (Eigen::Index i = 0; i < c->size(); ++i) {
      EXPECT_NEAR(c->point(i).cwiseAbs().maxCoeff(), 0.5, 1e-15);
    }
  }
}

TEST(Scene, NoisyCubeRmsMatchesSigma) {
  const Scene sc = generate_scene(SceneSpec{.points = 10000, .sigma = 0.01, .seed = 1});
  double sum = 0;
  for (Eigen::Index i = 0; i < sc.reference.size(); ++i) {
    const double d = cube_surface_distance(sc.reference.point(i), 1.0);
    sum += d * d;
  }
  const double rms = std::sqrt(sum / static_cast<double>(sc.reference.size()));
  EXPECT_GE(rms, 0.008);
  EXPECT_LE(rms, 0.012);
}

TEST(Scene, TruthAlignsReadingWithReference) {
  const Scene sc = generate_scene(SceneSpec{.points = 3000, .seed = 2});
  const PointCloud moved = transform_cloud(sc.reading, sc.truth);
  for (Eigen::Index i = 0; i < moved.size(); ++i) {
    EXPECT_NEAR(moved.point(i).cwiseAbs().maxCoeff(), 0.5, 1e-12);
  }
}

TEST(Scene, DeterministicAndSeedSensitive) {
  const SceneSpec spec{.archetype = Archetype::cylinder_pair, .points = 500, .sigma = 0.01, .seed = 9};
  EXPECT_EQ(generate_scene(spec).reference.points(), generate_scene(spec).reference.points());
  SceneSpec other = spec;
  other.seed = 10;
  EXPECT_NE(generate_scene(other).reference.points(), generate_scene(spec).reference.points());
}

TEST(Scene, ArchetypeNamesRoundTrip) {
  for (Archetype a : {Archetype::cube, Archetype::cylinder_pair, Archetype::hallway, Archetype::corner,
                      Archetype::planes}) {
    EXPECT_EQ(parse_archetype(to_string(a)), a);
  }
  EXPECT_FALSE(parse_archetype("sphere").has_value());
  EXPECT_THROW(generate_scene(SceneSpec{.size = -1.0}), std::invalid_argument);
  EXPECT_THROW(generate_scene(SceneSpec{.sigma = -0.1}), std::invalid_argument);
}

TEST(Scene, CorridorSequencePoses) {
  const SequenceDataset ds = generate_corridor_sequence(SceneSpec{.archetype = Archetype::hallway, .points = 400}, 6, 0.5);
  ASSERT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.names[3], "cloud_0003");
  const RigidTransform rel = ds.relative_pose(1, 2);
  EXPECT_NEAR(rel.translation().x(), 0.5, 1e-15);
  EXPECT_NEAR(rel.translation().tail<2>().norm(), 0.0, 1e-15);
  EXPECT_TRUE(rel.rotation().isIdentity(1e-15));
}

}  // namespace
}  // namespace cello

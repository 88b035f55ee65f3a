#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "../test_support.hpp"
#include "cello/covariance_sampling.hpp"
#include "cello/scene.hpp"

namespace cello {
namespace {

// Registrar that ignores the clouds and lands at exp(xi) T_bar, with xi drawn
// from N(0, Y) using the sample seed.
Registrar oracle_registrar(const RigidTransform& truth, const Covariance6& y) {
  const Matrix6d l = Eigen::LLT<Matrix6d>(y).matrixL();
  return [truth, l](const RigidTransform&, std::uint64_t seed) {
    Rng rng = make_rng(seed, "oracle");
    RegistrationResult r;
    r.transform = truth * exp_map(Twist(Vector6d(l * standard_normal_vector<6>(rng))));
    r.converged = true;
    return r;
  };
}

TEST(Perturbation, ZeroSpreadReturnsMean) {
  Rng rng(1);
  const RigidTransform t = testing::random_transform(rng);
  const RigidTransform d = draw_initial_transform(PerturbationModel{t, 0.0}, 99);
  EXPECT_EQ(d.matrix(), t.matrix());
}

TEST(Perturbation, Deterministic) {
  const PerturbationModel m{RigidTransform::identity(), 0.05};
  EXPECT_EQ(draw_initial_transform(m, 5).matrix(), draw_initial_transform(m, 5).matrix());
  EXPECT_NE(draw_initial_transform(m, 5).matrix(), draw_initial_transform(m, 6).matrix());
}

TEST(Perturbation, EmpiricalCovariance) {
  Rng rng(2);
  const RigidTransform mean = testing::random_transform(rng);
  const PerturbationModel m{mean, 0.05};
  const RigidTransform mean_inv = mean.inverse();
  Matrix6d sum = Matrix6d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector6d xi = log_map(draw_initial_transform(m, derive_seed(7, "t", i)) * mean_inv).vector();
    sum += xi * xi.transpose();
  }
  const Matrix6d cov = sum / n;
  EXPECT_LT((cov - 0.05 * Matrix6d::Identity()).norm() / (0.05 * std::sqrt(6.0)), 0.03);
}

TEST(Sampling, NoiselessIdenticalCloudsAtTruth) {
  SceneSpec spec;
  spec.archetype = Archetype::planes;
  spec.points = 600;
  const Scene s = generate_scene(spec);
  const SampleSet set = sample_registrations(s.reference, s.reference, RigidTransform::identity(),
                                             PerturbationModel{RigidTransform::identity(), 0.0},
                                             5, IcpConfig{}, 1);
  ASSERT_EQ(set.size(), 5u);
  for (const auto& xi : set.xi) {
    EXPECT_LT(xi.norm(), 1e-9);
  }
}

TEST(Sampling, IndependentOfWorkers) {
  Covariance6 y = Covariance6::Identity() * 1e-3;
  const RigidTransform truth(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1, 0, 0));
  const Registrar reg = oracle_registrar(truth, y);
  const PerturbationModel m{truth, 0.05};
  const SampleSet a = sample_registrations(reg, truth, m, 50, 3, 1);
  const SampleSet b = sample_registrations(reg, truth, m, 50, 3, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.xi[i], b.xi[i]);
    EXPECT_EQ(a.seeds[i], b.seeds[i]);
  }
}

TEST(Sampling, FailuresAreRecordedNotThrown) {
  const Registrar flaky = [](const RigidTransform& init, std::uint64_t seed) {
    if (seed % 2 == 0) {
      throw std::runtime_error("boom");
    }
    RegistrationResult r;
    r.transform = init;
    r.converged = true;
    return r;
  };
  const SampleSet s =
      sample_registrations(flaky, RigidTransform::identity(),
                           PerturbationModel{RigidTransform::identity(), 0.01}, 40, 1);
  EXPECT_EQ(s.size(), 40u);
  int failed = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.xi[i].allFinite()) {
      ++failed;
      EXPECT_EQ(s.converged[i], 0);
    }
  }
  EXPECT_GT(failed, 0);
  EXPECT_THROW(sample_registrations(flaky, RigidTransform::identity(), {}, 1, 1),
               std::invalid_argument);
}

TEST(SampledCovariance, Examples) {
  SampleSet s;
  s.xi.assign(4, Vector6d::Zero());
  EXPECT_EQ(sampled_covariance(s).covariance, Covariance6::Zero());

  Vector6d xi;
  xi << 1, 2, 3, 4, 5, 6;
  s.xi = {xi, -xi};
  const Covariance6 y = sampled_covariance(s).covariance;
  EXPECT_LT((y - 2.0 * xi * xi.transpose()).norm(), 1e-12);
  EXPECT_EQ(y, y.transpose());

  s.xi = {xi};
  EXPECT_THROW(sampled_covariance(s), std::invalid_argument);
}

TEST(SampledCovariance, RecoversKnownDistribution) {
  Covariance6 y = Covariance6::Zero();
  y.diagonal() << 0.01, 0.04, 0.01, 1e-4, 1e-4, 1e-4;
  Rng rng(4);
  const RigidTransform truth = testing::random_transform(rng);
  const SampleSet set = sample_registrations(oracle_registrar(truth, y), truth,
                                             PerturbationModel{truth, 0.05}, 5000, 11);
  const SampledCovariance c = sampled_covariance(dbscan_filter(set));
  EXPECT_LT((c.covariance - y).norm() / y.norm(), 0.15);
}

TEST(Dbscan, SingleTightClusterKept) {
  Rng rng(5);
  SampleSet s;
  for (int i = 0; i < 100; ++i) {
    s.xi.emplace_back(0.01 * standard_normal_vector<6>(rng));
  }
  s.attempts = 100;
  const SampleSet f = dbscan_filter(s);
  EXPECT_EQ(f.size(), 100u);
  EXPECT_FALSE(f.no_cluster);
}

TEST(Dbscan, NearerOfTwoClustersKept) {
  Rng rng(6);
  SampleSet s;
  Vector6d far = Vector6d::Zero();
  far(0) = 2.0;
  Vector6d near = Vector6d::Zero();
  near(1) = 0.1;
  for (int i = 0; i < 200; ++i) {
    const Vector6d c = i % 2 == 0 ? near : far;
    s.xi.emplace_back(c + 0.005 * standard_normal_vector<6>(rng));
  }
  const SampleSet f = dbscan_filter(s);
  ASSERT_EQ(f.size(), 100u);
  for (const auto& x : f.xi) {
    EXPECT_LT((x - near).norm(), 0.1);
  }
}

TEST(Dbscan, NoClusterFlagged) {
  SampleSet s;
  for (int i = 0; i < 10; ++i) {
    Vector6d x = Vector6d::Zero();
    x(0) = i;
    s.xi.push_back(x);
  }
  const SampleSet f = dbscan_filter(s);
  EXPECT_TRUE(f.empty());
  EXPECT_TRUE(f.no_cluster);
  EXPECT_TRUE(dbscan_filter(SampleSet{}).empty());
}

TEST(Dbscan, LabelsMatchHandExample) {
  // Points on a line: {0, 0.05, 0.1} dense with min_pts 3, 0.5 isolated.
  std::vector<Vector6d> pts(4, Vector6d::Zero());
  pts[1](0) = 0.05;
  pts[2](0) = 0.1;
  pts[3](0) = 0.5;
  const std::vector<int> labels = dbscan(pts, 0.06, 2);
  EXPECT_EQ(labels[0], labels[1]);
  EXPECT_EQ(labels[1], labels[2]);
  EXPECT_EQ(labels[3], -1);
  EXPECT_EQ(DbscanConfig{}.effective_min_pts(5000), 10);
  EXPECT_EQ(DbscanConfig{}.effective_min_pts(500), 5);
  // Rotation weight stretches rotation components.
  std::vector<Vector6d> rot(2, Vector6d::Zero());
  rot[1](3) = 0.05;
  EXPECT_EQ(dbscan(rot, 0.06, 2, 1.0)[1], 0);
  EXPECT_EQ(dbscan(rot, 0.06, 2, 2.0)[1], -1);
}

TEST(Dbscan, FilteringNeverIncreasesTrace) {
  Rng rng(7);
  SampleSet s;
  for (int i = 0; i < 300; ++i) {
    s.xi.emplace_back(0.02 * standard_normal_vector<6>(rng));
  }
  for (int i = 0; i < 30; ++i) {
    s.xi.emplace_back(1.0 * standard_normal_vector<6>(rng));
  }
  const double before = sampled_covariance(s).covariance.trace();
  const SampleSet f = dbscan_filter(s);
  EXPECT_LT(f.size(), s.size());
  EXPECT_LE(sampled_covariance(f).covariance.trace(), before);
}

TEST(Divergence, Thresholds) {
  SampleSet s;
  s.xi.assign(10, Vector6d::Zero());
  EXPECT_TRUE(divergence_check(s).accept);
  for (auto& x : s.xi) {
    x(0) = 1.5;
  }
  EXPECT_FALSE(divergence_check(s).accept);
  for (auto& x : s.xi) {
    x.setZero();
    x(4) = 1.2;
  }
  const DivergenceVerdict v = divergence_check(s);
  EXPECT_FALSE(v.accept);
  EXPECT_NEAR(v.mean_rotation_error, 1.2, 1e-12);
}

TEST(Sampling, CylinderHasElongatedRotationSpread) {
  SceneSpec spec;
  spec.archetype = Archetype::cylinder_pair;
  spec.points = 800;
  spec.sigma = 0.005;
  const Scene s = generate_scene(spec);
  const SampleSet set = dbscan_filter(sample_registrations(
      s.reading, s.reference, s.truth, PerturbationModel{s.truth, 0.01}, 60, IcpConfig{}, 2));
  const SampledCovariance c = sampled_covariance(set);
  // The cylinder spins freely about its own axis (z).
  const double wz = c.covariance(5, 5);
  EXPECT_GT(wz, 10.0 * std::max(c.covariance(3, 3), c.covariance(4, 4)));
}

TEST(Csv, SampleRows) {
  SampleSet s;
  Vector6d x;
  x << 1, 2, 3, 4, 5, 6.5;
  s.xi = {x};
  s.converged = {1};
  s.seeds = {42};
  std::ostringstream out;
  write_samples_csv(out, s);
  EXPECT_EQ(out.str(), "seed,u_x,u_y,u_z,w_x,w_y,w_z,converged,cluster\n42,1,2,3,4,5,6.5,1,-1\n");
}

}  // namespace
}  // namespace cello

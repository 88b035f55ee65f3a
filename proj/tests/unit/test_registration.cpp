#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/QR>

#include "../test_support.hpp"
#include "cello/registration.hpp"
#include "cello/scene.hpp"

namespace cello {
namespace {

PointCloud grid_plane(int side, double spacing, double z = 0.0) {
  Eigen::Matrix3Xd p(3, side * side);
  for (int i = 0; i < side * side; ++i) {
    p.col(i) << (i % side) * spacing, (i / side) * spacing, z;
  }
  return PointCloud(p);
}

TEST(IcpConfig, Validation) {
  IcpConfig c;
  EXPECT_NO_THROW(c.validate());
  c.trim_ratio = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.knn = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Matching, IdenticalCloudsMatchThemselves) {
  Rng rng(1);
  Eigen::Matrix3Xd p(3, 50);
  for (int i = 0; i < 50; ++i) {
    p.col(i) = standard_normal_vector<3>(rng);
  }
  const PointCloud c = estimate_normals(PointCloud(p), 10);
  const NeighborIndex idx(c);
  const AssociationSet a = match_points(c, c, idx, 1);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].reading, a[i].reference);
    EXPECT_EQ(a[i].squared_distance, 0.0);
  }
}

TEST(Matching, CountAndBruteForce) {
  Rng rng(2);
  Eigen::Matrix3Xd q(3, 200);
  for (int i = 0; i < 200; ++i) {
    q.col(i) = standard_normal_vector<3>(rng);
  }
  Eigen::Matrix3Xd p(3, 10);
  for (int i = 0; i < 10; ++i) {
    p.col(i) = standard_normal_vector<3>(rng);
  }
  const PointCloud ref = estimate_normals(PointCloud(q), 10);
  const NeighborIndex idx(ref);
  const AssociationSet a = match_points(PointCloud(p), ref, idx, 3);
  ASSERT_EQ(a.size(), 30u);
  for (const Association& as : a) {
    // No reference point is strictly closer than a matched one unless it is
    // also among the matches of that reading point.
    int closer = 0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      closer += (q.col(j) - p.col(as.reading)).squaredNorm() < as.squared_distance;
    }
    EXPECT_LT(closer, 3);
    EXPECT_NEAR(as.squared_distance, (q.col(as.reference) - p.col(as.reading)).squaredNorm(),
                1e-15);
  }
}

TEST(Matching, EmptyInputsThrow) {
  const PointCloud ref = estimate_normals(grid_plane(5, 1.0), 5);
  const NeighborIndex idx(ref);
  EXPECT_THROW(match_points(PointCloud(), ref, idx, 3), std::invalid_argument);
}

AssociationSet with_distances(const std::vector<double>& d) {
  AssociationSet a(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    a[i].reading = static_cast<Eigen::Index>(i);
    a[i].squared_distance = d[i];
  }
  return a;
}

TEST(Trim, Examples) {
  const auto ten = with_distances({9, 1, 8, 2, 7, 3, 6, 4, 5, 0});
  const AssociationSet t = trim_outliers(ten, 0.70);
  ASSERT_EQ(t.size(), 7u);
  std::vector<Eigen::Index> ids;
  for (const auto& a : t) {
    ids.push_back(a.reading);
  }
  EXPECT_EQ(ids, (std::vector<Eigen::Index>{1, 3, 5, 6, 7, 8, 9}));
  EXPECT_EQ(trim_outliers(ten, 1.0).size(), 10u);

  const AssociationSet equal = trim_outliers(with_distances(std::vector<double>(8, 1.0)), 0.5);
  ASSERT_EQ(equal.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(equal[i].reading, i);
  }
  EXPECT_EQ(trim_outliers(with_distances(std::vector<double>(1000, 1.0)), 0.7).size(), 700u);
}

TEST(Minimizer, ZeroResidualGivesZeroTwist) {
  const PointCloud ref = estimate_normals(grid_plane(10, 0.1), 8, Eigen::Vector3d(0.5, 0.5, 1));
  const NeighborIndex idx(ref);
  const PlaneSolution s = minimize_point_to_plane(match_points(ref, ref, idx, 1));
  EXPECT_LT(s.increment.vector().norm(), 1e-15);
  EXPECT_TRUE(s.degenerate);  // a plane leaves three directions free
}

TEST(Minimizer, PlaneOffsetAlongNormal) {
  const PointCloud ref = estimate_normals(grid_plane(10, 0.1), 8, Eigen::Vector3d(0.5, 0.5, 1));
  const PointCloud reading = grid_plane(10, 0.1, -0.1);
  const NeighborIndex idx(ref);
  const PlaneSolution s = minimize_point_to_plane(match_points(reading, ref, idx, 1));
  EXPECT_NEAR(s.increment.u().z(), 0.1, 1e-9);
  EXPECT_NEAR(s.increment.u().head<2>().norm(), 0.0, 1e-9);
  EXPECT_NEAR(s.increment.omega().norm(), 0.0, 1e-9);
}

TEST(Minimizer, MatchesDenseLeastSquares) {
  Rng rng(3);
  AssociationSet a(40);
  Eigen::MatrixXd jac(40, 6);
  Eigen::VectorXd rhs(40);
  for (int i = 0; i < 40; ++i) {
    a[i].normal = standard_normal_vector<3>(rng).normalized();
    a[i].reading_point = standard_normal_vector<3>(rng);
    a[i].reference_point = a[i].reading_point + 0.05 * standard_normal_vector<3>(rng);
    jac.row(i) << a[i].normal.transpose(),
        a[i].reading_point.cross(a[i].normal).transpose();
    rhs(i) = -a[i].residual();
  }
  const Eigen::VectorXd oracle = jac.colPivHouseholderQr().solve(rhs);
  const PlaneSolution s = minimize_point_to_plane(a);
  EXPECT_FALSE(s.degenerate);
  EXPECT_LT((s.increment.vector() - oracle).norm(), 1e-8);
}

TEST(Icp, FixedPointAtIdentity) {
  // With 1-NN every point matches itself. With 3-NN the extra neighbors lie
  // on the same flat patch, so residuals still vanish.
  SceneSpec cube;
  cube.points = 800;
  IcpConfig one;
  one.knn = 1;
  const Scene c = generate_scene(cube);
  const RegistrationResult r1 = icp(c.reference, c.reference, RigidTransform::identity(), one);
  EXPECT_LT(transform_distance(r1.transform, RigidTransform::identity()), 1e-6);
  EXPECT_TRUE(r1.converged);

  SceneSpec planes = cube;
  planes.archetype = Archetype::planes;
  const Scene p = generate_scene(planes);
  const RegistrationResult r3 = icp(p.reference, p.reference, RigidTransform::identity());
  EXPECT_LT(transform_distance(r3.transform, RigidTransform::identity()), 1e-6);
  EXPECT_TRUE(r3.converged);
  EXPECT_LE(r3.iterations, 80);
}

TEST(Icp, NoiselessCubeFromPerturbations) {
  SceneSpec spec;
  spec.points = 1000;
  spec.seed = 4;
  const Scene s = generate_scene(spec);
  Rng rng(5);
  int good = 0;
  for (int i = 0; i < 10; ++i) {
    Vector6d xi;
    for (int k = 0; k < 6; ++k) {
      xi(k) = 0.1 * (2.0 * uniform01(rng) - 1.0);
    }
    const RegistrationResult r =
        icp(s.reading, s.reference, exp_map(Twist(xi)) * s.truth);
    good += log_map(s.truth.inverse() * r.transform).vector().norm() < 1e-2;
    EXPECT_LE(r.iterations, 80);
  }
  EXPECT_GE(good, 9);
}

TEST(Icp, IterationCapRespected) {
  SceneSpec spec;
  spec.points = 500;
  const Scene s = generate_scene(spec);
  IcpConfig c;
  c.max_iterations = 1;
  Vector6d xi = Vector6d::Constant(0.05);
  const RegistrationResult r = icp(s.reading, s.reference, exp_map(Twist(xi)) * s.truth, c);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_FALSE(r.converged);
}

TEST(Icp, TwoCycleStopsAsConverged) {
  // Corridor steps with pillars tend to alternate between two trimmed
  // association sets once near the optimum.
  const SequenceDataset seq = generate_corridor_sequence(
      SceneSpec{.archetype = Archetype::hallway, .points = 2000, .sigma = 0.01, .seed = 200}, 2, 0.5);
  const RigidTransform truth = seq.relative_pose(0, 1);
  IcpConfig plain;
  plain.detect_cycles = false;
  const IcpProblem with_cycles(seq.clouds[1], seq.clouds[0]);
  const IcpProblem without(seq.clouds[1], seq.clouds[0], plain);
  Rng rng(3);
  int capped = 0;
  for (int k = 0; k < 10; ++k) {
    Vector6d xi = 0.05 * standard_normal_vector<6>(rng);
    const RigidTransform init = truth * exp_map(Twist(xi));
    const RegistrationResult a = with_cycles.register_from(init);
    const RegistrationResult b = without.register_from(init);
    EXPECT_TRUE(a.converged);
    EXPECT_LE(a.iterations, b.iterations);
    if (!b.converged) {
      ++capped;
      EXPECT_TRUE(a.cycled);
      EXPECT_LT(transform_distance(a.transform, b.transform), 1e-3);
    }
  }
  EXPECT_GT(capped, 0);
}

TEST(Icp, HallwayAxisUnconstrained) {
  SceneSpec spec;
  spec.archetype = Archetype::hallway;
  spec.points = 1500;
  spec.sigma = 0.005;
  const Scene s = generate_scene(spec);
  const IcpProblem problem(s.reading, s.reference);
  Rng rng(6);
  double along = 0.0;
  double across = 0.0;
  for (int i = 0; i < 30; ++i) {
    Vector6d xi = Vector6d::Zero();
    xi.head<3>() = 0.2 * standard_normal_vector<3>(rng);
    const RegistrationResult r = problem.register_from(exp_map(Twist(xi)) * s.truth);
    const Vector6d e = log_map(s.truth.inverse() * r.transform).vector();
    along += e(0) * e(0);
    across += e(1) * e(1) + e(2) * e(2);
  }
  EXPECT_GT(along, 10.0 * across);
}

TEST(Icp, OneIterationDoesNotIncreaseOwnObjective) {
  SceneSpec spec;
  spec.points = 800;
  spec.sigma = 0.01;
  const Scene s = generate_scene(spec);
  const IcpProblem problem(s.reading, s.reference);
  Rng rng(7);
  for (int i = 0; i < 10; ++i) {
    const RigidTransform pose =
        exp_map(Twist(Vector6d(0.05 * standard_normal_vector<6>(rng)))) * s.truth;
    AssociationSet a = problem.associations_at(pose);
    const double before = point_to_plane_cost(a);
    const PlaneSolution sol = minimize_point_to_plane(a);
    const RigidTransform step = increment_transform(sol.increment);
    for (auto& as : a) {
      as.reading_point = step.apply(as.reading_point);
    }
    EXPECT_LE(point_to_plane_cost(a), before * (1.0 + 1e-12));
  }
}

TEST(Icp, Equivariance) {
  SceneSpec spec;
  spec.points = 800;
  spec.sigma = 0.005;
  const Scene s = generate_scene(spec);
  Rng rng(8);
  const RigidTransform g = testing::random_transform(rng, 1.0, 1.0);
  const RigidTransform init =
      exp_map(Twist(Vector6d(0.03 * standard_normal_vector<6>(rng)))) * s.truth;
  // Normals are oriented toward the frame origin, so carry them explicitly.
  const PointCloud ref = estimate_normals(s.reference);
  const RegistrationResult a = icp(s.reading, ref, init);
  const RegistrationResult b = icp(transform_cloud(s.reading, g), transform_cloud(ref, g),
                                   g * init * g.inverse());
  EXPECT_LT(transform_distance(b.transform, g * a.transform * g.inverse()), 1e-6);
}

TEST(Objective, AlignedPairIsZero) {
  const PointCloud ref = estimate_normals(grid_plane(10, 0.1), 8, Eigen::Vector3d(0.5, 0.5, 1));
  EXPECT_LT(objective_value(ref, ref, RigidTransform::identity()), 1e-12);
}

TEST(Objective, TruthBeatsLargePerturbations) {
  SceneSpec spec;
  spec.points = 1000;
  spec.sigma = 0.01;
  const Scene s = generate_scene(spec);
  const IcpProblem problem(s.reading, s.reference);
  const double at_truth = problem.objective_value(s.truth);
  Rng rng(9);
  int lower = 0;
  for (int i = 0; i < 100; ++i) {
    Vector6d xi = Vector6d::Zero();
    xi.head<3>() = 0.5 * standard_normal_vector<3>(rng).normalized();
    lower += at_truth <= problem.objective_value(exp_map(Twist(xi)) * s.truth);
  }
  EXPECT_GT(lower, 50);
}

TEST(Objective, PlateausAndJumps) {
  SceneSpec spec;
  spec.points = 1000;
  spec.sigma = 0.01;
  const Scene s = generate_scene(spec);
  const IcpProblem problem(s.reading, s.reference);
  // Adjacent grid poses over +-0.1 m re-match some points.
  int changed = 0;
  AssociationSet prev;
  for (int i = -10; i <= 10; ++i) {
    Vector6d xi = Vector6d::Zero();
    xi(0) = 0.01 * i;
    const AssociationSet a = problem.associations_at(exp_map(Twist(xi)) * s.truth);
    if (!prev.empty()) {
      bool diff = a.size() != prev.size();
      for (std::size_t k = 0; !diff && k < a.size(); ++k) {
        diff = a[k].reference != prev[k].reference || a[k].reading != prev[k].reading;
      }
      changed += diff;
    }
    prev = a;
  }
  EXPECT_EQ(changed, 20);
}

TEST(IcpProblem, FiltersAreSeeded) {
  SceneSpec spec;
  spec.points = 1000;
  const Scene s = generate_scene(spec);
  IcpConfig c;
  c.subsample_ratio = 0.5;
  c.filter_seed = 3;
  const IcpProblem a(s.reading, s.reference, c);
  const IcpProblem b(s.reading, s.reference, c);
  EXPECT_EQ(a.reading().size(), 500);
  EXPECT_EQ(a.reading().points(), b.reading().points());
  c.filter_seed = 4;
  const IcpProblem d(s.reading, s.reference, c);
  EXPECT_NE(a.reading().points(), d.reading().points());
}

}  // namespace
}  // namespace cello

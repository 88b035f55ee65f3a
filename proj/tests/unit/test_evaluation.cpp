#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "../test_support.hpp"
#include "cello/diagnostics.hpp"
#include "cello/evaluation.hpp"
#include "cello/random.hpp"
#include "cello/scene.hpp"

namespace cello {
namespace {

double log_density(const Vector6d& x, const Matrix6d& y) {
  return -0.5 * x.dot(y.inverse() * x) - 0.5 * std::log(y.determinant()) -
         3.0 * std::log(2 * std::numbers::pi);
}

TEST(Kl, HandEvaluatedExample) {
  const Matrix6d i = Matrix6d::Identity();
  const double expected = 0.5 * (3.0 - 6.0 + 6.0 * std::log(2.0));
  EXPECT_NEAR(kl_divergence(i, 2 * i), expected, 1e-12);
  EXPECT_NEAR(expected, 0.579, 5e-4);

  // Monte-Carlo estimate of E_{x ~ N(0, Y0)}[log p0(x) - log p1(x)].
  Rng rng(1);
  const int n = 200000;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    const Vector6d x = standard_normal_vector<6>(rng);
    sum += log_density(x, i) - log_density(x, 2 * i);
  }
  EXPECT_NEAR(sum / n, kl_divergence(i, 2 * i), 0.02 * expected);
  EXPECT_EQ(kl_divergence(i, i), 0.0);
}

TEST(Kl, NonNegativeAndCongruenceInvariant) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const Matrix6d a = testing::random_spd(rng);
    const Matrix6d b = testing::random_spd(rng);
    const double kl = kl_divergence(a, b);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl_divergence(a, a), 0.0, 1e-12);
    if (k < 20) {
      Matrix6d m;
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) m(r, c) = standard_normal(rng);
      EXPECT_NEAR(kl_divergence(m * a * m.transpose(), m * b * m.transpose()), kl, 1e-8 * (1 + kl));
    }
  }
}

TEST(Kl, SingularIsRegularizedAndIndefiniteThrows) {
  Matrix6d s = Matrix6d::Identity();
  s(5, 5) = 0.0;
  const WarningSink previous = set_warning_sink([](std::string_view) {});
  const KlResult r = kl_divergence_checked(Matrix6d::Identity(), s);
  set_warning_sink(previous);
  EXPECT_TRUE(r.regularized);
  EXPECT_TRUE(std::isfinite(r.value));
  Matrix6d neg = Matrix6d::Identity();
  neg(0, 0) = -1.0;
  EXPECT_THROW(kl_divergence(Matrix6d::Identity(), neg), std::domain_error);
}

TEST(Baseline, Examples) {
  const Matrix6d i = Matrix6d::Identity();
  EXPECT_EQ(baseline_covariance(std::vector<Covariance6>{i, 3 * i}), 2 * i);
  EXPECT_EQ(baseline_covariance(std::vector<Covariance6>{3 * i}), 3 * i);
  EXPECT_THROW(baseline_covariance(std::vector<Covariance6>{}), std::invalid_argument);

  Rng rng(3);
  std::vector<TrainingExample> data(4);
  for (auto& ex : data) {
    ex.descriptor.values = Eigen::VectorXd::Random(5);
    ex.covariance = testing::random_spd(rng);
  }
  PredictorModel m = PredictorModel::initialized(data);
  m.theta = WeightMatrix(5);
  EXPECT_LT((baseline_covariance(data) - predict(Eigen::VectorXd::Random(5), m)).norm(), 1e-14);
}

TEST(Consistency, Thresholds) {
  EXPECT_EQ(classify_consistency(3.5), Consistency::optimistic);
  EXPECT_EQ(classify_consistency(1.0), Consistency::pessimistic);
  EXPECT_EQ(classify_consistency(2.0), Consistency::consistent);
  EXPECT_EQ(classify_consistency(3.0), Consistency::consistent);
  EXPECT_EQ(classify_consistency(1.5), Consistency::consistent);
  EXPECT_EQ(to_string(Consistency::optimistic), "optimistic");
}

TEST(Consistency, ReportExcludesNonConverged) {
  std::vector<TrajectoryResult> t(3);
  t[0].mahalanobis = 1.0;
  t[1].mahalanobis = 2.0;
  t[2].mahalanobis = 100.0;
  t[2].converged = false;
  const ConsistencyReport r = consistency_report(t);
  EXPECT_DOUBLE_EQ(r.mean_mahalanobis, 1.5);
  EXPECT_EQ(r.included, 2u);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(r.classification, Consistency::consistent);
  EXPECT_EQ(consistency_report(t, true).classification, Consistency::optimistic);
  EXPECT_THROW(consistency_report({t[2]}), std::invalid_argument);
}

TEST(Trajectory, IdenticalCloudsWithoutPerturbationAreExact) {
  // Flat patches make the identity an exact ICP fixed point.
  const Scene sc = generate_scene(SceneSpec{.archetype = Archetype::planes, .points = 800});
  SequenceDataset seq;
  for (int i = 0; i < 4; ++i) {
    seq.clouds.push_back(sc.reference);
    seq.poses.push_back(RigidTransform::identity());
    seq.names.push_back("c" + std::to_string(i));
  }
  const Covariance6 y = 1e-4 * Covariance6::Identity();
  const TrajectoryResult r = run_trajectory(
      seq, icp_step_registrar(), [&](const PointCloud&, const PointCloud&, const RigidTransform&) { return y; },
      0.0, 7);
  ASSERT_EQ(r.step_estimates.size(), 3u);
  for (const auto& s : r.step_estimates) {
    EXPECT_LT(transform_distance(s, RigidTransform::identity()), 1e-6);
  }
  EXPECT_LT(r.final_error.norm(), 1e-6);
  EXPECT_LT(r.mahalanobis, 1e-3);
  EXPECT_TRUE(r.converged);
}

TEST(Trajectory, CompoundingMatchesMonteCarlo) {
  // Oracle steps T_bar exp(xi), xi ~ N(0, Y*), compared with 1e5 simulated
  // two-step trajectories.
  SequenceDataset seq;
  seq.poses = {RigidTransform::identity(),
               exp_map(Twist(Eigen::Vector3d(1.0, 0.2, 0.0), Eigen::Vector3d(0.0, 0.0, 0.4))),
               exp_map(Twist(Eigen::Vector3d(1.5, 0.4, 0.1), Eigen::Vector3d(0.1, 0.0, 0.9)))};
  // Each cloud holds one point whose x coordinate is its index.
  for (int i = 0; i < 3; ++i) {
    seq.clouds.emplace_back(Eigen::Matrix3Xd(Eigen::Vector3d(i, 0, 0)));
  }
  seq.names = {"a", "b", "c"};
  Covariance6 y = Covariance6::Identity() * 1e-3;
  y(0, 0) = 4e-3;
  y(5, 5) = 2e-3;
  y(1, 5) = y(5, 1) = 1e-3;
  const Eigen::LLT<Matrix6d> llt(y);
  const Matrix6d l = llt.matrixL();

  const StepRegistrar oracle = [&](const PointCloud&, const PointCloud& reference, const RigidTransform&,
                                   std::uint64_t seed) {
    Rng rng(seed);
    RegistrationResult res;
    const auto i = static_cast<std::size_t>(reference.point(0).x());
    const RigidTransform truth = seq.relative_pose(i, i + 1);
    res.transform = truth * exp_map(Twist(Vector6d(l * standard_normal_vector<6>(rng))));
    res.converged = true;
    return res;
  };
  const TrajectoryResult r = run_trajectory(
      seq, oracle, [&](const PointCloud&, const PointCloud&, const RigidTransform&) { return y; }, 0.05, 3);

  // Means are the realized step estimates; the simulation perturbs around them.
  Rng rng(11);
  const RigidTransform f = r.step_estimates[0] * r.step_estimates[1];
  const Matrix6d mc = testing::empirical_second_moment(
      [&] {
        const RigidTransform a = r.step_estimates[0] * exp_map(Twist(Vector6d(l * standard_normal_vector<6>(rng))));
        const RigidTransform b = r.step_estimates[1] * exp_map(Twist(Vector6d(l * standard_normal_vector<6>(rng))));
        return log_map(f.inverse() * a * b).vector();
      },
      100000);
  EXPECT_LT((r.final_covariance - mc).norm() / mc.norm(), 0.1);
  EXPECT_LT((r.final_covariance - mc).norm() / mc.norm(), 0.02);
}

TEST(Trajectory, GroundPlaneCovarianceRotatesIntoWorld) {
  TrajectoryResult t;
  t.final_estimate = RigidTransform(so3_exp(Eigen::Vector3d(0, 0, std::numbers::pi / 2)), Eigen::Vector3d(1, 2, 0));
  t.final_covariance = Covariance6::Identity();
  t.final_covariance(0, 0) = 4.0;
  const Eigen::Matrix2d c = ground_plane_covariance(t);
  EXPECT_NEAR(c(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(c(1, 1), 4.0, 1e-12);
  EXPECT_NEAR(c(0, 1), 0.0, 1e-12);
}

TEST(PredictorEvaluation, ExactPredictorHasZeroKl) {
  Rng rng(4);
  std::vector<TrainingExample> data(6);
  for (int k = 0; k < 6; ++k) {
    data[k].descriptor.values = Eigen::VectorXd::Zero(6);
    data[k].descriptor.values(k) = 1.0;
    data[k].covariance = testing::random_spd(rng);
    data[k].pair_id = "p" + std::to_string(k);
  }
  PredictorModel m = PredictorModel::initialized(data);
  m.theta = WeightMatrix::scaled_identity(6, 100.0);
  const PredictorEvaluation e = evaluate_predictor(data, m);
  EXPECT_LT(e.mean_kl_learned, 1e-12);
  EXPECT_GT(e.mean_kl_baseline, 0.0);
  EXPECT_TRUE(std::isnan(e.mean_kl_censi));

  std::vector<Covariance6> censi(6, 1e-4 * Covariance6::Identity());
  const PredictorEvaluation c = evaluate_predictor(data, m, censi, true);
  EXPECT_GT(c.mean_kl_censi, c.mean_kl_baseline);
  EXPECT_GT(c.mean_kl_learned, 1.0);  // leave-one-out cannot see the query

  std::ostringstream out;
  write_pair_evaluation_csv(out, e);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# kl_direction: KL(sampled || predicted)");
  std::getline(in, line);
  EXPECT_EQ(line, "pair,kl_baseline,kl_learned,kl_censi");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 3), "p0,");
}

TEST(Export, TrajectoryAndEllipseHeaders) {
  std::vector<TrajectoryResult> t(1);
  std::ostringstream a, b;
  write_trajectory_csv(a, t);
  write_ellipse_csv(b, t);
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "trajectory,d_m,d_m_translation,d_m_rotation,translation_error,rotation_error,converged");
  EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "trajectory,x,y,truth_x,truth_y,cov_xx,cov_xy,cov_yy");
}

}  // namespace
}  // namespace cello

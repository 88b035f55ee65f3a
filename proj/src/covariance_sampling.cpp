#include "cello/covariance_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "cello/random.hpp"

namespace cello {

RigidTransform draw_initial_transform(const PerturbationModel& model,
                                      std::uint64_t seed) {
  if (model.a < 0.0) {
    throw std::invalid_argument("PerturbationModel: a must be >= 0");
  }
  if (model.a == 0.0) {
    return model.mean;
  }
  Rng rng = make_rng(seed, "initial_transform");
  const Vector6d xi = std::sqrt(model.a) * standard_normal_vector<6>(rng);
  return exp_map(Twist(xi)) * model.mean;
}

SampleSet sample_registrations(const Registrar& registrar,
                               const RigidTransform& truth,
                               const PerturbationModel& model, int n,
                               std::uint64_t seed, int workers) {
  if (n < 2) {
    throw std::invalid_argument("sample_registrations: n must be >= 2");
  }
  const auto count = static_cast<std::size_t>(n);
  SampleSet set;
  set.xi.assign(count, Vector6d::Zero());
  set.converged.assign(count, 0);
  set.seeds.resize(count);
  set.attempts = count;
  const RigidTransform truth_inv = truth.inverse();

  auto run = [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, "sample", i);
    set.seeds[i] = s;
    try {
      const RegistrationResult r = registrar(draw_initial_transform(model, s), s);
      const Vector6d xi = log_map(truth_inv * r.transform).vector();
      if (xi.allFinite()) {
        set.xi[i] = xi;
        set.converged[i] = r.converged ? 1 : 0;
      } else {
        set.xi[i].setConstant(std::numeric_limits<double>::quiet_NaN());
      }
    } catch (const std::exception&) {
      set.xi[i].setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  };

  workers = std::max(1, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      run(i);
    }
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < count;
             i += static_cast<std::size_t>(workers)) {
          run(i);
        }
      });
    }
  }
  return set;
}

SampleSet sample_registrations(const PointCloud& reading,
                               const PointCloud& reference,
                               const RigidTransform& truth,
                               const PerturbationModel& model, int n,
                               const IcpConfig& config, std::uint64_t seed,
                               int workers) {
  if (!config.has_random_filters()) {
    const IcpProblem problem(reading, reference, config);
    return sample_registrations(
        [&problem](const RigidTransform& initial, std::uint64_t) {
          return problem.register_from(initial);
        },
        truth, model, n, seed, workers);
  }
  // Random filters are redrawn for every registration.
  return sample_registrations(
      [&](const RigidTransform& initial, std::uint64_t sample_seed) {
        IcpConfig per_sample = config;
        per_sample.filter_seed = sample_seed;
        return IcpProblem(reading, reference, per_sample).register_from(initial);
      },
      truth, model, n, seed, workers);
}

int DbscanConfig::effective_min_pts(std::size_t n) const {
  if (min_pts > 0) {
    return min_pts;
  }
  return std::max(5, static_cast<int>(n / 500));
}

std::vector<int> dbscan(const std::vector<Vector6d>& points, double eps,
                        int min_pts, double rotation_weight) {
  if (!(eps > 0.0) || min_pts < 1) {
    throw std::invalid_argument("dbscan: eps must be > 0 and min_pts >= 1");
  }
  const std::size_t n = points.size();
  Vector6d w;
  w << 1.0, 1.0, 1.0, rotation_weight, rotation_weight, rotation_weight;
  std::vector<Vector6d> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = points[i].cwiseProduct(w);
  }
  const double eps2 = eps * eps;

  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    if (!scaled[i].allFinite()) {
      return out;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if ((scaled[j] - scaled[i]).squaredNorm() <= eps2) {
        out.push_back(j);
      }
    }
    return out;
  };

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) {
      continue;
    }
    const auto seeds = region(i);
    if (static_cast<int>(seeds.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = next_cluster++;
    label[i] = c;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (label[j] == kNoise) {
        label[j] = c;  // border point
      }
      if (label[j] != kUnvisited) {
        continue;
      }
      label[j] = c;
      const auto nbrs = region(j);
      if (static_cast<int>(nbrs.size()) >= min_pts) {
        queue.insert(queue.end(), nbrs.begin(), nbrs.end());
      }
    }
  }
  return label;
}

SampleSet dbscan_filter(const SampleSet& samples, const DbscanConfig& config) {
  SampleSet out;
  out.attempts = samples.attempts;
  if (samples.empty()) {
    out.no_cluster = true;
    return out;
  }
  const std::vector<int> labels =
      dbscan(samples.xi, config.eps, config.effective_min_pts(samples.size()),
             config.rotation_weight);
  const int clusters =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;

  Vector6d w;
  w << 1.0, 1.0, 1.0, config.rotation_weight, config.rotation_weight,
      config.rotation_weight;
  int best = -1;
  double best_norm = std::numeric_limits<double>::infinity();
  for (int c = 0; c < clusters; ++c) {
    Vector6d sum = Vector6d::Zero();
    std::size_t count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) {
        sum += samples.xi[i];
        ++count;
      }
    }
    const double norm = (sum / static_cast<double>(count)).cwiseProduct(w).norm();
    if (norm < best_norm) {
      best_norm = norm;
      best = c;
    }
  }

  out.kept_cluster = best;
  out.no_cluster = best < 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (best >= 0 && labels[i] == best) {
      out.xi.push_back(samples.xi[i]);
      // converged and seeds are optional for hand-built sets.
      if (i < samples.converged.size()) out.converged.push_back(samples.converged[i]);
      if (i < samples.seeds.size()) out.seeds.push_back(samples.seeds[i]);
      out.cluster.push_back(labels[i]);
    }
  }
  return out;
}

SampledCovariance sampled_covariance(const SampleSet& samples) {
  std::size_t n = 0;
  SampledCovariance result;
  for (const auto& xi : samples.xi) {
    if (!xi.allFinite()) {
      continue;
    }
    result.covariance.noalias() += xi * xi.transpose();
    result.mean += xi;
    ++n;
  }
  if (n < 2) {
    throw std::invalid_argument("sampled_covariance: fewer than two samples");
  }
  result.covariance /= static_cast<double>(n - 1);
  result.mean /= static_cast<double>(n);
  result.n_kept = n;
  result.n_total = std::max(samples.attempts, n);
  result.kept_cluster = samples.kept_cluster;
  return result;
}

DivergenceVerdict divergence_check(const SampleSet& samples,
                                   double max_translation, double max_rotation) {
  DivergenceVerdict v;
  std::size_t n = 0;
  for (const auto& xi : samples.xi) {
    if (!xi.allFinite()) {
      continue;
    }
    v.mean_translation_error += xi.head<3>().norm();
    v.mean_rotation_error += xi.tail<3>().norm();
    ++n;
  }
  if (n == 0) {
    v.accept = false;
    return v;
  }
  v.mean_translation_error /= static_cast<double>(n);
  v.mean_rotation_error /= static_cast<double>(n);
  v.accept = v.mean_translation_error <= max_translation &&
             v.mean_rotation_error <= max_rotation;
  return v;
}

void write_samples_csv(std::ostream& out, const SampleSet& samples) {
  out << "seed,u_x,u_y,u_z,w_x,w_y,w_z,converged,cluster\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples.seeds[i];
    for (int k = 0; k < 6; ++k) {
      out << ',' << samples.xi[i](k);
    }
    const int cluster = samples.cluster.empty() ? -1 : samples.cluster[i];
    out << ',' << static_cast<int>(samples.converged[i]) << ',' << cluster << '\n';
  }
}

}  // namespace cello

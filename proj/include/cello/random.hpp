#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace cello {

// Boost distributions are used instead of <random> ones because their output
// is identical across standard libraries.
using Rng = boost::random::mt19937_64;

/// Stream seed for (root seed, stage name, index). Independent of execution
/// order, so batch results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view stage,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stage, index));
}

inline double standard_normal(Rng& rng) {
  return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform01(Rng& rng) {
  return boost::random::uniform_01<double>()(rng);
}

template <int N>
Eigen::Matrix<double, N, 1> standard_normal_vector(Rng& rng,
                                                   Eigen::Index size = N) {
  Eigen::Matrix<double, N, 1> v(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    v(i) = standard_normal(rng);
  }
  return v;
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& covariance);

}  // namespace cello

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cello/descriptors.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Upper-triangular metric factor Theta of rho(d, d') = |Theta (d - d')|^2.
/// Entries below the diagonal are identically zero; every mutator keeps them
/// so.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  /// Zero matrix of size dim x dim.
  explicit WeightMatrix(Eigen::Index dim, bool diagonal_only = false);
  static WeightMatrix scaled_identity(Eigen::Index dim, double scale,
                                      bool diagonal_only = false);
  /// Throws if `packed` does not hold dim (dim + 1) / 2 entries.
  static WeightMatrix from_packed(Eigen::Index dim,
                                  const std::vector<double>& packed,
                                  bool diagonal_only = false);

  [[nodiscard]] Eigen::Index dim() const { return dense_.rows(); }
  [[nodiscard]] bool diagonal_only() const { return diagonal_only_; }
  [[nodiscard]] double operator()(Eigen::Index r, Eigen::Index c) const {
    return dense_(r, c);
  }
  /// Throws std::out_of_range below the diagonal (or off it in diagonal mode).
  void set(Eigen::Index r, Eigen::Index c, double value);
  [[nodiscard]] const Eigen::MatrixXd& dense() const { return dense_; }
  /// Row-major upper triangle.
  [[nodiscard]] std::vector<double> packed() const;

  /// theta -= step * mask(gradient), mask being the triangle (or diagonal).
  void descend(const Eigen::MatrixXd& gradient, double step);
  [[nodiscard]] Eigen::MatrixXd mask(const Eigen::MatrixXd& m) const;

 private:
  Eigen::MatrixXd dense_;
  bool diagonal_only_ = false;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  int max_epochs = 100;
  double regularization = 1e-3;  // lambda |Theta|_F^2
  double tolerance = 1e-6;       // relative epoch-loss change
  bool logdet_loss = false;      // log det(F) instead of det(F)
  bool diagonal_only = false;
  std::uint64_t seed = 0;
};

struct PredictorModel {
  WeightMatrix theta;
  std::vector<Eigen::VectorXd> descriptors;
  std::vector<Covariance6> covariances;
  std::vector<std::string> ids;
  VoxelGridSpec grid;
  TrainConfig config;

  [[nodiscard]] std::size_t size() const { return descriptors.size(); }
  /// Model with Theta = I / sqrt(dim) over the given examples.
  static PredictorModel initialized(const std::vector<TrainingExample>& dataset,
                                    const VoxelGridSpec& grid = {},
                                    const TrainConfig& config = {});
};

/// (d - d')^T Theta^T Theta (d - d'). Throws on length mismatch.
double descriptor_distance(const Eigen::VectorXd& d, const Eigen::VectorXd& other,
                           const WeightMatrix& theta);

struct Prediction {
  Covariance6 covariance = Covariance6::Zero();
  bool uniform_fallback = false;
};

/// F(d) = sum_k s(rho_k) Y_k / sum_k s(rho_k) with s(x) = exp(-x). Weights
/// are computed relative to the smallest rho, which leaves F unchanged and
/// keeps the largest weight at 1. `exclude` drops one training example
/// (leave-one-out).
Prediction predict_checked(const Eigen::VectorXd& d, const PredictorModel& model,
                           std::ptrdiff_t exclude = -1);
inline Covariance6 predict(const Eigen::VectorXd& d, const PredictorModel& model) {
  return predict_checked(d, model).covariance;
}

struct LossValue {
  double value = 0.0;
  bool regularized = false;
};

/// det(F) + tr(F^-1 Y), or log det(F) + tr(F^-1 Y) with `logdet`.
LossValue loss(const Covariance6& predicted, const Covariance6& sampled,
               bool logdet = false);

struct ObjectiveValue {
  double value = 0.0;            // mean leave-one-out loss + lambda |Theta|^2
  double mean_loss = 0.0;        // mean leave-one-out loss alone
  Eigen::MatrixXd gradient;      // masked to the triangle; empty if not asked
};

/// Full-batch training objective and its analytic gradient in Theta.
ObjectiveValue training_objective(const PredictorModel& model,
                                  bool with_gradient = true);

struct TrainReport {
  std::vector<double> epoch_objective;  // after each epoch, index 0 = initial
  std::vector<double> epoch_loss;       // mean leave-one-out loss
  int epochs = 0;
  bool converged = false;
};

/// SGD with minibatch size 1 and a per-epoch seeded shuffle. Throws
/// std::runtime_error if the objective becomes non-finite.
PredictorModel train(const std::vector<TrainingExample>& dataset,
                     const TrainConfig& config = {},
                     const VoxelGridSpec& grid = {},
                     TrainReport* report = nullptr);

/// Continues SGD from `model`'s current Theta.
TrainReport train_in_place(PredictorModel& model);

inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON container: header (format version, grid, histogram
/// codebook, training config) and payload (packed Theta, training examples).
void save_model(const PredictorModel& model, const std::filesystem::path& path);
/// Throws std::runtime_error on malformed, truncated or mismatched files.
PredictorModel load_model(const std::filesystem::path& path);

std::string model_to_string(const PredictorModel& model);
PredictorModel model_from_string(const std::string& text);

}  // namespace cello

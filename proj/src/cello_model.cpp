#include "cello/cello_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "cello/diagnostics.hpp"
#include "cello/io_util.hpp"
#include "cello/random.hpp"

namespace cello {

using json = nlohmann::json;

WeightMatrix::WeightMatrix(Eigen::Index dim, bool diagonal_only)
    : dense_(Eigen::MatrixXd::Zero(dim, dim)), diagonal_only_(diagonal_only) {}

WeightMatrix WeightMatrix::scaled_identity(Eigen::Index dim, double scale,
                                           bool diagonal_only) {
  WeightMatrix w(dim, diagonal_only);
  w.dense_.diagonal().setConstant(scale);
  return w;
}

WeightMatrix WeightMatrix::from_packed(Eigen::Index dim,
                                       const std::vector<double>& packed,
                                       bool diagonal_only) {
  if (packed.size() != static_cast<std::size_t>(dim * (dim + 1) / 2)) {
    throw std::invalid_argument("WeightMatrix: packed size mismatch");
  }
  WeightMatrix w(dim, diagonal_only);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = r; c < dim; ++c) {
      w.dense_(r, c) = packed[k++];
    }
  }
  if (diagonal_only) {
    w.dense_ = Eigen::MatrixXd(w.dense_.diagonal().asDiagonal());
  }
  return w;
}

void WeightMatrix::set(Eigen::Index r, Eigen::Index c, double value) {
  if (c < r || (diagonal_only_ && c != r)) {
    throw std::out_of_range("WeightMatrix: entry outside the free pattern");
  }
  dense_(r, c) = value;
}

std::vector<double> WeightMatrix::packed() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dim() * (dim() + 1) / 2));
  for (Eigen::Index r = 0; r < dim(); ++r) {
    for (Eigen::Index c = r; c < dim(); ++c) {
      out.push_back(dense_(r, c));
    }
  }
  return out;
}

Eigen::MatrixXd WeightMatrix::mask(const Eigen::MatrixXd& m) const {
  if (diagonal_only_) {
    return Eigen::MatrixXd(m.diagonal().asDiagonal());
  }
  return m.triangularView<Eigen::Upper>();
}

void WeightMatrix::descend(const Eigen::MatrixXd& gradient, double step) {
  if (diagonal_only_) {
    dense_.diagonal() -= step * gradient.diagonal();
  } else {
    dense_.triangularView<Eigen::Upper>() -= step * gradient;
  }
}

PredictorModel PredictorModel::initialized(
    const std::vector<TrainingExample>& dataset, const VoxelGridSpec& grid,
    const TrainConfig& config) {
  if (dataset.empty()) {
    throw std::invalid_argument("PredictorModel: empty training set");
  }
  PredictorModel model;
  const Eigen::Index dim = dataset.front().descriptor.size();
  for (const auto& ex : dataset) {
    if (ex.descriptor.size() != dim) {
      throw std::invalid_argument("PredictorModel: descriptor length mismatch");
    }
    if (!is_valid_covariance(ex.covariance)) {
      throw std::invalid_argument("PredictorModel: training covariance not PSD");
    }
    model.descriptors.push_back(ex.descriptor.values);
    model.covariances.push_back(ex.covariance);
    model.ids.push_back(ex.pair_id);
  }
  model.theta = WeightMatrix::scaled_identity(
      dim, 1.0 / std::sqrt(static_cast<double>(dim)), config.diagonal_only);
  model.grid = grid;
  model.config = config;
  return model;
}

double descriptor_distance(const Eigen::VectorXd& d, const Eigen::VectorXd& other,
                           const WeightMatrix& theta) {
  if (d.size() != other.size() || d.size() != theta.dim()) {
    throw std::invalid_argument("descriptor_distance: length mismatch");
  }
  const Eigen::VectorXd diff = d - other;
  return (theta.dense().triangularView<Eigen::Upper>() * diff).squaredNorm();
}

namespace {

// Convex combination with weights exp(-(rho_j - min rho)).
Prediction weighted_average(const Eigen::VectorXd& rho,
                            const std::vector<Covariance6>& covariances,
                            std::ptrdiff_t exclude, Eigen::VectorXd* weights) {
  const Eigen::Index n = rho.size();
  double rho_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j != exclude) {
      rho_min = std::min(rho_min, rho(j));
    }
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j != exclude) {
      w(j) = std::exp(-(rho(j) - rho_min));
    }
  }
  Prediction p;
  double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    warn("predict: all weights vanished, using uniform weights");
    p.uniform_fallback = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      w(j) = j == exclude ? 0.0 : 1.0;
    }
    total = w.sum();
  }
  w /= total;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (w(j) != 0.0) {
      p.covariance += w(j) * covariances[static_cast<std::size_t>(j)];
    }
  }
  if (weights != nullptr) {
    *weights = std::move(w);
  }
  return p;
}

struct LossDetail {
  double value = 0.0;
  bool regularized = false;
  Covariance6 gradient = Covariance6::Zero();  // dL/dF
};

LossDetail loss_detail(const Covariance6& predicted, const Covariance6& sampled,
                       bool logdet) {
  LossDetail out;
  Covariance6 f = 0.5 * (predicted + predicted.transpose());
  Eigen::LLT<Covariance6> llt(f);
  const double scale = std::max(f.trace(), 0.0) / 6.0;
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const double min_eig =
        Eigen::SelfAdjointEigenSolver<Covariance6>(f, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    singular = min_eig <= 1e-12 * scale;
  }
  if (singular) {
    f += 1e-9 * (scale > 0.0 ? scale : 1.0) * Covariance6::Identity();
    llt.compute(f);
    out.regularized = true;
  }
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Covariance6 f_inv = llt.solve(Covariance6::Identity());
  const Covariance6 f_inv_y = llt.solve(sampled);
  const double trace_term = f_inv_y.trace();
  if (logdet) {
    out.value = log_det + trace_term;
    out.gradient = f_inv - f_inv_y * f_inv;
  } else {
    const double det = std::exp(log_det);
    out.value = det + trace_term;
    out.gradient = det * f_inv - f_inv_y * f_inv;
  }
  out.gradient = 0.5 * (out.gradient + out.gradient.transpose());
  return out;
}

Eigen::MatrixXd stack_descriptors(const PredictorModel& model) {
  Eigen::MatrixXd d(model.theta.dim(), static_cast<Eigen::Index>(model.size()));
  for (std::size_t j = 0; j < model.size(); ++j) {
    d.col(static_cast<Eigen::Index>(j)) = model.descriptors[j];
  }
  return d;
}

Eigen::VectorXd pairwise_rho(const Eigen::MatrixXd& z, Eigen::Index k) {
  return (z.colwise() - z.col(k)).colwise().squaredNorm().transpose();
}

// Leave-one-out loss for example k and the coefficients
// c_j = dL_k / d rho_kj.
double loo_loss(const PredictorModel& model, const Eigen::VectorXd& rho,
                Eigen::Index k, Eigen::VectorXd* coefficients) {
  Eigen::VectorXd w;
  const auto kk = static_cast<std::size_t>(k);
  const Prediction p = weighted_average(rho, model.covariances, k, &w);
  const LossDetail l =
      loss_detail(p.covariance, model.covariances[kk], model.config.logdet_loss);
  if (coefficients != nullptr) {
    // dF/drho_j = -w_j (Y_j - F) with normalized weights.
    Eigen::VectorXd c = Eigen::VectorXd::Zero(rho.size());
    for (Eigen::Index j = 0; j < rho.size(); ++j) {
      if (j == k || w(j) == 0.0) {
        continue;
      }
      const Covariance6 diff =
          model.covariances[static_cast<std::size_t>(j)] - p.covariance;
      c(j) = -w(j) * (l.gradient.cwiseProduct(diff)).sum();
    }
    *coefficients = std::move(c);
  }
  return l.value;
}

void check_trainable(const PredictorModel& model) {
  if (model.size() < 2) {
    throw std::invalid_argument("train: at least two training examples required");
  }
  if (model.theta.dim() != model.descriptors.front().size()) {
    throw std::invalid_argument("train: Theta and descriptor sizes disagree");
  }
}

}  // namespace

Prediction predict_checked(const Eigen::VectorXd& d, const PredictorModel& model,
                           std::ptrdiff_t exclude) {
  if (model.size() == 0 ||
      (model.size() == 1 && exclude == 0)) {
    throw std::invalid_argument("predict: model has no usable training examples");
  }
  if (d.size() != model.theta.dim()) {
    throw std::invalid_argument("predict: descriptor length mismatch");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(model.size());
  Eigen::MatrixXd diff(d.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    diff.col(j) = d - model.descriptors[static_cast<std::size_t>(j)];
  }
  const Eigen::MatrixXd z = model.theta.dense().triangularView<Eigen::Upper>() * diff;
  const Eigen::VectorXd rho = z.colwise().squaredNorm().transpose();
  return weighted_average(rho, model.covariances, exclude, nullptr);
}

LossValue loss(const Covariance6& predicted, const Covariance6& sampled,
               bool logdet) {
  const LossDetail l = loss_detail(predicted, sampled, logdet);
  if (l.regularized) {
    warn("loss: singular prediction, regularized");
  }
  return {l.value, l.regularized};
}

ObjectiveValue training_objective(const PredictorModel& model,
                                  bool with_gradient) {
  check_trainable(model);
  const Eigen::MatrixXd d = stack_descriptors(model);
  const Eigen::MatrixXd z = model.theta.dense().triangularView<Eigen::Upper>() * d;
  const Eigen::Index n = d.cols();

  ObjectiveValue out;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXd ck;
    out.mean_loss +=
        loo_loss(model, pairwise_rho(z, k), k, with_gradient ? &ck : nullptr);
    if (with_gradient) {
      c.row(k) = ck.transpose();
    }
  }
  out.mean_loss /= static_cast<double>(n);
  const double lambda = model.config.regularization;
  out.value = out.mean_loss + lambda * model.theta.dense().squaredNorm();

  if (with_gradient) {
    // sum_kj c_kj 2 (z_k - z_j)(d_k - d_j)^T = 2 Z (diag(r + s) - C - C^T) D^T
    Eigen::MatrixXd m = -(c + c.transpose());
    m.diagonal() += c.rowwise().sum() + c.colwise().sum().transpose();
    const Eigen::MatrixXd full =
        (2.0 / static_cast<double>(n)) * z * m * d.transpose() +
        2.0 * lambda * model.theta.dense();
    out.gradient = model.theta.mask(full);
  }
  return out;
}

TrainReport train_in_place(PredictorModel& model) {
  check_trainable(model);
  const TrainConfig& cfg = model.config;
  const Eigen::MatrixXd d = stack_descriptors(model);
  const Eigen::Index n = d.cols();
  const double lambda = cfg.regularization;

  TrainReport report;
  ObjectiveValue obj = training_objective(model, false);
  report.epoch_objective.push_back(obj.value);
  report.epoch_loss.push_back(obj.mean_loss);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  Eigen::MatrixXd grad(d.rows(), d.rows());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = make_rng(cfg.seed, "train_epoch", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }

    for (Eigen::Index k : order) {
      const Eigen::MatrixXd z =
          model.theta.dense().triangularView<Eigen::Upper>() * d;
      Eigen::VectorXd c;
      loo_loss(model, pairwise_rho(z, k), k, &c);
      // grad = 2 sum_j c_j (z_k - z_j)(d_k - d_j)^T + 2 lambda Theta
      const Eigen::MatrixXd zk = (-(z.colwise() - z.col(k))) * (2.0 * c).asDiagonal();
      const Eigen::MatrixXd dk = -(d.colwise() - d.col(k));
      grad.setZero();
      if (model.theta.diagonal_only()) {
        grad.diagonal() = zk.cwiseProduct(dk).rowwise().sum();
      } else {
        grad.triangularView<Eigen::Upper>() = zk * dk.transpose();
      }
      grad += 2.0 * lambda * model.theta.dense();
      model.theta.descend(grad, cfg.learning_rate);
    }

    obj = training_objective(model, false);
    if (!std::isfinite(obj.value) || !model.theta.dense().allFinite()) {
      std::ostringstream msg;
      msg << "train: objective diverged at epoch " << epoch << " (value "
          << obj.value << ", learning rate " << cfg.learning_rate << ")";
      throw std::runtime_error(msg.str());
    }
    const double prev = report.epoch_objective.back();
    report.epoch_objective.push_back(obj.value);
    report.epoch_loss.push_back(obj.mean_loss);
    report.epochs = epoch;
    if (std::abs(obj.value - prev) <= cfg.tolerance * std::max(std::abs(prev), 1e-300)) {
      report.converged = true;
      break;
    }
  }
  return report;
}

PredictorModel train(const std::vector<TrainingExample>& dataset,
                     const TrainConfig& config, const VoxelGridSpec& grid,
                     TrainReport* report) {
  PredictorModel model = PredictorModel::initialized(dataset, grid, config);
  TrainReport r = train_in_place(model);
  if (report != nullptr) {
    *report = std::move(r);
  }
  return model;
}

namespace {

json grid_to_json(const VoxelGridSpec& g) {
  return {{"counts", {g.counts[0], g.counts[1], g.counts[2]}},
          {"min_corner", {g.min_corner.x(), g.min_corner.y(), g.min_corner.z()}},
          {"extent", {g.extent.x(), g.extent.y(), g.extent.z()}}};
}

VoxelGridSpec grid_from_json(const json& j) {
  VoxelGridSpec g;
  for (int a = 0; a < 3; ++a) {
    g.counts[static_cast<std::size_t>(a)] = j.at("counts").at(a).get<int>();
    g.min_corner(a) = j.at("min_corner").at(a).get<double>();
    g.extent(a) = j.at("extent").at(a).get<double>();
  }
  g.validate();
  return g;
}

}  // namespace

std::string model_to_string(const PredictorModel& model) {
  json codebook = json::array();
  for (const auto& v : histogram_codebook()) {
    codebook.push_back({v.x(), v.y(), v.z()});
  }
  json examples = json::array();
  for (std::size_t k = 0; k < model.size(); ++k) {
    const Covariance6& y = model.covariances[k];
    std::vector<double> cov(y.data(), y.data() + 36);  // symmetric: order moot
    std::vector<double> desc(model.descriptors[k].data(),
                             model.descriptors[k].data() + model.descriptors[k].size());
    examples.push_back({{"id", model.ids[k]}, {"descriptor", desc}, {"covariance", cov}});
  }
  const TrainConfig& c = model.config;
  const json doc = {
      {"format", "cello3d-model"},
      {"format_version", kModelFormatVersion},
      {"grid", grid_to_json(model.grid)},
      {"histogram_codebook", codebook},
      {"histogram_normalization", "point_count"},
      {"config",
       {{"learning_rate", c.learning_rate},
        {"max_epochs", c.max_epochs},
        {"regularization", c.regularization},
        {"tolerance", c.tolerance},
        {"logdet_loss", c.logdet_loss},
        {"diagonal_only", c.diagonal_only},
        {"seed", c.seed}}},
      {"dimension", model.theta.dim()},
      {"theta_packed_upper", model.theta.packed()},
      {"examples", examples}};
  return doc.dump(1);
}

PredictorModel model_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("load_model: malformed model file: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "cello3d-model") {
      throw std::runtime_error("load_model: not a cello3d model file");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw std::runtime_error("load_model: unsupported format version " +
                               std::to_string(version) + " (expected " +
                               std::to_string(kModelFormatVersion) + ")");
    }
    PredictorModel model;
    model.grid = grid_from_json(doc.at("grid"));
    const json& c = doc.at("config");
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.max_epochs = c.at("max_epochs").get<int>();
    model.config.regularization = c.at("regularization").get<double>();
    model.config.tolerance = c.at("tolerance").get<double>();
    model.config.logdet_loss = c.at("logdet_loss").get<bool>();
    model.config.diagonal_only = c.at("diagonal_only").get<bool>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    const auto dim = doc.at("dimension").get<Eigen::Index>();
    model.theta = WeightMatrix::from_packed(
        dim, doc.at("theta_packed_upper").get<std::vector<double>>(),
        model.config.diagonal_only);
    for (const json& ex : doc.at("examples")) {
      const auto desc = ex.at("descriptor").get<std::vector<double>>();
      const auto cov = ex.at("covariance").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(desc.size()) != dim || cov.size() != 36) {
        throw std::runtime_error("load_model: example size mismatch");
      }
      model.descriptors.emplace_back(
          Eigen::Map<const Eigen::VectorXd>(desc.data(), dim));
      model.covariances.emplace_back(Eigen::Map<const Covariance6>(cov.data()));
      model.ids.push_back(ex.at("id").get<std::string>());
    }
    if (model.descriptors.empty()) {
      throw std::runtime_error("load_model: model has no training examples");
    }
    return model;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("load_model: invalid model file: ") + e.what());
  }
}

void save_model(const PredictorModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_string(model));
}

PredictorModel load_model(const std::filesystem::path& path) {
  return model_from_string(read_file(path));
}

}  // namespace cello

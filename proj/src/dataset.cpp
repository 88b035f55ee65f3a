#include "cello/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cello/csv.hpp"
#include "cello/io_util.hpp"

namespace cello {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t row,
                       const std::string& what) {
  throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": " + what);
}

std::vector<double> parse_row(const std::filesystem::path& path, std::size_t row,
                              std::string_view line, std::size_t expected) {
  const auto fields = csv::split(line);
  if (fields.size() != expected) {
    fail(path, row, "expected " + std::to_string(expected) + " values, found " +
                        std::to_string(fields.size()));
  }
  std::vector<double> values(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    if (!csv::parse_double(fields[i], values[i]) || !std::isfinite(values[i])) {
      fail(path, row, "malformed value '" + std::string(fields[i]) + "'");
    }
  }
  return values;
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(
    std::size_t length, std::size_t max_gap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = i + 1; j < length && j - i <= max_gap; ++j) {
      out.emplace_back(i, j);
    }
  }
  return out;
}

PointCloud read_cloud_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    fail(path, 1, "missing header");
  }
  const auto header = csv::split(line);
  if (header.size() != 3 || header[0] != "x" || header[1] != "y" || header[2] != "z") {
    fail(path, 1, "header must be 'x,y,z'");
  }
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) {
      continue;
    }
    const auto v = parse_row(path, row, line, 3);
    values.insert(values.end(), v.begin(), v.end());
  }
  const auto n = static_cast<Eigen::Index>(values.size() / 3);
  return PointCloud(Eigen::Map<const Eigen::Matrix3Xd>(values.data(), 3, n),
                    path.stem().string());
}

void write_cloud_csv(std::ostream& out, const PointCloud& cloud) {
  out << "x,y,z\n";
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out << csv::format_double(cloud.points()(0, i)) << ','
        << csv::format_double(cloud.points()(1, i)) << ','
        << csv::format_double(cloud.points()(2, i)) << '\n';
  }
}

void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ostringstream ss;
  write_cloud_csv(ss, cloud);
  write_file_atomic(path, ss.str());
}

std::vector<RigidTransform> read_poses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::vector<RigidTransform> poses;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line) || line.front() == '#') {
      continue;
    }
    const auto v = parse_row(path, row, line, 12);
    Eigen::Matrix3d r;
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r(i, j) = v[static_cast<std::size_t>(4 * i + j)];
      }
      t(i) = v[static_cast<std::size_t>(4 * i + 3)];
    }
    try {
      poses.push_back(RigidTransform::checked(r, t, 1e-6));
    } catch (const std::invalid_argument&) {
      fail(path, row, "rotation is not orthonormal within 1e-6");
    }
  }
  return poses;
}

void write_poses_csv(std::ostream& out, const std::vector<RigidTransform>& poses) {
  for (const auto& p : poses) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double v = j < 3 ? p.rotation()(i, j) : p.translation()(i);
        out << csv::format_double(v) << ((i == 2 && j == 3) ? '\n' : ',');
      }
    }
  }
}

SequenceDataset load_dataset(const std::filesystem::path& dir) {
  const auto pose_path = dir / "poses.csv";
  if (!std::filesystem::exists(pose_path)) {
    throw std::runtime_error(pose_path.string() + ": missing");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().filename() != "poses.csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  SequenceDataset ds;
  ds.poses = read_poses_csv(pose_path);
  if (ds.poses.size() != files.size()) {
    throw std::runtime_error(pose_path.string() + ": " +
                             std::to_string(ds.poses.size()) + " poses for " +
                             std::to_string(files.size()) + " cloud files");
  }
  for (const auto& f : files) {
    ds.clouds.push_back(read_cloud_csv(f));
    ds.names.push_back(f.stem().string());
  }
  return ds;
}

void save_dataset(const SequenceDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::string name = i < dataset.names.size() && !dataset.names[i].empty()
                           ? dataset.names[i]
                           : [&] {
                               std::ostringstream ss;
                               ss << "cloud_" << std::setw(4) << std::setfill('0') << i;
                               return ss.str();
                             }();
    write_cloud_csv(dir / (name + ".csv"), dataset.clouds[i]);
  }
  std::ostringstream ss;
  write_poses_csv(ss, dataset.poses);
  write_file_atomic(dir / "poses.csv", ss.str());
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  out << "# shape: " << m.rows() << " x " << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << csv::format_double(m(i, j)) << (j + 1 < m.cols() ? ',' : '\n');
    }
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (blank(line) || line.front() == '#') {
      continue;
    }
    std::vector<double> row;
    for (auto f : csv::split(line)) {
      double v = 0.0;
      if (!csv::parse_double(f, v)) {
        throw std::runtime_error("matrix csv: malformed value '" + std::string(f) + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("matrix csv: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

}  // namespace cello

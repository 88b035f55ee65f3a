#include "cello/scene.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cello/random.hpp"

namespace cello {

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::cube: return "cube";
    case Archetype::cylinder_pair: return "cylinder_pair";
    case Archetype::hallway: return "hallway";
    case Archetype::corner: return "corner";
    case Archetype::planes: return "planes";
  }
  return "unknown";
}

std::optional<Archetype> parse_archetype(std::string_view name) {
  for (Archetype a : {Archetype::cube, Archetype::cylinder_pair, Archetype::hallway,
                      Archetype::corner, Archetype::planes}) {
    if (name == to_string(a)) {
      return a;
    }
  }
  return std::nullopt;
}

void SceneSpec::validate() const {
  if (!(size > 0.0) || points < 1 || sigma < 0.0 || !motion.vector().allFinite()) {
    throw std::invalid_argument("SceneSpec: invalid size, point count, sigma or motion");
  }
}

namespace {

// Axis-aligned rectangle: origin + s * e1 + t * e2, s in [0, a], t in [0, b].
struct Patch {
  Eigen::Vector3d origin;
  Eigen::Vector3d e1;
  Eigen::Vector3d e2;
  double a;
  double b;

  [[nodiscard]] double area() const { return a * b; }
  Eigen::Vector3d sample(Rng& rng) const {
    return origin + uniform01(rng) * a * e1 + uniform01(rng) * b * e2;
  }
};

std::vector<Patch> cube_patches(double s) {
  const double h = s / 2.0;
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  return {{{-h, -h, -h}, ey, ez, s, s}, {{h, -h, -h}, ey, ez, s, s},
          {{-h, -h, -h}, ex, ez, s, s}, {{-h, h, -h}, ex, ez, s, s},
          {{-h, -h, -h}, ex, ey, s, s}, {{-h, -h, h}, ex, ey, s, s}};
}

// Walls y = +-s, floor z = -s, ceiling z = 0.5 s. The cross-section is not
// square, so a quarter turn about the axis is not a symmetry.
constexpr double kCeiling = 0.5;

std::vector<Patch> hallway_patches(double s, double x_min, double x_max) {
  const double len = x_max - x_min;
  const double height = (1.0 + kCeiling) * s;
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  return {{{x_min, -s, -s}, ex, ez, len, height},       // wall y = -s
          {{x_min, s, -s}, ex, ez, len, height},        // wall y = +s
          {{x_min, -s, -s}, ex, ey, len, 2 * s},        // floor
          {{x_min, -s, kCeiling * s}, ex, ey, len, 2 * s}};  // ceiling
}

// Floor-to-ceiling square pillars of side 0.3 s against both walls at
// x = k * spacing, clipped to [x_min, x_max]. Only the faces visible from the
// corridor axis are generated.
std::vector<Patch> pillar_patches(double s, double x_min, double x_max, double spacing) {
  std::vector<Patch> out;
  if (!(spacing > 0.0)) {
    return out;
  }
  const double w = 0.3 * s;
  const double height = (1.0 + kCeiling) * s;
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  for (double c = std::ceil((x_min - w) / spacing) * spacing; c - w / 2 < x_max; c += spacing) {
    const double lo = std::max(c - w / 2, x_min);
    const double hi = std::min(c + w / 2, x_max);
    if (hi <= lo) {
      continue;
    }
    for (double side : {-1.0, 1.0}) {
      const double wall = side * s;
      const double face = wall - side * w;
      out.push_back({{lo, face, -s}, ex, ez, hi - lo, height});  // front face
      if (c - w / 2 >= x_min) {
        out.push_back({{c - w / 2, std::min(wall, face), -s}, ey, ez, w, height});
      }
      if (c + w / 2 <= x_max) {
        out.push_back({{c + w / 2, std::min(wall, face), -s}, ey, ez, w, height});
      }
    }
  }
  return out;
}

std::vector<Patch> corner_patches(double s) {
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d o = Eigen::Vector3d::Zero();
  return {{o, ex, ey, s, s}, {o, ex, ez, s, s}, {o, ey, ez, s, s}};
}

std::vector<Patch> plane_patches(double s) {
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  const double h = s / 2.0;
  return {{{-h, -h, -s}, ex, ey, s, s},   // normal z, below
          {{s, -h, -h}, ey, ez, s, s},    // normal x, ahead
          {{-h, s, -h}, ex, ez, s, s}};   // normal y, left
}

Eigen::Matrix3Xd sample_patches(const std::vector<Patch>& patches, int n, Rng& rng) {
  double total = 0.0;
  for (const auto& p : patches) {
    total += p.area();
  }
  Eigen::Matrix3Xd out(3, n);
  for (int i = 0; i < n; ++i) {
    double u = uniform01(rng) * total;
    std::size_t k = 0;
    while (k + 1 < patches.size() && u >= patches[k].area()) {
      u -= patches[k].area();
      ++k;
    }
    out.col(i) = patches[k].sample(rng);
  }
  return out;
}

Eigen::Matrix3Xd sample_cylinder(double diameter, int n, Rng& rng) {
  const double r = diameter / 2.0;
  const double height = 2.0 * diameter;
  const double side = 2.0 * std::numbers::pi * r * height;
  const double cap = std::numbers::pi * r * r;
  Eigen::Matrix3Xd out(3, n);
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng) * (side + 2.0 * cap);
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    if (u < side) {
      out.col(i) << r * std::cos(phi), r * std::sin(phi),
          (uniform01(rng) - 0.5) * height;
    } else {
      const double rho = r * std::sqrt(uniform01(rng));
      const double z = u < side + cap ? -height / 2.0 : height / 2.0;
      out.col(i) << rho * std::cos(phi), rho * std::sin(phi), z;
    }
  }
  return out;
}

void add_noise(Eigen::Matrix3Xd& pts, double sigma, Rng& rng) {
  if (sigma <= 0.0) {
    return;
  }
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    for (int a = 0; a < 3; ++a) {
      pts(a, i) += sigma * standard_normal(rng);
    }
  }
}

}  // namespace

Eigen::Matrix3Xd sample_surface(Archetype archetype, double size, int points,
                                std::uint64_t seed) {
  Rng rng(seed);
  switch (archetype) {
    case Archetype::cube: return sample_patches(cube_patches(size), points, rng);
    case Archetype::cylinder_pair: return sample_cylinder(size, points, rng);
    case Archetype::hallway:
      return sample_patches(hallway_patches(size, -5.0 * size, 5.0 * size), points, rng);
    case Archetype::corner: return sample_patches(corner_patches(size), points, rng);
    case Archetype::planes: return sample_patches(plane_patches(size), points, rng);
  }
  throw std::invalid_argument("sample_surface: unknown archetype");
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.truth = exp_map(spec.motion);

  Eigen::Matrix3Xd q = sample_surface(spec.archetype, spec.size, spec.points,
                                      derive_seed(spec.seed, "scene/reference"));
  Eigen::Matrix3Xd p = sample_surface(spec.archetype, spec.size, spec.points,
                                      derive_seed(spec.seed, "scene/reading"));
  Rng noise = make_rng(spec.seed, "scene/noise");
  add_noise(q, spec.sigma, noise);
  add_noise(p, spec.sigma, noise);

  scene.reference = PointCloud(std::move(q), "reference");
  scene.reading = transform_cloud(PointCloud(std::move(p), "reading"),
                                  scene.truth.inverse());
  return scene;
}

SequenceDataset generate_corridor_sequence(const SceneSpec& spec, int length,
                                           double step, double pillar_spacing) {
  spec.validate();
  if (length < 2) {
    throw std::invalid_argument("generate_corridor_sequence: length must be >= 2");
  }
  if (pillar_spacing < 0.0) {
    throw std::invalid_argument("generate_corridor_sequence: pillar spacing must be >= 0");
  }
  SequenceDataset ds;
  Rng noise = make_rng(spec.seed, "corridor/noise");
  for (int i = 0; i < length; ++i) {
    const double x = step * i;
    const RigidTransform pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(x, 0.0, 0.0));
    Rng rng = make_rng(spec.seed, "corridor/cloud", static_cast<std::uint64_t>(i));
    const double x_min = x - 5.0 * spec.size;
    const double x_max = x + 5.0 * spec.size;
    std::vector<Patch> patches = hallway_patches(spec.size, x_min, x_max);
    const auto pillars = pillar_patches(spec.size, x_min, x_max, pillar_spacing * spec.size);
    patches.insert(patches.end(), pillars.begin(), pillars.end());
    Eigen::Matrix3Xd world = sample_patches(patches, spec.points, rng);
    add_noise(world, spec.sigma, noise);
    ds.clouds.push_back(transform_cloud(PointCloud(std::move(world)), pose.inverse()));
    ds.poses.push_back(pose);
    ds.names.push_back("cloud_" + std::to_string(10000 + i).substr(1));
  }
  return ds;
}

}  // namespace cello

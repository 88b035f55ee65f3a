#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cello/dataset.hpp"
#include "cello/point_cloud.hpp"
#include "cello/se3.hpp"

namespace cello {

enum class Archetype { cube, cylinder_pair, hallway, corner, planes };

std::string_view to_string(Archetype a);
std::optional<Archetype> parse_archetype(std::string_view name);

/// Synthetic scene description. `size` is the characteristic dimension:
///  cube          edge length, centered on the origin
///  cylinder_pair capped cylinder of diameter `size`, height 2 `size`, axis z
///  hallway       corridor along x, 10 size long, 2 size wide, 1.5 size high
///  corner        floor and two walls meeting at the origin, side `size`
///  planes        three orthogonal square patches of side `size`
struct SceneSpec {
  Archetype archetype = Archetype::cube;
  double size = 1.0;       // m
  int points = 2000;       // per cloud
  double sigma = 0.0;      // per-axis noise, m
  std::uint64_t seed = 0;
  /// Ground truth T_bar = exp(motion), mapping reading into reference frame.
  Twist motion{Eigen::Vector3d(0.1, 0.05, 0.0), Eigen::Vector3d(0.0, 0.0, 0.05)};

  void validate() const;
};

struct Scene {
  PointCloud reading;    // P
  PointCloud reference;  // Q
  RigidTransform truth;  // T_bar: T_bar P lies on Q's surface
};

/// Points drawn uniformly by area on the archetype surface (noise-free),
/// in the archetype's own frame.
Eigen::Matrix3Xd sample_surface(Archetype archetype, double size, int points,
                                std::uint64_t seed);

/// Q and P are independent samplings of the same surface, each with its own
/// per-axis Gaussian noise; P is expressed so that T_bar P aligns with Q.
Scene generate_scene(const SceneSpec& spec);

/// Corridor sequence: sensor i at x = i * step looking at the hallway section
/// within +-5 size of it; clouds in sensor frames, poses sensor-to-world.
/// Pillars stand against both walls every `pillar_spacing` size (0: bare
/// walls, leaving motion along the corridor unobservable).
SequenceDataset generate_corridor_sequence(const SceneSpec& spec, int length,
                                           double step, double pillar_spacing = 2.0);

}  // namespace cello

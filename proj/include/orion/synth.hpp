#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orion/box.hpp"
#include "orion/geometry.hpp"
#include "orion/orientation.hpp"

namespace orion::synth {

/// Axis-aligned closed box surface as 12 triangles.
TriMesh cuboid(Vec3 lo, Vec3 hi);
/// Capped cylinder standing on z = z0.
TriMesh cylinder(double radius, double z0, double z1, std::size_t segments = 64);

/// Procedural object prototype centered on the vertical axis through the
/// origin. `period` is the azimuth after which it repeats.
struct ShapeClass {
  std::string name;
  model::Period period = model::Period::deg360;
  TriMesh mesh;
};

/// In order: bracket, stair (asymmetric), bench (two-fold), cylinder
/// (rotationally neutral), tee (asymmetric), cross (four-fold).
const std::vector<ShapeClass>& shape_catalog();

/// Bins from the default 30 degree width, one entry per catalog class used.
model::OrientationScheme synth_scheme(std::size_t n_classes);

struct Noise {
  double jitter = 0.01;     // Gaussian sigma, fraction of the prototype extent
  double scale = 0.10;      // per-axis scale drawn from [1 - s, 1 + s]
  double outliers = 0.01;   // fraction of points replaced by uniform clutter
  static Noise none() { return {0.0, 0.0, 0.0}; }
};

inline constexpr std::size_t kSynthPoints = 2000;

/// Surface sample of one prototype rotated by `azimuth_deg` about the vertical
/// axis. Periodic classes are sampled on one fundamental sector and replicated
/// by exact point mirroring, so rotating by the period reproduces the same
/// point set. Deterministic in (shape, azimuth, noise, n_points, seed).
PointCloud make_instance(const ShapeClass& shape, double azimuth_deg, const Noise& noise,
                         std::size_t n_points = kSynthPoints, std::uint64_t seed = 0);

struct Instance {
  PointCloud cloud;
  std::size_t class_id = 0;
  double azimuth_deg = 0.0;  // applied rotation, [0, 360)
};

/// per_class instances of each of the first n_classes catalog shapes at
/// uniform random azimuths. Requires 2 <= n_classes <= catalog size.
std::vector<Instance> synth_instances(std::size_t n_classes, std::size_t per_class, const Noise& noise,
                                      std::uint64_t seed, std::size_t n_points = kSynthPoints);

// Detection scenes ----------------------------------------------------------

/// The planted object: a body with an off-center cabin, so its azimuth has a
/// full 360 degree period. Nominal size 4 x 2 x 1.5 meters, length along +x.
TriMesh vehicle_mesh(double length, double width, double height);

struct SceneConfig {
  double extent = 20.0;          // square ground area, meters, centered at the origin
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::size_t clutter = 6;       // poles, walls and boulders
  double density = 25.0;         // surface points per square meter
  double size_variation = 0.08;  // relative per-dimension size noise of planted objects
  double jitter = 0.02;          // meters
};

struct Scene {
  PointCloud cloud;
  std::vector<det::DetectionBox> truth;
};

/// Points only (ground removed). Objects never overlap each other or clutter.
Scene make_scene(const SceneConfig& config, std::uint64_t seed);

}  // namespace orion::synth

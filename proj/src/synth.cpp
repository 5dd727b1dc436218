#include "orion/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "orion/voxel.hpp"

namespace orion::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

TriMesh merge(std::initializer_list<TriMesh> parts) {
  TriMesh m;
  for (const auto& p : parts) m.append(p);
  return m;
}

double mesh_area(const TriMesh& m) {
  double a = 0.0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) a += m.face_area(f);
  return a;
}

std::size_t copies_for(model::Period p) {
  switch (p) {
    case model::Period::deg180: return 2;
    case model::Period::deg90: return 4;
    default: return 1;
  }
}

// Exact quarter and half turns about the z axis.
Vec3 quarter_turn(Vec3 p, std::size_t k) {
  switch (k % 4) {
    case 1: return {-p.y, p.x, p.z};
    case 2: return {-p.x, -p.y, p.z};
    case 3: return {p.y, -p.x, p.z};
    default: return p;
  }
}

std::vector<ShapeClass> build_catalog() {
  using model::Period;
  std::vector<ShapeClass> c;
  c.push_back({"bracket", Period::deg360,
               merge({cuboid({-0.5, -0.5, 0.0}, {0.5, -0.2, 0.4}), cuboid({-0.5, -0.2, 0.0}, {-0.2, 0.5, 0.8})})});
  c.push_back({"stair", Period::deg360,
               merge({cuboid({-0.5, -0.35, 0.0}, {-0.17, 0.35, 0.9}), cuboid({-0.17, -0.35, 0.0}, {0.17, 0.35, 0.6}),
                      cuboid({0.17, -0.35, 0.0}, {0.5, 0.35, 0.3})})});
  c.push_back({"bench", Period::deg180,
               merge({cuboid({-0.5, -0.12, 0.3}, {0.5, 0.12, 0.45}), cuboid({-0.5, -0.3, 0.0}, {-0.3, 0.3, 0.3}),
                      cuboid({0.3, -0.3, 0.0}, {0.5, 0.3, 0.3})})});
  c.push_back({"cylinder", Period::none, cylinder(0.4, 0.0, 1.0)});
  c.push_back({"tee", Period::deg360,
               merge({cuboid({-0.5, 0.2, 0.0}, {0.5, 0.5, 0.5}), cuboid({-0.15, -0.5, 0.0}, {0.15, 0.2, 0.25})})});
  c.push_back({"cross", Period::deg90,
               merge({cuboid({-0.5, -0.12, 0.0}, {0.5, 0.12, 0.3}), cuboid({-0.12, -0.5, 0.0}, {0.12, -0.12, 0.3}),
                      cuboid({-0.12, 0.12, 0.0}, {0.12, 0.5, 0.3}), cuboid({-0.12, -0.12, 0.3}, {0.12, 0.12, 0.8})})});
  return c;
}

}  // namespace

TriMesh cuboid(Vec3 lo, Vec3 hi) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  // Two triangles per face, outward winding.
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriMesh cylinder(double radius, double z0, double z1, std::size_t segments) {
  if (segments < 3) throw std::invalid_argument("cylinder needs at least 3 segments");
  TriMesh m;
  const auto n = static_cast<std::uint32_t>(segments);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), z0});
    m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), z1});
  }
  const std::uint32_t bottom = 2 * n, top = 2 * n + 1;
  m.vertices.push_back({0.0, 0.0, z0});
  m.vertices.push_back({0.0, 0.0, z1});
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.faces.push_back({2 * i, 2 * j, 2 * i + 1});
    m.faces.push_back({2 * j, 2 * j + 1, 2 * i + 1});
    m.faces.push_back({bottom, 2 * j, 2 * i});
    m.faces.push_back({top, 2 * i + 1, 2 * j + 1});
  }
  return m;
}

const std::vector<ShapeClass>& shape_catalog() {
  static const std::vector<ShapeClass> catalog = build_catalog();
  return catalog;
}

model::OrientationScheme synth_scheme(std::size_t n_classes) {
  const auto& cat = shape_catalog();
  if (n_classes < 1 || n_classes > cat.size())
    throw std::invalid_argument("synthetic catalog has " + std::to_string(cat.size()) + " classes, asked for " +
                                std::to_string(n_classes));
  std::vector<model::ClassOrientation> classes;
  for (std::size_t c = 0; c < n_classes; ++c)
    classes.push_back(model::ClassOrientation::with_period(cat[c].name, cat[c].period));
  return model::OrientationScheme(std::move(classes));
}

PointCloud make_instance(const ShapeClass& shape, double azimuth_deg, const Noise& noise, std::size_t n_points,
                         std::uint64_t seed) {
  if (n_points == 0) throw std::invalid_argument("instance needs at least one point");
  std::mt19937_64 rng(seed);
  const std::size_t copies = copies_for(shape.period);
  const std::size_t per_copy = (n_points + copies - 1) / copies;
  const PointCloud base = voxel::sample_mesh(shape.mesh, per_copy, rng());

  PointCloud out;
  out.points.reserve(per_copy * copies);
  const std::size_t step = 4 / copies;
  for (std::size_t k = 0; k < copies; ++k)
    for (const auto& p : base.points) out.points.push_back(quarter_turn(p, k * step));

  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  if (noise.scale > 0.0) {
    const double sx = 1.0 + noise.scale * uni(rng);
    const double sy = shape.period == model::Period::deg90 ? sx : 1.0 + noise.scale * uni(rng);
    const double sz = 1.0 + noise.scale * uni(rng);
    for (auto& p : out.points) p = {p.x * sx, p.y * sy, p.z * sz};
  }

  const double yaw = azimuth_deg * kDeg;
  for (auto& p : out.points) p = rotate_z(p, yaw);

  if (noise.jitter > 0.0 || noise.outliers > 0.0) {
    const Aabb box = bounds(out);
    const Vec3 ext = box.extent();
    const double size = std::max({ext.x, ext.y, ext.z});
    std::normal_distribution<double> gauss(0.0, noise.jitter * size);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (auto& p : out.points) {
      if (noise.outliers > 0.0 && u01(rng) < noise.outliers) {
        p = {box.min.x + u01(rng) * ext.x, box.min.y + u01(rng) * ext.y, box.min.z + u01(rng) * ext.z};
      } else if (noise.jitter > 0.0) {
        p = p + Vec3{gauss(rng), gauss(rng), gauss(rng)};
      }
    }
  }
  return out;
}

std::vector<Instance> synth_instances(std::size_t n_classes, std::size_t per_class, const Noise& noise,
                                      std::uint64_t seed, std::size_t n_points) {
  const auto& cat = shape_catalog();
  if (n_classes < 2 || n_classes > cat.size())
    throw std::invalid_argument("synthetic datasets support 2.." + std::to_string(cat.size()) + " classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> az(0.0, 360.0);
  std::vector<Instance> out;
  out.reserve(n_classes * per_class);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const double a = az(rng);
      const std::uint64_t s = rng();
      out.push_back({make_instance(cat[c], a, noise, n_points, s), c, a});
    }
  }
  return out;
}

TriMesh vehicle_mesh(double length, double width, double height) {
  const double hl = 0.5 * length, hw = 0.5 * width;
  return merge({cuboid({-hl, -hw, 0.0}, {hl, hw, 0.55 * height}),
                cuboid({-0.4 * hl, -0.9 * hw, 0.55 * height}, {0.3 * hl, 0.9 * hw, height})});
}

namespace {

struct Placed {
  double x, y, radius;
};

void add_surface(PointCloud& cloud, const TriMesh& mesh, double yaw, Vec3 offset, double density, double jitter,
                 std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(density * mesh_area(mesh))));
  const PointCloud pts = voxel::sample_mesh(mesh, n, rng());
  std::normal_distribution<double> gauss(0.0, jitter);
  for (const auto& p : pts.points) {
    Vec3 q = rotate_z(p, yaw) + offset;
    if (jitter > 0.0) q = q + Vec3{gauss(rng), gauss(rng), gauss(rng)};
    cloud.points.push_back(q);
  }
}

}  // namespace

Scene make_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.min_objects > cfg.max_objects) throw std::invalid_argument("min_objects exceeds max_objects");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double half = 0.5 * cfg.extent;
  std::vector<Placed> placed;

  // Rejection sampling of a free spot with clearance `r`.
  auto find_spot = [&](double r, double& x, double& y) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      x = (u01(rng) * 2.0 - 1.0) * (half - r);
      y = (u01(rng) * 2.0 - 1.0) * (half - r);
      bool ok = true;
      for (const auto& p : placed)
        if (std::hypot(p.x - x, p.y - y) < p.radius + r + 0.5) ok = false;
      if (ok) {
        placed.push_back({x, y, r});
        return true;
      }
    }
    return false;
  };

  Scene scene;
  std::uniform_int_distribution<std::size_t> count(cfg.min_objects, cfg.max_objects);
  const std::size_t n_obj = count(rng);
  for (std::size_t i = 0; i < n_obj; ++i) {
    const double L = 4.0 * (1.0 + cfg.size_variation * (2.0 * u01(rng) - 1.0));
    const double W = 2.0 * (1.0 + cfg.size_variation * (2.0 * u01(rng) - 1.0));
    const double H = 1.5 * (1.0 + cfg.size_variation * (2.0 * u01(rng) - 1.0));
    const double yaw = 2.0 * std::numbers::pi * u01(rng);
    double x = 0, y = 0;
    if (!find_spot(0.5 * std::hypot(L, W) + 0.5, x, y)) break;
    add_surface(scene.cloud, vehicle_mesh(L, W, H), yaw, {x, y, 0.0}, cfg.density, cfg.jitter, rng);
    det::DetectionBox b;
    b.center = {x, y, 0.5 * H};
    b.length = L;
    b.width = W;
    b.height = H;
    b.yaw = det::wrap_angle(yaw);
    b.score = 1.0;
    scene.truth.push_back(b);
  }

  for (std::size_t i = 0; i < cfg.clutter; ++i) {
    const int kind = static_cast<int>(u01(rng) * 3.0);
    const double yaw = 2.0 * std::numbers::pi * u01(rng);
    TriMesh mesh;
    double r = 0.0;
    if (kind == 0) {
      mesh = cylinder(0.15, 0.0, 3.0, 16);
      r = 0.3;
    } else if (kind == 1) {
      const double len = 3.0 + 3.0 * u01(rng);
      mesh = cuboid({-0.5 * len, -0.15, 0.0}, {0.5 * len, 0.15, 2.0});
      r = 0.5 * len;
    } else {
      const double rad = 0.5 + 0.4 * u01(rng);
      mesh = cylinder(rad, 0.0, 0.8 + 0.6 * u01(rng), 24);
      r = rad;
    }
    double x = 0, y = 0;
    if (!find_spot(r, x, y)) continue;
    add_surface(scene.cloud, mesh, yaw, {x, y, 0.0}, cfg.density, cfg.jitter, rng);
  }
  return scene;
}

}  // namespace orion::synth

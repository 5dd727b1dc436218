#include "orion/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace orion::voxel {

void GridSpec::validate() const {
  if (object < 1) throw std::invalid_argument("grid object extent must be >= 1");
  if (object + 2 * padding != total)
    throw std::invalid_argument("grid spec inconsistent: object " + std::to_string(object) + " + 2*padding " +
                                std::to_string(padding) + " != total " + std::to_string(total));
}

OccupancyGrid OccupancyGrid::empty(const GridSpec& spec, double voxel_size, Vec3 origin) {
  spec.validate();
  return {spec, voxel_size, origin, std::vector<std::uint8_t>(spec.total * spec.total * spec.total, 0)};
}

std::size_t OccupancyGrid::occupied() const noexcept {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

bool OccupancyGrid::padding_is_empty() const noexcept {
  const std::size_t n = spec.total, lo = spec.padding, hi = spec.padding + spec.object;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const bool inside = x >= lo && x < hi && y >= lo && y < hi && z >= lo && z < hi;
        if (!inside && values[index(x, y, z)]) return false;
      }
  return true;
}

PointCloud sample_mesh(const TriMesh& mesh, std::size_t n_points, std::uint64_t seed) {
  mesh.validate();
  if (n_points == 0) throw std::invalid_argument("sample_mesh: n_points must be positive");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_mesh: mesh has no face with positive area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double pick = u01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    std::size_t f = std::min<std::size_t>(std::size_t(it - cumulative.begin()), cumulative.size() - 1);
    // Zero-area faces share their cumulative value with the previous face and are never selected.
    const auto& face = mesh.faces[f];
    double r1 = u01(rng), r2 = u01(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3 a = mesh.vertices[face[0]], b = mesh.vertices[face[1]], c = mesh.vertices[face[2]];
    out.points.push_back(a + r1 * (b - a) + r2 * (c - a));
  }
  return out;
}

PointCloud rotate_points(const PointCloud& cloud, double yaw) {
  const Vec3 pivot = centroid(cloud);
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(rotate_z(p, yaw, pivot));
  return out;
}

namespace {

std::size_t bin_clamped(double u, std::size_t lo, std::size_t hi_inclusive) {
  const double f = std::floor(u);
  if (!(f >= double(lo))) return lo;
  if (f > double(hi_inclusive)) return hi_inclusive;
  return std::size_t(f);
}

}  // namespace

OccupancyGrid voxelize(const PointCloud& cloud, const GridSpec& spec) {
  spec.validate();
  if (cloud.empty()) return OccupancyGrid::empty(spec, 1.0 / double(spec.object));
  const Aabb box = bounds(cloud);
  const Vec3 ext = box.extent();
  const double largest = std::max({ext.x, ext.y, ext.z});
  const double voxel_size = largest > 0.0 ? largest / double(spec.object) : 1.0 / double(spec.object);
  const Vec3 center = box.center();
  const double half = double(spec.total) / 2.0;
  auto grid = OccupancyGrid::empty(spec, voxel_size, center - (half * voxel_size) * Vec3{1, 1, 1});
  const std::size_t lo = spec.padding, hi = spec.padding + spec.object - 1;
  for (const auto& p : cloud.points) {
    const std::size_t ix = bin_clamped((p.x - center.x) / voxel_size + half, lo, hi);
    const std::size_t iy = bin_clamped((p.y - center.y) / voxel_size + half, lo, hi);
    const std::size_t iz = bin_clamped((p.z - center.z) / voxel_size + half, lo, hi);
    grid.values[grid.index(ix, iy, iz)] = 1;
  }
  return grid;
}

OccupancyGrid voxelize_fixed(const PointCloud& cloud, const GridSpec& spec, Vec3 center, double voxel_size) {
  spec.validate();
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel size must be positive");
  const double half = double(spec.total) / 2.0;
  auto grid = OccupancyGrid::empty(spec, voxel_size, center - (half * voxel_size) * Vec3{1, 1, 1});
  const double n = double(spec.total);
  for (const auto& p : cloud.points) {
    const double ux = std::floor((p.x - center.x) / voxel_size + half);
    const double uy = std::floor((p.y - center.y) / voxel_size + half);
    const double uz = std::floor((p.z - center.z) / voxel_size + half);
    if (ux < 0 || uy < 0 || uz < 0 || ux >= n || uy >= n || uz >= n) continue;
    grid.values[grid.index(std::size_t(ux), std::size_t(uy), std::size_t(uz))] = 1;
  }
  return grid;
}

OccupancyGrid shift_grid(const OccupancyGrid& grid, int dx, int dy, int dz) {
  const long pad = long(grid.spec.padding);
  if (std::abs(dx) > pad || std::abs(dy) > pad || std::abs(dz) > pad)
    throw std::invalid_argument("shift (" + std::to_string(dx) + "," + std::to_string(dy) + "," +
                                std::to_string(dz) + ") exceeds padding " + std::to_string(pad));
  OccupancyGrid out = grid;
  std::fill(out.values.begin(), out.values.end(), std::uint8_t{0});
  const long n = long(grid.spec.total);
  for (long z = 0; z < n; ++z)
    for (long y = 0; y < n; ++y)
      for (long x = 0; x < n; ++x) {
        if (!grid.values[grid.index(x, y, z)]) continue;
        const long tx = x + dx, ty = y + dy, tz = z + dz;
        if (tx < 0 || ty < 0 || tz < 0 || tx >= n || ty >= n || tz >= n) continue;
        out.values[out.index(tx, ty, tz)] = 1;
      }
  return out;
}

OccupancyGrid rotate_grid_quarter(const OccupancyGrid& grid, int k) {
  k = ((k % 4) + 4) % 4;
  OccupancyGrid out = grid;
  if (k == 0) return out;
  const std::size_t n = grid.spec.total;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        std::size_t tx = x, ty = y;
        for (int r = 0; r < k; ++r) {
          // (x, y) -> (n-1-y, x) is a 90 degree counter-clockwise turn.
          const std::size_t nx = n - 1 - ty;
          ty = tx;
          tx = nx;
        }
        out.values[out.index(tx, ty, z)] = grid.values[grid.index(x, y, z)];
      }
  return out;
}

}  // namespace orion::voxel

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "orion/geometry.hpp"

namespace orion::voxel {

/// Cubic grid layout: an object region of `object` voxels per axis surrounded
/// by `padding` empty voxels on each side.
struct GridSpec {
  std::size_t total = 32;
  std::size_t object = 28;
  std::size_t padding = 2;

  /// Throws std::invalid_argument unless object + 2*padding == total and object >= 1.
  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Binary occupancy over a cubic lattice, x fastest.
struct OccupancyGrid {
  GridSpec spec;
  double voxel_size = 1.0;
  Vec3 origin;  // world position of the (0,0,0) voxel's lower corner
  std::vector<std::uint8_t> values;

  static OccupancyGrid empty(const GridSpec& spec, double voxel_size = 1.0, Vec3 origin = {});

  std::size_t extent() const noexcept { return spec.total; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + spec.total * (y + spec.total * z);
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const { return values.at(index(x, y, z)); }
  std::size_t occupied() const noexcept;
  /// True when no occupied voxel lies in the padding shell.
  bool padding_is_empty() const noexcept;

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;
};

/// Area-weighted barycentric sampling; deterministic for a given seed.
/// Throws std::invalid_argument if every face has zero area or n_points == 0.
PointCloud sample_mesh(const TriMesh& mesh, std::size_t n_points, std::uint64_t seed = 0);

inline constexpr std::size_t kDefaultMeshPoints = 50000;

/// Rotation about the vertical axis through the cloud centroid.
PointCloud rotate_points(const PointCloud& cloud, double yaw);

/// Centers the cloud's bounding box in the grid and scales it isotropically so
/// the largest bounding extent spans the object region. Voxels are half-open
/// [lo, hi); the outer faces of the object region are closed so the extreme
/// points stay inside it.
OccupancyGrid voxelize(const PointCloud& cloud, const GridSpec& spec);

/// Voxelizes in a caller-fixed frame: `center` maps to the grid center and each
/// voxel spans `voxel_size` meters. Points outside the grid are dropped.
OccupancyGrid voxelize_fixed(const PointCloud& cloud, const GridSpec& spec, Vec3 center, double voxel_size);

/// Integer translation of the contents; vacated cells become empty. Offsets
/// larger than the padding are rejected.
OccupancyGrid shift_grid(const OccupancyGrid& grid, int dx, int dy, int dz);

/// Lattice rotation by k * 90 degrees counter-clockwise about the vertical axis
/// through the grid center.
OccupancyGrid rotate_grid_quarter(const OccupancyGrid& grid, int k);

}  // namespace orion::voxel

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace orion {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

Vec3 cross(Vec3 a, Vec3 b);
double norm(Vec3 a);

struct Aabb {
  Vec3 min;
  Vec3 max;
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
};

/// Points in meters.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  /// Throws std::invalid_argument if a face references a missing vertex.
  void validate() const;
  double face_area(std::size_t face) const;
  /// Appends another mesh, re-indexing its faces.
  void append(const TriMesh& other);
};

Vec3 centroid(const PointCloud& cloud);
/// Requires a non-empty cloud.
Aabb bounds(const PointCloud& cloud);

/// Rotation about the vertical axis through `pivot`; z is unchanged.
Vec3 rotate_z(Vec3 p, double yaw, Vec3 pivot = {});

}  // namespace orion

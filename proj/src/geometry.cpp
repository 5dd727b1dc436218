#include "orion/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace orion {

Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

void TriMesh::validate() const {
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (auto idx : faces[f])
      if (idx >= vertices.size())
        throw std::invalid_argument("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                                    " but the mesh has " + std::to_string(vertices.size()));
}

double TriMesh::face_area(std::size_t face) const {
  const auto& f = faces.at(face);
  const Vec3 a = vertices.at(f[0]), b = vertices.at(f[1]), c = vertices.at(f[2]);
  return 0.5 * norm(cross(b - a, c - a));
}

void TriMesh::append(const TriMesh& other) {
  const auto base = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (auto f : other.faces) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) return {};
  Vec3 sum;
  for (const auto& p : cloud.points) sum = sum + p;
  return (1.0 / double(cloud.size())) * sum;
}

Aabb bounds(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("bounds of an empty point cloud");
  Aabb box{cloud.points.front(), cloud.points.front()};
  for (const auto& p : cloud.points) {
    box.min = {std::min(box.min.x, p.x), std::min(box.min.y, p.y), std::min(box.min.z, p.z)};
    box.max = {std::max(box.max.x, p.x), std::max(box.max.y, p.y), std::max(box.max.z, p.z)};
  }
  return box;
}

Vec3 rotate_z(Vec3 p, double yaw, Vec3 pivot) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x - pivot.x, dy = p.y - pivot.y;
  return {pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z};
}

}  // namespace orion

#pragma once

#include <array>
#include <vector>

#include "orion/geometry.hpp"

namespace orion::det {

/// Oriented 3D box standing on the ground plane: yaw rotates the length axis
/// away from +x about the vertical through `center`.
struct DetectionBox {
  Vec3 center;
  double length = 1.0;  // along the yaw direction
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;  // radians, [0, 2*pi)
  double score = 0.0;
  int orientation_bin = -1;  // predicted node, -1 when unknown

  /// Throws std::invalid_argument unless all dimensions are positive and
  /// everything is finite.
  void validate() const;
};

double wrap_angle(double radians);  // into [0, 2*pi)

/// Ground-plane footprint corners, counter-clockwise.
std::array<Vec3, 4> footprint(const DetectionBox& box);

/// Half-open interior test in the box frame.
bool contains(const DetectionBox& box, Vec3 p);
std::size_t count_inside(const DetectionBox& box, const PointCloud& cloud);

/// Area of the intersection of two convex counter-clockwise polygons (z ignored).
double convex_intersection_area(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

double footprint_iou(const DetectionBox& a, const DetectionBox& b);
/// Intersection over union of the vertical extents.
double vertical_iou(const DetectionBox& a, const DetectionBox& b);
/// footprint_iou * vertical_iou
double box_iou(const DetectionBox& a, const DetectionBox& b);

}  // namespace orion::det

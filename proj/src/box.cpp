#include "orion/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace orion::det {

void DetectionBox::validate() const {
  if (!(length > 0.0 && width > 0.0 && height > 0.0))
    throw std::invalid_argument("box dimensions must be positive");
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(center.z) || !std::isfinite(yaw) ||
      !std::isfinite(score) || !std::isfinite(length) || !std::isfinite(width) || !std::isfinite(height))
    throw std::invalid_argument("box has non-finite fields");
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians, two_pi);
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a = 0.0;
  return a;
}

std::array<Vec3, 4> footprint(const DetectionBox& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = 0.5 * box.length, hw = 0.5 * box.width;
  const double local[4][2] = {{-hl, -hw}, {hl, -hw}, {hl, hw}, {-hl, hw}};
  std::array<Vec3, 4> out;
  for (int i = 0; i < 4; ++i)
    out[i] = {box.center.x + c * local[i][0] - s * local[i][1], box.center.y + s * local[i][0] + c * local[i][1],
              box.center.z};
  return out;
}

bool contains(const DetectionBox& box, Vec3 p) {
  const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  const double hl = 0.5 * box.length, hw = 0.5 * box.width, hh = 0.5 * box.height;
  return u >= -hl && u < hl && v >= -hw && v < hw && dz >= -hh && dz < hh;
}

std::size_t count_inside(const DetectionBox& box, const PointCloud& cloud) {
  return static_cast<std::size_t>(
      std::count_if(cloud.points.begin(), cloud.points.end(), [&](const Vec3& p) { return contains(box, p); }));
}

namespace {

double cross2(Vec3 o, Vec3 a, Vec3 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double polygon_area(const std::vector<Vec3>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec3& p = poly[i];
    const Vec3& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

}  // namespace

// Sutherland-Hodgman: clip `a` by every edge of `b`.
double convex_intersection_area(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  std::vector<Vec3> out = a;
  for (std::size_t e = 0; e < b.size() && !out.empty(); ++e) {
    const Vec3 p = b[e], q = b[(e + 1) % b.size()];
    std::vector<Vec3> in;
    in.swap(out);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec3 cur = in[i], nxt = in[(i + 1) % in.size()];
      const double dc = cross2(p, q, cur), dn = cross2(p, q, nxt);
      if (dc >= 0.0) out.push_back(cur);
      if ((dc >= 0.0) != (dn >= 0.0)) {
        const double t = dc / (dc - dn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y), 0.0});
      }
    }
  }
  return out.size() < 3 ? 0.0 : std::abs(polygon_area(out));
}

double footprint_iou(const DetectionBox& a, const DetectionBox& b) {
  const auto fa = footprint(a), fb = footprint(b);
  const double inter = convex_intersection_area({fa.begin(), fa.end()}, {fb.begin(), fb.end()});
  const double uni = a.length * a.width + b.length * b.width - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double vertical_iou(const DetectionBox& a, const DetectionBox& b) {
  const double a0 = a.center.z - 0.5 * a.height, a1 = a.center.z + 0.5 * a.height;
  const double b0 = b.center.z - 0.5 * b.height, b1 = b.center.z + 0.5 * b.height;
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = a.height + b.height - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double box_iou(const DetectionBox& a, const DetectionBox& b) { return footprint_iou(a, b) * vertical_iou(a, b); }

}  // namespace orion::det

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "orion/layers.hpp"

namespace orion::model {

/// Azimuth period after which a class looks the same; `none` marks
/// rotationally symmetric or neutral classes that get a single node.
enum class Period { deg360, deg180, deg90, none };

double period_degrees(Period p);  // 0 for none
std::string_view to_string(Period p);
Period period_from_string(std::string_view s);
Period period_from_degrees(int degrees);  // 0 -> none

inline constexpr double kDefaultBinWidthDeg = 30.0;

struct ClassOrientation {
  std::string name;
  std::size_t bins = 1;
  Period period = Period::none;

  /// K = period / bin width, or 1 for Period::none.
  static ClassOrientation with_period(std::string name, Period period, double bin_width_deg = kDefaultBinWidthDeg);
  friend bool operator==(const ClassOrientation&, const ClassOrientation&) = default;
};

/// Per-class orientation blocks laid out back to back on one output head.
class OrientationScheme {
 public:
  OrientationScheme() = default;
  /// Throws std::invalid_argument if a class violates K == 1 <=> period none,
  /// or if K does not evenly divide the period.
  explicit OrientationScheme(std::vector<ClassOrientation> classes);

  /// Every class shares the same period; names are "class<i>".
  static OrientationScheme uniform(std::size_t n_classes, Period period);

  std::size_t num_classes() const noexcept { return classes_.size(); }
  const ClassOrientation& at(std::size_t c) const { return classes_.at(c); }
  const std::vector<ClassOrientation>& classes() const noexcept { return classes_; }
  std::size_t bins(std::size_t c) const { return classes_.at(c).bins; }
  std::size_t offset(std::size_t c) const { return offsets_.at(c); }
  std::size_t total_nodes() const noexcept { return total_; }
  double bin_width_deg(std::size_t c) const;
  nn::ColumnRange block(std::size_t c) const { return {offset(c), offset(c) + bins(c)}; }

  /// Node index for an object of class `c` at `azimuth_deg`. The azimuth may
  /// be omitted only for single-node classes.
  std::size_t target(std::size_t c, std::optional<double> azimuth_deg) const;

  /// Center azimuth (degrees, within the class period) of a node, and the
  /// class that owns it.
  double bin_center_deg(std::size_t node) const;
  std::size_t class_of_node(std::size_t node) const;

  friend bool operator==(const OrientationScheme&, const OrientationScheme&) = default;

 private:
  std::vector<ClassOrientation> classes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

}  // namespace orion::model

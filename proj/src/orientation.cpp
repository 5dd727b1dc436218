#include "orion/orientation.hpp"

#include <cmath>
#include <stdexcept>

namespace orion::model {

double period_degrees(Period p) {
  switch (p) {
    case Period::deg360: return 360.0;
    case Period::deg180: return 180.0;
    case Period::deg90: return 90.0;
    case Period::none: return 0.0;
  }
  return 0.0;
}

std::string_view to_string(Period p) {
  switch (p) {
    case Period::deg360: return "360";
    case Period::deg180: return "180";
    case Period::deg90: return "90";
    case Period::none: return "none";
  }
  return "none";
}

Period period_from_string(std::string_view s) {
  if (s == "360") return Period::deg360;
  if (s == "180") return Period::deg180;
  if (s == "90") return Period::deg90;
  if (s == "none" || s == "0") return Period::none;
  throw std::invalid_argument("unknown orientation period '" + std::string(s) + "'");
}

Period period_from_degrees(int degrees) {
  switch (degrees) {
    case 360: return Period::deg360;
    case 180: return Period::deg180;
    case 90: return Period::deg90;
    case 0: return Period::none;
    default: throw std::invalid_argument("unsupported orientation period " + std::to_string(degrees));
  }
}

ClassOrientation ClassOrientation::with_period(std::string name, Period period, double bin_width_deg) {
  if (period == Period::none) return {std::move(name), 1, period};
  const double ratio = period_degrees(period) / bin_width_deg;
  if (!(bin_width_deg > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9)
    throw std::invalid_argument("bin width must divide the period exactly");
  return {std::move(name), static_cast<std::size_t>(std::round(ratio)), period};
}

OrientationScheme::OrientationScheme(std::vector<ClassOrientation> classes) : classes_(std::move(classes)) {
  offsets_.reserve(classes_.size());
  for (const auto& c : classes_) {
    if (c.bins == 0) throw std::invalid_argument("class '" + c.name + "' must have at least one orientation bin");
    if ((c.bins == 1) != (c.period == Period::none))
      throw std::invalid_argument("class '" + c.name + "': a single orientation node requires period 'none' and vice versa");
    if (c.period != Period::none && static_cast<long>(period_degrees(c.period)) % static_cast<long>(c.bins) != 0)
      throw std::invalid_argument("class '" + c.name + "': bin count must divide the period");
    offsets_.push_back(total_);
    total_ += c.bins;
  }
}

OrientationScheme OrientationScheme::uniform(std::size_t n_classes, Period period) {
  std::vector<ClassOrientation> classes;
  for (std::size_t i = 0; i < n_classes; ++i)
    classes.push_back(ClassOrientation::with_period("class" + std::to_string(i), period));
  return OrientationScheme(std::move(classes));
}

double OrientationScheme::bin_width_deg(std::size_t c) const {
  const auto& cls = classes_.at(c);
  return cls.period == Period::none ? 360.0 : period_degrees(cls.period) / double(cls.bins);
}

std::size_t OrientationScheme::target(std::size_t c, std::optional<double> azimuth_deg) const {
  if (c >= classes_.size())
    throw std::invalid_argument("class id " + std::to_string(c) + " outside scheme of " +
                                std::to_string(classes_.size()) + " classes");
  const auto& cls = classes_[c];
  if (cls.bins == 1) return offsets_[c];
  if (!azimuth_deg) throw std::invalid_argument("class '" + cls.name + "' needs an azimuth for its orientation target");
  if (!std::isfinite(*azimuth_deg)) throw std::invalid_argument("azimuth must be finite");
  const double period = period_degrees(cls.period);
  double a = std::fmod(*azimuth_deg, period);
  if (a < 0) a += period;
  auto bin = static_cast<std::size_t>(std::floor(a * double(cls.bins) / period));
  if (bin >= cls.bins) bin = cls.bins - 1;
  return offsets_[c] + bin;
}

std::size_t OrientationScheme::class_of_node(std::size_t node) const {
  if (node >= total_) throw std::invalid_argument("orientation node out of range");
  std::size_t c = 0;
  while (c + 1 < classes_.size() && offsets_[c + 1] <= node) ++c;
  return c;
}

double OrientationScheme::bin_center_deg(std::size_t node) const {
  const std::size_t c = class_of_node(node);
  if (classes_[c].bins == 1) return 0.0;
  const double w = bin_width_deg(c);
  return (double(node - offsets_[c]) + 0.5) * w;
}

}  // namespace orion::model

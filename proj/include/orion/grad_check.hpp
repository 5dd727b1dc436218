#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "orion/layers.hpp"
#include "orion/network.hpp"

namespace orion::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<parameter>[index]" or "input[index]"
  std::size_t checked = 0;
  bool ok(double tolerance) const noexcept { return max_rel_error <= tolerance; }
};

inline constexpr double kGradCheckStep = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Checks a single layer under the scalar loss sum(r * y) with a fixed random
/// projection r. Train mode; dropout masks are frozen by reseeding.
GradCheckReport grad_check_layer(Layer<double>& layer, const Tensor<double>& input, std::uint64_t seed = 1,
                                 double step = kGradCheckStep);

/// Checks a layer stack followed by softmax cross-entropy.
GradCheckReport grad_check_stack(std::span<Layer<double>* const> layers, const Tensor<double>& input,
                                 std::span<const std::size_t> targets, double step = kGradCheckStep);

/// Checks the two-head network under the combined loss.
GradCheckReport grad_check_network(model::Network<double>& net, const Tensor<double>& input,
                                   std::span<const std::size_t> class_targets,
                                   std::span<const std::size_t> orient_targets, double gamma,
                                   double step = kGradCheckStep);

}  // namespace orion::nn

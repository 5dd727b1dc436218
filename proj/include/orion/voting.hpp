#pragma once

#include <span>
#include <vector>

#include "orion/geometry.hpp"
#include "orion/network.hpp"

namespace orion::vote {

struct VoteResult {
  std::size_t final_class = 0;
  std::vector<double> scores;              // per class, summed over rotations
  std::vector<std::size_t> per_rotation;   // argmax class of each rotation copy
};

/// Sums per-rotation class scores and takes the argmax; ties go to the lower
/// class index. Totals do not depend on row order. Rows must share one width.
/// Throws on zero rows.
VoteResult vote(std::span<const std::vector<double>> rotation_scores);

/// R angles (radians) evenly spanning a full turn, starting at 0.
std::vector<double> rotation_angles(std::size_t rotations);

/// Rotates the cloud R times about its centroid, voxelizes each copy, and
/// votes over the softmax class probabilities.
template <typename T>
VoteResult vote_classify(const model::Network<T>& net, const PointCloud& cloud, std::size_t rotations);

}  // namespace orion::vote

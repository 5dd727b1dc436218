#include "orion/voting.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

#include "orion/parallel.hpp"
#include "orion/voxel.hpp"

namespace orion::vote {

VoteResult vote(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw std::invalid_argument("voting needs at least one rotation");
  const std::size_t K = rows.front().size();
  if (K == 0) throw std::invalid_argument("voting needs at least one class score");
  VoteResult r;
  r.scores.assign(K, 0.0);
  for (const auto& row : rows) {
    if (row.size() != K) throw std::invalid_argument("rotation score rows differ in width");
    r.per_rotation.push_back(std::size_t(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  // Summing each column in sorted order makes the totals independent of the
  // order the rotations arrive in.
  std::vector<double> column(rows.size());
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][k];
    std::sort(column.begin(), column.end());
    for (double v : column) r.scores[k] += v;
  }
  for (std::size_t k = 1; k < K; ++k)
    if (r.scores[k] > r.scores[r.final_class]) r.final_class = k;
  return r;
}

std::vector<double> rotation_angles(std::size_t rotations) {
  if (rotations == 0) throw std::invalid_argument("rotation count must be at least 1");
  std::vector<double> a(rotations);
  for (std::size_t r = 0; r < rotations; ++r) a[r] = 2.0 * std::numbers::pi * double(r) / double(rotations);
  return a;
}

template <typename T>
VoteResult vote_classify(const model::Network<T>& net, const PointCloud& cloud, std::size_t rotations) {
  const auto angles = rotation_angles(rotations);
  std::vector<voxel::OccupancyGrid> grids(rotations);
  parallel_for(rotations, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t r = lo; r < hi; ++r)
      grids[r] = voxel::voxelize(angles[r] == 0.0 ? cloud : voxel::rotate_points(cloud, angles[r]), net.spec().grid);
  });
  const auto out = net.infer(model::grids_to_tensor<T>(grids));
  const auto probs = nn::softmax_rows(out.class_logits);
  const std::size_t K = probs.dim(1);
  std::vector<std::vector<double>> rows(rotations, std::vector<double>(K));
  for (std::size_t r = 0; r < rotations; ++r)
    for (std::size_t k = 0; k < K; ++k) rows[r][k] = double(probs[r * K + k]);
  return vote(rows);
}

template VoteResult vote_classify<float>(const model::Network<float>&, const PointCloud&, std::size_t);
template VoteResult vote_classify<double>(const model::Network<double>&, const PointCloud&, std::size_t);

}  // namespace orion::vote

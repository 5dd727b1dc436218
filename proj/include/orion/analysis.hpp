#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "orion/io.hpp"
#include "orion/network.hpp"

namespace orion::analysis {

/// One back-trace step: the node (dense) or filter (conv) picked in a layer.
struct PathStep {
  std::string layer;
  std::size_t index = 0;
  std::size_t width = 0;  // nodes or filters in the layer
  double margin = 0.0;    // top-1 minus top-2 contribution; 0 when the layer has one unit
};

/// Ordered from the first conv layer to the class node. The last step is the
/// predicted class.
struct DominantPath {
  std::vector<PathStep> steps;
  std::size_t predicted_class = 0;
};

/// Contributions of every unit of a layer's input to one selected downstream
/// unit. For a dense layer fed by a flat vector: w[selected, k] * a[k]. For a
/// dense layer fed by flattened feature maps, or a conv layer, the entries of
/// one input channel are summed so the result has one value per channel.
template <typename T>
std::vector<double> dense_contributions(const nn::Dense<T>& layer, const nn::Tensor<T>& input, std::size_t selected,
                                        std::size_t channels);
template <typename T>
std::vector<double> conv_contributions(const nn::Conv3d<T>& layer, const nn::Tensor<T>& input, std::size_t selected);

/// Eval-mode back-trace from the predicted class through every dense and conv
/// layer of the trunk. Ties go to the lower index. `grid` is [1, 1, n, n, n].
template <typename T>
DominantPath dominant_path(const model::Network<T>& net, const nn::Tensor<T>& grid);

struct PathHistogram {
  std::string group;
  std::size_t samples = 0;
  std::vector<std::string> layers;
  std::vector<std::vector<std::size_t>> counts;  // per layer, per unit
  std::vector<double> entropy;                   // per layer, bits
};

struct SampleGroup {
  std::string name;
  std::vector<voxel::OccupancyGrid> grids;
};

/// Histograms of dominant-path indices per group. Empty groups are skipped and
/// their names reported through `skipped`.
template <typename T>
std::vector<PathHistogram> path_histograms(const model::Network<T>& net, std::span<const SampleGroup> groups,
                                           std::vector<std::string>* skipped = nullptr);

/// "group,layer,index,count" rows plus one "group,layer,entropy,<bits>" row per layer.
void write_histograms_csv(const std::filesystem::path& path, std::span<const PathHistogram> hists);

/// Response of one filter of a trunk layer (4D output) for each of R rotation
/// copies of the cloud. Values with magnitude below `threshold` are zeroed.
/// Throws std::invalid_argument for an unknown layer, a flat layer, or a filter
/// index out of range.
template <typename T>
std::vector<io::FloatGrid> snapshot_activations(const model::Network<T>& net, const PointCloud& cloud,
                                                const std::string& layer, std::size_t filter,
                                                std::size_t rotations, double threshold = 0.0);

}  // namespace orion::analysis

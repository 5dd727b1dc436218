#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "orion/layers.hpp"
#include "orion/orientation.hpp"
#include "orion/voxel.hpp"

namespace orion::model {

enum class Architecture { baseline, extended };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view s);

/// Ordered trunk plus a class head and an optional orientation head, both fed
/// by the last shared hidden layer.
struct NetworkSpec {
  Architecture arch = Architecture::baseline;
  voxel::GridSpec grid;
  std::vector<nn::LayerSpec> trunk;
  std::size_t n_classes = 0;
  OrientationScheme scheme;
  bool orientation_head = true;
};

/// baseline: conv(32@5^3,s2) lrelu conv(32@3^3,s1) lrelu maxpool(2^3,s2) flatten dense(128) lrelu
/// extended: 4 x [conv(3^3) bn lrelu dropout] with 32/64/128/256 filters (first stride 2,
///           dropout 0.2/0.3/0.4/0.6), maxpool(2^3,s2) flatten dense(128) lrelu dropout(0.4)
std::vector<nn::LayerSpec> trunk_layers(Architecture arch);

/// Throws std::invalid_argument if the scheme does not cover n_classes.
NetworkSpec make_network_spec(Architecture arch, const voxel::GridSpec& grid, std::size_t n_classes,
                              OrientationScheme scheme, bool orientation_head = true);

template <typename T>
struct HeadOutputs {
  nn::Tensor<T> class_logits;   // [batch x n_classes]
  nn::Tensor<T> orient_logits;  // [batch x total orientation nodes]; empty without the head
  bool has_orientation() const noexcept { return !orient_logits.empty(); }
};

template <typename T>
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const noexcept { return spec_; }

  /// He-normal weights, zero biases; the orientation head draws from its own
  /// stream so trunk and class head do not depend on whether it exists.
  void initialize(std::uint64_t seed);
  void initialize_orientation_head(std::uint64_t seed);
  void reseed(std::uint64_t seed);

  /// Input is [batch, 1, n, n, n] with n = spec().grid.total.
  HeadOutputs<T> forward(const nn::Tensor<T>& grids, nn::Mode mode);
  HeadOutputs<T> infer(const nn::Tensor<T>& grids) const;
  /// Accumulates parameter gradients and returns the input gradient.
  /// `orient_grad` may be null.
  nn::Tensor<T> backward(const nn::Tensor<T>& class_grad, const nn::Tensor<T>* orient_grad);

  /// Eval-mode pass returning the input followed by every trunk layer output.
  std::vector<nn::Tensor<T>> trace(const nn::Tensor<T>& grids) const;

  std::vector<nn::ParamRef<T>> parameters();
  std::vector<nn::ParamRef<T>> buffers();
  void zero_grad();

  std::size_t trunk_size() const noexcept { return trunk_.size(); }
  nn::Layer<T>& trunk_layer(std::size_t i) { return *trunk_.at(i); }
  const nn::Layer<T>& trunk_layer(std::size_t i) const { return *trunk_.at(i); }
  nn::Dense<T>& class_head() { return *class_head_; }
  const nn::Dense<T>& class_head() const { return *class_head_; }
  nn::Dense<T>* orientation_head() { return orient_head_.get(); }
  const nn::Dense<T>* orientation_head() const { return orient_head_.get(); }

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<nn::Layer<T>>> trunk_;
  std::unique_ptr<nn::Dense<T>> class_head_;
  std::unique_ptr<nn::Dense<T>> orient_head_;
};

template <typename T>
Network<T> build_network(Architecture arch, const voxel::GridSpec& grid, std::size_t n_classes,
                         const OrientationScheme& scheme, std::uint64_t seed, bool orientation_head = true);

/// Trainable scalars: weights, biases, batchnorm scale and shift.
template <typename T>
std::size_t param_count(Network<T>& net);

/// Packs grids into a [batch, 1, n, n, n] tensor (x fastest).
template <typename T>
nn::Tensor<T> grids_to_tensor(std::span<const voxel::OccupancyGrid> grids);

enum class OrientationSoftmax {
  full,    // softmax across every orientation node
  masked,  // softmax across the true class's block only
};

template <typename T>
struct LossResult {
  double total = 0.0;
  double class_loss = 0.0;
  double orient_loss = 0.0;
  nn::Tensor<T> class_grad;
  nn::Tensor<T> orient_grad;  // empty when the outputs carry no orientation head
};

/// (1 - gamma) * L_class + gamma * L_orient with gradients scaled to match.
/// Throws std::invalid_argument for gamma outside [0, 1] or a non-zero gamma
/// without an orientation head.
template <typename T>
LossResult<T> orion_loss(const HeadOutputs<T>& out, std::span<const std::size_t> class_targets,
                         std::span<const std::size_t> orient_targets, double gamma, const OrientationScheme& scheme,
                         OrientationSoftmax softmax = OrientationSoftmax::full);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace orion::model

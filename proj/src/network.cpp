#include "orion/network.hpp"

#include <random>
#include <stdexcept>

namespace orion::model {

using nn::LayerSpec;
using nn::Mode;
using nn::Shape;
using nn::Tensor;

std::string_view to_string(Architecture arch) {
  return arch == Architecture::baseline ? "baseline" : "extended";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "baseline") return Architecture::baseline;
  if (s == "extended") return Architecture::extended;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

std::vector<LayerSpec> trunk_layers(Architecture arch) {
  std::vector<LayerSpec> t;
  if (arch == Architecture::baseline) {
    t.push_back(LayerSpec::conv3d("conv1", 32, 5, 2));
    t.push_back(LayerSpec::leaky_relu("conv1.act"));
    t.push_back(LayerSpec::conv3d("conv2", 32, 3, 1));
    t.push_back(LayerSpec::leaky_relu("conv2.act"));
    t.push_back(LayerSpec::maxpool3d("pool", 2, 2));
    t.push_back(LayerSpec::flatten("flatten"));
    t.push_back(LayerSpec::dense("fc1", 128));
    t.push_back(LayerSpec::leaky_relu("fc1.act"));
    return t;
  }
  const std::size_t filters[] = {32, 64, 128, 256};
  const double drops[] = {0.2, 0.3, 0.4, 0.6};
  for (int i = 0; i < 4; ++i) {
    const std::string name = "conv" + std::to_string(i + 1);
    t.push_back(LayerSpec::conv3d(name, filters[i], 3, i == 0 ? 2 : 1));
    t.push_back(LayerSpec::batchnorm3d(name + ".bn"));
    t.push_back(LayerSpec::leaky_relu(name + ".act"));
    t.push_back(LayerSpec::dropout_layer(name + ".drop", drops[i]));
  }
  t.push_back(LayerSpec::maxpool3d("pool", 2, 2));
  t.push_back(LayerSpec::flatten("flatten"));
  t.push_back(LayerSpec::dense("fc1", 128));
  t.push_back(LayerSpec::leaky_relu("fc1.act"));
  t.push_back(LayerSpec::dropout_layer("fc1.drop", 0.4));
  return t;
}

NetworkSpec make_network_spec(Architecture arch, const voxel::GridSpec& grid, std::size_t n_classes,
                              OrientationScheme scheme, bool orientation_head) {
  grid.validate();
  if (n_classes < 1) throw std::invalid_argument("network needs at least one class");
  if (scheme.num_classes() != n_classes)
    throw std::invalid_argument("orientation scheme covers " + std::to_string(scheme.num_classes()) +
                                " classes but the network has " + std::to_string(n_classes));
  return {arch, grid, trunk_layers(arch), n_classes, std::move(scheme), orientation_head};
}

template <typename T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.grid.validate();
  if (spec_.scheme.num_classes() != spec_.n_classes)
    throw std::invalid_argument("orientation scheme does not match the class count");
  const std::size_t n = spec_.grid.total;
  Shape shape{1, n, n, n};
  for (const auto& ls : spec_.trunk) {
    trunk_.push_back(nn::make_layer<T>(ls, shape));
    shape = trunk_.back()->sample_output_shape();
  }
  if (shape.size() != 1) throw std::invalid_argument("trunk must end in a flat hidden layer, got " + nn::to_string(shape));
  class_head_ = std::make_unique<nn::Dense<T>>(LayerSpec::dense("class_head", spec_.n_classes), shape);
  if (spec_.orientation_head)
    orient_head_ = std::make_unique<nn::Dense<T>>(LayerSpec::dense("orient_head", spec_.scheme.total_nodes()), shape);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : trunk_) l->initialize(rng);
  class_head_->initialize(rng);
  initialize_orientation_head(seed);
  reseed(seed);
}

template <typename T>
void Network<T>::initialize_orientation_head(std::uint64_t seed) {
  if (!orient_head_) return;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  orient_head_->initialize(rng);
}

template <typename T>
void Network<T>::reseed(std::uint64_t seed) {
  for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i]->reseed(seed * 1000003ULL + i);
}

template <typename T>
HeadOutputs<T> Network<T>::forward(const Tensor<T>& grids, Mode mode) {
  Tensor<T> h = grids;
  for (auto& l : trunk_) h = l->forward(h, mode);
  HeadOutputs<T> out;
  out.class_logits = class_head_->forward(h, mode);
  if (orient_head_) out.orient_logits = orient_head_->forward(h, mode);
  return out;
}

template <typename T>
HeadOutputs<T> Network<T>::infer(const Tensor<T>& grids) const {
  Tensor<T> h = grids;
  for (const auto& l : trunk_) h = l->infer(h);
  HeadOutputs<T> out;
  out.class_logits = class_head_->infer(h);
  if (orient_head_) out.orient_logits = orient_head_->infer(h);
  return out;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& class_grad, const Tensor<T>* orient_grad) {
  Tensor<T> dh = class_head_->backward(class_grad);
  if (orient_grad && orient_head_) {
    Tensor<T> d2 = orient_head_->backward(*orient_grad);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += d2[i];
  }
  for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) dh = (*it)->backward(dh);
  return dh;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::trace(const Tensor<T>& grids) const {
  std::vector<Tensor<T>> acts;
  acts.reserve(trunk_.size() + 1);
  acts.push_back(grids);
  for (const auto& l : trunk_) acts.push_back(l->infer(acts.back()));
  return acts;
}

template <typename T>
std::vector<nn::ParamRef<T>> Network<T>::parameters() {
  std::vector<nn::ParamRef<T>> out;
  for (auto& l : trunk_)
    for (auto& p : l->parameters()) out.push_back(p);
  for (auto& p : class_head_->parameters()) out.push_back(p);
  if (orient_head_)
    for (auto& p : orient_head_->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<nn::ParamRef<T>> Network<T>::buffers() {
  std::vector<nn::ParamRef<T>> out;
  for (auto& l : trunk_)
    for (auto& p : l->buffers()) out.push_back(p);
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
Network<T> build_network(Architecture arch, const voxel::GridSpec& grid, std::size_t n_classes,
                         const OrientationScheme& scheme, std::uint64_t seed, bool orientation_head) {
  Network<T> net(make_network_spec(arch, grid, n_classes, scheme, orientation_head));
  net.initialize(seed);
  return net;
}

template <typename T>
std::size_t param_count(Network<T>& net) {
  std::size_t n = 0;
  for (auto& p : net.parameters()) n += p.tensor->size();
  return n;
}

template <typename T>
Tensor<T> grids_to_tensor(std::span<const voxel::OccupancyGrid> grids) {
  if (grids.empty()) throw std::invalid_argument("empty grid batch");
  const std::size_t n = grids.front().spec.total;
  const std::size_t vol = n * n * n;
  Tensor<T> t({grids.size(), 1, n, n, n});
  for (std::size_t b = 0; b < grids.size(); ++b) {
    if (grids[b].spec.total != n || grids[b].values.size() != vol)
      throw std::invalid_argument("grid batch mixes extents");
    for (std::size_t i = 0; i < vol; ++i) t[b * vol + i] = T(grids[b].values[i]);
  }
  return t;
}

template <typename T>
LossResult<T> orion_loss(const HeadOutputs<T>& out, std::span<const std::size_t> class_targets,
                         std::span<const std::size_t> orient_targets, double gamma, const OrientationScheme& scheme,
                         OrientationSoftmax softmax) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  LossResult<T> r;
  auto cls = nn::softmax_xent(out.class_logits, class_targets);
  r.class_loss = double(cls.loss);
  r.class_grad = std::move(cls.grad);
  const T wc = T(1.0 - gamma);
  for (auto& g : r.class_grad.data()) g *= wc;

  if (!out.has_orientation()) {
    if (gamma != 0.0) throw std::invalid_argument("gamma > 0 requires an orientation head");
    r.total = r.class_loss;
    return r;
  }
  nn::XentResult<T> ori;
  if (softmax == OrientationSoftmax::full) {
    ori = nn::softmax_xent(out.orient_logits, orient_targets);
  } else {
    std::vector<nn::ColumnRange> ranges;
    ranges.reserve(class_targets.size());
    for (auto c : class_targets) ranges.push_back(scheme.block(c));
    ori = nn::softmax_xent_ranged(out.orient_logits, orient_targets, ranges);
  }
  r.orient_loss = double(ori.loss);
  r.orient_grad = std::move(ori.grad);
  const T wo = T(gamma);
  for (auto& g : r.orient_grad.data()) g *= wo;
  r.total = (1.0 - gamma) * r.class_loss + gamma * r.orient_loss;
  return r;
}

#define ORION_INSTANTIATE(T)                                                                                  \
  template class Network<T>;                                                                                  \
  template Network<T> build_network<T>(Architecture, const voxel::GridSpec&, std::size_t,                     \
                                       const OrientationScheme&, std::uint64_t, bool);                        \
  template std::size_t param_count<T>(Network<T>&);                                                           \
  template Tensor<T> grids_to_tensor<T>(std::span<const voxel::OccupancyGrid>);                               \
  template LossResult<T> orion_loss<T>(const HeadOutputs<T>&, std::span<const std::size_t>,                   \
                                       std::span<const std::size_t>, double, const OrientationScheme&,        \
                                       OrientationSoftmax);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::model

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "orion/tensor.hpp"

namespace orion::nn {

enum class Mode { train, eval };

enum class LayerKind { conv3d, maxpool3d, dense, leaky_relu, dropout, batchnorm3d, flatten };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Hyperparameters of one layer. Only the fields relevant to `kind` are read.
struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  std::string name;
  std::size_t units = 0;  // conv filters or dense outputs
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  double dropout = 0.0;
  double slope = 0.1;
  double epsilon = 1e-5;
  double momentum = 0.9;

  static LayerSpec conv3d(std::string name, std::size_t filters, std::size_t kernel, std::size_t stride,
                          std::size_t padding = 0);
  static LayerSpec maxpool3d(std::string name, std::size_t kernel, std::size_t stride);
  static LayerSpec dense(std::string name, std::size_t units);
  static LayerSpec leaky_relu(std::string name, double slope = 0.1);
  static LayerSpec dropout_layer(std::string name, double ratio);
  static LayerSpec batchnorm3d(std::string name, double epsilon = 1e-5, double momentum = 0.9);
  static LayerSpec flatten(std::string name);

  /// Throws std::invalid_argument when a hyperparameter is out of range.
  void validate() const;
};

/// floor((in + 2*pad - kernel) / stride) + 1; throws if the window does not fit.
std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Output shape of a layer for a batched input shape.
Shape output_shape(const LayerSpec& spec, const Shape& input);

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
class Layer {
 public:
  /// `input` is the per-sample shape (no batch axis) the layer will accept.
  Layer(LayerSpec spec, Shape input);
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }
  const Shape& input_shape() const noexcept { return input_; }
  const Shape& sample_output_shape() const noexcept { return output_; }

  /// Train mode retains what backward needs; eval mode drops any retained state.
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  /// Eval-mode forward without touching layer state; safe to call concurrently.
  Tensor<T> infer(const Tensor<T>& x) const;
  /// Returns the input gradient and accumulates parameter gradients.
  Tensor<T> backward(const Tensor<T>& dy);

  bool has_saved_state() const noexcept { return saved_; }
  void clear_state();

  virtual std::vector<ParamRef<T>> parameters() { return {}; }
  /// Non-trainable state persisted with the parameters.
  virtual std::vector<ParamRef<T>> buffers() { return {}; }
  virtual void initialize(std::mt19937_64& /*rng*/) {}
  virtual void reseed(std::uint64_t /*seed*/) {}

 protected:
  virtual Tensor<T> forward_train(const Tensor<T>& x) = 0;
  virtual Tensor<T> forward_eval(const Tensor<T>& x) const = 0;
  virtual Tensor<T> backward_impl(const Tensor<T>& dy) = 0;
  virtual void release() {}

 private:
  void check_input(const Tensor<T>& x) const;

  LayerSpec spec_;
  Shape input_;
  Shape output_;
  bool saved_ = false;
};

template <typename T>
class Conv3d final : public Layer<T> {
 public:
  Conv3d(LayerSpec spec, Shape input);
  Tensor<T>& weight() noexcept { return weight_; }  // [filters, channels, k, k, k]
  Tensor<T>& bias() noexcept { return bias_; }
  const Tensor<T>& weight() const noexcept { return weight_; }
  const Tensor<T>& bias() const noexcept { return bias_; }
  std::vector<ParamRef<T>> parameters() override;
  void initialize(std::mt19937_64& rng) override;

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override { input_.reset(); }

 private:
  Tensor<T> compute(const Tensor<T>& x) const;
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class MaxPool3d final : public Layer<T> {
 public:
  MaxPool3d(LayerSpec spec, Shape input);

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override { argmax_.clear(); }

 private:
  Tensor<T> compute(const Tensor<T>& x, std::vector<std::size_t>* argmax) const;
  std::vector<std::size_t> argmax_;
  std::size_t batch_ = 0;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(LayerSpec spec, Shape input);
  Tensor<T>& weight() noexcept { return weight_; }  // [outputs, inputs]
  Tensor<T>& bias() noexcept { return bias_; }
  const Tensor<T>& weight() const noexcept { return weight_; }
  const Tensor<T>& bias() const noexcept { return bias_; }
  std::vector<ParamRef<T>> parameters() override;
  void initialize(std::mt19937_64& rng) override;

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override { input_.reset(); }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  LeakyRelu(LayerSpec spec, Shape input);

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override { input_.reset(); }

 private:
  std::optional<Tensor<T>> input_;
};

/// Inverted dropout: train-time outputs are scaled by 1/(1-ratio), eval is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(LayerSpec spec, Shape input);
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override { mask_.clear(); }

 private:
  std::mt19937_64 rng_{0x5eed};
  std::vector<T> mask_;
};

/// Per-channel normalization over batch and spatial axes.
template <typename T>
class BatchNorm3d final : public Layer<T> {
 public:
  BatchNorm3d(LayerSpec spec, Shape input);
  Tensor<T>& scale() noexcept { return gamma_; }
  Tensor<T>& shift() noexcept { return beta_; }
  Tensor<T>& running_mean() noexcept { return running_mean_; }
  Tensor<T>& running_var() noexcept { return running_var_; }
  std::vector<ParamRef<T>> parameters() override;
  std::vector<ParamRef<T>> buffers() override;

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override;
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
  void release() override {
    normalized_.reset();
    inv_std_.clear();
  }

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  std::optional<Tensor<T>> normalized_;
  std::vector<T> inv_std_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  Flatten(LayerSpec spec, Shape input);

 protected:
  Tensor<T> forward_train(const Tensor<T>& x) override { return forward_eval(x); }
  Tensor<T> forward_eval(const Tensor<T>& x) const override;
  Tensor<T> backward_impl(const Tensor<T>& dy) override;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input);

template <typename T>
struct XentResult {
  T loss{};
  Tensor<T> grad;
};

/// Row-wise softmax of a [batch x K] tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

/// Mean multinomial cross-entropy over rows, with gradient (softmax - onehot) / batch.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const std::size_t> targets);

/// Half-open column window [begin, end) a row's softmax is restricted to.
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Cross-entropy where each row's softmax spans only its own column range.
/// Columns outside the range receive zero gradient.
template <typename T>
XentResult<T> softmax_xent_ranged(const Tensor<T>& logits, std::span<const std::size_t> targets,
                                  std::span<const ColumnRange> ranges);

}  // namespace orion::nn

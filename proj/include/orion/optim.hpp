#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "orion/layers.hpp"

namespace orion::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& parameter() const noexcept { return param_; }

 private:
  std::string param_;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<ParamRef<T>> params, double momentum, double weight_decay);

  /// Rejects the whole step (no parameter changes) if any gradient is non-finite.
  void step(double lr);
  void zero_grad();

  double momentum() const noexcept { return momentum_; }
  double weight_decay() const noexcept { return weight_decay_; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
  double weight_decay_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace orion::nn

#include "orion/optim.hpp"

#include <cmath>
#include <utility>

namespace orion::nn {

template <typename T>
Sgd<T>::Sgd(std::vector<ParamRef<T>> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  velocity_.reserve(params_.size());
  for (auto& p : params_) velocity_.emplace_back(p.tensor->size(), T{0});
}

template <typename T>
void Sgd<T>::step(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  for (auto& p : params_) {
    if (!p.tensor->has_grad()) continue;
    for (T g : std::as_const(*p.tensor).grad())
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
  }
  const T mom = T(momentum_), wd = T(weight_decay_), rate = T(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& w = *params_[i].tensor;
    auto& v = velocity_[i];
    auto g = w.grad();
    auto data = w.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = mom * v[j] + g[j] + wd * data[j];
      data[j] -= rate * v[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace orion::nn

#include "orion/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace orion::nn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Probe {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

// `loss` runs a fresh forward pass and returns the scalar objective.
GradCheckReport compare(const std::vector<Probe>& probes, const std::function<double()>& loss, double step) {
  GradCheckReport report;
  for (const auto& p : probes) {
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + step;
      const double up = loss();
      p.values[i] = saved - step;
      const double down = loss();
      p.values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(p.analytic[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace

GradCheckReport grad_check_layer(Layer<double>& layer, const Tensor<double>& input, std::uint64_t seed, double step) {
  Tensor<double> x = input;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Shape out_shape = output_shape(layer.spec(), x.shape());
  Tensor<double> proj(out_shape);
  for (auto& v : proj.data()) v = nd(rng);

  auto objective = [&]() {
    layer.reseed(seed);
    auto y = layer.forward(x, Mode::train);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
    return s;
  };

  auto params = layer.parameters();
  for (auto& p : params) p.tensor->zero_grad();
  objective();
  Tensor<double> dx = layer.backward(proj);

  std::vector<Tensor<double>> analytic;
  std::vector<Probe> probes;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.emplace_back(p.tensor->shape(), std::vector<double>(p.tensor->grad().begin(), p.tensor->grad().end()));
    probes.push_back({p.name, p.tensor->data(), analytic.back().data()});
  }
  probes.push_back({"input", x.data(), dx.data()});
  return compare(probes, objective, step);
}

GradCheckReport grad_check_stack(std::span<Layer<double>* const> layers, const Tensor<double>& input,
                                 std::span<const std::size_t> targets, double step) {
  Tensor<double> x = input;
  auto objective_with = [&](bool keep) {
    Tensor<double> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i]->reseed(17 + i);
      h = layers[i]->forward(h, Mode::train);
    }
    auto res = softmax_xent(h, targets);
    if (keep) {
      Tensor<double> g = res.grad;
      for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
      return std::make_pair(double(res.loss), std::move(g));
    }
    return std::make_pair(double(res.loss), Tensor<double>());
  };

  std::vector<ParamRef<double>> params;
  for (auto* l : layers)
    for (auto& p : l->parameters()) params.push_back(p);
  for (auto& p : params) p.tensor->zero_grad();
  auto [loss0, dx] = objective_with(true);
  (void)loss0;

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  std::vector<Probe> probes;
  for (auto& p : params) {
    analytic.emplace_back(p.tensor->shape(), std::vector<double>(p.tensor->grad().begin(), p.tensor->grad().end()));
    probes.push_back({p.name, p.tensor->data(), analytic.back().data()});
  }
  probes.push_back({"input", x.data(), dx.data()});
  return compare(probes, [&] { return objective_with(false).first; }, step);
}

GradCheckReport grad_check_network(model::Network<double>& net, const Tensor<double>& input,
                                   std::span<const std::size_t> class_targets,
                                   std::span<const std::size_t> orient_targets, double gamma, double step) {
  Tensor<double> x = input;
  const auto& scheme = net.spec().scheme;
  auto loss_of = [&](const model::HeadOutputs<double>& out) {
    return model::orion_loss(out, class_targets, orient_targets, gamma, scheme);
  };
  auto objective = [&]() {
    net.reseed(23);
    return loss_of(net.forward(x, Mode::train)).total;
  };

  net.zero_grad();
  net.reseed(23);
  auto res = loss_of(net.forward(x, Mode::train));
  Tensor<double> dx = net.backward(res.class_grad, res.orient_grad.empty() ? nullptr : &res.orient_grad);
  std::vector<Tensor<double>> saved_grads;
  for (auto& p : net.parameters())
    saved_grads.emplace_back(p.tensor->shape(), std::vector<double>(p.tensor->grad().begin(), p.tensor->grad().end()));

  auto params = net.parameters();
  std::vector<Probe> probes;
  for (std::size_t i = 0; i < params.size(); ++i)
    probes.push_back({params[i].name, params[i].tensor->data(), saved_grads[i].data()});
  probes.push_back({"input", x.data(), dx.data()});
  return compare(probes, objective, step);
}

}  // namespace orion::nn

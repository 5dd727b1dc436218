#include "orion/layers.hpp"

#include "orion/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace orion::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

std::size_t spatial_size(const Shape& s, std::size_t from) {
  std::size_t n = 1;
  for (std::size_t i = from; i < s.size(); ++i) n *= s[i];
  return n;
}

Shape batched(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::maxpool3d: return "maxpool3d";
    case LayerKind::dense: return "dense";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::batchnorm3d: return "batchnorm3d";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::conv3d, LayerKind::maxpool3d, LayerKind::dense, LayerKind::leaky_relu,
                 LayerKind::dropout, LayerKind::batchnorm3d, LayerKind::flatten})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv3d(std::string name, std::size_t filters, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv3d;
  s.name = std::move(name);
  s.units = filters;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::maxpool3d(std::string name, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool3d;
  s.name = std::move(name);
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.units = units;
  return s;
}

LayerSpec LayerSpec::leaky_relu(std::string name, double slope) {
  LayerSpec s;
  s.kind = LayerKind::leaky_relu;
  s.name = std::move(name);
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::dropout_layer(std::string name, double ratio) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.name = std::move(name);
  s.dropout = ratio;
  return s;
}

LayerSpec LayerSpec::batchnorm3d(std::string name, double epsilon, double momentum) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm3d;
  s.name = std::move(name);
  s.epsilon = epsilon;
  s.momentum = momentum;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  s.name = std::move(name);
  return s;
}

void LayerSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("layer '" + name + "' (" + std::string(to_string(kind)) + "): " + what);
  };
  switch (kind) {
    case LayerKind::conv3d:
      if (units == 0) fail("filter count must be >= 1");
      [[fallthrough]];
    case LayerKind::maxpool3d:
      if (kernel < 1) fail("kernel extent must be >= 1");
      if (stride < 1) fail("stride must be >= 1");
      if (kind == LayerKind::maxpool3d && padding >= kernel) fail("padding must be smaller than the kernel");
      break;
    case LayerKind::dense:
      if (units == 0) fail("output count must be >= 1");
      break;
    case LayerKind::dropout:
      if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout ratio must lie in [0, 1)");
      break;
    case LayerKind::batchnorm3d:
      if (!(epsilon > 0.0)) fail("epsilon must be positive");
      if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
      break;
    case LayerKind::leaky_relu:
      if (!std::isfinite(slope)) fail("slope must be finite");
      break;
    case LayerKind::flatten:
      break;
  }
}

std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("kernel and stride must be >= 1");
  if (in + 2 * pad < kernel)
    throw std::invalid_argument("window of extent " + std::to_string(kernel) + " does not fit input extent " +
                                std::to_string(in) + " with padding " + std::to_string(pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

Shape output_shape(const LayerSpec& spec, const Shape& input) {
  spec.validate();
  auto expect_rank = [&](std::size_t rank) {
    if (input.size() != rank)
      throw std::invalid_argument("layer '" + spec.name + "' expects a rank-" + std::to_string(rank) +
                                  " input, got " + to_string(input));
  };
  switch (spec.kind) {
    case LayerKind::conv3d:
    case LayerKind::maxpool3d: {
      expect_rank(5);
      Shape out{input[0], spec.kind == LayerKind::conv3d ? spec.units : input[1]};
      for (std::size_t a = 2; a < 5; ++a)
        out.push_back(window_output_extent(input[a], spec.kernel, spec.stride, spec.padding));
      return out;
    }
    case LayerKind::dense:
      expect_rank(2);
      return {input[0], spec.units};
    case LayerKind::flatten:
      if (input.size() < 2) throw std::invalid_argument("flatten expects a batched input");
      return {input[0], spatial_size(input, 1)};
    case LayerKind::batchnorm3d:
      if (input.size() < 2) throw std::invalid_argument("batchnorm expects [batch, channels, ...]");
      return input;
    case LayerKind::leaky_relu:
    case LayerKind::dropout:
      return input;
  }
  return input;
}

// ---------------------------------------------------------------------------
// Layer base

template <typename T>
Layer<T>::Layer(LayerSpec spec, Shape input) : spec_(std::move(spec)), input_(std::move(input)) {
  Shape out = output_shape(spec_, batched(1, input_));
  output_.assign(out.begin() + 1, out.end());
}

template <typename T>
void Layer<T>::check_input(const Tensor<T>& x) const {
  const Shape& s = x.shape();
  bool ok = s.size() == input_.size() + 1 && std::equal(input_.begin(), input_.end(), s.begin() + 1);
  if (!ok)
    throw std::invalid_argument("layer '" + spec_.name + "': expected input " + to_string(batched(0, input_)) +
                                " (any batch), got " + to_string(s));
}

template <typename T>
Tensor<T> Layer<T>::forward(const Tensor<T>& x, Mode mode) {
  check_input(x);
  if (mode == Mode::eval) {
    clear_state();
    return forward_eval(x);
  }
  auto y = forward_train(x);
  saved_ = true;
  return y;
}

template <typename T>
Tensor<T> Layer<T>::infer(const Tensor<T>& x) const {
  check_input(x);
  return forward_eval(x);
}

template <typename T>
Tensor<T> Layer<T>::backward(const Tensor<T>& dy) {
  if (!saved_)
    throw std::logic_error("layer '" + spec_.name + "': backward requires a preceding train-mode forward");
  if (dy.rank() != output_.size() + 1 || !std::equal(output_.begin(), output_.end(), dy.shape().begin() + 1))
    throw std::invalid_argument("layer '" + spec_.name + "': output gradient shape " + to_string(dy.shape()) +
                                " does not match output " + to_string(batched(0, output_)));
  return backward_impl(dy);
}

template <typename T>
void Layer<T>::clear_state() {
  saved_ = false;
  release();
}

// ---------------------------------------------------------------------------
// Conv3d: im2col + GEMM per sample.

namespace {

struct ConvGeom {
  std::size_t channels, in_d, in_h, in_w;
  std::size_t out_d, out_h, out_w;
  std::size_t k, s, p;
  std::size_t col_rows() const { return channels * k * k * k; }
  std::size_t col_cols() const { return out_d * out_h * out_w; }
  std::size_t in_size() const { return channels * in_d * in_h * in_w; }
};

template <typename T>
void im2col(const T* in, const ConvGeom& g, T* col) {
  const auto P = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.k; ++kz)
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          T* row = col + (((c * g.k + kz) * g.k + ky) * g.k + kx) * P;
          for (std::size_t oz = 0; oz < g.out_d; ++oz) {
            const long iz = long(oz * g.s + kz) - long(g.p);
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = long(oy * g.s + ky) - long(g.p);
              T* dst = row + (oz * g.out_h + oy) * g.out_w;
              if (iz < 0 || iz >= long(g.in_d) || iy < 0 || iy >= long(g.in_h)) {
                std::fill(dst, dst + g.out_w, T{0});
                continue;
              }
              const T* src = in + ((c * g.in_d + iz) * g.in_h + iy) * g.in_w;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long ix = long(ox * g.s + kx) - long(g.p);
                dst[ox] = (ix < 0 || ix >= long(g.in_w)) ? T{0} : src[ix];
              }
            }
          }
        }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* in) {
  const auto P = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.k; ++kz)
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const T* row = col + (((c * g.k + kz) * g.k + ky) * g.k + kx) * P;
          for (std::size_t oz = 0; oz < g.out_d; ++oz) {
            const long iz = long(oz * g.s + kz) - long(g.p);
            if (iz < 0 || iz >= long(g.in_d)) continue;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = long(oy * g.s + ky) - long(g.p);
              if (iy < 0 || iy >= long(g.in_h)) continue;
              const T* src = row + (oz * g.out_h + oy) * g.out_w;
              T* dst = in + ((c * g.in_d + iz) * g.in_h + iy) * g.in_w;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long ix = long(ox * g.s + kx) - long(g.p);
                if (ix >= 0 && ix < long(g.in_w)) dst[ix] += src[ox];
              }
            }
          }
        }
}

ConvGeom conv_geometry(const LayerSpec& spec, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], in[3], out[1], out[2], out[3], spec.kernel, spec.stride, spec.padding};
}

template <typename T>
void he_normal(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  for (auto& v : w.data()) v = T(dist(rng));
}

}  // namespace

template <typename T>
Conv3d<T>::Conv3d(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {
  if (this->spec().kind != LayerKind::conv3d) throw std::invalid_argument("Conv3d built from non-conv spec");
  const auto k = this->spec().kernel;
  weight_ = Tensor<T>({this->spec().units, this->input_shape()[0], k, k, k});
  bias_ = Tensor<T>({this->spec().units});
}

template <typename T>
std::vector<ParamRef<T>> Conv3d<T>::parameters() {
  return {{this->name() + ".weight", &weight_}, {this->name() + ".bias", &bias_}};
}

template <typename T>
void Conv3d<T>::initialize(std::mt19937_64& rng) {
  he_normal(weight_, weight_.size() / weight_.dim(0), rng);
  bias_.fill(T{0});
}

template <typename T>
Tensor<T> Conv3d<T>::compute(const Tensor<T>& x) const {
  const std::size_t batch = x.dim(0);
  const auto g = conv_geometry(this->spec(), this->input_shape(), this->sample_output_shape());
  const std::size_t F = this->spec().units, R = g.col_rows(), P = g.col_cols();
  Tensor<T> y(batched(batch, this->sample_output_shape()));
  ConstMapMat<T> W(weight_.raw(), F, R);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.raw(), F);
  parallel_for(batch, [&](std::size_t lo, std::size_t hi, std::size_t) {
    AlignedVector<T> col(R * P);
    ConstMapMat<T> C(col.data(), R, P);
    for (std::size_t n = lo; n < hi; ++n) {
      im2col(x.raw() + n * g.in_size(), g, col.data());
      MapMat<T> Y(y.raw() + n * F * P, F, P);
      Y.noalias() = W * C;
      Y.colwise() += b;
    }
  });
  return y;
}

template <typename T>
Tensor<T> Conv3d<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return compute(x);
}

template <typename T>
Tensor<T> Conv3d<T>::forward_eval(const Tensor<T>& x) const {
  return compute(x);
}

template <typename T>
Tensor<T> Conv3d<T>::backward_impl(const Tensor<T>& dy) {
  const Tensor<T>& x = *input_;
  const std::size_t batch = x.dim(0);
  const auto g = conv_geometry(this->spec(), this->input_shape(), this->sample_output_shape());
  const std::size_t F = this->spec().units, R = g.col_rows(), P = g.col_cols();
  Tensor<T> dx(x.shape());
  ConstMapMat<T> W(weight_.raw(), F, R);
  // Per-worker partial sums, combined in worker order.
  const std::size_t workers = worker_count(batch);
  std::vector<AlignedVector<T>> dw_part(workers, AlignedVector<T>(F * R, T(0)));
  std::vector<AlignedVector<T>> db_part(workers, AlignedVector<T>(F, T(0)));
  parallel_for(batch, [&](std::size_t lo, std::size_t hi, std::size_t w) {
    AlignedVector<T> col(R * P), dcol(R * P);
    MapMat<T> C(col.data(), R, P);
    MapMat<T> dC(dcol.data(), R, P);
    MapMat<T> dW(dw_part[w].data(), F, R);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(db_part[w].data(), F);
    for (std::size_t n = lo; n < hi; ++n) {
      ConstMapMat<T> dY(dy.raw() + n * F * P, F, P);
      im2col(x.raw() + n * g.in_size(), g, col.data());
      dW.noalias() += dY * C.transpose();
      db += dY.rowwise().sum();
      dC.noalias() = W.transpose() * dY;
      col2im_add(dcol.data(), g, dx.raw() + n * g.in_size());
    }
  });
  auto gw = weight_.grad();
  auto gb = bias_.grad();
  for (std::size_t w = 0; w < workers; ++w) {
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw_part[w][i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db_part[w][i];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool3d

template <typename T>
MaxPool3d<T>::MaxPool3d(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {}

template <typename T>
Tensor<T> MaxPool3d<T>::compute(const Tensor<T>& x, std::vector<std::size_t>* argmax) const {
  const Shape& in = this->input_shape();
  const Shape& out = this->sample_output_shape();
  const auto k = this->spec().kernel, s = this->spec().stride;
  const long p = long(this->spec().padding);
  const std::size_t batch = x.dim(0);
  Tensor<T> y(batched(batch, out));
  if (argmax) argmax->assign(y.size(), 0);
  const std::size_t in_vol = in[1] * in[2] * in[3];
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < batch * in[0]; ++nc) {
    const std::size_t base = nc * in_vol;
    for (std::size_t oz = 0; oz < out[1]; ++oz)
      for (std::size_t oy = 0; oy < out[2]; ++oy)
        for (std::size_t ox = 0; ox < out[3]; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = base;
          for (std::size_t kz = 0; kz < k; ++kz) {
            const long iz = long(oz * s + kz) - p;
            if (iz < 0 || iz >= long(in[1])) continue;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = long(oy * s + ky) - p;
              if (iy < 0 || iy >= long(in[2])) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = long(ox * s + kx) - p;
                if (ix < 0 || ix >= long(in[3])) continue;
                const std::size_t idx = base + (std::size_t(iz) * in[2] + std::size_t(iy)) * in[3] + std::size_t(ix);
                if (x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
          }
          y[o] = best;
          if (argmax) (*argmax)[o] = best_idx;
        }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool3d<T>::forward_train(const Tensor<T>& x) {
  batch_ = x.dim(0);
  return compute(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool3d<T>::forward_eval(const Tensor<T>& x) const {
  return compute(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward_impl(const Tensor<T>& dy) {
  Tensor<T> dx(batched(batch_, this->input_shape()));
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {
  weight_ = Tensor<T>({this->spec().units, this->input_shape()[0]});
  bias_ = Tensor<T>({this->spec().units});
}

template <typename T>
std::vector<ParamRef<T>> Dense<T>::parameters() {
  return {{this->name() + ".weight", &weight_}, {this->name() + ".bias", &bias_}};
}

template <typename T>
void Dense<T>::initialize(std::mt19937_64& rng) {
  he_normal(weight_, weight_.dim(1), rng);
  bias_.fill(T{0});
}

template <typename T>
Tensor<T> Dense<T>::forward_eval(const Tensor<T>& x) const {
  const std::size_t batch = x.dim(0), in = weight_.dim(1), out = weight_.dim(0);
  Tensor<T> y({batch, out});
  ConstMapMat<T> X(x.raw(), batch, in);
  ConstMapMat<T> W(weight_.raw(), out, in);
  MapMat<T> Y(y.raw(), batch, out);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.raw(), out);
  return y;
}

template <typename T>
Tensor<T> Dense<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward_eval(x);
}

template <typename T>
Tensor<T> Dense<T>::backward_impl(const Tensor<T>& dy) {
  const Tensor<T>& x = *input_;
  const std::size_t batch = x.dim(0), in = weight_.dim(1), out = weight_.dim(0);
  ConstMapMat<T> X(x.raw(), batch, in);
  ConstMapMat<T> dY(dy.raw(), batch, out);
  ConstMapMat<T> W(weight_.raw(), out, in);
  MapMat<T> dW(weight_.grad().data(), out, in);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad().data(), out);
  dW.noalias() += dY.transpose() * X;
  db += dY.colwise().sum();
  Tensor<T> dx({batch, in});
  MapMat<T> dX(dx.raw(), batch, in);
  dX.noalias() = dY * W;
  return dx;
}

// ---------------------------------------------------------------------------
// LeakyRelu

template <typename T>
LeakyRelu<T>::LeakyRelu(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {}

template <typename T>
Tensor<T> LeakyRelu<T>::forward_eval(const Tensor<T>& x) const {
  const T slope = T(this->spec().slope);
  Tensor<T> y = x;
  y.drop_grad();
  for (auto& v : y.data()) v = v >= T{0} ? v : slope * v;
  return y;
}

template <typename T>
Tensor<T> LeakyRelu<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward_eval(x);
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward_impl(const Tensor<T>& dy) {
  const T slope = T(this->spec().slope);
  Tensor<T> dx(dy.shape());
  const Tensor<T>& x = *input_;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] >= T{0} ? dy[i] : slope * dy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {}

template <typename T>
Tensor<T> Dropout<T>::forward_eval(const Tensor<T>& x) const {
  Tensor<T> y = x;
  y.drop_grad();
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::forward_train(const Tensor<T>& x) {
  const double ratio = this->spec().dropout;
  const T keep_scale = T(1.0 / (1.0 - ratio));
  mask_.resize(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = (ratio == 0.0 || u(rng_) >= ratio) ? keep_scale : T{0};
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward_impl(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm3d

template <typename T>
BatchNorm3d<T>::BatchNorm3d(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {
  const std::size_t C = this->input_shape()[0];
  gamma_ = Tensor<T>({C}, T{1});
  beta_ = Tensor<T>({C}, T{0});
  running_mean_ = Tensor<T>({C}, T{0});
  running_var_ = Tensor<T>({C}, T{1});
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm3d<T>::parameters() {
  return {{this->name() + ".scale", &gamma_}, {this->name() + ".shift", &beta_}};
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm3d<T>::buffers() {
  return {{this->name() + ".running_mean", &running_mean_}, {this->name() + ".running_var", &running_var_}};
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward_eval(const Tensor<T>& x) const {
  const std::size_t batch = x.dim(0), C = this->input_shape()[0];
  const std::size_t S = spatial_size(this->input_shape(), 1);
  const double eps = this->spec().epsilon;
  Tensor<T> y(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const T inv = T(1.0 / std::sqrt(double(running_var_[c]) + eps));
    const T a = gamma_[c] * inv, b = beta_[c] - gamma_[c] * inv * running_mean_[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) y[base + i] = a * x[base + i] + b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward_train(const Tensor<T>& x) {
  const std::size_t batch = x.dim(0), C = this->input_shape()[0];
  const std::size_t S = spatial_size(this->input_shape(), 1);
  const std::size_t m = batch * S;
  const double eps = this->spec().epsilon, mom = this->spec().momentum;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  inv_std_.assign(C, T{0});
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < S; ++i) sum += x[(n * C + c) * S + i];
    const double mean = sum / double(m);
    double sq = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < S; ++i) {
        const double d = x[(n * C + c) * S + i] - mean;
        sq += d * d;
      }
    const double var = sq / double(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std_[c] = T(inv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t idx = (n * C + c) * S + i;
        xhat[idx] = T((x[idx] - mean) * inv);
        y[idx] = gamma_[c] * xhat[idx] + beta_[c];
      }
    const double unbiased = m > 1 ? sq / double(m - 1) : var;
    running_mean_[c] = T(mom * running_mean_[c] + (1.0 - mom) * mean);
    running_var_[c] = T(mom * running_var_[c] + (1.0 - mom) * unbiased);
  }
  normalized_ = std::move(xhat);
  return y;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward_impl(const Tensor<T>& dy) {
  const Tensor<T>& xhat = *normalized_;
  const std::size_t batch = dy.dim(0), C = this->input_shape()[0];
  const std::size_t S = spatial_size(this->input_shape(), 1);
  const double m = double(batch * S);
  auto dgamma = gamma_.grad();
  auto dbeta = beta_.grad();
  Tensor<T> dx(dy.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t idx = (n * C + c) * S + i;
        sum_dy += dy[idx];
        sum_dy_xhat += double(dy[idx]) * xhat[idx];
      }
    dgamma[c] += T(sum_dy_xhat);
    dbeta[c] += T(sum_dy);
    const double k = double(gamma_[c]) * inv_std_[c] / m;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t idx = (n * C + c) * S + i;
        dx[idx] = T(k * (m * dy[idx] - sum_dy - xhat[idx] * sum_dy_xhat));
      }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Flatten

template <typename T>
Flatten<T>::Flatten(LayerSpec spec, Shape input) : Layer<T>(std::move(spec), std::move(input)) {}

template <typename T>
Tensor<T> Flatten<T>::forward_eval(const Tensor<T>& x) const {
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

template <typename T>
Tensor<T> Flatten<T>::backward_impl(const Tensor<T>& dy) {
  return dy.reshaped(batched(dy.dim(0), this->input_shape()));
}

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input) {
  switch (spec.kind) {
    case LayerKind::conv3d: return std::make_unique<Conv3d<T>>(spec, input);
    case LayerKind::maxpool3d: return std::make_unique<MaxPool3d<T>>(spec, input);
    case LayerKind::dense: return std::make_unique<Dense<T>>(spec, input);
    case LayerKind::leaky_relu: return std::make_unique<LeakyRelu<T>>(spec, input);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec, input);
    case LayerKind::batchnorm3d: return std::make_unique<BatchNorm3d<T>>(spec, input);
    case LayerKind::flatten: return std::make_unique<Flatten<T>>(spec, input);
  }
  throw std::invalid_argument("unsupported layer kind");
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax expects [batch x K], got " + to_string(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t r = 0; r < B; ++r) {
    const T* row = logits.raw() + r * K;
    const T mx = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(double(row[k] - mx));
    for (std::size_t k = 0; k < K; ++k) p[r * K + k] = T(std::exp(double(row[k] - mx)) / z);
  }
  return p;
}

template <typename T>
XentResult<T> softmax_xent_ranged(const Tensor<T>& logits, std::span<const std::size_t> targets,
                                  std::span<const ColumnRange> ranges) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross-entropy expects [batch x K] logits, got " + to_string(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (targets.size() != B || ranges.size() != B)
    throw std::invalid_argument("cross-entropy: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(B) + " rows");
  XentResult<T> out{T{0}, Tensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    const auto [lo, hi] = ranges[r];
    if (lo >= hi || hi > K) throw std::invalid_argument("cross-entropy: invalid column range");
    if (targets[r] < lo || targets[r] >= hi)
      throw std::invalid_argument("cross-entropy: target " + std::to_string(targets[r]) + " outside [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + ")");
    const T* row = logits.raw() + r * K;
    const double mx = double(*std::max_element(row + lo, row + hi));
    double z = 0.0;
    for (std::size_t k = lo; k < hi; ++k) z += std::exp(double(row[k]) - mx);
    const double log_z = mx + std::log(z);
    total += log_z - double(row[targets[r]]);
    for (std::size_t k = lo; k < hi; ++k) {
      const double p = std::exp(double(row[k]) - log_z);
      out.grad[r * K + k] = T((p - (k == targets[r] ? 1.0 : 0.0)) / double(B));
    }
  }
  out.loss = T(total / double(B));
  return out;
}

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross-entropy expects [batch x K] logits, got " + to_string(logits.shape()));
  std::vector<ColumnRange> ranges(logits.dim(0), ColumnRange{0, logits.dim(1)});
  return softmax_xent_ranged(logits, targets, ranges);
}

#define ORION_INSTANTIATE(T)                                                                             \
  template class Layer<T>;                                                                               \
  template class Conv3d<T>;                                                                              \
  template class MaxPool3d<T>;                                                                           \
  template class Dense<T>;                                                                               \
  template class LeakyRelu<T>;                                                                           \
  template class Dropout<T>;                                                                             \
  template class BatchNorm3d<T>;                                                                         \
  template class Flatten<T>;                                                                             \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, const Shape&);                      \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                                  \
  template XentResult<T> softmax_xent<T>(const Tensor<T>&, std::span<const std::size_t>);                \
  template XentResult<T> softmax_xent_ranged<T>(const Tensor<T>&, std::span<const std::size_t>,          \
                                                std::span<const ColumnRange>);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::nn

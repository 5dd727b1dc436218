#include "orion/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "orion/voting.hpp"
#include "orion/voxel.hpp"

namespace orion::analysis {

namespace {

using nn::LayerKind;

bool is_weighted(LayerKind k) { return k == LayerKind::conv3d || k == LayerKind::dense; }

// Index of the maximum (lowest index on ties) and the gap to the runner-up.
std::pair<std::size_t, double> pick(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != best) second = std::max(second, v[i]);
  return {best, v.size() > 1 ? v[best] - second : 0.0};
}

// Channel count of the feature maps flattened into trunk layer `i`, or 0 when
// its input is already a flat vector.
template <typename T>
std::size_t upstream_channels(const model::Network<T>& net, std::size_t i) {
  for (std::size_t j = i; j-- > 0;) {
    const auto& L = net.trunk_layer(j);
    if (L.spec().kind == LayerKind::flatten) return L.input_shape().size() == 4 ? L.input_shape()[0] : 0;
    if (L.spec().kind == LayerKind::dense) return 0;
  }
  return 0;
}

}  // namespace

template <typename T>
std::vector<double> dense_contributions(const nn::Dense<T>& layer, const nn::Tensor<T>& input, std::size_t selected,
                                        std::size_t channels) {
  const std::size_t D = layer.input_shape()[0];
  if (input.size() != D) throw std::invalid_argument("dense contribution input must be a single sample");
  if (selected >= layer.spec().units) throw std::invalid_argument("selected unit out of range");
  if (channels == 0 || D % channels != 0) throw std::invalid_argument("channel count does not divide the input width");
  const std::size_t per = D / channels;
  const T* w = layer.weight().raw() + selected * D;
  std::vector<double> c(channels, 0.0);
  for (std::size_t k = 0; k < D; ++k) c[k / per] += double(w[k]) * double(input[k]);
  return c;
}

template <typename T>
std::vector<double> conv_contributions(const nn::Conv3d<T>& layer, const nn::Tensor<T>& input, std::size_t selected) {
  const auto& in = layer.input_shape();
  const auto& out = layer.sample_output_shape();
  if (input.size() != nn::num_elements(in)) throw std::invalid_argument("conv contribution input must be a single sample");
  if (selected >= layer.spec().units) throw std::invalid_argument("selected filter out of range");
  const std::size_t C = in[0], k = layer.spec().kernel, s = layer.spec().stride;
  const long pad = long(layer.spec().padding);
  // Sum of input activations seen by each kernel tap over all output positions.
  std::vector<double> tap(C * k * k * k, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t kz = 0; kz < k; ++kz)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          double sum = 0.0;
          for (std::size_t oz = 0; oz < out[1]; ++oz) {
            const long iz = long(oz * s + kz) - pad;
            if (iz < 0 || iz >= long(in[1])) continue;
            for (std::size_t oy = 0; oy < out[2]; ++oy) {
              const long iy = long(oy * s + ky) - pad;
              if (iy < 0 || iy >= long(in[2])) continue;
              for (std::size_t ox = 0; ox < out[3]; ++ox) {
                const long ix = long(ox * s + kx) - pad;
                if (ix < 0 || ix >= long(in[3])) continue;
                sum += double(input[((c * in[1] + std::size_t(iz)) * in[2] + std::size_t(iy)) * in[3] + std::size_t(ix)]);
              }
            }
          }
          tap[((c * k + kz) * k + ky) * k + kx] = sum;
        }
  const std::size_t per_filter = C * k * k * k;
  const T* w = layer.weight().raw() + selected * per_filter;
  std::vector<double> contrib(C, 0.0);
  for (std::size_t i = 0; i < per_filter; ++i) contrib[i / (k * k * k)] += double(w[i]) * tap[i];
  return contrib;
}

template <typename T>
DominantPath dominant_path(const model::Network<T>& net, const nn::Tensor<T>& grid) {
  const std::size_t n = net.spec().grid.total;
  if (grid.shape() != nn::Shape{1, 1, n, n, n})
    throw std::invalid_argument("dominant path expects one grid shaped [1,1," + std::to_string(n) + "," +
                                std::to_string(n) + "," + std::to_string(n) + "], got " + nn::to_string(grid.shape()));
  const auto acts = net.trace(grid);
  const auto logits = net.class_head().infer(acts.back());
  std::vector<double> lv(logits.size());
  for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = double(logits[i]);
  auto [cls, cls_margin] = pick(lv);

  DominantPath path;
  path.predicted_class = cls;
  std::vector<PathStep> rev;
  rev.push_back({"class_head", cls, lv.size(), cls_margin});

  // Contributions into the class node come from the last hidden layer.
  const std::size_t T_n = net.trunk_size();
  auto upstream_weighted = [&](std::size_t i) -> long {
    for (std::size_t j = i; j-- > 0;)
      if (is_weighted(net.trunk_layer(j).spec().kind)) return long(j);
    return -1;
  };

  std::size_t selected = cls;
  const auto* head = &net.class_head();
  {
    const long up = upstream_weighted(T_n);
    if (up < 0) {
      path.steps.assign(rev.rbegin(), rev.rend());
      return path;
    }
    const auto c = dense_contributions(*head, acts.back(), selected, head->input_shape()[0]);
    auto [idx, margin] = pick(c);
    const auto& L = net.trunk_layer(std::size_t(up));
    rev.push_back({L.name(), idx, c.size(), margin});
    selected = idx;
  }
  for (long i = long(T_n) - 1; i >= 0; --i) {
    const auto& L = net.trunk_layer(std::size_t(i));
    if (!is_weighted(L.spec().kind)) continue;
    const long up = upstream_weighted(std::size_t(i));
    if (up < 0) break;
    std::vector<double> c;
    if (L.spec().kind == LayerKind::dense) {
      const auto& D = dynamic_cast<const nn::Dense<T>&>(L);
      const std::size_t ch = upstream_channels(net, std::size_t(i));
      c = dense_contributions(D, acts[std::size_t(i)], selected, ch ? ch : D.input_shape()[0]);
    } else {
      c = conv_contributions(dynamic_cast<const nn::Conv3d<T>&>(L), acts[std::size_t(i)], selected);
    }
    auto [idx, margin] = pick(c);
    rev.push_back({net.trunk_layer(std::size_t(up)).name(), idx, c.size(), margin});
    selected = idx;
  }
  path.steps.assign(rev.rbegin(), rev.rend());
  return path;
}

template <typename T>
std::vector<PathHistogram> path_histograms(const model::Network<T>& net, std::span<const SampleGroup> groups,
                                           std::vector<std::string>* skipped) {
  std::vector<PathHistogram> out;
  for (const auto& g : groups) {
    if (g.grids.empty()) {
      if (skipped) skipped->push_back(g.name);
      continue;
    }
    PathHistogram h;
    h.group = g.name;
    for (const auto& grid : g.grids) {
      const voxel::OccupancyGrid one[1] = {grid};
      const auto p = dominant_path(net, model::grids_to_tensor<T>(one));
      if (h.layers.empty()) {
        for (const auto& s : p.steps) {
          h.layers.push_back(s.layer);
          h.counts.emplace_back(s.width, 0);
        }
      }
      for (std::size_t l = 0; l < p.steps.size(); ++l) ++h.counts[l][p.steps[l].index];
      ++h.samples;
    }
    for (const auto& c : h.counts) {
      double e = 0.0;
      for (auto v : c)
        if (v) {
          const double q = double(v) / double(h.samples);
          e -= q * std::log2(q);
        }
      h.entropy.push_back(e);
    }
    out.push_back(std::move(h));
  }
  return out;
}

void write_histograms_csv(const std::filesystem::path& path, std::span<const PathHistogram> hists) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "group,layer,index,count\n" << std::setprecision(10);
  for (const auto& h : hists) {
    for (std::size_t l = 0; l < h.layers.size(); ++l) {
      for (std::size_t i = 0; i < h.counts[l].size(); ++i)
        out << h.group << ',' << h.layers[l] << ',' << i << ',' << h.counts[l][i] << '\n';
      out << h.group << ',' << h.layers[l] << ",entropy," << h.entropy[l] << '\n';
    }
  }
  if (!out) throw io::IoError(path.string() + ": write failed");
}

template <typename T>
std::vector<io::FloatGrid> snapshot_activations(const model::Network<T>& net, const PointCloud& cloud,
                                                const std::string& layer, std::size_t filter, std::size_t rotations,
                                                double threshold) {
  std::size_t li = net.trunk_size();
  for (std::size_t i = 0; i < net.trunk_size(); ++i)
    if (net.trunk_layer(i).name() == layer) li = i;
  if (li == net.trunk_size()) throw std::invalid_argument("network has no trunk layer named '" + layer + "'");
  const auto& shape = net.trunk_layer(li).sample_output_shape();
  if (shape.size() != 4) throw std::invalid_argument("layer '" + layer + "' has no spatial output");
  if (filter >= shape[0])
    throw std::invalid_argument("filter " + std::to_string(filter) + " out of range for '" + layer + "' with " +
                                std::to_string(shape[0]) + " filters");
  const auto angles = vote::rotation_angles(rotations);
  const std::size_t vol = shape[1] * shape[2] * shape[3];
  std::vector<io::FloatGrid> maps;
  for (double a : angles) {
    const voxel::OccupancyGrid g = voxel::voxelize(a == 0.0 ? cloud : voxel::rotate_points(cloud, a), net.spec().grid);
    const voxel::OccupancyGrid one[1] = {g};
    const auto acts = net.trace(model::grids_to_tensor<T>(one));
    const auto& y = acts[li + 1];
    io::FloatGrid m;
    m.extent = {std::uint32_t(shape[3]), std::uint32_t(shape[2]), std::uint32_t(shape[1])};
    m.voxel_size = float(g.voxel_size * double(g.spec.total) / double(shape[3]));
    m.origin = g.origin;
    m.values.resize(vol);
    for (std::size_t i = 0; i < vol; ++i) {
      const double v = double(y[filter * vol + i]);
      m.values[i] = std::abs(v) < threshold ? 0.0f : float(v);
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

#define ORION_INSTANTIATE(T)                                                                                     \
  template std::vector<double> dense_contributions<T>(const nn::Dense<T>&, const nn::Tensor<T>&, std::size_t,  \
                                                      std::size_t);                                             \
  template std::vector<double> conv_contributions<T>(const nn::Conv3d<T>&, const nn::Tensor<T>&, std::size_t); \
  template DominantPath dominant_path<T>(const model::Network<T>&, const nn::Tensor<T>&);                      \
  template std::vector<PathHistogram> path_histograms<T>(const model::Network<T>&, std::span<const SampleGroup>, \
                                                         std::vector<std::string>*);                            \
  template std::vector<io::FloatGrid> snapshot_activations<T>(const model::Network<T>&, const PointCloud&,     \
                                                              const std::string&, std::size_t, std::size_t,     \
                                                              double);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::analysis

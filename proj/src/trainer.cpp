#include "orion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "orion/io.hpp"
#include "orion/optim.hpp"
#include "orion/parallel.hpp"

namespace orion::train {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters in '" + v + "'");
  return d;
}

std::uint64_t parse_uint(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  std::size_t used = 0;
  const auto n = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters in '" + v + "'");
  return n;
}

// splitmix64 finalizer; gives every (epoch, sample) its own augmentation stream.
std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x632be59bd9b4e019ULL) * 0xbf58476d1ce4e5b9ULL ^ c;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t argmax(std::span<const double> v, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i < hi; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  grid.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be positive");
  if (!(decay_at >= 0.0 && decay_at <= 1.0)) throw std::invalid_argument("decay_at must lie in [0, 1]");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (shift < 0 || std::size_t(shift) > grid.padding)
    throw std::invalid_argument("shift range " + std::to_string(shift) + " exceeds the grid padding " +
                                std::to_string(grid.padding));
  if (gamma > 0.0 && !orientation_head) throw std::invalid_argument("gamma > 0 requires the orientation head");
}

std::vector<std::string> TrainConfig::keys() {
  return {"arch",     "grid",     "object",     "padding",         "gamma",          "lr",
          "momentum", "weight_decay", "lr_decay", "decay_at",      "epochs",         "batch_size",
          "seed",     "orientation_head", "orientation_softmax", "rotation_copies", "shift", "precision"};
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "arch") arch = model::architecture_from_string(value);
    else if (key == "grid") grid.total = parse_uint(value);
    else if (key == "object") grid.object = parse_uint(value);
    else if (key == "padding") grid.padding = parse_uint(value);
    else if (key == "gamma") gamma = parse_double(value);
    else if (key == "lr") lr = parse_double(value);
    else if (key == "momentum") momentum = parse_double(value);
    else if (key == "weight_decay") weight_decay = parse_double(value);
    else if (key == "lr_decay") lr_decay = parse_double(value);
    else if (key == "decay_at") decay_at = parse_double(value);
    else if (key == "epochs") epochs = parse_uint(value);
    else if (key == "batch_size") batch_size = parse_uint(value);
    else if (key == "seed") seed = parse_uint(value);
    else if (key == "orientation_head") orientation_head = parse_bool(value);
    else if (key == "rotation_copies") rotation_copies = parse_bool(value);
    else if (key == "shift") shift = static_cast<int>(parse_uint(value));
    else if (key == "orientation_softmax") {
      if (value == "full") orientation_softmax = model::OrientationSoftmax::full;
      else if (value == "masked") orientation_softmax = model::OrientationSoftmax::masked;
      else throw std::invalid_argument("expected full or masked");
    } else if (key == "precision") {
      if (value == "f32" || value == "32") precision = Precision::f32;
      else if (value == "f64" || value == "64") precision = Precision::f64;
      else throw std::invalid_argument("expected f32 or f64");
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind("unknown config key", 0) == 0) throw;
    throw std::invalid_argument("bad value '" + value + "' for " + key + ": " + msg);
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("value '" + value + "' for " + key + " is out of range");
  }
}

TrainConfig parse_config(std::istream& in, TrainConfig base, std::span<const std::string> skip) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = io::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = io::trim(t.substr(0, eq)), value = io::trim(t.substr(eq + 1));
    try {
      TrainConfig probe = base;
      probe.set(key, value);
      if (std::find(skip.begin(), skip.end(), key) == skip.end()) base = probe;
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig read_config(const std::filesystem::path& path, TrainConfig base, std::span<const std::string> skip) {
  std::ifstream in(path);
  if (!in) throw io::IoError(path.string() + ": cannot open");
  try {
    return parse_config(in, std::move(base), skip);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

LabeledSample augment(const data::Sample& sample, const voxel::GridSpec& grid, const AugmentOptions& opts,
                      std::mt19937_64& rng) {
  LabeledSample out;
  out.class_id = sample.class_id;
  out.azimuth_deg = sample.azimuth_deg;
  double extra = 0.0;
  if (opts.rotation_copies) {
    const auto copies = static_cast<std::size_t>(std::llround(360.0 / opts.rotation_step_deg));
    std::uniform_int_distribution<std::size_t> pick(0, copies - 1);
    extra = double(pick(rng)) * opts.rotation_step_deg;
    if (out.azimuth_deg) out.azimuth_deg = std::fmod(*out.azimuth_deg + extra, 360.0);
  }
  out.grid = data::sample_grid(sample, grid, extra);
  if (opts.shift > 0) {
    std::uniform_int_distribution<int> d(-opts.shift, opts.shift);
    const int dx = d(rng), dy = d(rng), dz = d(rng);
    out.grid = voxel::shift_grid(out.grid, dx, dy, dz);
  }
  return out;
}

Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                        std::size_t n_classes, std::span<const std::size_t> orient_truth,
                        std::span<const std::size_t> orient_pred, std::span<const std::uint8_t> orient_mask) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth and prediction counts differ");
  Metrics m;
  m.count = truth.size();
  m.f1.assign(n_classes, 0.0);
  m.support.assign(n_classes, 0);
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes) throw std::invalid_argument("class id out of range");
    ++m.support[truth[i]];
    if (truth[i] == predicted[i]) {
      ++correct;
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
    }
  }
  if (m.count) m.accuracy = double(correct) / double(m.count);
  double weighted = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double denom = 2.0 * double(tp[c]) + double(fp[c]) + double(m.support[c] - tp[c]);
    m.f1[c] = denom > 0.0 ? 2.0 * double(tp[c]) / denom : 0.0;
    weighted += double(m.support[c]) * m.f1[c];
  }
  if (m.count) m.weighted_f1 = weighted / double(m.count);

  if (!orient_truth.empty()) {
    if (orient_truth.size() != truth.size() || orient_pred.size() != truth.size() || orient_mask.size() != truth.size())
      throw std::invalid_argument("orientation arrays must match the sample count");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!orient_mask[i]) continue;
      ++m.orientation_count;
      if (orient_truth[i] == orient_pred[i]) ++hit;
    }
    if (m.orientation_count) m.orientation_accuracy = double(hit) / double(m.orientation_count);
  }
  return m;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "epoch,loss,L_C,L_O,val_acc,val_wF1,val_orient_acc\n" << std::setprecision(10);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.loss << ',' << h.class_loss << ',' << h.orient_loss << ',';
    if (h.validation)
      out << h.validation->accuracy << ',' << h.validation->weighted_f1 << ',' << h.validation->orientation_accuracy;
    else
      out << ",,";
    out << '\n';
  }
  if (!out) throw io::IoError(path.string() + ": write failed");
}

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const data::Dataset& train_set, const data::Dataset* validation,
                     const model::Checkpoint* init) {
  cfg.validate();
  if (train_set.samples.empty()) throw std::invalid_argument("training set is empty");
  train_set.validate();
  const auto& scheme = train_set.scheme;
  if (validation && !(validation->scheme == scheme))
    throw std::invalid_argument("validation set uses a different orientation scheme");

  model::Network<T> net = model::build_network<T>(cfg.arch, cfg.grid, scheme.num_classes(), scheme, cfg.seed,
                                                  cfg.orientation_head);
  if (init) {
    if (!(init->spec.scheme == scheme)) throw std::invalid_argument("initial checkpoint uses a different scheme");
    if (init->spec.arch != cfg.arch || !(init->spec.grid == cfg.grid))
      throw std::invalid_argument("initial checkpoint has a different architecture or grid");
    for (const auto& name : model::load_parameters(net, *init, true))
      if (name.rfind("orient_head.", 0) != 0)
        throw std::invalid_argument("initial checkpoint lacks parameter '" + name + "'");
  }

  nn::Sgd<T> opt(net.parameters(), cfg.momentum, cfg.weight_decay);
  std::mt19937_64 order_rng(cfg.seed);
  const AugmentOptions aug{cfg.rotation_copies, cfg.shift, model::kDefaultBinWidthDeg};
  const std::size_t decay_epoch = static_cast<std::size_t>(std::llround(cfg.decay_at * double(cfg.epochs)));

  std::vector<std::size_t> order(train_set.size());
  TrainResult<T> result{std::move(net), {}};
  auto& model_net = result.net;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch >= decay_epoch ? cfg.lr * cfg.lr_decay : cfg.lr;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);

    double sum_lc = 0.0, sum_lo = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<LabeledSample> batch(n);
      parallel_for(n, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t i = lo; i < hi; ++i) {
          std::mt19937_64 rng(mix(cfg.seed, epoch, order[start + i]));
          batch[i] = augment(train_set.samples[order[start + i]], cfg.grid, aug, rng);
        }
      });
      std::vector<voxel::OccupancyGrid> grids;
      std::vector<std::size_t> cls(n), ori(n, 0);
      grids.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        grids.push_back(std::move(batch[i].grid));
        cls[i] = batch[i].class_id;
        if (cfg.orientation_head) ori[i] = scheme.target(cls[i], batch[i].azimuth_deg);
      }
      const auto x = model::grids_to_tensor<T>(grids);
      const auto out = model_net.forward(x, nn::Mode::train);
      auto loss = model::orion_loss(out, cls, ori, cfg.gamma, scheme, cfg.orientation_softmax);
      if (!std::isfinite(loss.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                std::to_string(batch_index + 1),
                            epoch + 1, batch_index + 1);
      model_net.zero_grad();
      model_net.backward(loss.class_grad, out.has_orientation() ? &loss.orient_grad : nullptr);
      try {
        opt.step(lr);
      } catch (const nn::NonFiniteGradient& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + ", batch " +
                                std::to_string(batch_index + 1),
                            epoch + 1, batch_index + 1);
      }
      sum_lc += loss.class_loss * double(n);
      sum_lo += loss.orient_loss * double(n);
    }
    EpochStats st;
    st.epoch = epoch + 1;
    st.lr = lr;
    st.class_loss = sum_lc / double(order.size());
    st.orient_loss = sum_lo / double(order.size());
    st.loss = (1.0 - cfg.gamma) * st.class_loss + cfg.gamma * st.orient_loss;
    if (validation && !validation->samples.empty())
      st.validation = evaluate(model_net, *validation, cfg.orientation_softmax);
    result.history.push_back(std::move(st));
  }
  return result;
}

template <typename T>
Predictions predict(const model::Network<T>& net, std::span<const voxel::OccupancyGrid> grids,
                    model::OrientationSoftmax softmax, std::size_t batch) {
  Predictions p;
  const auto& scheme = net.spec().scheme;
  for (std::size_t start = 0; start < grids.size(); start += batch) {
    const std::size_t n = std::min(batch, grids.size() - start);
    const auto out = net.infer(model::grids_to_tensor<T>(grids.subspan(start, n)));
    const auto probs = nn::softmax_rows(out.class_logits);
    const std::size_t C = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(C);
      for (std::size_t c = 0; c < C; ++c) row[c] = double(probs[i * C + c]);
      const std::size_t cls = argmax(row, 0, C);
      p.classes.push_back(cls);
      p.class_probs.push_back(std::move(row));
      if (out.has_orientation()) {
        const std::size_t N = out.orient_logits.dim(1);
        std::vector<double> o(N);
        for (std::size_t k = 0; k < N; ++k) o[k] = double(out.orient_logits[i * N + k]);
        if (softmax == model::OrientationSoftmax::masked) {
          const auto r = scheme.block(cls);
          p.orient_nodes.push_back(argmax(o, r.begin, r.end));
        } else {
          p.orient_nodes.push_back(argmax(o, 0, N));
        }
        p.orient_logits.push_back(std::move(o));
      }
    }
  }
  return p;
}

template <typename T>
Metrics evaluate(const model::Network<T>& net, const data::Dataset& ds, model::OrientationSoftmax softmax) {
  const auto& scheme = net.spec().scheme;
  if (!(ds.scheme == scheme)) throw std::invalid_argument("dataset scheme does not match the checkpoint scheme");
  ds.validate();
  std::vector<voxel::OccupancyGrid> grids(ds.size());
  parallel_for(ds.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) grids[i] = data::sample_grid(ds.samples[i], net.spec().grid);
  });
  const auto p = predict(net, std::span<const voxel::OccupancyGrid>(grids), softmax);
  std::vector<std::size_t> truth(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) truth[i] = ds.samples[i].class_id;
  if (p.orient_nodes.empty()) return compute_metrics(truth, p.classes, scheme.num_classes());

  std::vector<std::size_t> ot(ds.size(), 0), op(ds.size(), 0);
  std::vector<std::uint8_t> mask(ds.size(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (scheme.bins(s.class_id) <= 1) continue;
    mask[i] = 1;
    ot[i] = scheme.target(s.class_id, s.azimuth_deg);
    if (softmax == model::OrientationSoftmax::masked) {
      const auto r = scheme.block(s.class_id);
      op[i] = argmax(p.orient_logits[i], r.begin, r.end);
    } else {
      op[i] = p.orient_nodes[i];
    }
  }
  return compute_metrics(truth, p.classes, scheme.num_classes(), ot, op, mask);
}

std::string format_metrics(const Metrics& m, const model::OrientationScheme& scheme) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << "samples " << m.count << "\naccuracy " << m.accuracy << "\nweighted_f1 " << m.weighted_f1
    << "\norientation_accuracy " << m.orientation_accuracy << " (" << m.orientation_count << " samples)\n";
  for (std::size_t c = 0; c < m.f1.size(); ++c)
    s << "f1 " << (c < scheme.num_classes() ? scheme.at(c).name : std::to_string(c)) << ' ' << m.f1[c]
      << " support " << m.support[c] << '\n';
  return s.str();
}

#define ORION_INSTANTIATE(T)                                                                                    \
  template TrainResult<T> train<T>(const TrainConfig&, const data::Dataset&, const data::Dataset*,            \
                                   const model::Checkpoint*);                                                  \
  template Predictions predict<T>(const model::Network<T>&, std::span<const voxel::OccupancyGrid>,            \
                                  model::OrientationSoftmax, std::size_t);                                     \
  template Metrics evaluate<T>(const model::Network<T>&, const data::Dataset&, model::OrientationSoftmax);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::train

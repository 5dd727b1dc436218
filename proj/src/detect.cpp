#include "orion/detect.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "orion/io.hpp"
#include "orion/parallel.hpp"
#include "orion/voxel.hpp"

namespace orion::det {

namespace {

constexpr double kPi = std::numbers::pi;

BoxSize clamp_size(BoxSize s, const BoxSize& lo, const BoxSize& hi) {
  return {std::clamp(s.length, lo.length, hi.length), std::clamp(s.width, lo.width, hi.width),
          std::clamp(s.height, lo.height, hi.height)};
}

// Uniform ground-plane bucket grid for radius queries around window centers.
class PlaneIndex {
 public:
  PlaneIndex(const PointCloud& cloud, double cell) : cloud_(cloud), cell_(cell) {
    for (std::size_t i = 0; i < cloud.points.size(); ++i) buckets_[key(cell_of(cloud.points[i].x), cell_of(cloud.points[i].y))].push_back(i);
  }

  std::vector<std::size_t> within(double x, double y, double r) const {
    std::vector<std::size_t> out;
    const long x0 = cell_of(x - r), x1 = cell_of(x + r), y0 = cell_of(y - r), y1 = cell_of(y + r);
    for (long cx = x0; cx <= x1; ++cx)
      for (long cy = y0; cy <= y1; ++cy) {
        auto it = buckets_.find(key(cx, cy));
        if (it == buckets_.end()) continue;
        for (auto i : it->second) {
          const auto& p = cloud_.points[i];
          if ((p.x - x) * (p.x - x) + (p.y - y) * (p.y - y) <= r * r) out.push_back(i);
        }
      }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  long cell_of(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static std::int64_t key(long x, long y) { return (std::int64_t(x) << 32) ^ (std::int64_t(y) & 0xffffffff); }
  const PointCloud& cloud_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

double crop_half_side(const DetectionBox& box, const voxel::GridSpec& grid) {
  return 0.5 * double(grid.total) * crop_voxel_size(box, grid);
}

PointCloud crop_from(const PointCloud& scene, std::span<const std::size_t> idx, const DetectionBox& box,
                     const voxel::GridSpec& grid) {
  const double half = crop_half_side(box, grid);
  PointCloud out;
  for (auto i : idx) {
    const Vec3 q = rotate_z(scene.points[i] - box.center, -box.yaw);
    if (std::abs(q.x) < half && std::abs(q.y) < half && std::abs(q.z) < half) out.points.push_back(q);
  }
  return out;
}

std::size_t argmax_range(std::span<const double> v, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i < hi; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

SizeStats box_stats(std::span<const DetectionBox> truth) {
  if (truth.empty()) throw std::invalid_argument("size statistics need at least one box");
  SizeStats s;
  const double n = double(truth.size());
  s.min = s.max = {truth[0].length, truth[0].width, truth[0].height};
  for (const auto& b : truth) {
    s.mean.length += b.length / n;
    s.mean.width += b.width / n;
    s.mean.height += b.height / n;
    s.min = {std::min(s.min.length, b.length), std::min(s.min.width, b.width), std::min(s.min.height, b.height)};
    s.max = {std::max(s.max.length, b.length), std::max(s.max.width, b.width), std::max(s.max.height, b.height)};
  }
  for (const auto& b : truth) {
    s.spread.length += (b.length - s.mean.length) * (b.length - s.mean.length) / n;
    s.spread.width += (b.width - s.mean.width) * (b.width - s.mean.width) / n;
    s.spread.height += (b.height - s.mean.height) * (b.height - s.mean.height) / n;
  }
  s.spread = {std::sqrt(s.spread.length), std::sqrt(s.spread.width), std::sqrt(s.spread.height)};
  for (double k : {-1.0, 0.0, 1.0}) {
    const BoxSize c = clamp_size({s.mean.length + k * s.spread.length, s.mean.width + k * s.spread.width,
                                  s.mean.height + k * s.spread.height},
                                 s.min, s.max);
    if (std::find(s.candidates.begin(), s.candidates.end(), c) == s.candidates.end()) s.candidates.push_back(c);
  }
  return s;
}

std::string_view to_string(SearchMode m) { return m == SearchMode::guided ? "guided" : "exhaustive"; }

SearchMode search_mode_from_string(std::string_view s) {
  if (s == "guided") return SearchMode::guided;
  if (s == "exhaustive") return SearchMode::exhaustive;
  throw std::invalid_argument("unknown search mode '" + std::string(s) + "'");
}

std::vector<DetectionBox> propose_boxes(const PointCloud& scene, const SizeStats& stats, const ProposalConfig& cfg,
                                        std::size_t* locations) {
  if (!(cfg.stride > 0.0)) throw std::invalid_argument("proposal stride must be positive");
  if (cfg.mode == SearchMode::exhaustive && cfg.rotations == 0)
    throw std::invalid_argument("exhaustive search needs at least one rotation");
  if (locations) *locations = 0;
  std::vector<DetectionBox> out;
  if (scene.empty() || stats.candidates.empty()) return out;
  const Aabb bb = bounds(scene);
  const auto nx = static_cast<std::size_t>(std::floor((bb.max.x - bb.min.x) / cfg.stride)) + 1;
  const auto ny = static_cast<std::size_t>(std::floor((bb.max.y - bb.min.y) / cfg.stride)) + 1;
  double max_diag = 0.0;
  for (const auto& c : stats.candidates) max_diag = std::max(max_diag, std::hypot(c.length, c.width));
  const PlaneIndex index(scene, std::max(cfg.stride, 0.5));
  const std::size_t R = cfg.mode == SearchMode::exhaustive ? cfg.rotations : 1;

  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = bb.min.x + double(ix) * cfg.stride, y = bb.min.y + double(iy) * cfg.stride;
      const auto near = index.within(x, y, 0.5 * max_diag);
      for (const auto& c : stats.candidates) {
        if (locations) ++*locations;
        DetectionBox b;
        b.center = {x, y, bb.min.z + 0.5 * c.height};
        b.length = c.length;
        b.width = c.width;
        b.height = c.height;
        std::size_t inside = 0;
        for (auto i : near)
          if (contains(b, scene.points[i])) ++inside;
        if (inside < cfg.min_points) continue;
        for (std::size_t r = 0; r < R; ++r) {
          b.yaw = 2.0 * kPi * double(r) / double(R);
          out.push_back(b);
        }
      }
    }
  }
  return out;
}

double crop_voxel_size(const DetectionBox& box, const voxel::GridSpec& grid) {
  return std::max({box.length, box.width, box.height}) / double(grid.object);
}

PointCloud crop_points(const PointCloud& scene, const DetectionBox& box, const voxel::GridSpec& grid) {
  std::vector<std::size_t> all(scene.points.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return crop_from(scene, all, box, grid);
}

template <typename T>
std::vector<DetectionBox> score_boxes(const model::Network<T>& net, const PointCloud& scene,
                                      std::span<const DetectionBox> proposals, SearchMode mode,
                                      std::size_t rotations, std::size_t object_class, ScoreStats* stats) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& spec = net.spec();
  if (object_class >= spec.n_classes) throw std::invalid_argument("object class outside the network's classes");
  if (spec.n_classes != 2) throw std::invalid_argument("detection expects a two-class (object/background) network");
  const bool guided = mode == SearchMode::guided;
  if (guided && (!spec.orientation_head || spec.scheme.bins(object_class) < 2))
    throw std::invalid_argument("guided detection needs an orientation head with several object bins");
  if (!guided && (rotations == 0 || proposals.size() % rotations != 0))
    throw std::invalid_argument("exhaustive proposals must come in whole rotation groups");

  const PlaneIndex index(scene, 1.0);
  std::vector<double> score(proposals.size(), 0.0);
  std::vector<int> bins(proposals.size(), -1);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < proposals.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, proposals.size() - start);
    std::vector<voxel::OccupancyGrid> grids(n);
    parallel_for(n, [&](std::size_t lo, std::size_t hi, std::size_t) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& b = proposals[start + i];
        const double half = crop_half_side(b, spec.grid);
        const auto near = index.within(b.center.x, b.center.y, half * std::numbers::sqrt2);
        grids[i] = voxel::voxelize_fixed(crop_from(scene, near, b, spec.grid), spec.grid, {}, crop_voxel_size(b, spec.grid));
      }
    });
    const auto out = net.infer(model::grids_to_tensor<T>(grids));
    const auto probs = nn::softmax_rows(out.class_logits);
    for (std::size_t i = 0; i < n; ++i) {
      score[start + i] = double(probs[i * spec.n_classes + object_class]);
      if (out.has_orientation()) {
        const std::size_t N = out.orient_logits.dim(1);
        std::vector<double> row(N);
        for (std::size_t k = 0; k < N; ++k) row[k] = double(out.orient_logits[i * N + k]);
        const auto r = spec.scheme.block(object_class);
        bins[start + i] = static_cast<int>(argmax_range(row, r.begin, r.end));
      }
    }
  }
  if (stats) {
    stats->evaluations += proposals.size();
    stats->seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::vector<DetectionBox> out;
  if (guided) {
    out.assign(proposals.begin(), proposals.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].score = score[i];
      out[i].orientation_bin = bins[i];
      out[i].yaw = wrap_angle(proposals[i].yaw + spec.scheme.bin_center_deg(std::size_t(bins[i])) * kPi / 180.0);
    }
    return out;
  }
  for (std::size_t g = 0; g < proposals.size(); g += rotations) {
    std::size_t best = g;
    for (std::size_t i = g + 1; i < g + rotations; ++i)
      if (score[i] > score[best]) best = i;
    DetectionBox b = proposals[best];
    b.score = score[best];
    b.orientation_bin = bins[best];
    out.push_back(b);
  }
  return out;
}

std::vector<DetectionBox> nms(std::span<const DetectionBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return boxes[a].score > boxes[b].score; });
  std::vector<DetectionBox> kept;
  for (auto i : order) {
    bool keep = true;
    for (const auto& k : kept)
      if (box_iou(boxes[i], k) >= iou_threshold) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(boxes[i]);
  }
  return kept;
}

double average_precision(std::span<const PrPoint> curve) {
  if (curve.empty()) return 0.0;
  std::vector<double> interp(curve.size());
  double run = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    run = std::max(run, curve[i].precision);
    interp[i] = run;
  }
  double ap = 0.0, prev_r = 0.0, prev_p = interp[0];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_r) * 0.5 * (interp[i] + prev_p);
    prev_r = curve[i].recall;
    prev_p = interp[i];
  }
  return ap;
}

EvalReport evaluate_detections(std::span<const FrameResult> frames, double iou_threshold) {
  struct Ranked {
    std::size_t frame, index;
    double score;
  };
  std::vector<Ranked> ranked;
  EvalReport rep;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    rep.ground_truth += frames[f].truth.size();
    for (std::size_t i = 0; i < frames[f].detections.size(); ++i)
      ranked.push_back({f, i, frames[f].detections[i].score});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<std::vector<char>> matched(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) matched[f].assign(frames[f].truth.size(), 0);

  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto& r = ranked[k];
    const auto& det = frames[r.frame].detections[r.index];
    const auto& truth = frames[r.frame].truth;
    double best_iou = -1.0;
    std::size_t best = truth.size();
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (matched[r.frame][g]) continue;
      const double iou = box_iou(det, truth[g]);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best < truth.size()) {
      matched[r.frame][best] = 1;
      ++tp;
    }
    rep.curve.push_back({double(tp) / double(k + 1), rep.ground_truth ? double(tp) / double(rep.ground_truth) : 0.0,
                         r.score});
  }
  rep.true_positives = tp;
  rep.detections = ranked.size();
  rep.average_precision = rep.ground_truth ? average_precision(rep.curve) : 0.0;
  return rep;
}

EvalReport evaluate_detections(std::span<const DetectionBox> detections, std::span<const DetectionBox> truth,
                               double iou_threshold) {
  const FrameResult f{{detections.begin(), detections.end()}, {truth.begin(), truth.end()}};
  return evaluate_detections(std::span<const FrameResult>(&f, 1), iou_threshold);
}

template <typename T>
DetectResult detect(const model::Network<T>& net, const PointCloud& scene, const SizeStats& stats,
                    const DetectConfig& cfg) {
  DetectResult r;
  const auto proposals = propose_boxes(scene, stats, cfg.proposals, &r.locations);
  r.proposals = proposals.size();
  const auto scored = score_boxes(net, scene, proposals, cfg.proposals.mode, cfg.proposals.rotations,
                                  cfg.object_class, &r.scoring);
  r.detections = nms(scored, cfg.nms_iou);
  return r;
}

model::OrientationScheme detection_scheme() {
  return model::OrientationScheme({model::ClassOrientation::with_period("object", model::Period::deg360),
                                   model::ClassOrientation::with_period("background", model::Period::none)});
}

data::Dataset detection_training_set(std::span<const synth::Scene> scenes, const SizeStats& stats,
                                     const CropSetConfig& cfg, std::uint64_t seed) {
  if (stats.candidates.empty()) throw std::invalid_argument("size statistics have no candidates");
  data::Dataset ds;
  ds.scheme = detection_scheme();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jit(-cfg.center_jitter, cfg.center_jitter);
  std::uniform_int_distribution<std::size_t> pick_size(0, stats.candidates.size() - 1);
  std::size_t next_id = 0;
  auto add = [&](const PointCloud& scene, const DetectionBox& window, std::size_t cls, std::optional<double> az) {
    data::Sample s;
    std::ostringstream id;
    id << "crop" << std::setw(6) << std::setfill('0') << next_id++;
    s.id = id.str();
    s.cloud = crop_points(scene, window, cfg.grid);
    s.class_id = cls;
    s.azimuth_deg = az;
    s.voxel_size = crop_voxel_size(window, cfg.grid);
    ds.samples.push_back(std::move(s));
  };

  ProposalConfig pc = cfg.proposals;
  pc.mode = SearchMode::guided;
  for (const auto& scene : scenes) {
    std::size_t positives = 0;
    for (const auto& gt : scene.truth) {
      for (std::size_t j = 0; j < cfg.jitters_per_object; ++j) {
        const BoxSize sz = stats.candidates[pick_size(rng)];
        DetectionBox w;
        w.length = sz.length;
        w.width = sz.width;
        w.height = sz.height;
        const double dx = jit(rng), dy = jit(rng);
        w.center = {gt.center.x + dx, gt.center.y + dy, gt.center.z - 0.5 * gt.height + 0.5 * sz.height};
        add(scene.cloud, w, 0, wrap_angle(gt.yaw) * 180.0 / kPi);
        ++positives;
      }
    }
    auto props = propose_boxes(scene.cloud, stats, pc);
    std::erase_if(props, [&](const DetectionBox& b) {
      for (const auto& gt : scene.truth)
        if (std::hypot(b.center.x - gt.center.x, b.center.y - gt.center.y) < cfg.negative_clearance) return true;
      return false;
    });
    std::shuffle(props.begin(), props.end(), rng);
    const auto n_neg = std::min(props.size(), static_cast<std::size_t>(std::ceil(cfg.negative_ratio * double(std::max<std::size_t>(positives, 1)))));
    for (std::size_t i = 0; i < n_neg; ++i) add(scene.cloud, props[i], 1, std::nullopt);
  }
  ds.validate();
  return ds;
}

std::vector<DetectionBox> read_boxes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::IoError(path.string() + ": cannot open");
  std::vector<DetectionBox> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = io::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (lineno == 1 && !t.empty() && (std::isalpha(static_cast<unsigned char>(t[0])))) continue;  // header
    const auto f = io::split_csv(t);
    if (f.size() != 7 && f.size() != 8)
      throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": expected 7 or 8 fields");
    DetectionBox b;
    try {
      b.center = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
      b.length = std::stod(f[3]);
      b.width = std::stod(f[4]);
      b.height = std::stod(f[5]);
      b.yaw = wrap_angle(std::stod(f[6]));
      if (f.size() == 8) b.score = std::stod(f[7]);
      b.validate();
    } catch (const std::exception& e) {
      throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(b);
  }
  return out;
}

void write_boxes_csv(const std::filesystem::path& path, std::span<const DetectionBox> boxes, bool with_score) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "cx,cy,cz,l,w,h,yaw" << (with_score ? ",score" : "") << '\n' << std::setprecision(10);
  for (const auto& b : boxes) {
    out << b.center.x << ',' << b.center.y << ',' << b.center.z << ',' << b.length << ',' << b.width << ','
        << b.height << ',' << b.yaw;
    if (with_score) out << ',' << b.score;
    out << '\n';
  }
  if (!out) throw io::IoError(path.string() + ": write failed");
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "precision,recall,threshold\n" << std::setprecision(10);
  for (const auto& p : report.curve) out << p.precision << ',' << p.recall << ',' << p.threshold << '\n';
  out << "# ap=" << report.average_precision << ",boxes_evaluated=" << report.boxes_evaluated
      << ",seconds=" << report.seconds << '\n';
  if (!out) throw io::IoError(path.string() + ": write failed");
}

#define ORION_INSTANTIATE(T)                                                                                     \
  template std::vector<DetectionBox> score_boxes<T>(const model::Network<T>&, const PointCloud&,               \
                                                    std::span<const DetectionBox>, SearchMode, std::size_t,     \
                                                    std::size_t, ScoreStats*);                                  \
  template DetectResult detect<T>(const model::Network<T>&, const PointCloud&, const SizeStats&,               \
                                  const DetectConfig&);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::det

// Acceptance checks AC1-AC10. One PASS/FAIL line per criterion; exit status 1
// if any fails. Pass criterion names (e.g. "AC4") to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orion/align.hpp"
#include "orion/analysis.hpp"
#include "orion/dataset.hpp"
#include "orion/detect.hpp"
#include "orion/grad_check.hpp"
#include "orion/network.hpp"
#include "orion/synth.hpp"
#include "orion/trainer.hpp"
#include "orion/voting.hpp"
#include "orion/voxel.hpp"

using namespace orion;
using nn::LayerSpec;
using nn::Shape;
using nn::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double away_from_zero = 0.0) {
  Tensor<double> t(shape);
  std::uniform_real_distribution<double> mag(away_from_zero, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return t;
}

model::OrientationScheme mixed_scheme() {
  using model::ClassOrientation;
  using model::Period;
  return model::OrientationScheme({ClassOrientation::with_period("a", Period::deg360),
                                   ClassOrientation::with_period("b", Period::deg180),
                                   ClassOrientation::with_period("c", Period::none)});
}

// ------------------------------------------------------------------ AC1

Outcome ac1() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(11);
  struct Case {
    LayerSpec spec;
    Shape sample;
    std::size_t batch;
    double away;  // keeps inputs off activation kinks
  };
  const std::vector<Case> cases = {
      {LayerSpec::conv3d("conv_s2_p1", 3, 3, 2, 1), {2, 5, 5, 5}, 2, 0.0},
      {LayerSpec::conv3d("conv_s1", 2, 3, 1, 0), {1, 6, 6, 6}, 2, 0.0},
      {LayerSpec::maxpool3d("pool", 2, 2), {2, 4, 4, 4}, 2, 0.0},
      {LayerSpec::dense("fc", 5), {12}, 3, 0.0},
      {LayerSpec::leaky_relu("lrelu"), {2, 3, 3, 3}, 2, 0.05},
      {LayerSpec::dropout_layer("drop", 0.3), {2, 3, 3, 3}, 2, 0.0},
      {LayerSpec::batchnorm3d("bn"), {3, 3, 3, 3}, 3, 0.0},
      {LayerSpec::flatten("flat"), {2, 3, 3, 3}, 2, 0.0},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    auto layer = nn::make_layer<double>(c.spec, c.sample);
    layer->initialize(rng);
    Shape in{c.batch};
    in.insert(in.end(), c.sample.begin(), c.sample.end());
    const auto rep = nn::grad_check_layer(*layer, random_tensor(in, rng, c.away), 7);
    worst = std::max(worst, rep.max_rel_error);
    o.require(rep.ok(tol) && rep.checked > 0, c.spec.name + " " + rep.worst);
  }

  model::NetworkSpec spec;
  spec.grid = {6, 4, 1};
  spec.trunk = {LayerSpec::conv3d("conv1", 3, 3, 1, 1), LayerSpec::batchnorm3d("bn1"), LayerSpec::leaky_relu("act1"),
                LayerSpec::conv3d("conv2", 4, 3, 2, 0),  LayerSpec::leaky_relu("act2"),  LayerSpec::maxpool3d("pool", 2, 2),
                LayerSpec::flatten("flat"),              LayerSpec::dense("fc1", 8),     LayerSpec::leaky_relu("act3"),
                LayerSpec::dropout_layer("drop", 0.2)};
  spec.n_classes = 3;
  spec.scheme = mixed_scheme();
  model::Network<double> net(spec);
  net.initialize(5);
  const auto x = random_tensor({2, 1, 6, 6, 6}, rng);
  const std::vector<std::size_t> cls{0, 1}, ori{3, spec.scheme.offset(1) + 2};
  const auto rep = nn::grad_check_network(net, x, cls, ori, 0.5);
  worst = std::max(worst, rep.max_rel_error);
  o.require(rep.ok(tol), "network " + rep.worst);

  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime");
  o.detail << "max rel error " << worst << " over " << cases.size() << " layers + network, " << secs << " s";
  return o;
}

// ------------------------------------------------------------------ AC2

// Test-side cross-entropy of one row in long double.
long double row_xent(std::span<const double> logits, std::size_t target) {
  long double m = logits[0];
  for (double v : logits) m = std::max<long double>(m, v);
  long double z = 0;
  for (double v : logits) z += std::exp(static_cast<long double>(v) - m);
  return -(static_cast<long double>(logits[target]) - m - std::log(z));
}

Outcome ac2() {
  Outcome o;
  double worst = 0.0;
  for (std::size_t K : {2u, 10u, 40u}) {
    const std::vector<std::size_t> target{K / 2};
    const auto rd = nn::softmax_xent(Tensor<double>({1, K}, 0.37), target);
    const auto rf = nn::softmax_xent(Tensor<float>({1, K}, 0.37f), target);
    const double lnk = std::log(double(K));
    worst = std::max({worst, std::abs(double(rd.loss) - lnk), std::abs(double(rf.loss) - lnk)});
  }
  o.require(worst <= 1e-6, "uniform logits");

  std::mt19937_64 rng(3);
  const auto scheme = mixed_scheme();
  const std::size_t B = 4;
  model::HeadOutputs<double> out{random_tensor({B, 3}, rng), random_tensor({B, scheme.total_nodes()}, rng)};
  const std::vector<std::size_t> cls{0, 1, 2, 0};
  const std::vector<std::size_t> ori{scheme.target(0, 100.0), scheme.target(1, 40.0), scheme.target(2, std::nullopt),
                                     scheme.target(0, 350.0)};
  long double lc = 0, lo = 0;
  for (std::size_t i = 0; i < B; ++i) {
    lc += row_xent(out.class_logits.data().subspan(i * 3, 3), cls[i]);
    lo += row_xent(out.orient_logits.data().subspan(i * scheme.total_nodes(), scheme.total_nodes()), ori[i]);
  }
  lc /= B;
  lo /= B;
  bool exact = true;
  for (double g : {0.0, 0.25, 0.5, 1.0}) {
    const auto r = model::orion_loss(out, cls, ori, g, scheme);
    exact = exact && r.total == (1.0 - g) * r.class_loss + g * r.orient_loss;
    o.require(std::abs(r.class_loss - double(lc)) < 1e-12 && std::abs(r.orient_loss - double(lo)) < 1e-12,
              "loss terms vs oracle");
  }
  o.require(exact, "combined arithmetic");

  // gamma = 0 leaves the orientation head without any gradient.
  model::NetworkSpec spec;
  spec.grid = {8, 6, 1};
  spec.trunk = {LayerSpec::conv3d("conv1", 2, 3, 2, 0), LayerSpec::leaky_relu("a1"), LayerSpec::flatten("f"),
                LayerSpec::dense("fc1", 6), LayerSpec::leaky_relu("a2")};
  spec.n_classes = 3;
  spec.scheme = scheme;
  model::Network<double> net(spec);
  net.initialize(1);
  net.zero_grad();
  const auto heads = net.forward(random_tensor({B, 1, 8, 8, 8}, rng), nn::Mode::train);
  const auto r = model::orion_loss(heads, cls, ori, 0.0, scheme);
  net.backward(r.class_grad, &r.orient_grad);
  bool zero = true;
  auto* oh = net.orientation_head();
  for (double v : oh->weight().grad()) zero = zero && v == 0.0;
  for (double v : oh->bias().grad()) zero = zero && v == 0.0;
  bool trunk_moved = false;
  for (double v : net.class_head().weight().grad()) trunk_moved = trunk_moved || v != 0.0;
  o.require(zero, "orientation head gradient at gamma 0");
  o.require(trunk_moved, "class head gradient present");
  o.detail << "max |L - ln K| " << worst << ", combined loss exact: " << (exact ? "yes" : "no")
           << ", gamma=0 orientation grads zero: " << (zero ? "yes" : "no");
  return o;
}

// ------------------------------------------------------------------ AC3

Outcome ac3() {
  Outcome o;
  const voxel::GridSpec grid{32, 28, 2};
  const auto s10 = model::OrientationScheme::uniform(10, model::Period::deg360);
  const auto s40 = model::OrientationScheme::uniform(40, model::Period::deg360);
  auto base = model::build_network<float>(model::Architecture::baseline, grid, 10, s10, 0, false);
  auto orion = model::build_network<float>(model::Architecture::baseline, grid, 10, s10, 0, true);
  auto ext = model::build_network<float>(model::Architecture::extended, grid, 40, s40, 0, true);
  const double nb = double(model::param_count(base)), no = double(model::param_count(orion)),
               ne = double(model::param_count(ext));
  o.require(std::abs(nb / 890e3 - 1.0) <= 0.06, "baseline count");
  o.require(std::abs(no / 910e3 - 1.0) <= 0.06, "ORION count");
  o.require(ne >= 3e6 && ne <= 4.5e6, "extended count");
  o.detail << "baseline " << nb << " (" << 100.0 * (nb / 890e3 - 1.0) << "% vs 890K), ORION " << no << " ("
           << 100.0 * (no / 910e3 - 1.0) << "% vs 910K), extended-40 " << ne;
  return o;
}

// ------------------------------------------------------------------ AC4 / AC5

struct Run {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double accuracy = 0.0;
  double orientation_accuracy = 0.0;  // 360-degree classes only
  double vote_accuracy = 0.0;
  bool vote_permutation_exact = true;
};

const voxel::GridSpec kDeskGrid{16, 12, 2};
constexpr std::size_t kVoteRotations = 12;

std::vector<Run> g_runs;
double g_runs_seconds = 0.0;

Run run_one(std::uint64_t seed, double gamma, const data::Dataset& tr, const data::Dataset& te) {
  train::TrainConfig cfg;
  cfg.grid = kDeskGrid;
  cfg.gamma = gamma;
  cfg.orientation_head = gamma > 0.0;
  cfg.epochs = 30;
  cfg.seed = seed;
  auto result = train::train<float>(cfg, tr);
  const auto& net = result.net;

  std::vector<voxel::OccupancyGrid> grids;
  for (const auto& s : te.samples) grids.push_back(data::sample_grid(s, kDeskGrid));
  const auto pred = train::predict(net, grids);
  Run r;
  r.seed = seed;
  r.gamma = gamma;
  std::size_t correct = 0, ori_n = 0, ori_ok = 0, vote_ok = 0;
  std::mt19937_64 rng(seed);
  const auto angles = vote::rotation_angles(kVoteRotations);
  for (std::size_t i = 0; i < te.size(); ++i) {
    const auto& s = te.samples[i];
    correct += pred.classes[i] == s.class_id;
    if (!pred.orient_nodes.empty() && te.scheme.at(s.class_id).period == model::Period::deg360) {
      ++ori_n;
      ori_ok += pred.orient_nodes[i] == te.scheme.target(s.class_id, s.azimuth_deg);
    }
    // Per-rotation scores, then the vote in the given order and shuffled.
    std::vector<voxel::OccupancyGrid> rg;
    for (double a : angles) rg.push_back(voxel::voxelize(voxel::rotate_points(s.cloud, a), kDeskGrid));
    const auto probs = nn::softmax_rows(net.infer(model::grids_to_tensor<float>(rg)).class_logits);
    const std::size_t K = probs.dim(1);
    std::vector<std::vector<double>> rows(kVoteRotations, std::vector<double>(K));
    for (std::size_t a = 0; a < kVoteRotations; ++a)
      for (std::size_t k = 0; k < K; ++k) rows[a][k] = probs[a * K + k];
    const auto v = vote::vote(rows);
    vote_ok += v.final_class == s.class_id;
    if (i % 10 == 0) {
      for (int p = 0; p < 5; ++p) {
        auto perm = rows;
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto vp = vote::vote(perm);
        r.vote_permutation_exact = r.vote_permutation_exact && vp.final_class == v.final_class && vp.scores == v.scores;
      }
    }
  }
  r.accuracy = double(correct) / double(te.size());
  r.orientation_accuracy = ori_n ? double(ori_ok) / double(ori_n) : 0.0;
  r.vote_accuracy = double(vote_ok) / double(te.size());
  std::printf("  seed %llu gamma %.2f: accuracy %.4f, orientation (360-degree classes) %.4f, vote %.4f\n",
              static_cast<unsigned long long>(seed), gamma, r.accuracy, r.orientation_accuracy, r.vote_accuracy);
  std::fflush(stdout);
  return r;
}

void ensure_runs() {
  if (!g_runs.empty()) return;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto scheme = synth::synth_scheme(4);
    const auto tr = data::from_instances(synth::synth_instances(4, 300, synth::Noise{}, seed), scheme);
    const auto te = data::from_instances(synth::synth_instances(4, 100, synth::Noise{}, 1000 + seed), scheme, "test");
    g_runs.push_back(run_one(seed, 0.5, tr, te));
    g_runs.push_back(run_one(seed, 0.0, tr, te));
  }
  g_runs_seconds = seconds_since(t0);
}

Outcome ac4() {
  Outcome o;
  ensure_runs();
  double orion = 0, base = 0, ori = 0;
  for (const auto& r : g_runs) {
    if (r.gamma > 0) {
      orion += r.accuracy / 5;
      ori += r.orientation_accuracy / 5;
    } else {
      base += r.accuracy / 5;
    }
  }
  o.require(orion >= base, "ORION accuracy below baseline");
  o.require(ori >= 0.70, "orientation accuracy");
  o.require(g_runs_seconds < 15 * 60, "runtime");
  o.detail << "mean accuracy ORION " << orion << " vs baseline " << base << ", orientation accuracy " << ori << ", "
           << g_runs_seconds << " s for 10 runs (incl. voting)";
  return o;
}

Outcome ac5() {
  Outcome o;
  ensure_runs();
  double single = 0, voted = 0;
  bool exact = true;
  for (const auto& r : g_runs) {
    single += r.accuracy / double(g_runs.size());
    voted += r.vote_accuracy / double(g_runs.size());
    exact = exact && r.vote_permutation_exact;
  }
  o.require(voted >= single, "vote accuracy below single pass");
  o.require(exact, "permutation invariance");
  o.detail << "mean single-pass " << single << ", mean " << kVoteRotations << "-rotation vote " << voted
           << ", permutation-invariant: " << (exact ? "yes" : "no");
  return o;
}

// ------------------------------------------------------------------ AC6

// Brute force: each voxel of the object region is tested against every point.
// Voxel i owns normalized coordinates [i, i + 1); the outermost faces are closed.
std::vector<std::uint8_t> binning_oracle(const PointCloud& c, const voxel::GridSpec& g) {
  double mn[3] = {c.points[0].x, c.points[0].y, c.points[0].z}, mx[3] = {mn[0], mn[1], mn[2]};
  for (const auto& p : c.points) {
    const double v[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      mn[a] = std::min(mn[a], v[a]);
      mx[a] = std::max(mx[a], v[a]);
    }
  }
  const double largest = std::max({mx[0] - mn[0], mx[1] - mn[1], mx[2] - mn[2]});
  const double vs = largest / double(g.object);
  const double half = double(g.total) / 2.0;
  std::vector<std::array<double, 3>> u;
  for (const auto& p : c.points) {
    const double v[3] = {p.x, p.y, p.z};
    std::array<double, 3> q{};
    for (int a = 0; a < 3; ++a) q[a] = (v[a] - 0.5 * (mn[a] + mx[a])) / vs + half;
    u.push_back(q);
  }
  const long lo = long(g.padding), hi = long(g.padding + g.object) - 1;
  auto owns = [&](double x, long i) { return (x >= double(i) || i == lo) && (x < double(i + 1) || i == hi); };
  std::vector<std::uint8_t> out(g.total * g.total * g.total, 0);
  for (long z = lo; z <= hi; ++z)
    for (long y = lo; y <= hi; ++y)
      for (long x = lo; x <= hi; ++x)
        for (const auto& q : u)
          if (owns(q[0], x) && owns(q[1], y) && owns(q[2], z)) {
            out[std::size_t(x + long(g.total) * (y + long(g.total) * z))] = 1;
            break;
          }
  return out;
}

Outcome ac6() {
  Outcome o;
  const voxel::GridSpec g{32, 28, 2};
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::size_t exact = 0;
  const std::size_t n_random = 25;
  for (std::size_t t = 0; t < n_random; ++t) {
    const Vec3 lo{u01(rng) * 10 - 5, u01(rng) * 10 - 5, u01(rng) * 10 - 5};
    const Vec3 ext{0.2 + u01(rng) * 3, 0.2 + u01(rng) * 3, 0.2 + u01(rng) * 3};
    PointCloud c;
    for (int i = 0; i < 1000; ++i)
      c.points.push_back({lo.x + u01(rng) * ext.x, lo.y + u01(rng) * ext.y, lo.z + u01(rng) * ext.z});
    exact += voxel::voxelize(c, g).values == binning_oracle(c, g);
  }
  o.require(exact == n_random, "brute-force binning");

  // Boundary-safe clouds: points sit at least 0.2 voxel from every face, and
  // two corner points pin the bounding box to the object region.
  std::size_t consistent = 0;
  const std::size_t n_rot = 100;
  std::uniform_int_distribution<int> cell(0, int(g.object) - 1);
  for (std::size_t t = 0; t < n_rot; ++t) {
    const double s = 0.05 + u01(rng) * 0.2;
    const Vec3 origin{u01(rng) * 4 - 2, u01(rng) * 4 - 2, u01(rng) * 4 - 2};
    auto at = [&](double a, double b, double c) { return Vec3{origin.x + a * s, origin.y + b * s, origin.z + c * s}; };
    PointCloud c;
    c.points.push_back(at(0, 0, 0));
    c.points.push_back(at(double(g.object), double(g.object), double(g.object)));
    for (int i = 0; i < 300; ++i)
      c.points.push_back(at(cell(rng) + 0.2 + 0.6 * u01(rng), cell(rng) + 0.2 + 0.6 * u01(rng),
                            cell(rng) + 0.2 + 0.6 * u01(rng)));
    const int k = 1 + int(t % 3);
    const auto rotated = voxel::voxelize(voxel::rotate_points(c, k * std::numbers::pi / 2), g);
    consistent += rotated.values == voxel::rotate_grid_quarter(voxel::voxelize(c, g), k).values;
  }
  o.require(consistent == n_rot, "quarter rotations");
  o.detail << exact << "/" << n_random << " random 1000-point clouds bit-exact, " << consistent << "/" << n_rot
           << " quarter-rotation consistent";
  return o;
}

// ------------------------------------------------------------------ AC7

Outcome ac7() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr std::size_t R = 12;
  std::vector<synth::Scene> train_scenes, test_scenes;
  std::vector<det::DetectionBox> train_truth;
  for (std::uint64_t i = 0; i < 30; ++i) {
    train_scenes.push_back(synth::make_scene({}, 100 + i));
    train_truth.insert(train_truth.end(), train_scenes.back().truth.begin(), train_scenes.back().truth.end());
  }
  for (std::uint64_t i = 0; i < 20; ++i) test_scenes.push_back(synth::make_scene({}, 9000 + i));
  const auto stats = det::box_stats(train_truth);

  det::CropSetConfig crops;
  crops.grid = kDeskGrid;
  const auto ds = det::detection_training_set(train_scenes, stats, crops, 7);
  train::TrainConfig cfg;
  cfg.grid = kDeskGrid;
  cfg.gamma = 0.7;
  cfg.epochs = 20;
  cfg.seed = 7;
  auto net = train::train<float>(cfg, ds).net;

  std::vector<det::FrameResult> guided, exhaustive;
  std::size_t n_guided = 0, n_exh = 0;
  bool per_scene_ratio = true;
  double sec_guided = 0, sec_exh = 0;
  for (const auto& scene : test_scenes) {
    det::DetectConfig dc;
    dc.proposals.rotations = R;
    dc.proposals.mode = det::SearchMode::guided;
    const auto g = det::detect(net, scene.cloud, stats, dc);
    dc.proposals.mode = det::SearchMode::exhaustive;
    const auto e = det::detect(net, scene.cloud, stats, dc);
    n_guided += g.scoring.evaluations;
    n_exh += e.scoring.evaluations;
    sec_guided += g.scoring.seconds;
    sec_exh += e.scoring.seconds;
    per_scene_ratio = per_scene_ratio && e.scoring.evaluations == R * g.scoring.evaluations;
    guided.push_back({g.detections, scene.truth});
    exhaustive.push_back({e.detections, scene.truth});
  }
  const double ap_g = det::evaluate_detections(guided).average_precision;
  const double ap_e = det::evaluate_detections(exhaustive).average_precision;
  const double secs = seconds_since(t0);
  o.require(per_scene_ratio && n_exh == R * n_guided && n_guided > 0, "evaluation count ratio");
  o.require(ap_g >= ap_e - 0.05, "guided AP");
  o.require(secs < 600, "runtime");
  o.detail << "boxes evaluated guided " << n_guided << " vs exhaustive " << n_exh << " (R=" << R << "), AP guided "
           << ap_g << " vs exhaustive " << ap_e << ", scoring " << sec_guided << " s vs " << sec_exh << " s, total "
           << secs << " s";
  return o;
}

// ------------------------------------------------------------------ AC8

det::DetectionBox box_at(double x, double score = 0.0) {
  det::DetectionBox b;
  b.center = {x, 0.0, 0.75};
  b.length = 4;
  b.width = 2;
  b.height = 1.5;
  b.score = score;
  return b;
}

// Ranking sweep: precision/recall after each rank, then the interpolated
// trapezoid area from recall 0.
struct Sweep {
  std::vector<double> precision, recall;
  double ap = 0.0;
};

Sweep sweep_oracle(const std::vector<bool>& tp_in_rank_order, std::size_t n_truth) {
  Sweep s;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < tp_in_rank_order.size(); ++k) {
    tp += tp_in_rank_order[k];
    s.precision.push_back(double(tp) / double(k + 1));
    s.recall.push_back(double(tp) / double(n_truth));
  }
  std::vector<double> env(s.precision.size());
  for (std::size_t k = 0; k < env.size(); ++k)
    env[k] = *std::max_element(s.precision.begin() + long(k), s.precision.end());
  double r0 = 0.0, p0 = env.empty() ? 0.0 : env[0];
  for (std::size_t k = 0; k < env.size(); ++k) {
    s.ap += (s.recall[k] - r0) * (env[k] + p0) / 2.0;
    r0 = s.recall[k];
    p0 = env[k];
  }
  return s;
}

Outcome ac8() {
  Outcome o;
  const std::vector<det::DetectionBox> truth{box_at(0.0), box_at(20.0)};
  // Detections listed in descending score order; x = 0 or 20 hits a truth box,
  // x = 50 hits nothing.
  struct Fixture {
    std::vector<double> x;
    std::vector<bool> tp;            // hand-enumerated matches
    double ap;                       // hand-computed
  };
  const std::vector<Fixture> fixtures = {
      {{0, 50, 20}, {true, false, true}, 5.0 / 6.0},
      {{50, 0, 20}, {false, true, true}, 2.0 / 3.0},
      {{0, 0, 50}, {true, false, false}, 0.5},   // duplicate on one truth box
      {{0, 20, 50}, {true, true, false}, 1.0},
      {{50, 50, 0}, {false, false, true}, 1.0 / 6.0},
  };
  std::size_t matched = 0;
  bool invariant = true;
  for (const auto& f : fixtures) {
    std::vector<det::DetectionBox> dets;
    for (std::size_t i = 0; i < f.x.size(); ++i) dets.push_back(box_at(f.x[i], 0.9 - 0.1 * double(i)));
    const auto rep = det::evaluate_detections(dets, truth);
    const auto oracle = sweep_oracle(f.tp, truth.size());
    bool ok = rep.curve.size() == f.x.size() && std::abs(oracle.ap - f.ap) < 1e-12 &&
              std::abs(rep.average_precision - oracle.ap) < 1e-12;
    for (std::size_t k = 0; ok && k < rep.curve.size(); ++k)
      ok = rep.curve[k].precision == oracle.precision[k] && rep.curve[k].recall == oracle.recall[k];
    matched += ok;
    for (const auto& transform : std::vector<std::function<double(double)>>{
             [](double s) { return std::exp(3.0 * s) + 1.0; }, [](double s) { return 10.0 * s - 4.0; },
             [](double s) { return s * s * s; }}) {
      auto moved = dets;
      for (auto& d : moved) d.score = transform(d.score);
      invariant = invariant && det::evaluate_detections(moved, truth).average_precision == rep.average_precision;
    }
  }
  o.require(matched == fixtures.size(), "fixtures");
  o.require(invariant, "monotone invariance");
  o.detail << matched << "/" << fixtures.size() << " fixtures match the sweep oracle, monotone-invariant: "
           << (invariant ? "yes" : "no");
  return o;
}

// ------------------------------------------------------------------ AC9

Outcome ac9() {
  Outcome o;
  const auto& cat = synth::shape_catalog();
  const double bin = 360.0 / double(align::kDescriptorBins);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(0, int(align::kDescriptorBins) - 1);
  auto make = [&](const synth::ShapeClass& shape, std::vector<double>& applied) {
    std::vector<PointCloud> clouds;
    for (std::uint64_t i = 0; i < 40; ++i) {
      applied.push_back(bin * pick(rng));
      clouds.push_back(synth::make_instance(shape, applied.back(), synth::Noise::none(), 5000, 500 + i));
    }
    return clouds;
  };
  std::vector<double> applied;
  const auto asym = align::auto_align(make(cat.at(0), applied));
  // Recovered: applied + recovered rotation is the same canonical angle for all.
  std::set<long> canonical;
  for (std::size_t i = 0; i < applied.size(); ++i)
    canonical.insert(std::lround(std::fmod(applied[i] + asym.result.rotation_deg[i], 360.0) / bin) %
                     long(align::kDescriptorBins));
  o.require(canonical.size() == 1, "rotation recovery");
  o.require(asym.result.levels == 12, "asymmetric levels");

  std::vector<double> unused;
  const auto uniform = align::auto_align(make(cat.at(3), unused));
  o.require(uniform.result.levels == 1, "uniform levels");
  o.detail << cat.at(0).name << ": " << (canonical.size() == 1 ? "all" : "not all") << " rotations recovered, K="
           << asym.result.levels << " (e360 " << asym.e360 << "); " << cat.at(3).name << ": K=" << uniform.result.levels
           << " (e360 " << uniform.e360 << ", e180 " << uniform.e180 << ", e90 " << uniform.e90 << ")";
  return o;
}

// ------------------------------------------------------------------ AC10

// Independent forward pass and contribution enumeration for a
// conv-lrelu-conv-lrelu-flatten-dense-lrelu network with stride-1 valid convs.
struct Toy {
  std::size_t n0, c1, c2, hidden, classes;
};

std::vector<std::size_t> brute_force_path(model::Network<double>& net, const Toy& t, const std::vector<double>& x) {
  auto& conv1 = dynamic_cast<nn::Conv3d<double>&>(net.trunk_layer(0));
  auto& conv2 = dynamic_cast<nn::Conv3d<double>&>(net.trunk_layer(2));
  auto& fc1 = dynamic_cast<nn::Dense<double>&>(net.trunk_layer(5));
  auto& head = net.class_head();
  const std::size_t k = 3, n1 = t.n0 - 2, n2 = n1 - 2;
  auto lrelu = [](double v) { return v > 0 ? v : 0.1 * v; };
  auto conv = [&](nn::Conv3d<double>& L, const std::vector<double>& in, std::size_t cin, std::size_t nin,
                  std::size_t cout) {
    const std::size_t nout = nin - 2;
    std::vector<double> out(cout * nout * nout * nout);
    for (std::size_t f = 0; f < cout; ++f)
      for (std::size_t z = 0; z < nout; ++z)
        for (std::size_t y = 0; y < nout; ++y)
          for (std::size_t xx = 0; xx < nout; ++xx) {
            double s = L.bias()[f];
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t dz = 0; dz < k; ++dz)
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx)
                    s += L.weight()[(((f * cin + c) * k + dz) * k + dy) * k + dx] *
                         in[((c * nin + z + dz) * nin + y + dy) * nin + xx + dx];
            out[((f * nout + z) * nout + y) * nout + xx] = lrelu(s);
          }
    return out;
  };
  const auto a1 = conv(conv1, x, 1, t.n0, t.c1);
  const auto a2 = conv(conv2, a1, t.c1, n1, t.c2);
  std::vector<double> h(t.hidden), logits(t.classes);
  for (std::size_t j = 0; j < t.hidden; ++j) {
    double s = fc1.bias()[j];
    for (std::size_t i = 0; i < a2.size(); ++i) s += fc1.weight()[j * a2.size() + i] * a2[i];
    h[j] = lrelu(s);
  }
  for (std::size_t c = 0; c < t.classes; ++c) {
    double s = head.bias()[c];
    for (std::size_t j = 0; j < t.hidden; ++j) s += head.weight()[c * t.hidden + j] * h[j];
    logits[c] = s;
  }
  auto argmax = [](const std::vector<double>& v) { return std::size_t(std::max_element(v.begin(), v.end()) - v.begin()); };
  const std::size_t cls = argmax(logits);
  std::vector<double> ch(t.hidden);
  for (std::size_t j = 0; j < t.hidden; ++j) ch[j] = head.weight()[cls * t.hidden + j] * h[j];
  const std::size_t hj = argmax(ch);
  const std::size_t per = n2 * n2 * n2;
  std::vector<double> cf(t.c2, 0.0);
  for (std::size_t f = 0; f < t.c2; ++f)
    for (std::size_t p = 0; p < per; ++p) cf[f] += fc1.weight()[hj * a2.size() + f * per + p] * a2[f * per + p];
  const std::size_t f2 = argmax(cf);
  // Every (output position, kernel tap) pair of filter f2 reading channel c.
  std::vector<double> cc(t.c1, 0.0);
  for (std::size_t c = 0; c < t.c1; ++c)
    for (std::size_t z = 0; z < n2; ++z)
      for (std::size_t y = 0; y < n2; ++y)
        for (std::size_t xx = 0; xx < n2; ++xx)
          for (std::size_t dz = 0; dz < k; ++dz)
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx)
                cc[c] += conv2.weight()[(((f2 * t.c1 + c) * k + dz) * k + dy) * k + dx] *
                         a1[((c * n1 + z + dz) * n1 + y + dy) * n1 + xx + dx];
  return {argmax(cc), f2, hj, cls};
}

Outcome ac10() {
  Outcome o;
  const Toy t{8, 4, 5, 6, 3};
  model::NetworkSpec spec;
  spec.grid = {t.n0, t.n0 - 2, 1};
  spec.trunk = {LayerSpec::conv3d("conv1", t.c1, 3, 1, 0), LayerSpec::leaky_relu("act1"),
                LayerSpec::conv3d("conv2", t.c2, 3, 1, 0), LayerSpec::leaky_relu("act2"),
                LayerSpec::flatten("flat"),                LayerSpec::dense("fc1", t.hidden),
                LayerSpec::leaky_relu("act3")};
  spec.n_classes = t.classes;
  spec.scheme = model::OrientationScheme::uniform(t.classes, model::Period::none);
  spec.orientation_head = false;
  model::Network<double> net(spec);
  net.initialize(10);
  // Small positive biases keep the toy's units active.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> bias(0.0, 0.2);
  for (auto& p : net.parameters())
    if (p.name.find("bias") != std::string::npos)
      for (auto& v : p.tensor->data()) v = bias(rng);

  std::bernoulli_distribution occ(0.3);
  std::size_t same = 0;
  const std::size_t n_inputs = 50;
  for (std::size_t s = 0; s < n_inputs; ++s) {
    std::vector<double> x(t.n0 * t.n0 * t.n0);
    for (auto& v : x) v = occ(rng) ? 1.0 : 0.0;
    const auto path = analysis::dominant_path(net, Tensor<double>({1, 1, t.n0, t.n0, t.n0}, x));
    const auto expect = brute_force_path(net, t, x);
    std::vector<std::size_t> got;
    for (const auto& st : path.steps) got.push_back(st.index);
    same += got == expect && path.predicted_class == expect.back();
  }
  o.require(same == n_inputs, "path mismatch");
  o.detail << same << "/" << n_inputs << " random inputs traced identically";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}};
  std::set<std::string> only(argv + 1, argv + argc);
  bool all_pass = true;
  for (const auto& [name, fn] : all) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = Clock::now();
    bool pass = false;
    std::string detail;
    try {
      auto out = fn();
      pass = out.pass;
      detail = out.detail.str();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    all_pass = all_pass && pass;
    std::printf("%s %s: %s (%.1f s)\n", name.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}

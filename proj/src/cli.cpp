#include "orion/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "orion/align.hpp"
#include "orion/analysis.hpp"
#include "orion/checkpoint.hpp"
#include "orion/dataset.hpp"
#include "orion/detect.hpp"
#include "orion/io.hpp"
#include "orion/parallel.hpp"
#include "orion/synth.hpp"
#include "orion/trainer.hpp"
#include "orion/voting.hpp"

namespace orion::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs a validation step, reporting std::invalid_argument as a usage error.
template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: ORION_THREADS or hardware parallelism
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "seed for every random choice");
  cmd->add_option("--threads", c.threads, "worker threads (default: ORION_THREADS or all cores)");
}

PointCloud load_cloud(const fs::path& path, std::size_t points, std::uint64_t seed) {
  if (!fs::exists(path)) throw io::IoError("cannot open '" + path.string() + "' for reading");
  const auto ext = path.extension().string();
  if (ext == ".off" || ext == ".OFF") return voxel::sample_mesh(io::read_off(path), points, seed);
  return io::read_xyz(path);
}

voxel::GridSpec grid_spec(std::size_t total, std::size_t padding) {
  if (total < 2 * padding + 1) throw UsageError("grid too small for the padding");
  voxel::GridSpec g{total, total - 2 * padding, padding};
  as_usage([&] { g.validate(); });
  return g;
}

model::OrientationSoftmax softmax_from_string(const std::string& s) {
  if (s == "full") return model::OrientationSoftmax::full;
  if (s == "masked") return model::OrientationSoftmax::masked;
  throw UsageError("softmax must be full or masked, got '" + s + "'");
}

// ---------------------------------------------------------------- voxelize

struct VoxelizeArgs {
  Common common;
  std::string in, out;
  std::size_t points = voxel::kDefaultMeshPoints;
  std::size_t grid = 32, padding = 2;
  double yaw_deg = 0.0;
};

void cmd_voxelize(const VoxelizeArgs& a, std::ostream& out) {
  const auto spec = grid_spec(a.grid, a.padding);
  PointCloud cloud = load_cloud(a.in, a.points, a.common.seed);
  if (a.yaw_deg != 0.0) cloud = voxel::rotate_points(cloud, a.yaw_deg * std::numbers::pi / 180.0);
  const auto g = voxel::voxelize(cloud, spec);
  io::write_ocg(a.out, g);
  out << "wrote " << a.out << " (" << g.occupied() << " occupied voxels)\n";
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  std::size_t classes = 4, per_class = 300, points = synth::kSynthPoints;
  bool no_noise = false;
  std::string out;
  std::size_t scenes = 0;
  std::size_t grid = 16, padding = 2;
};

std::string scene_name(std::size_t i) {
  std::ostringstream s;
  s << "scene" << std::setw(3) << std::setfill('0') << i;
  return s.str();
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  const fs::path dir = a.out;
  const synth::Noise noise = a.no_noise ? synth::Noise::none() : synth::Noise{};
  if (a.scenes == 0) {
    const auto inst = synth::synth_instances(a.classes, a.per_class, noise, a.common.seed, a.points);
    data::save_dataset(dir, data::from_instances(inst, synth::synth_scheme(a.classes)));
    out << "wrote " << inst.size() << " objects of " << a.classes << " classes to " << dir << "\n";
    return;
  }
  // Detection scenes plus a crop dataset for training the binary scorer.
  fs::create_directories(dir / "scenes");
  std::vector<synth::Scene> scenes;
  std::vector<det::DetectionBox> all_truth;
  for (std::size_t i = 0; i < a.scenes; ++i) {
    scenes.push_back(synth::make_scene({}, a.common.seed * 7919 + i));
    const auto name = scene_name(i);
    io::write_xyz(dir / "scenes" / (name + ".xyz"), scenes.back().cloud);
    det::write_boxes_csv(dir / "scenes" / (name + "_boxes.csv"), scenes.back().truth, false);
    all_truth.insert(all_truth.end(), scenes.back().truth.begin(), scenes.back().truth.end());
  }
  det::write_boxes_csv(dir / "sizes.csv", all_truth, false);
  det::CropSetConfig crop;
  crop.grid = grid_spec(a.grid, a.padding);
  const auto crops = det::detection_training_set(scenes, det::box_stats(all_truth), crop, a.common.seed);
  data::save_dataset(dir / "crops", crops);
  out << "wrote " << a.scenes << " scenes (" << all_truth.size() << " objects) and " << crops.size()
      << " training crops to " << dir << "\n";
}

// ---------------------------------------------------------------- align

struct AlignArgs {
  Common common;
  std::string data, out, apply;
  double threshold = align::kDefaultLevelThreshold;
  std::size_t initial_size = 100, floor_size = 20;
};

void cmd_align(const AlignArgs& a, std::ostream& out) {
  const auto ds = data::load_dataset(a.data);
  std::vector<align::ManifestRow> rows;
  align::ReferenceOptions opts;
  opts.initial_size = a.initial_size;
  opts.floor_size = a.floor_size;
  opts.seed = a.common.seed;
  for (std::size_t c = 0; c < ds.scheme.num_classes(); ++c) {
    std::vector<PointCloud> clouds;
    std::vector<const data::Sample*> members;
    for (const auto& s : ds.samples)
      if (s.class_id == c) {
        clouds.push_back(s.cloud);
        members.push_back(&s);
      }
    const auto& name = ds.scheme.at(c).name;
    if (clouds.size() < 2) {
      for (const auto* s : members) rows.push_back({s->id, name, 0.0, 0.0, 1});
      out << name << ": too few objects, K=1\n";
      continue;
    }
    const auto ca = align::auto_align(clouds, opts, a.threshold);
    for (std::size_t i = 0; i < members.size(); ++i)
      rows.push_back({members[i]->id, name, ca.result.rotation_deg[i], ca.result.residual[i], ca.result.levels});
    out << name << ": e360=" << ca.e360 << " e180=" << ca.e180 << " e90=" << ca.e90 << " K=" << ca.result.levels
        << "\n";
  }
  align::write_manifest(a.out, rows);
  if (!a.apply.empty()) data::save_dataset(a.apply, align::apply_alignment(ds, rows));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, val, config, out, init, history;
  std::map<std::string, std::string> overrides;  // config key -> command-line value
  std::map<std::string, CLI::Option*> override_opts;
};

template <typename T>
void train_and_save(const train::TrainConfig& cfg, const TrainArgs& a, const data::Dataset& ds,
                    const data::Dataset* val, const model::Checkpoint* init, std::ostream& out) {
  auto result = train::train<T>(cfg, ds, val, init);
  for (const auto& e : result.history) {
    out << "epoch " << e.epoch << " lr=" << e.lr << " loss=" << e.loss << " L_C=" << e.class_loss
        << " L_O=" << e.orient_loss;
    if (e.validation) out << " val_acc=" << e.validation->accuracy;
    out << "\n";
  }
  model::save_checkpoint(a.out, result.net);
  if (!a.history.empty()) train::write_history_csv(a.history, result.history);
  if (val) out << train::format_metrics(train::evaluate(result.net, *val, cfg.orientation_softmax), val->scheme);
}

void cmd_train(TrainArgs& a, std::ostream& out) {
  std::vector<std::string> given;
  for (const auto& [key, opt] : a.override_opts)
    if (opt->count() > 0) given.push_back(key);
  if (a.override_opts.at("seed")->count() > 0) a.overrides["seed"] = std::to_string(a.common.seed);
  if (!a.config.empty() && !fs::exists(a.config))
    throw io::IoError("cannot open '" + a.config + "' for reading");
  const auto cfg = as_usage([&] {
    train::TrainConfig c;
    if (!a.config.empty()) c = train::read_config(a.config, c, given);
    for (const auto& key : given) c.set(key, a.overrides.at(key));
    c.validate();
    return c;
  });

  const auto ds = data::load_dataset(a.data);
  std::optional<data::Dataset> val;
  if (!a.val.empty()) val = data::load_dataset(a.val);
  std::optional<model::Checkpoint> init;
  if (!a.init.empty()) init = model::read_checkpoint(a.init);
  if (cfg.precision == train::Precision::f64)
    train_and_save<double>(cfg, a, ds, val ? &*val : nullptr, init ? &*init : nullptr, out);
  else
    train_and_save<float>(cfg, a, ds, val ? &*val : nullptr, init ? &*init : nullptr, out);
  out << "wrote " << a.out << "\n";
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string model, data, softmax = "full", out;
  std::size_t rotations = 1;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto net = model::load_network<float>(a.model);
  const auto ds = data::load_dataset(a.data);
  const auto m = train::evaluate(net, ds, softmax_from_string(a.softmax));
  out << train::format_metrics(m, ds.scheme);
  double voted = -1.0;
  if (a.rotations > 1) {
    std::vector<std::size_t> truth(ds.size()), pred(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      truth[i] = ds.samples[i].class_id;
      pred[i] = vote::vote_classify(net, ds.samples[i].cloud, a.rotations).final_class;
    }
    voted = train::compute_metrics(truth, pred, ds.scheme.num_classes()).accuracy;
    out << "vote accuracy (" << a.rotations << " rotations): " << voted << "\n";
  }
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw io::IoError("cannot open '" + a.out + "' for writing");
    f << "metric,value\naccuracy," << m.accuracy << "\nweighted_f1," << m.weighted_f1
      << "\norientation_accuracy," << m.orientation_accuracy << "\n";
    if (voted >= 0.0) f << "vote_accuracy," << voted << "\n";
  }
}

// ---------------------------------------------------------------- vote

struct VoteArgs {
  Common common;
  std::string model, in;
  std::size_t rotations = 12, points = voxel::kDefaultMeshPoints;
};

void cmd_vote(const VoteArgs& a, std::ostream& out) {
  const auto net = model::load_network<float>(a.model);
  const auto cloud = load_cloud(a.in, a.points, a.common.seed);
  const auto r = vote::vote_classify(net, cloud, a.rotations);
  const auto& scheme = net.spec().scheme;
  out << "rotation,class\n";
  for (std::size_t i = 0; i < r.per_rotation.size(); ++i)
    out << i << "," << scheme.at(r.per_rotation[i]).name << "\n";
  out << "final," << scheme.at(r.final_class).name << "\n";
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  Common common;
  std::string model, scenes, sizes, out, report, mode = "guided";
  std::size_t rotations = 18, min_points = 20;
  double stride = 1.0, nms = 0.1, iou = 0.25;
};

void cmd_detect(const DetectArgs& a, std::ostream& out) {
  const auto net = model::load_network<float>(a.model);
  const auto sizes = det::read_boxes_csv(a.sizes);
  const auto stats = det::box_stats(sizes);
  det::DetectConfig cfg;
  cfg.proposals.mode = as_usage([&] { return det::search_mode_from_string(a.mode); });
  cfg.proposals.rotations = a.rotations;
  cfg.proposals.min_points = a.min_points;
  cfg.proposals.stride = a.stride;
  cfg.nms_iou = a.nms;

  std::vector<fs::path> clouds;
  if (fs::is_directory(a.scenes)) {
    for (const auto& e : fs::directory_iterator(a.scenes))
      if (e.path().extension() == ".xyz") clouds.push_back(e.path());
    std::sort(clouds.begin(), clouds.end());
  } else {
    clouds.push_back(a.scenes);
  }
  if (clouds.empty()) throw io::IoError("no .xyz scenes in '" + a.scenes + "'");

  std::vector<det::FrameResult> frames;
  std::size_t evaluated = 0;
  double seconds = 0.0;
  bool have_truth = true;
  if (!a.out.empty()) fs::create_directories(a.out);
  for (const auto& path : clouds) {
    const auto scene = io::read_xyz(path);
    const auto r = det::detect(net, scene, stats, cfg);
    evaluated += r.scoring.evaluations;
    seconds += r.scoring.seconds;
    det::FrameResult f;
    f.detections = r.detections;
    const auto truth_path = path.parent_path() / (path.stem().string() + "_boxes.csv");
    if (fs::exists(truth_path)) f.truth = det::read_boxes_csv(truth_path);
    else have_truth = false;
    if (!a.out.empty()) det::write_boxes_csv(fs::path(a.out) / (path.stem().string() + "_detections.csv"), r.detections, true);
    out << path.filename().string() << ": " << r.proposals << " boxes evaluated, " << r.detections.size()
        << " detections\n";
    frames.push_back(std::move(f));
  }
  out << "mode=" << a.mode << " boxes_evaluated=" << evaluated << " seconds=" << seconds << "\n";
  if (!have_truth) return;
  auto report = det::evaluate_detections(frames, a.iou);
  report.boxes_evaluated = evaluated;
  report.seconds = seconds;
  out << "ap=" << report.average_precision << " tp=" << report.true_positives << "/" << report.ground_truth << "\n";
  if (!a.report.empty()) det::write_report_csv(a.report, report);
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common common;
  std::string model, data, paths, histograms, snapshot, in, layer;
  std::size_t filter = 0, rotations = 12, points = voxel::kDefaultMeshPoints;
  double threshold = 0.0;
};

void cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const auto net = model::load_network<float>(a.model);
  const auto& grid = net.spec().grid;
  if (!a.paths.empty() || !a.histograms.empty()) {
    if (a.data.empty()) throw UsageError("--paths and --histograms need --data");
    const auto ds = data::load_dataset(a.data);
    std::vector<analysis::SampleGroup> groups(ds.scheme.num_classes());
    for (std::size_t c = 0; c < groups.size(); ++c) groups[c].name = ds.scheme.at(c).name;
    for (const auto& s : ds.samples) groups.at(s.class_id).grids.push_back(data::sample_grid(s, grid));
    if (!a.paths.empty()) {
      std::ofstream f(a.paths);
      if (!f) throw io::IoError("cannot open '" + a.paths + "' for writing");
      f << "id,class,predicted,layer,index,margin\n";
      for (const auto& s : ds.samples) {
        const auto g = data::sample_grid(s, grid);
        const auto p = analysis::dominant_path(net, model::grids_to_tensor<float>(std::span(&g, 1)));
        for (const auto& st : p.steps)
          f << s.id << "," << s.class_id << "," << p.predicted_class << "," << st.layer << "," << st.index << ","
            << st.margin << "\n";
      }
    }
    if (!a.histograms.empty()) {
      std::vector<std::string> skipped;
      analysis::write_histograms_csv(a.histograms, analysis::path_histograms(net, groups, &skipped));
      for (const auto& s : skipped) out << "skipped empty group " << s << "\n";
    }
  }
  if (!a.snapshot.empty()) {
    if (a.in.empty() || a.layer.empty()) throw UsageError("--snapshot needs --in and --layer");
    const auto cloud = load_cloud(a.in, a.points, a.common.seed);
    const auto maps = analysis::snapshot_activations(net, cloud, a.layer, a.filter, a.rotations, a.threshold);
    fs::create_directories(a.snapshot);
    for (std::size_t r = 0; r < maps.size(); ++r) {
      std::ostringstream name;
      name << a.layer << "_f" << a.filter << "_r" << std::setw(2) << std::setfill('0') << r << ".ocf";
      io::write_ocf(fs::path(a.snapshot) / name.str(), maps[r]);
    }
    out << "wrote " << maps.size() << " activation maps to " << a.snapshot << "\n";
  }
}

}  // namespace

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orientation-boosted voxel networks"};
  app.name("orion");
  app.require_subcommand(1);

  VoxelizeArgs vx;
  auto* c_vox = app.add_subcommand("voxelize", "point cloud or mesh to an OCG1 occupancy grid");
  c_vox->add_option("--in", vx.in, ".off mesh or .xyz cloud")->required();
  c_vox->add_option("--out", vx.out, "output .ocg")->required();
  c_vox->add_option("--points", vx.points, "surface samples for meshes");
  c_vox->add_option("--grid", vx.grid, "grid extent");
  c_vox->add_option("--padding", vx.padding, "empty voxels per side");
  c_vox->add_option("--yaw", vx.yaw_deg, "rotation about the vertical axis, degrees");
  add_common(c_vox, vx.common);

  SynthArgs sy;
  auto* c_syn = app.add_subcommand("synth", "procedural shape dataset or detection scenes");
  c_syn->add_option("--classes", sy.classes, "number of shape classes (2-6)");
  c_syn->add_option("--per-class", sy.per_class, "objects per class");
  c_syn->add_option("--points", sy.points, "points per object");
  c_syn->add_flag("--no-noise", sy.no_noise, "disable jitter, scale noise and outliers");
  c_syn->add_option("--scenes", sy.scenes, "write this many detection scenes instead of objects");
  c_syn->add_option("--grid", sy.grid, "grid extent for detection crops");
  c_syn->add_option("--padding", sy.padding, "padding for detection crops");
  c_syn->add_option("--out", sy.out, "output directory")->required();
  add_common(c_syn, sy.common);

  AlignArgs al;
  auto* c_al = app.add_subcommand("align", "per-class azimuth alignment and orientation levels");
  c_al->add_option("--data", al.data, "dataset directory")->required();
  c_al->add_option("--out", al.out, "alignment manifest CSV")->required();
  c_al->add_option("--apply", al.apply, "also write the dataset re-annotated from the manifest here");
  c_al->add_option("--threshold", al.threshold, "level assignment threshold");
  c_al->add_option("--initial-size", al.initial_size, "initial reference set size");
  c_al->add_option("--floor", al.floor_size, "smallest reference set");
  add_common(c_al, al.common);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train a network; flags override the config file");
  c_tr->add_option("--data", tr.data, "training dataset directory")->required();
  c_tr->add_option("--val", tr.val, "validation dataset directory");
  c_tr->add_option("--config", tr.config, "key = value config file");
  c_tr->add_option("--out", tr.out, "checkpoint to write")->required();
  c_tr->add_option("--init", tr.init, "start from this checkpoint");
  c_tr->add_option("--history", tr.history, "per-epoch CSV");
  for (const auto& key : train::TrainConfig::keys()) {
    if (key == "seed") continue;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    tr.override_opts[key] = c_tr->add_option(flag, tr.overrides[key], "config key " + key);
  }
  add_common(c_tr, tr.common);
  tr.override_opts["seed"] = c_tr->get_option("--seed");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "accuracy, weighted F1 and orientation accuracy");
  c_ev->add_option("--model", ev.model, "checkpoint")->required();
  c_ev->add_option("--data", ev.data, "dataset directory")->required();
  c_ev->add_option("--softmax", ev.softmax, "orientation argmax over all nodes (full) or the predicted block (masked)");
  c_ev->add_option("--rotations", ev.rotations, "also report voting accuracy over this many rotations");
  c_ev->add_option("--out", ev.out, "metrics CSV");
  add_common(c_ev, ev.common);

  VoteArgs vo;
  auto* c_vo = app.add_subcommand("vote", "classify one object by voting over rotations");
  c_vo->add_option("--model", vo.model, "checkpoint")->required();
  c_vo->add_option("--in", vo.in, ".off mesh or .xyz cloud")->required();
  c_vo->add_option("--rotations", vo.rotations, "rotation copies");
  c_vo->add_option("--points", vo.points, "surface samples for meshes");
  add_common(c_vo, vo.common);

  DetectArgs de;
  auto* c_de = app.add_subcommand("detect", "sliding-box detection in point cloud scenes");
  c_de->add_option("--model", de.model, "binary detector checkpoint")->required();
  c_de->add_option("--scenes", de.scenes, "scene .xyz or a directory of them (with <name>_boxes.csv truth)")
      ->required();
  c_de->add_option("--sizes", de.sizes, "training boxes CSV for the size statistics")->required();
  c_de->add_option("--mode", de.mode, "guided or exhaustive");
  c_de->add_option("--rotations", de.rotations, "yaw steps in exhaustive mode");
  c_de->add_option("--stride", de.stride, "window stride, meters");
  c_de->add_option("--min-points", de.min_points, "skip windows with fewer points");
  c_de->add_option("--nms", de.nms, "suppression IoU");
  c_de->add_option("--iou", de.iou, "true positive IoU");
  c_de->add_option("--out", de.out, "directory for per-scene detection CSVs");
  c_de->add_option("--report", de.report, "precision-recall CSV");
  add_common(c_de, de.common);

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "dominant paths, path histograms and activation snapshots");
  c_an->add_option("--model", an.model, "checkpoint")->required();
  c_an->add_option("--data", an.data, "dataset directory");
  c_an->add_option("--paths", an.paths, "per-sample dominant path CSV");
  c_an->add_option("--histograms", an.histograms, "per-class path histogram CSV");
  c_an->add_option("--snapshot", an.snapshot, "directory for OCF1 activation maps");
  c_an->add_option("--in", an.in, "object for --snapshot");
  c_an->add_option("--layer", an.layer, "trunk layer for --snapshot");
  c_an->add_option("--filter", an.filter, "filter index for --snapshot");
  c_an->add_option("--rotations", an.rotations, "rotation copies for --snapshot");
  c_an->add_option("--threshold", an.threshold, "zero activations below this magnitude");
  c_an->add_option("--points", an.points, "surface samples for meshes");
  add_common(c_an, an.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    return 2;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    std::size_t threads = 0;
    for (const Common* c : {&vx.common, &sy.common, &al.common, &tr.common, &ev.common, &vo.common, &de.common,
                            &an.common})
      threads = std::max(threads, c->threads);
    set_threads(threads);
    const std::string name = sub->get_name();
    if (name == "voxelize") cmd_voxelize(vx, out);
    else if (name == "synth") cmd_synth(sy, out);
    else if (name == "align") cmd_align(al, out);
    else if (name == "train") cmd_train(tr, out);
    else if (name == "eval") cmd_eval(ev, out);
    else if (name == "vote") cmd_vote(vo, out);
    else if (name == "detect") cmd_detect(de, out);
    else if (name == "analyze") cmd_analyze(an, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace orion::cli

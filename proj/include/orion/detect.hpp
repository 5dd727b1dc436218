#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orion/box.hpp"
#include "orion/dataset.hpp"
#include "orion/network.hpp"
#include "orion/synth.hpp"

namespace orion::det {

struct BoxSize {
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  friend bool operator==(const BoxSize&, const BoxSize&) = default;
};

struct SizeStats {
  BoxSize mean;
  BoxSize spread;  // population standard deviation
  BoxSize min;
  BoxSize max;
  std::vector<BoxSize> candidates;
};

/// Candidates are mean - spread, mean, mean + spread (all dimensions together),
/// each clamped to the observed per-dimension range; duplicates are dropped.
/// Throws std::invalid_argument on an empty input.
SizeStats box_stats(std::span<const DetectionBox> truth);

enum class SearchMode { guided, exhaustive };
std::string_view to_string(SearchMode m);
SearchMode search_mode_from_string(std::string_view s);

struct ProposalConfig {
  double stride = 1.0;          // meters between window centers
  SearchMode mode = SearchMode::guided;
  std::size_t rotations = 18;   // yaw steps per location in exhaustive mode
  std::size_t min_points = 20;
};

/// Window centers on a regular ground-plane lattice over the scene's extent,
/// one box per size candidate. A location survives pruning when its yaw-0 box
/// holds at least min_points points; the test is the same in both modes, so
/// exhaustive mode emits exactly `rotations` boxes per surviving guided box,
/// stored consecutively with yaw = 2*pi*r/rotations.
/// `locations` (optional) receives the pre-pruning location x size count.
std::vector<DetectionBox> propose_boxes(const PointCloud& scene, const SizeStats& stats, const ProposalConfig& cfg,
                                        std::size_t* locations = nullptr);

/// Points of the scene inside the crop cube of `box`, expressed in the box
/// frame (origin at the center, +x along the yaw direction). The cube spans the
/// whole grid: the box's largest dimension maps onto the object region and the
/// padding adds context around it.
PointCloud crop_points(const PointCloud& scene, const DetectionBox& box, const voxel::GridSpec& grid);
double crop_voxel_size(const DetectionBox& box, const voxel::GridSpec& grid);

struct ScoreStats {
  std::size_t evaluations = 0;  // network forward passes (one per grid)
  double seconds = 0.0;
};

/// Scores proposals with the binary network (`object_class` is the positive
/// class). Guided: one pass per box, yaw set to the center of the argmax bin
/// of the object block. Exhaustive: boxes arrive in groups of `rotations`; the
/// highest-scoring member of each group is kept.
template <typename T>
std::vector<DetectionBox> score_boxes(const model::Network<T>& net, const PointCloud& scene,
                                      std::span<const DetectionBox> proposals, SearchMode mode,
                                      std::size_t rotations, std::size_t object_class = 0,
                                      ScoreStats* stats = nullptr);

/// Greedy suppression in descending score order (ties keep input order): a box
/// is dropped when its box_iou with a kept box is >= iou_threshold.
std::vector<DetectionBox> nms(std::span<const DetectionBox> boxes, double iou_threshold);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

struct EvalReport {
  std::vector<PrPoint> curve;
  double average_precision = 0.0;
  std::size_t boxes_evaluated = 0;  // network passes spent producing the detections
  double seconds = 0.0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
  std::size_t ground_truth = 0;
};

/// One scene's detections and ground truth.
struct FrameResult {
  std::vector<DetectionBox> detections;
  std::vector<DetectionBox> truth;
};

/// Detections from all frames are ranked together by descending score (stable
/// in frame then input order). Each takes the highest-IoU unmatched truth box
/// of its own frame with IoU >= threshold. One PR point per rank. AP is the
/// trapezoid area under the interpolated precision curve, anchored at recall 0.
/// boxes_evaluated and seconds are left for the caller to fill in.
EvalReport evaluate_detections(std::span<const FrameResult> frames, double iou_threshold = 0.25);
EvalReport evaluate_detections(std::span<const DetectionBox> detections, std::span<const DetectionBox> truth,
                               double iou_threshold = 0.25);

/// Interpolated trapezoid AP for a precomputed curve (recall non-decreasing).
double average_precision(std::span<const PrPoint> curve);

struct DetectConfig {
  ProposalConfig proposals;
  double nms_iou = 0.1;
  std::size_t object_class = 0;
};

struct DetectResult {
  std::vector<DetectionBox> detections;  // after NMS
  std::size_t proposals = 0;
  std::size_t locations = 0;
  ScoreStats scoring;
};

template <typename T>
DetectResult detect(const model::Network<T>& net, const PointCloud& scene, const SizeStats& stats,
                    const DetectConfig& cfg);

/// Two-class scheme for the binary scorer: "object" (360 degree period) and
/// "background" (single node).
model::OrientationScheme detection_scheme();

struct CropSetConfig {
  voxel::GridSpec grid;
  std::size_t jitters_per_object = 4;
  double center_jitter = 0.3;         // meters, uniform per axis in the plane
  double negative_ratio = 3.0;        // negatives per positive, drawn from pruned proposals
  double negative_clearance = 2.5;    // minimum ground distance from any object center
  ProposalConfig proposals;
};

/// Detector training crops from annotated scenes: jittered windows around each
/// ground-truth object (azimuth = object yaw) and background windows sampled
/// from the same proposals the detector will score.
data::Dataset detection_training_set(std::span<const synth::Scene> scenes, const SizeStats& stats,
                                     const CropSetConfig& cfg, std::uint64_t seed);

/// CSV "cx,cy,cz,l,w,h,yaw[,score]" with a header line.
std::vector<DetectionBox> read_boxes_csv(const std::filesystem::path& path);
void write_boxes_csv(const std::filesystem::path& path, std::span<const DetectionBox> boxes, bool with_score);
/// PR points then a summary line "# ap=...,boxes_evaluated=...,seconds=...".
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace orion::det

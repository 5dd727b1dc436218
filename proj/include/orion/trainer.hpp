#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orion/checkpoint.hpp"
#include "orion/dataset.hpp"
#include "orion/network.hpp"

namespace orion::train {

enum class Precision { f32, f64 };

struct TrainConfig {
  model::Architecture arch = model::Architecture::baseline;
  voxel::GridSpec grid;
  double gamma = 0.5;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay = 0.1;       // multiplier applied once
  double decay_at = 2.0 / 3.0; // fraction of epochs after which it applies
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool orientation_head = true;
  model::OrientationSoftmax orientation_softmax = model::OrientationSoftmax::full;
  bool rotation_copies = true;  // one random 30 degree rotation copy per sample per epoch
  int shift = 2;                // displacement range, voxels
  Precision precision = Precision::f32;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  /// Assigns one "key = value" setting; unknown keys and bad values throw.
  void set(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
};

/// Flat UTF-8 "key = value" lines; '#' starts a comment. Keys in `skip` are
/// parsed for validity but not applied (command-line values win).
TrainConfig parse_config(std::istream& in, TrainConfig base = {}, std::span<const std::string> skip = {});
TrainConfig read_config(const std::filesystem::path& path, TrainConfig base = {},
                        std::span<const std::string> skip = {});

/// Network input plus labels.
struct LabeledSample {
  voxel::OccupancyGrid grid;
  std::size_t class_id = 0;
  std::optional<double> azimuth_deg;
};

struct AugmentOptions {
  bool rotation_copies = false;
  int shift = 0;
  double rotation_step_deg = model::kDefaultBinWidthDeg;
};

/// Optional rotation copy (a uniformly chosen multiple of the step applied to
/// the source cloud, azimuth advanced to match) followed by a uniform integer
/// shift in [-shift, shift]^3. Identity when both are off.
LabeledSample augment(const data::Sample& sample, const voxel::GridSpec& grid, const AugmentOptions& opts,
                      std::mt19937_64& rng);

struct Metrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  double weighted_f1 = 0.0;
  /// Over samples of classes with more than one orientation bin only.
  double orientation_accuracy = 0.0;
  std::size_t orientation_count = 0;
};

/// Class metrics from true and predicted ids. Orientation arrays are optional
/// (empty) and then leave the orientation fields at zero.
Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                        std::size_t n_classes, std::span<const std::size_t> orient_truth = {},
                        std::span<const std::size_t> orient_pred = {}, std::span<const std::uint8_t> orient_mask = {});

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double class_loss = 0.0;
  double orient_loss = 0.0;
  std::optional<Metrics> validation;
};

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

template <typename T>
struct TrainResult {
  model::Network<T> net;
  std::vector<EpochStats> history;
};

/// `init` starts from a checkpoint instead of fresh weights. Its parameters
/// are loaded by name; an orientation head missing from it (baseline to ORION
/// fine-tuning) keeps its fresh initialization.
/// Throws TrainingError with epoch and batch if the loss or a gradient turns
/// non-finite.
template <typename T>
TrainResult<T> train(const TrainConfig& config, const data::Dataset& train_set,
                     const data::Dataset* validation = nullptr, const model::Checkpoint* init = nullptr);

/// Eval-mode predictions for a batch of grids.
struct Predictions {
  std::vector<std::size_t> classes;
  std::vector<std::vector<double>> class_probs;
  std::vector<std::size_t> orient_nodes;  // empty without an orientation head
  std::vector<std::vector<double>> orient_logits;
};

/// `softmax` selects whether the orientation argmax runs over all nodes or
/// only the predicted class's block.
template <typename T>
Predictions predict(const model::Network<T>& net, std::span<const voxel::OccupancyGrid> grids,
                    model::OrientationSoftmax softmax = model::OrientationSoftmax::full, std::size_t batch = 64);

/// Voxelizes every sample without augmentation and scores it. The dataset's
/// scheme must equal the network's.
template <typename T>
Metrics evaluate(const model::Network<T>& net, const data::Dataset& ds,
                 model::OrientationSoftmax softmax = model::OrientationSoftmax::full);

std::string format_metrics(const Metrics& m, const model::OrientationScheme& scheme);

}  // namespace orion::train

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orion/checkpoint.hpp"
#include "orion/dataset.hpp"
#include "orion/io.hpp"
#include "orion/synth.hpp"
#include "orion/trainer.hpp"

using namespace orion;
using namespace orion::train;
namespace fs = std::filesystem;

namespace {

const voxel::GridSpec kGrid{16, 12, 2};

data::Dataset small_set(std::size_t per_class, std::uint64_t seed) {
  return data::from_instances(synth::synth_instances(3, per_class, synth::Noise{}, seed, 600), synth::synth_scheme(3));
}

TrainConfig quick_config() {
  TrainConfig c;
  c.grid = kGrid;
  c.epochs = 2;
  c.batch_size = 8;
  return c;
}

}  // namespace

TEST(Config, ParsesCommentsAndOverrides) {
  std::istringstream in(
      "# training\n"
      "gamma = 0.25\n"
      "epochs=12   # short\n"
      "\n"
      "orientation_softmax = masked\n"
      "lr = 0.5\n");
  const std::vector<std::string> skip{"lr"};
  const auto c = parse_config(in, {}, skip);
  EXPECT_DOUBLE_EQ(c.gamma, 0.25);
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.orientation_softmax, model::OrientationSoftmax::masked);
  EXPECT_DOUBLE_EQ(c.lr, TrainConfig{}.lr);  // skipped: the command line owns it
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("gama = 0.5\n");
  EXPECT_THROW(parse_config(unknown), std::invalid_argument);
  std::istringstream bad("epochs = many\n");
  EXPECT_THROW(parse_config(bad), std::invalid_argument);
  std::istringstream bad_skipped("lr = fast\n");
  const std::vector<std::string> skip{"lr"};
  EXPECT_THROW(parse_config(bad_skipped, {}, skip), std::invalid_argument);
  std::istringstream no_eq("gamma 0.5\n");
  EXPECT_THROW(parse_config(no_eq), std::invalid_argument);
  TrainConfig c;
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.shift = 3;  // beyond the default padding of 2
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Augment, IdentityWhenDisabled) {
  const auto ds = small_set(1, 1);
  std::mt19937_64 rng(1);
  const auto a = augment(ds.samples[0], kGrid, {}, rng);
  EXPECT_EQ(a.grid.values, data::sample_grid(ds.samples[0], kGrid).values);
  EXPECT_EQ(a.azimuth_deg, ds.samples[0].azimuth_deg);
}

TEST(Augment, RotationAdvancesAzimuthInSteps) {
  const auto ds = small_set(1, 2);
  const auto& s = ds.samples[0];
  std::mt19937_64 rng(3);
  AugmentOptions opts;
  opts.rotation_copies = true;
  for (int i = 0; i < 20; ++i) {
    const auto a = augment(s, kGrid, opts, rng);
    const double delta = std::fmod(*a.azimuth_deg - *s.azimuth_deg + 720.0, 360.0);
    EXPECT_NEAR(std::remainder(delta, 30.0), 0.0, 1e-9);
    // The grid equals the source voxelized at the advanced azimuth.
    EXPECT_EQ(a.grid.values, data::sample_grid(s, kGrid, 30.0 * std::round(delta / 30.0)).values);
  }
}

TEST(Augment, ShiftStaysInsideRange) {
  const auto ds = small_set(1, 4);
  std::mt19937_64 rng(5);
  AugmentOptions opts;
  opts.shift = 2;
  const auto base = data::sample_grid(ds.samples[0], kGrid);
  for (int i = 0; i < 20; ++i) {
    const auto a = augment(ds.samples[0], kGrid, opts, rng);
    EXPECT_EQ(a.grid.occupied(), base.occupied());  // the padding absorbs any shift
  }
}

TEST(Metrics, HandComputed) {
  // truth: 0 0 0 1 1 2, predicted: 0 0 1 1 2 2
  const std::vector<std::size_t> t{0, 0, 0, 1, 1, 2}, p{0, 0, 1, 1, 2, 2};
  const auto m = compute_metrics(t, p, 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 4.0 / 6.0);
  // class 0: P 1, R 2/3 -> F1 0.8; class 1: P 1/2, R 1/2 -> 0.5; class 2: P 1/2, R 1 -> 2/3
  EXPECT_NEAR(m.f1[0], 0.8, 1e-12);
  EXPECT_NEAR(m.f1[1], 0.5, 1e-12);
  EXPECT_NEAR(m.f1[2], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.weighted_f1, (3 * 0.8 + 2 * 0.5 + 1 * (2.0 / 3.0)) / 6.0, 1e-12);
  EXPECT_EQ(m.support, (std::vector<std::size_t>{3, 2, 1}));
}

TEST(Metrics, OrientationMask) {
  const std::vector<std::size_t> t{0, 1, 1}, p{0, 1, 1}, ot{4, 7, 8}, op{4, 7, 2};
  const std::vector<std::uint8_t> mask{0, 1, 1};
  const auto m = compute_metrics(t, p, 2, ot, op, mask);
  EXPECT_EQ(m.orientation_count, 2u);
  EXPECT_DOUBLE_EQ(m.orientation_accuracy, 0.5);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto ds = small_set(6, 7);
  auto a = train::train<float>(quick_config(), ds);
  auto b = train::train<float>(quick_config(), ds);
  EXPECT_EQ(model::encode_checkpoint(a.net), model::encode_checkpoint(b.net));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[1].loss, b.history[1].loss);
  EXPECT_NEAR(a.history[0].loss, 0.5 * a.history[0].class_loss + 0.5 * a.history[0].orient_loss, 1e-9);
}

TEST(Train, LearningRateDecays) {
  auto cfg = quick_config();
  cfg.epochs = 3;
  cfg.decay_at = 0.5;
  const auto r = train::train<float>(cfg, small_set(3, 8));
  EXPECT_DOUBLE_EQ(r.history[0].lr, cfg.lr);
  EXPECT_NEAR(r.history[2].lr, cfg.lr * cfg.lr_decay, 1e-15);
}

TEST(Train, DivergenceReportsEpochAndBatch) {
  auto cfg = quick_config();
  cfg.lr = 1e30;
  try {
    train::train<float>(cfg, small_set(6, 9));
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_GE(e.batch(), 1u);
  }
}

TEST(Train, FineTunesBaselineIntoOrion) {
  const auto ds = small_set(4, 10);
  auto cfg = quick_config();
  cfg.gamma = 0.0;
  cfg.orientation_head = false;
  auto base = train::train<float>(cfg, ds);
  const auto ckpt = model::decode_checkpoint(model::encode_checkpoint(base.net));
  cfg.gamma = 0.5;
  cfg.orientation_head = true;
  cfg.lr = 0.0;  // weights stay as loaded
  const auto tuned = train::train<float>(cfg, ds, nullptr, &ckpt);
  std::vector<voxel::OccupancyGrid> grids;
  for (const auto& s : ds.samples) grids.push_back(data::sample_grid(s, kGrid));
  EXPECT_EQ(predict(tuned.net, grids).classes, predict(base.net, grids).classes);
  EXPECT_FALSE(predict(tuned.net, grids).orient_nodes.empty());
}

TEST(Evaluate, RejectsForeignScheme) {
  const auto ds = small_set(2, 11);
  const auto r = train::train<float>(quick_config(), ds);
  auto other = ds;
  other.scheme = model::OrientationScheme::uniform(3, model::Period::none);
  EXPECT_THROW(evaluate(r.net, other), std::invalid_argument);
  const auto m = evaluate(r.net, ds);
  EXPECT_EQ(m.count, ds.size());
  EXPECT_FALSE(format_metrics(m, ds.scheme).empty());
}

TEST(History, CsvColumns) {
  const auto dir = fs::temp_directory_path() / "orion_unit_history";
  fs::create_directories(dir);
  std::vector<EpochStats> h(1);
  h[0].epoch = 1;
  h[0].loss = 0.5;
  write_history_csv(dir / "h.csv", h);
  std::ifstream in(dir / "h.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,loss,L_C,L_O,val_acc,val_wF1,val_orient_acc");
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto dir = fs::temp_directory_path() / "orion_unit_dataset";
  fs::remove_all(dir);
  auto ds = small_set(2, 12);
  ds.samples[0].voxel_size = 0.125;
  data::save_dataset(dir, ds);
  const auto back = data::load_dataset(dir);
  EXPECT_EQ(back.scheme, ds.scheme);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
    EXPECT_EQ(back.samples[i].cloud, ds.samples[i].cloud);
    EXPECT_EQ(back.samples[i].azimuth_deg, ds.samples[i].azimuth_deg);
    EXPECT_EQ(back.samples[i].voxel_size, ds.samples[i].voxel_size);
  }
  EXPECT_THROW(data::load_dataset(dir / "nope"), io::IoError);
}

TEST(Dataset, ValidateNeedsAzimuthForMultiBinClasses) {
  auto ds = small_set(1, 13);
  ds.samples[0].azimuth_deg.reset();
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}

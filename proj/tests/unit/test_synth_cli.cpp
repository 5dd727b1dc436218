#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include "orion/align.hpp"
#include "orion/cli.hpp"
#include "orion/dataset.hpp"
#include "orion/io.hpp"
#include "orion/synth.hpp"
#include "orion/voxel.hpp"

using namespace orion;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "orion");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  auto d = fs::temp_directory_path() / ("orion_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<Vec3> sorted_points(PointCloud c) {
  auto less = [](const Vec3& a, const Vec3& b) {
    return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
  };
  std::sort(c.points.begin(), c.points.end(), less);
  return c.points;
}

}  // namespace

TEST(Synth, Catalog) {
  const auto& cat = synth::shape_catalog();
  ASSERT_EQ(cat.size(), 6u);
  EXPECT_EQ(cat[0].period, model::Period::deg360);
  EXPECT_EQ(cat[2].period, model::Period::deg180);
  EXPECT_EQ(cat[3].period, model::Period::none);
  EXPECT_EQ(cat[5].period, model::Period::deg90);
  EXPECT_EQ(synth::synth_scheme(4).total_nodes(), 12u + 12u + 6u + 1u);
  EXPECT_THROW(synth::synth_instances(1, 1, synth::Noise{}, 0), std::invalid_argument);
}

TEST(Synth, InstancesAreDeterministic) {
  const auto a = synth::synth_instances(3, 4, synth::Noise{}, 5, 400);
  const auto b = synth::synth_instances(3, 4, synth::Noise{}, 5, 400);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].cloud, b[i].cloud);
    EXPECT_EQ(a[i].azimuth_deg, b[i].azimuth_deg);
    EXPECT_GE(a[i].azimuth_deg, 0.0);
    EXPECT_LT(a[i].azimuth_deg, 360.0);
    EXPECT_EQ(a[i].cloud.size(), 400u);
  }
}

TEST(Synth, PeriodicShapeRepeatsAfterItsPeriod) {
  const auto& bench = synth::shape_catalog()[2];
  const auto a = synth::make_instance(bench, 20.0, synth::Noise::none(), 1000, 9);
  const auto b = synth::make_instance(bench, 200.0, synth::Noise::none(), 1000, 9);
  const auto pa = sorted_points(a), pb = sorted_points(b);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_NEAR(pa[i].x, pb[i].x, 1e-9);
    EXPECT_NEAR(pa[i].y, pb[i].y, 1e-9);
    EXPECT_NEAR(pa[i].z, pb[i].z, 1e-9);
  }
}

TEST(Synth, AzimuthIsTheAppliedRotation) {
  const auto& stair = synth::shape_catalog()[1];
  const auto base = synth::make_instance(stair, 0.0, synth::Noise::none(), 1500, 4);
  const auto turned = synth::make_instance(stair, 90.0, synth::Noise::none(), 1500, 4);
  const voxel::GridSpec g{16, 12, 2};
  // A quarter turn of the grid matches to within boundary effects.
  const auto rq = voxel::rotate_grid_quarter(voxel::voxelize(base, g), 1);
  const auto vt = voxel::voxelize(turned, g);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < rq.values.size(); ++i) diff += rq.values[i] != vt.values[i];
  EXPECT_LT(double(diff), 0.1 * double(vt.occupied()));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({"voxelize", "--in", "x.xyz"}).code, 2);  // --out missing
  const auto missing = run_cli({"voxelize", "--in", "/nonexistent/x.xyz", "--out", "/tmp/x.ocg"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("/nonexistent/x.xyz"), std::string::npos);
  EXPECT_EQ(run_cli({"voxelize", "--in", "a.xyz", "--out", "b.ocg", "--grid", "30", "--padding", "20"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, VoxelizeIsByteIdenticalAcrossRuns) {
  const auto dir = fresh("vox");
  io::write_off(dir / "box.off", synth::cuboid({0, 0, 0}, {2, 1, 1}));
  for (const char* name : {"a.ocg", "b.ocg"}) {
    const auto r = run_cli({"voxelize", "--in", (dir / "box.off").string(), "--out", (dir / name).string(),
                            "--points", "5000", "--grid", "16", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(io::read_bytes(dir / "a.ocg"), io::read_bytes(dir / "b.ocg"));
  const auto g = io::read_ocg(dir / "a.ocg");
  EXPECT_EQ(g.spec.total, 16u);
  EXPECT_TRUE(g.padding_is_empty());
}

TEST(Cli, SynthTrainEvalVoteAnalyze) {
  const auto dir = fresh("flow");
  const auto d = dir.string();
  auto r = run_cli({"synth", "--classes", "2", "--per-class", "6", "--points", "500", "--out", d + "/data", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data::load_dataset(dir / "data").size(), 12u);
  r = run_cli({"train", "--data", d + "/data", "--out", d + "/m.orn", "--epochs", "1", "--grid", "16", "--object",
               "12", "--batch-size", "4", "--history", d + "/h.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "h.csv"));
  r = run_cli({"eval", "--model", d + "/m.orn", "--data", d + "/data", "--rotations", "4", "--out", d + "/e.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy"), std::string::npos);
  r = run_cli({"eval", "--model", d + "/m.orn", "--data", d + "/data", "--softmax", "sideways"});
  EXPECT_EQ(r.code, 2);
  io::write_xyz(dir / "obj.xyz", data::load_dataset(dir / "data").samples[0].cloud);
  r = run_cli({"vote", "--model", d + "/m.orn", "--in", d + "/obj.xyz", "--rotations", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"analyze", "--model", d + "/m.orn", "--data", d + "/data", "--paths", d + "/p.csv", "--histograms",
               d + "/hist.csv", "--snapshot", d + "/snap", "--in", d + "/obj.xyz", "--layer", "conv2", "--filter", "1",
               "--rotations", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "p.csv"));
  EXPECT_TRUE(fs::exists(dir / "hist.csv"));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "snap"), fs::directory_iterator{}), 2);
  r = run_cli({"align", "--data", d + "/data", "--out", d + "/align.csv", "--apply", d + "/aligned", "--floor", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(align::read_manifest(dir / "align.csv").size(), 12u);
  EXPECT_EQ(data::load_dataset(dir / "aligned").size(), 12u);
}

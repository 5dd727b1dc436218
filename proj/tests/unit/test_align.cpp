#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "orion/align.hpp"
#include "orion/dataset.hpp"
#include "orion/synth.hpp"
#include "orion/voxel.hpp"

using namespace orion;
using namespace orion::align;
namespace fs = std::filesystem;

namespace {

const synth::ShapeClass& shape(std::size_t i) { return synth::shape_catalog()[i]; }

PointCloud instance(std::size_t cls, double deg, std::uint64_t seed = 1) {
  return synth::make_instance(shape(cls), deg, synth::Noise::none(), 3000, seed);
}

}  // namespace

TEST(Descriptor, ShellsAreNormalized) {
  const auto d = azimuth_descriptor(instance(0, 0));
  ASSERT_EQ(d.values.size(), kDescriptorBins * kDescriptorShells);
  for (std::size_t s = 0; s < d.shells; ++s) {
    double sum = 0;
    for (std::size_t b = 0; b < d.bins; ++b) sum += d.at(s, b);
    EXPECT_TRUE(sum == 0.0 || std::abs(sum - 1.0) < 1e-12);
  }
  EXPECT_THROW(azimuth_descriptor(PointCloud{}), std::invalid_argument);
  EXPECT_THROW(azimuth_descriptor(instance(0, 0), 30), std::invalid_argument);
}

TEST(Descriptor, ShiftMovesColumns) {
  AzimuthDescriptor d{4, 1, {0.1, 0.2, 0.3, 0.4}};
  const auto s = shift_descriptor(d, 1);
  EXPECT_EQ(s.values, (std::vector<double>{0.4, 0.1, 0.2, 0.3}));
  EXPECT_EQ(shift_descriptor(d, -3), s);
  EXPECT_DOUBLE_EQ(shifted_residual(d, s, 1), 0.0);
}

TEST(Descriptor, RotatingTheCloudShiftsTheDescriptor) {
  const auto c = instance(0, 0);
  const auto turned = voxel::rotate_points(c, 2.0 * (2.0 * std::numbers::pi / double(kDescriptorBins)));
  const auto a = azimuth_descriptor(c), b = azimuth_descriptor(turned);
  // Points near sector edges may fall on either side, so compare loosely.
  EXPECT_LT(shifted_residual(a, b, 2), 0.05 * shifted_residual(a, b, 0));
}

TEST(AlignPair, RecoversSectorShift) {
  AzimuthDescriptor a{8, 1, {1, 0, 0, 0, 0, 0, 0, 0}};
  const auto b = shift_descriptor(a, 3);
  const auto r = align_pair(a, b, 360.0);
  EXPECT_EQ(r.steps, 3u);
  EXPECT_DOUBLE_EQ(r.shift_deg, 135.0);
  EXPECT_DOUBLE_EQ(r.error, 0.0);
  // Within a 180 degree period only shifts 0..3 are searched.
  const auto h = align_pair(a, shift_descriptor(a, 5), 180.0);
  EXPECT_LT(h.steps, 4u);
  EXPECT_THROW(align_pair(a, b, 100.0), std::invalid_argument);
  AzimuthDescriptor other{4, 1, {1, 0, 0, 0}};
  EXPECT_THROW(align_pair(a, other, 360.0), std::invalid_argument);
}

TEST(AlignPair, TiesPreferSmallestShift) {
  AzimuthDescriptor a{8, 1, {1, 0, 1, 0, 1, 0, 1, 0}};
  const auto r = align_pair(a, shift_descriptor(a, 2), 360.0);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_NEAR(alignment_contrast(a, shift_descriptor(a, 2), 360.0), 1.0, 1e-9);
  AzimuthDescriptor u{8, 1, {1, 0, 0, 0, 0, 0, 0, 0}};
  EXPECT_LT(alignment_contrast(u, shift_descriptor(u, 2), 360.0), 1e-6);
}

TEST(Levels, LargestPassingPeriod) {
  EXPECT_EQ(assign_orientation_levels(0.1, 0.1, 0.1, 0.5), 12u);
  EXPECT_EQ(assign_orientation_levels(0.9, 0.1, 0.1, 0.5), 6u);
  EXPECT_EQ(assign_orientation_levels(0.9, 0.9, 0.1, 0.5), 3u);
  EXPECT_EQ(assign_orientation_levels(0.9, 0.9, 0.9, 0.5), 1u);
}

TEST(Reference, PrunesOutliersButKeepsFloor) {
  std::vector<AzimuthDescriptor> objs;
  for (int i = 0; i < 12; ++i) objs.push_back(azimuth_descriptor(instance(0, 30.0 * i, 10 + i)));
  objs.push_back(azimuth_descriptor(instance(3, 0, 99)));  // a cylinder among brackets
  ReferenceOptions opts;
  opts.initial_size = 13;
  opts.floor_size = 4;
  opts.prune_fraction = 0.2;
  const auto ref = build_reference_set(objs, 360.0, opts);
  EXPECT_GE(ref.members.size(), 4u);
  EXPECT_EQ(ref.members.size() + ref.pruned.size(), 13u);
  EXPECT_EQ(std::count(ref.members.begin(), ref.members.end(), 12u), 0);
  EXPECT_THROW(build_reference_set(std::span(objs).first(1), 360.0), std::invalid_argument);
}

TEST(AutoAlign, CanonicalizesAsymmetricShape) {
  std::vector<PointCloud> clouds;
  std::vector<double> az;
  for (int i = 0; i < 16; ++i) {
    az.push_back(22.5 * i);
    clouds.push_back(instance(0, az.back(), 200 + i));
  }
  ReferenceOptions opts;
  opts.floor_size = 8;
  const auto r = auto_align(clouds, opts);
  EXPECT_EQ(r.result.levels, 12u);
  // Applied azimuth plus canonicalizing rotation is the same for every object.
  std::set<long> canon;
  for (std::size_t i = 0; i < clouds.size(); ++i)
    canon.insert(std::lround(std::fmod(az[i] + r.result.rotation_deg[i], 360.0) / 11.25) % 32);
  EXPECT_EQ(canon.size(), 1u);
}

TEST(AutoAlign, NeutralShapeGetsOneLevel) {
  std::vector<PointCloud> clouds;
  for (int i = 0; i < 10; ++i) clouds.push_back(instance(3, 33.0 * i, 300 + i));
  ReferenceOptions opts;
  opts.floor_size = 5;
  const auto r = auto_align(clouds, opts);
  EXPECT_EQ(r.result.levels, 1u);
  for (double d : r.result.rotation_deg) EXPECT_EQ(d, 0.0);
}

TEST(Manifest, RoundTripAndApply) {
  const auto dir = fs::temp_directory_path() / "orion_unit_align";
  fs::create_directories(dir);
  auto ds = data::from_instances(synth::synth_instances(2, 2, synth::Noise::none(), 4, 300), synth::synth_scheme(2));
  std::vector<ManifestRow> rows;
  for (const auto& s : ds.samples) {
    const auto& name = ds.scheme.classes()[s.class_id].name;
    rows.push_back({s.id, name, s.class_id == 0 ? 90.0 : 0.0, 0.25, s.class_id == 0 ? std::size_t(6) : 1});
  }
  write_manifest(dir / "m.csv", rows);
  const auto back = read_manifest(dir / "m.csv");
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(back[0].id, rows[0].id);
  EXPECT_EQ(back[0].rotation_deg, 90.0);
  EXPECT_EQ(back[0].levels, 6u);
  const auto applied = apply_alignment(ds, back);
  EXPECT_EQ(applied.scheme.classes()[0].bins, 6u);
  EXPECT_EQ(applied.scheme.classes()[1].bins, 1u);
  for (const auto& s : applied.samples)
    if (s.class_id == 0) EXPECT_DOUBLE_EQ(*s.azimuth_deg, 270.0);
  rows.pop_back();
  EXPECT_THROW(apply_alignment(ds, rows), std::invalid_argument);
}

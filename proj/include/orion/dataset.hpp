#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "orion/geometry.hpp"
#include "orion/orientation.hpp"
#include "orion/synth.hpp"
#include "orion/voxel.hpp"

namespace orion::data {

/// One labeled object kept as its source cloud so rotation copies can be
/// re-voxelized. Clouds with `voxel_size` set are already expressed in a fixed
/// frame centered at the origin (detection crops) and skip scale normalization.
struct Sample {
  std::string id;
  PointCloud cloud;
  std::size_t class_id = 0;
  std::optional<double> azimuth_deg;
  std::optional<double> voxel_size;
};

struct Dataset {
  model::OrientationScheme scheme;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  /// Throws std::invalid_argument on class ids outside the scheme or a missing
  /// azimuth for a multi-bin class.
  void validate() const;
};

/// Voxelizes the sample after an extra rotation of `extra_yaw_deg` (about the
/// centroid for free clouds, about the origin for fixed-frame ones).
voxel::OccupancyGrid sample_grid(const Sample& s, const voxel::GridSpec& spec, double extra_yaw_deg = 0.0);

Dataset from_instances(const std::vector<synth::Instance>& instances, model::OrientationScheme scheme,
                       const std::string& id_prefix = "obj");

/// Directory layout: classes.csv (name,period_deg,bins), manifest.csv
/// (id,file,class_id,azimuth_deg,voxel_size) and one .xyz file per sample.
/// Empty azimuth/voxel_size fields mean "none".
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

void write_scheme_csv(const std::filesystem::path& path, const model::OrientationScheme& scheme);
model::OrientationScheme read_scheme_csv(const std::filesystem::path& path);

}  // namespace orion::data

#include "orion/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "orion/io.hpp"

namespace orion::data {

namespace fs = std::filesystem;

void Dataset::validate() const {
  for (const auto& s : samples) {
    if (s.class_id >= scheme.num_classes())
      throw std::invalid_argument("sample '" + s.id + "' has class " + std::to_string(s.class_id) +
                                  " outside the " + std::to_string(scheme.num_classes()) + "-class scheme");
    if (scheme.bins(s.class_id) > 1 && !s.azimuth_deg)
      throw std::invalid_argument("sample '" + s.id + "' lacks an azimuth but class '" +
                                  scheme.at(s.class_id).name + "' has several orientation bins");
  }
}

voxel::OccupancyGrid sample_grid(const Sample& s, const voxel::GridSpec& spec, double extra_yaw_deg) {
  const double yaw = extra_yaw_deg * std::numbers::pi / 180.0;
  if (s.voxel_size) {
    PointCloud c = s.cloud;
    if (yaw != 0.0)
      for (auto& p : c.points) p = rotate_z(p, yaw);
    return voxel::voxelize_fixed(c, spec, {}, *s.voxel_size);
  }
  if (yaw == 0.0) return voxel::voxelize(s.cloud, spec);
  return voxel::voxelize(voxel::rotate_points(s.cloud, yaw), spec);
}

Dataset from_instances(const std::vector<synth::Instance>& instances, model::OrientationScheme scheme,
                       const std::string& id_prefix) {
  Dataset ds;
  ds.scheme = std::move(scheme);
  ds.samples.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Sample s;
    std::ostringstream id;
    id << id_prefix << std::setw(6) << std::setfill('0') << i;
    s.id = id.str();
    s.cloud = instances[i].cloud;
    s.class_id = instances[i].class_id;
    s.azimuth_deg = instances[i].azimuth_deg;
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void write_scheme_csv(const fs::path& path, const model::OrientationScheme& scheme) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "name,period_deg,bins\n";
  for (const auto& c : scheme.classes())
    out << c.name << ',' << model::period_degrees(c.period) << ',' << c.bins << '\n';
  if (!out) throw io::IoError(path.string() + ": write failed");
}

model::OrientationScheme read_scheme_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io::IoError(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  std::vector<model::ClassOrientation> classes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv(line);
    if (f.size() != 3) throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    try {
      model::ClassOrientation c;
      c.name = f[0];
      c.period = model::period_from_degrees(std::stoi(f[1]));
      c.bins = std::stoul(f[2]);
      classes.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return model::OrientationScheme(std::move(classes));
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "clouds");
  write_scheme_csv(dir / "classes.csv", ds.scheme);
  std::ofstream man(dir / "manifest.csv");
  if (!man) throw io::IoError((dir / "manifest.csv").string() + ": cannot open for writing");
  man << "id,file,class_id,azimuth_deg,voxel_size\n" << std::setprecision(17);
  for (const auto& s : ds.samples) {
    const std::string file = "clouds/" + s.id + ".xyz";
    io::write_xyz(dir / file, s.cloud);
    man << s.id << ',' << file << ',' << s.class_id << ',';
    if (s.azimuth_deg) man << *s.azimuth_deg;
    man << ',';
    if (s.voxel_size) man << *s.voxel_size;
    man << '\n';
  }
  if (!man) throw io::IoError((dir / "manifest.csv").string() + ": write failed");
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.scheme = read_scheme_csv(dir / "classes.csv");
  const fs::path mpath = dir / "manifest.csv";
  std::ifstream in(mpath);
  if (!in) throw io::IoError(mpath.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv(line);
    const std::string where = mpath.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw io::IoError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    Sample s;
    s.id = f[0];
    try {
      s.class_id = std::stoul(f[2]);
      if (!f[3].empty()) s.azimuth_deg = std::stod(f[3]);
      if (!f[4].empty()) s.voxel_size = std::stod(f[4]);
    } catch (const std::exception&) {
      throw io::IoError(where + ": malformed numeric field");
    }
    s.cloud = io::read_xyz(dir / f[1]);
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace orion::data

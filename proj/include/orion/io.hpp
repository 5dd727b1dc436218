#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "orion/geometry.hpp"
#include "orion/voxel.hpp"

namespace orion::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian byte encoding shared by the binary formats.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> data);
  void tag(std::string_view magic);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  /// u32 length prefix followed by the raw characters.
  void str(std::string_view s);

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  void write_to(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data, std::string source = "<memory>");
  static ByteReader from_file(const std::filesystem::path& path);

  /// Throws IoError unless the next bytes equal `magic`.
  void expect_tag(std::string_view magic);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::span<const std::uint8_t> bytes(std::size_t n);
  bool at_end() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// OFF mesh (ModelNet). Accepts '#' comments, the ModelNet "OFFnv nf ne" header
/// quirk, and fan-triangulates polygons with more than three vertices.
TriMesh read_off(std::istream& in);
TriMesh read_off(const std::filesystem::path& path);
void write_off(const std::filesystem::path& path, const TriMesh& mesh);

/// ASCII point cloud: one "x y z" triple per line, whitespace separated.
PointCloud read_xyz(std::istream& in);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

/// OCG1: "OCG1", 3 x u32 extents, f32 voxel size, 3 x f64 origin, then one
/// {0,1} byte per voxel in x-fastest order.
std::vector<std::uint8_t> encode_ocg(const voxel::OccupancyGrid& grid);
voxel::OccupancyGrid decode_ocg(ByteReader& in);
void write_ocg(const std::filesystem::path& path, const voxel::OccupancyGrid& grid);
voxel::OccupancyGrid read_ocg(const std::filesystem::path& path);

/// Real-valued 3D map (activation snapshots). Serialized as OCF1: the OCG1
/// header followed by little-endian f32 values.
struct FloatGrid {
  std::array<std::uint32_t, 3> extent{};
  float voxel_size = 1.0f;
  Vec3 origin;
  std::vector<float> values;

  friend bool operator==(const FloatGrid&, const FloatGrid&) = default;
};

std::vector<std::uint8_t> encode_ocf(const FloatGrid& grid);
FloatGrid decode_ocf(ByteReader& in);
void write_ocf(const std::filesystem::path& path, const FloatGrid& grid);
FloatGrid read_ocf(const std::filesystem::path& path);

/// Splits a CSV line on commas without quoting support.
std::vector<std::string> split_csv(std::string_view line);
std::string trim(std::string_view s);

}  // namespace orion::io

#include "orion/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace orion::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

// Next line that is neither blank nor a '#' comment, with trailing comments stripped.
bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

void ByteWriter::bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

void ByteWriter::tag(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }

void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }

void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }

void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  tag(s);
}

void ByteWriter::write_to(const std::filesystem::path& path) const {
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf_.data()), std::streamsize(buf_.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ByteReader::ByteReader(std::vector<std::uint8_t> data, std::string source)
    : data_(std::move(data)), source_(std::move(source)) {}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  return ByteReader(read_bytes(path), path.string());
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw IoError(source_ + ": unexpected end of data");
}

void ByteReader::expect_tag(std::string_view magic) {
  need(magic.size());
  if (!std::equal(magic.begin(), magic.end(), data_.begin() + long(pos_)))
    throw IoError(source_ + ": bad magic, expected '" + std::string(magic) + "'");
  pos_ += magic.size();
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u32();
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  std::span<const std::uint8_t> out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

// ---------------------------------------------------------------------------
// OFF

TriMesh read_off(std::istream& in) {
  std::string line;
  if (!next_content_line(in, line)) throw IoError("OFF: empty input");
  std::istringstream header(line);
  std::string token;
  header >> token;
  if (token.rfind("OFF", 0) != 0) throw IoError("OFF: missing 'OFF' header token");
  std::string counts_text = token.substr(3);
  std::string rest;
  std::getline(header, rest);
  counts_text += " " + rest;
  if (counts_text.find_first_not_of(" \t\r") == std::string::npos) {
    if (!next_content_line(in, line)) throw IoError("OFF: missing counts line");
    counts_text = line;
  }
  std::istringstream counts(counts_text);
  std::size_t nv = 0, nf = 0;
  if (!(counts >> nv >> nf)) throw IoError("OFF: malformed counts line");

  TriMesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!next_content_line(in, line)) throw IoError("OFF: expected " + std::to_string(nv) + " vertices");
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x >> v.y >> v.z)) throw IoError("OFF: malformed vertex line " + std::to_string(i));
    mesh.vertices.push_back(v);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    if (!next_content_line(in, line)) throw IoError("OFF: expected " + std::to_string(nf) + " faces");
    std::istringstream ls(line);
    std::size_t n = 0;
    if (!(ls >> n) || n < 3) throw IoError("OFF: malformed face line " + std::to_string(i));
    std::vector<std::uint32_t> idx(n);
    for (auto& v : idx)
      if (!(ls >> v)) throw IoError("OFF: malformed face line " + std::to_string(i));
    for (std::size_t k = 1; k + 1 < n; ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("OFF: ") + e.what());
  }
  return mesh;
}

TriMesh read_off(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_off(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_off(const std::filesystem::path& path, const TriMesh& mesh) {
  auto out = open_out(path);
  out.precision(17);
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  for (const auto& v : mesh.vertices) out << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

// ---------------------------------------------------------------------------
// XYZ

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z)) throw IoError("xyz: malformed line " + std::to_string(lineno));
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw IoError("xyz: non-finite coordinate on line " + std::to_string(lineno));
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_xyz(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  out.precision(17);
  for (const auto& p : cloud.points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_xyz(out, cloud);
}

// ---------------------------------------------------------------------------
// OCG1 / OCF1

namespace {

void write_grid_header(ByteWriter& w, std::string_view magic, const std::array<std::uint32_t, 3>& extent,
                       float voxel_size, Vec3 origin) {
  w.tag(magic);
  for (auto e : extent) w.u32(e);
  w.f32(voxel_size);
  w.f64(origin.x);
  w.f64(origin.y);
  w.f64(origin.z);
}

}  // namespace

std::vector<std::uint8_t> encode_ocg(const voxel::OccupancyGrid& grid) {
  ByteWriter w;
  const auto n = static_cast<std::uint32_t>(grid.spec.total);
  write_grid_header(w, "OCG1", {n, n, n}, static_cast<float>(grid.voxel_size), grid.origin);
  w.bytes(grid.values);
  return w.buffer();
}

voxel::OccupancyGrid decode_ocg(ByteReader& in) {
  in.expect_tag("OCG1");
  const std::uint32_t ex = in.u32(), ey = in.u32(), ez = in.u32();
  if (ex != ey || ey != ez || ex == 0) throw IoError("OCG1: only non-empty cubic grids are supported");
  voxel::OccupancyGrid grid;
  grid.spec.total = ex;
  grid.spec.padding = ex > 4 ? 2 : 0;
  grid.spec.object = ex - 2 * grid.spec.padding;
  grid.voxel_size = in.f32();
  grid.origin.x = in.f64();
  grid.origin.y = in.f64();
  grid.origin.z = in.f64();
  auto payload = in.bytes(std::size_t(ex) * ey * ez);
  grid.values.assign(payload.begin(), payload.end());
  for (auto v : grid.values)
    if (v > 1) throw IoError("OCG1: occupancy values must be 0 or 1");
  return grid;
}

void write_ocg(const std::filesystem::path& path, const voxel::OccupancyGrid& grid) {
  ByteWriter w;
  w.bytes(encode_ocg(grid));
  w.write_to(path);
}

voxel::OccupancyGrid read_ocg(const std::filesystem::path& path) {
  auto in = ByteReader::from_file(path);
  return decode_ocg(in);
}

std::vector<std::uint8_t> encode_ocf(const FloatGrid& grid) {
  const std::size_t n = std::size_t(grid.extent[0]) * grid.extent[1] * grid.extent[2];
  if (grid.values.size() != n) throw std::invalid_argument("OCF1: value count does not match extents");
  ByteWriter w;
  write_grid_header(w, "OCF1", grid.extent, grid.voxel_size, grid.origin);
  for (float v : grid.values) w.f32(v);
  return w.buffer();
}

FloatGrid decode_ocf(ByteReader& in) {
  in.expect_tag("OCF1");
  FloatGrid g;
  for (auto& e : g.extent) e = in.u32();
  g.voxel_size = in.f32();
  g.origin.x = in.f64();
  g.origin.y = in.f64();
  g.origin.z = in.f64();
  const std::size_t n = std::size_t(g.extent[0]) * g.extent[1] * g.extent[2];
  g.values.resize(n);
  for (auto& v : g.values) v = in.f32();
  return g;
}

void write_ocf(const std::filesystem::path& path, const FloatGrid& grid) {
  ByteWriter w;
  w.bytes(encode_ocf(grid));
  w.write_to(path);
}

FloatGrid read_ocf(const std::filesystem::path& path) {
  auto in = ByteReader::from_file(path);
  return decode_ocf(in);
}

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace orion::io

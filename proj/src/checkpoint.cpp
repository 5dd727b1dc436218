#include "orion/checkpoint.hpp"

#include "orion/io.hpp"

#include <stdexcept>
#include <utility>

namespace orion::model {

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(Network<T>& net) {
  const NetworkSpec& spec = net.spec();
  io::ByteWriter w;
  w.tag("ORN1");
  w.u32(kCheckpointVersion);
  w.str(to_string(spec.arch));
  w.u32(static_cast<std::uint32_t>(spec.grid.total));
  w.u32(static_cast<std::uint32_t>(spec.grid.object));
  w.u32(static_cast<std::uint32_t>(spec.grid.padding));
  w.u32(static_cast<std::uint32_t>(spec.n_classes));
  w.u32(spec.orientation_head ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(spec.scheme.num_classes()));
  for (const auto& c : spec.scheme.classes()) {
    w.str(c.name);
    w.u32(static_cast<std::uint32_t>(c.bins));
    w.u32(static_cast<std::uint32_t>(period_degrees(c.period)));
  }
  auto arrays = net.parameters();
  for (auto& b : net.buffers()) arrays.push_back(b);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (auto& a : arrays) {
    w.str(a.name);
    const auto& shape = a.tensor->shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) w.u32(static_cast<std::uint32_t>(e));
    for (T v : std::as_const(*a.tensor).data()) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_tag("ORN1");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw io::IoError(source + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.spec.arch = architecture_from_string(r.str());
  ck.spec.grid.total = r.u32();
  ck.spec.grid.object = r.u32();
  ck.spec.grid.padding = r.u32();
  ck.spec.n_classes = r.u32();
  ck.spec.orientation_head = r.u32() != 0;
  const auto n_scheme = r.u32();
  std::vector<ClassOrientation> classes;
  for (std::uint32_t i = 0; i < n_scheme; ++i) {
    ClassOrientation c;
    c.name = r.str();
    c.bins = r.u32();
    c.period = period_from_degrees(static_cast<int>(r.u32()));
    classes.push_back(std::move(c));
  }
  ck.spec.scheme = OrientationScheme(std::move(classes));
  ck.spec.trunk = trunk_layers(ck.spec.arch);
  const auto n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = r.str();
    Checkpoint::Array a;
    const auto rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.u32());
    a.values.resize(nn::num_elements(a.shape));
    for (auto& v : a.values) v = r.f32();
    ck.arrays.emplace(std::move(name), std::move(a));
  }
  if (!r.at_end()) throw io::IoError(source + ": trailing bytes after checkpoint payload");
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& net) {
  io::ByteWriter w;
  w.bytes(encode_checkpoint(net));
  w.write_to(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_bytes(path), path.string());
}

template <typename T>
std::vector<std::string> load_parameters(Network<T>& net, const Checkpoint& ckpt, bool allow_missing) {
  std::vector<std::string> missing;
  auto targets = net.parameters();
  for (auto& b : net.buffers()) targets.push_back(b);
  for (auto& t : targets) {
    auto it = ckpt.arrays.find(t.name);
    if (it == ckpt.arrays.end()) {
      if (!allow_missing) throw std::invalid_argument("checkpoint lacks parameter '" + t.name + "'");
      missing.push_back(t.name);
      continue;
    }
    if (it->second.shape != t.tensor->shape())
      throw std::invalid_argument("checkpoint parameter '" + t.name + "' has shape " + nn::to_string(it->second.shape) +
                                  ", network expects " + nn::to_string(t.tensor->shape()));
    auto dst = t.tensor->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
  }
  return missing;
}

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<T> net(ckpt.spec);
  load_parameters(net, ckpt, false);
  return net;
}

#define ORION_INSTANTIATE(T)                                                                          \
  template std::vector<std::uint8_t> encode_checkpoint<T>(Network<T>&);                               \
  template void save_checkpoint<T>(const std::filesystem::path&, Network<T>&);                        \
  template std::vector<std::string> load_parameters<T>(Network<T>&, const Checkpoint&, bool);         \
  template Network<T> network_from_checkpoint<T>(const Checkpoint&);

ORION_INSTANTIATE(float)
ORION_INSTANTIATE(double)
#undef ORION_INSTANTIATE

}  // namespace orion::model

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "orion/network.hpp"

namespace orion::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Decoded checkpoint: network layout plus named float arrays.
struct Checkpoint {
  NetworkSpec spec;
  struct Array {
    nn::Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, Array> arrays;
};

/// "ORN1", u32 version, architecture tag, grid (total, object, padding),
/// class count, orientation-head flag, scheme table (name, K, period degrees),
/// then named arrays: name, u32 rank, u32 extents, f32 values. All little endian.
template <typename T>
std::vector<std::uint8_t> encode_checkpoint(Network<T>& net);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& source = "<memory>");

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& net);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every array whose name and shape match. Throws if a parameter of the
/// network is absent and `allow_missing` is false, or if a shape differs.
/// Returns the names that were not found.
template <typename T>
std::vector<std::string> load_parameters(Network<T>& net, const Checkpoint& ckpt, bool allow_missing = false);

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt);

template <typename T>
Network<T> load_network(const std::filesystem::path& path) {
  return network_from_checkpoint<T>(read_checkpoint(path));
}

}  // namespace orion::model

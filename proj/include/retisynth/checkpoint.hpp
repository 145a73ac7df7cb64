#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "retisynth/network.hpp"

namespace retisynth {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  bool is_buffer = false;
  Shape shape;
  std::vector<float> values;
};

struct StoredNetwork {
  std::string name;
  NetSpec spec;
  std::vector<StoredTensor> tensors;
};

struct CheckpointCounters {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  std::vector<StoredNetwork> networks;
  CheckpointCounters counters;

  const StoredNetwork& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

struct NamedNetwork {
  std::string name;
  Network<float>* net;
};

/// "SYNR", u32 version, networks (spec and f32 LE tensors), counters, then a
/// crc32 of everything before it.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedNetwork>& nets, const CheckpointCounters& c);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::vector<NamedNetwork>& nets, const CheckpointCounters& c,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `net` after checking kind, spec and every
/// tensor name and shape; on mismatch throws LoadError and leaves `net`
/// unchanged.
void restore(Network<float>& net, const StoredNetwork& stored);
Network<float> instantiate(const StoredNetwork& stored);

}  // namespace retisynth

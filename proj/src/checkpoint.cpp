#include "retisynth/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>

#include "retisynth/builders.hpp"
#include "retisynth/image_io.hpp"

namespace retisynth {

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'N', 'R'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b, std::size_t end) : bytes(b), end_(end) {}

  void need(std::size_t n) {
    if (end_ - pos < n) throw LoadError("checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

 private:
  std::size_t end_;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_tensor(Writer& w, const std::string& name, bool is_buffer, const Shape& shape, std::span<const float> v) {
  w.str(name);
  w.u8(kDtypeF32);
  w.u8(is_buffer ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u64(d);
  for (float x : v) w.f32(x);
}

}  // namespace

const StoredNetwork& Checkpoint::get(const std::string& name) const {
  for (const auto& n : networks)
    if (n.name == name) return n;
  throw LoadError("checkpoint has no network '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(networks.begin(), networks.end(), [&](const auto& n) { return n.name == name; });
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedNetwork>& nets, const CheckpointCounters& c) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(nets.size()));
  for (const auto& [name, net] : nets) {
    if (!net) throw ContractError("encode_checkpoint: null network '" + name + "'");
    w.str(name);
    w.str(net->spec().kind);
    w.u32(static_cast<std::uint32_t>(net->spec().args.size()));
    for (const auto& [k, v] : net->spec().args) {
      w.str(k);
      w.str(v);
    }
    const auto params = net->parameters();
    const auto bufs = net->buffers();
    w.u32(static_cast<std::uint32_t>(params.size() + bufs.size()));
    for (const auto& p : params) put_tensor(w, p.name, false, p.tensor.shape(), p.tensor.data());
    for (const auto& b : bufs) put_tensor(w, b.name, true, {b.values->size()}, *b.values);
  }
  w.u64(c.step);
  w.u64(c.epoch);
  w.u64(c.seed);
  w.u32(crc_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw LoadError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes, bytes.size());
  tail.pos = body;
  const auto stored_crc = tail.u32();

  Reader r(bytes, body);
  r.pos = 4;
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  if (crc_of(bytes.data(), body) != stored_crc) throw LoadError("checkpoint checksum mismatch (truncated or corrupt)");

  Checkpoint ck;
  const auto n_nets = r.u32();
  for (std::uint32_t i = 0; i < n_nets; ++i) {
    StoredNetwork sn;
    sn.name = r.str();
    sn.spec.kind = r.str();
    const auto n_args = r.u32();
    for (std::uint32_t a = 0; a < n_args; ++a) {
      auto k = r.str();
      sn.spec.args[k] = r.str();
    }
    const auto n_t = r.u32();
    for (std::uint32_t t = 0; t < n_t; ++t) {
      StoredTensor st;
      st.name = r.str();
      if (const auto dtype = r.u8(); dtype != kDtypeF32)
        throw LoadError("checkpoint tensor '" + st.name + "' has unknown dtype " + std::to_string(dtype));
      st.is_buffer = r.u8() != 0;
      const auto rank = r.u32();
      if (rank > 8) throw LoadError("checkpoint tensor '" + st.name + "' has rank " + std::to_string(rank));
      for (std::uint32_t d = 0; d < rank; ++d) st.shape.push_back(static_cast<std::size_t>(r.u64()));
      const auto n = shape_numel(st.shape);
      r.need(n * 4);
      st.values.resize(n);
      for (auto& v : st.values) v = r.f32();
      sn.tensors.push_back(std::move(st));
    }
    ck.networks.push_back(std::move(sn));
  }
  ck.counters.step = r.u64();
  ck.counters.epoch = r.u64();
  ck.counters.seed = r.u64();
  if (r.pos != body) throw LoadError("checkpoint has " + std::to_string(body - r.pos) + " unexpected trailing bytes");
  return ck;
}

void save_checkpoint(const std::vector<NamedNetwork>& nets, const CheckpointCounters& c,
                     const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(nets, c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void restore(Network<float>& net, const StoredNetwork& stored) {
  if (net.spec().kind != stored.spec.kind)
    throw LoadError("checkpoint network '" + stored.name + "' is a " + stored.spec.kind + ", target is a " +
                    net.spec().kind);
  if (net.spec().args != stored.spec.args)
    throw LoadError("checkpoint network '" + stored.name + "' was built with different arguments");
  auto params = net.parameters();
  auto bufs = net.buffers();
  if (params.size() + bufs.size() != stored.tensors.size())
    throw LoadError("checkpoint network '" + stored.name + "' tensor count mismatch");
  for (std::size_t i = 0; i < stored.tensors.size(); ++i) {
    const auto& st = stored.tensors[i];
    const bool is_buf = i >= params.size();
    const std::string& name = is_buf ? bufs[i - params.size()].name : params[i].name;
    const Shape shape = is_buf ? Shape{bufs[i - params.size()].values->size()} : params[i].tensor.shape();
    if (st.is_buffer != is_buf || st.name != name || st.shape != shape)
      throw LoadError("checkpoint tensor '" + st.name + "' " + shape_str(st.shape) + " does not match '" + name +
                      "' " + shape_str(shape));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(stored.tensors[i].values.begin(), stored.tensors[i].values.end(), dst.begin());
  }
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    const auto& src = stored.tensors[params.size() + i].values;
    std::copy(src.begin(), src.end(), bufs[i].values->begin());
  }
}

Network<float> instantiate(const StoredNetwork& stored) {
  Network<float> net = [&] {
    try {
      return build_network<float>(stored.spec, 0);
    } catch (const Error& e) {
      throw LoadError("checkpoint network '" + stored.name + "': " + e.what());
    }
  }();
  restore(net, stored);
  return net;
}

}  // namespace retisynth

#include "retisynth/buffer.hpp"

#include <new>
#include <unordered_map>

namespace retisynth {

namespace {

constexpr std::align_val_t kAlign{64};
constexpr std::size_t kPoolCap = std::size_t{1} << 29;

struct Pool {
  std::unordered_map<std::size_t, std::vector<void*>> free;
  std::size_t bytes = 0;
  ~Pool();
};

thread_local bool pool_alive = false;

Pool& pool() {
  thread_local Pool p;
  pool_alive = true;
  return p;
}

Pool::~Pool() {
  pool_alive = false;
  for (auto& [size, list] : free)
    for (void* ptr : list) ::operator delete(ptr, kAlign);
}

}  // namespace

namespace detail {

void* buffer_acquire(std::size_t bytes) {
  if (bytes == 0) bytes = 1;
  Pool& p = pool();
  const auto it = p.free.find(bytes);
  if (it != p.free.end() && !it->second.empty()) {
    void* ptr = it->second.back();
    it->second.pop_back();
    p.bytes -= bytes;
    return ptr;
  }
  return ::operator new(bytes, kAlign);
}

void buffer_release(void* ptr, std::size_t bytes) noexcept {
  if (!ptr) return;
  if (bytes == 0) bytes = 1;
  if (pool_alive) {
    Pool& p = pool();
    if (p.bytes + bytes <= kPoolCap) {
      try {
        p.free[bytes].push_back(ptr);
        p.bytes += bytes;
        return;
      } catch (...) {
      }
    }
  }
  ::operator delete(ptr, kAlign);
}

}  // namespace detail

std::size_t buffer_pool_bytes() { return pool_alive ? pool().bytes : 0; }

}  // namespace retisynth

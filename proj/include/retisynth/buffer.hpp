#pragma once

#include <cstddef>
#include <vector>

namespace retisynth {

namespace detail {

// 64-byte aligned blocks, recycled per thread by exact size.
void* buffer_acquire(std::size_t bytes);
void buffer_release(void* p, std::size_t bytes) noexcept;

template <typename T>
struct PoolAllocator {
  using value_type = T;
  PoolAllocator() = default;
  template <typename U>
  PoolAllocator(const PoolAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(buffer_acquire(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { buffer_release(p, n * sizeof(T)); }
  template <typename U>
  bool operator==(const PoolAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace detail

/// Storage for tensor values, gradients and op scratch space.
template <typename T>
using Buffer = std::vector<T, detail::PoolAllocator<T>>;

/// Bytes currently parked in this thread's pool.
std::size_t buffer_pool_bytes();

}  // namespace retisynth

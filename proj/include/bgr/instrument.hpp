#pragma once

// Test and benchmark hooks: an allocation tracker observing every tensor buffer
// and a flop counter fed by the dense kernels. Both are thread-local and cost a
// single null check when inactive.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>

namespace bgr {

struct AllocationStats {
  std::int64_t live_elems = 0;     // net elements allocated since the scope began
  std::int64_t peak_elems = 0;     // high-water mark of live_elems
  std::size_t largest_elems = 0;   // biggest single buffer
  std::size_t allocations = 0;
};

class AllocationScope;

namespace detail {
inline thread_local AllocationScope* active_allocation_scope = nullptr;
}

/// Records tensor-buffer traffic on the current thread while alive. Scopes
/// nest; only the innermost one observes allocations.
class AllocationScope {
 public:
  AllocationScope() : previous_(detail::active_allocation_scope) {
    detail::active_allocation_scope = this;
  }
  ~AllocationScope() { detail::active_allocation_scope = previous_; }
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  const AllocationStats& stats() const { return stats_; }

  void on_allocate(std::size_t n) {
    stats_.live_elems += static_cast<std::int64_t>(n);
    stats_.peak_elems = std::max(stats_.peak_elems, stats_.live_elems);
    stats_.largest_elems = std::max(stats_.largest_elems, n);
    ++stats_.allocations;
  }
  void on_deallocate(std::size_t n) { stats_.live_elems -= static_cast<std::int64_t>(n); }

 private:
  AllocationScope* previous_;
  AllocationStats stats_;
};

/// std::allocator look-alike that reports element counts to the active scope.
template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    if (auto* s = detail::active_allocation_scope) s->on_allocate(n);
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    if (auto* s = detail::active_allocation_scope) s->on_deallocate(n);
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

class FlopCounter;

namespace detail {
inline thread_local FlopCounter* active_flop_counter = nullptr;
}

/// Counts individual multiplies and adds executed by the kernels on this
/// thread while alive. A fused multiply-add counts as two.
class FlopCounter {
 public:
  FlopCounter() : previous_(detail::active_flop_counter) { detail::active_flop_counter = this; }
  ~FlopCounter() { detail::active_flop_counter = previous_; }
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t count() const { return count_; }
  void add(std::uint64_t n) { count_ += n; }

 private:
  FlopCounter* previous_;
  std::uint64_t count_ = 0;
};

namespace detail {
inline void count_flops(std::uint64_t n) {
  if (auto* c = active_flop_counter) c->add(n);
}
}  // namespace detail

}  // namespace bgr

#pragma once

#include <cstddef>

// Allocation audit hooks. The library only marks regions to exclude (batch
// generation); counting happens when a test binary links an allocator
// interposer that forwards to on_alloc / on_free. Without one, every call
// here is a cheap no-op.
namespace gfm::audit {

struct Stats {
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
  std::size_t allocations = 0;
  std::size_t largest_allocation = 0;
  std::size_t untracked = 0;  // allocations dropped because the table was full
};

void begin() noexcept;
Stats end() noexcept;
Stats snapshot() noexcept;
bool active() noexcept;

// Allocations made while an exclusion is alive on the calling thread are not
// counted, and neither are their frees.
class ScopedExclusion {
 public:
  ScopedExclusion() noexcept;
  ~ScopedExclusion();
  ScopedExclusion(const ScopedExclusion&) = delete;
  ScopedExclusion& operator=(const ScopedExclusion&) = delete;
};

void on_alloc(void* ptr, std::size_t bytes) noexcept;
void on_free(void* ptr) noexcept;

}  // namespace gfm::audit

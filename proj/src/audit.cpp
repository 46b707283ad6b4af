#include "gfm/audit.hpp"

#include <atomic>
#include <cstdint>

namespace gfm::audit {
namespace {

// Open-addressing table of live audited blocks. Static storage only: the
// hooks run inside malloc and must not allocate.
constexpr std::size_t kSlots = std::size_t{1} << 16;

struct Slot {
  void* ptr;
  std::size_t bytes;
};

Slot g_table[kSlots];
std::atomic_flag g_lock = ATOMIC_FLAG_INIT;
std::atomic<bool> g_active{false};
Stats g_stats;
thread_local int t_exclusion_depth = 0;
thread_local bool t_in_hook = false;

struct Guard {
  Guard() {
    while (g_lock.test_and_set(std::memory_order_acquire)) {
    }
  }
  ~Guard() { g_lock.clear(std::memory_order_release); }
};

std::size_t slot_of(const void* p) {
  auto h = reinterpret_cast<std::uintptr_t>(p);
  h ^= h >> 17;
  h *= 0xED5AD4BBu;
  h ^= h >> 11;
  return static_cast<std::size_t>(h) & (kSlots - 1);
}

void erase_at(std::size_t i) {
  // Backward-shift deletion keeps probe chains intact without tombstones.
  std::size_t hole = i;
  std::size_t j = i;
  while (true) {
    j = (j + 1) & (kSlots - 1);
    if (g_table[j].ptr == nullptr) break;
    const std::size_t home = slot_of(g_table[j].ptr);
    const bool movable = (hole <= j) ? (home <= hole || home > j) : (home <= hole && home > j);
    if (movable) {
      g_table[hole] = g_table[j];
      hole = j;
    }
  }
  g_table[hole] = Slot{nullptr, 0};
}

void clear_table() {
  for (auto& s : g_table) s = Slot{nullptr, 0};
}

}  // namespace

void begin() noexcept {
  Guard guard;
  clear_table();
  g_stats = Stats{};
  g_active.store(true, std::memory_order_release);
}

Stats end() noexcept {
  Guard guard;
  g_active.store(false, std::memory_order_release);
  Stats out = g_stats;
  clear_table();
  return out;
}

Stats snapshot() noexcept {
  Guard guard;
  return g_stats;
}

bool active() noexcept { return g_active.load(std::memory_order_acquire); }

ScopedExclusion::ScopedExclusion() noexcept { ++t_exclusion_depth; }
ScopedExclusion::~ScopedExclusion() { --t_exclusion_depth; }

void on_alloc(void* ptr, std::size_t bytes) noexcept {
  if (ptr == nullptr || !active() || t_exclusion_depth > 0 || t_in_hook) return;
  t_in_hook = true;
  {
    Guard guard;
    std::size_t i = slot_of(ptr);
    std::size_t probes = 0;
    while (g_table[i].ptr != nullptr && probes < kSlots / 2) {
      i = (i + 1) & (kSlots - 1);
      ++probes;
    }
    if (probes >= kSlots / 2) {
      ++g_stats.untracked;
    } else {
      g_table[i] = Slot{ptr, bytes};
      g_stats.live_bytes += bytes;
      ++g_stats.allocations;
      if (g_stats.live_bytes > g_stats.peak_bytes) g_stats.peak_bytes = g_stats.live_bytes;
      if (bytes > g_stats.largest_allocation) g_stats.largest_allocation = bytes;
    }
  }
  t_in_hook = false;
}

void on_free(void* ptr) noexcept {
  if (ptr == nullptr || !active() || t_in_hook) return;
  t_in_hook = true;
  {
    Guard guard;
    std::size_t i = slot_of(ptr);
    for (std::size_t probes = 0; probes < kSlots && g_table[i].ptr != nullptr; ++probes) {
      if (g_table[i].ptr == ptr) {
        g_stats.live_bytes -= g_table[i].bytes;
        erase_at(i);
        break;
      }
      i = (i + 1) & (kSlots - 1);
    }
  }
  t_in_hook = false;
}

}  // namespace gfm::audit

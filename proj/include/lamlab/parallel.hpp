#pragma once

// Small deterministic worker pool. Results must be written to per-index
// slots so the output is independent of scheduling.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace lamlab {

/// Worker count: hardware concurrency capped at 16, overridden by the
/// LAMLAB_THREADS environment variable when set to a positive integer.
inline int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  cap = std::min(cap, 16);
  if (const char* env = std::getenv("LAMLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 256) cap = static_cast<int>(v);
  }
  return cap;
}

/// Runs body(i) for i in [0, n). body must only write state owned by index i.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_cap()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace lamlab

#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace scenery {

// Worker count: SCENERY_THREADS if set, else hardware concurrency, clamped.
inline int default_thread_count() {
  if (const char* env = std::getenv("SCENERY_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n > 64 ? 64 : n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  int n = hc == 0 ? 1 : int(hc);
  return n > 8 ? 8 : n;
}

// Index-parallel loop. Results must be written to per-index slots; the work
// must not depend on execution order, so outputs are identical at any level of
// parallelism.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int threads = 0) {
  if (threads <= 0) threads = default_thread_count();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int use = threads < int(n) ? threads : int(n);
  pool.reserve(use);
  for (int t = 0; t < use; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace scenery

#pragma once

// Deterministic data parallelism: work is cut into fixed tiles whose layout
// does not depend on the thread count, and reductions combine per-tile partial
// results in tile order. Outputs are therefore identical for any --threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace bifscope {

inline int& default_thread_count() {
  static int n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

inline void set_thread_count(int n) { default_thread_count() = std::max(1, n); }

/// Calls body(begin, end, tile_index) for consecutive tiles of [0, count).
inline void parallel_tiles(std::size_t count, std::size_t tile,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& body,
                           int threads = 0) {
  if (count == 0) return;
  tile = std::max<std::size_t>(tile, 1);
  const std::size_t tiles = (count + tile - 1) / tile;
  const int nthreads = static_cast<int>(std::min<std::size_t>(tiles, threads > 0 ? threads : default_thread_count()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tiles) return;
      try {
        body(t * tile, std::min(count, (t + 1) * tile), t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tiles);
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, std::size_t tile = 64,
                         int threads = 0) {
  parallel_tiles(
      count, tile,
      [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) body(i);
      },
      threads);
}

/// Sum of term(i) over [0, count) with a fixed tiling and Neumaier-compensated
/// accumulation; bitwise reproducible regardless of thread count.
inline double parallel_sum(std::size_t count, const std::function<double(std::size_t)>& term,
                           std::size_t tile = 4096, int threads = 0) {
  tile = std::max<std::size_t>(tile, 1);
  const std::size_t tiles = (count + tile - 1) / tile;
  std::vector<double> partial(tiles, 0.0), comp(tiles, 0.0);
  parallel_tiles(
      count, tile,
      [&](std::size_t b, std::size_t e, std::size_t t) {
        double s = 0.0, c = 0.0;
        for (std::size_t i = b; i < e; ++i) {
          const double x = term(i);
          const double u = s + x;
          c += std::abs(s) >= std::abs(x) ? (s - u) + x : (x - u) + s;
          s = u;
        }
        partial[t] = s;
        comp[t] = c;
      },
      threads);
  double s = 0.0, c = 0.0;
  for (std::size_t t = 0; t < tiles; ++t) {
    for (double x : {partial[t], comp[t]}) {
      const double u = s + x;
      c += std::abs(s) >= std::abs(x) ? (s - u) + x : (x - u) + s;
      s = u;
    }
  }
  return s + c;
}

}  // namespace bifscope

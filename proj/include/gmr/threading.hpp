#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace gmr {

// Static block partition of [0, count) across `threads` workers. Each index is
// handled by exactly one worker, so any kernel whose output elements are
// written by the index that owns them produces results independent of the
// worker count. threads <= 1 runs inline.
template <typename Fn>
void parallel_for(int64_t count, int threads, Fn&& fn) {
  if (count <= 0) return;
  if (threads <= 1 || count == 1) {
    fn(int64_t{0}, count);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(threads, count));
  const int64_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(lo + chunk, count);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gmr

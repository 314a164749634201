#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vlk {

/// Worker count honoring VLK_THREADS (unset or 0 = hardware concurrency).
inline unsigned thread_count() {
  unsigned n = 0;
  if (const char* env = std::getenv("VLK_THREADS")) {
    try {
      n = static_cast<unsigned>(std::stoul(env));
    } catch (...) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs fn(i) for every i in [begin, end) split into contiguous chunks.
/// Callers write only to slots owned by i, so results never depend on the
/// schedule. The first exception thrown by any chunk is rethrown.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
  const std::int64_t count = end - begin;
  if (count <= 0) return;
  const auto workers =
      static_cast<std::int64_t>(std::min<std::int64_t>(thread_count(), count));
  if (workers <= 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (count + workers - 1) / workers;
  for (std::int64_t w = 0; w < workers; ++w) {
    const std::int64_t lo = begin + w * chunk;
    const std::int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace vlk

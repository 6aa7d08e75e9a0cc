#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace micromotion {

/// Worker count for per-pixel loops. 1 selects strict single-threaded mode.
inline std::size_t& thread_count() {
  static std::size_t n = 1;
  return n;
}

inline void set_thread_count(std::size_t n) { thread_count() = std::max<std::size_t>(1, n); }

/// Calls fn(i, worker) for i in [0, n). Items are split into contiguous
/// chunks, one per worker; callers that need bit-identical results across
/// worker counts write per-item outputs and reduce them in index order.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, std::size_t{0});
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers, end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i, w);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::size_t worker_slots(std::size_t n) { return std::max<std::size_t>(1, std::min(thread_count(), n)); }

}  // namespace micromotion

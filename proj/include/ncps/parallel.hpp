#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ncps {

/// Number of workers to use for a requested count (0 = hardware concurrency).
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

/// Runs fn(task, worker) for task in [0, tasks) on up to `threads` workers.
/// Tasks are claimed dynamically; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t tasks, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(threads, int(tasks)));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks; ++t) fn(t, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t; (t = next.fetch_add(1)) < tasks;) {
        try {
          fn(t, w);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ncps

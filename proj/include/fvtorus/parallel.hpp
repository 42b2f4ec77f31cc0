#pragma once

// Deterministic task fan-out: tasks are indexed, each writes only its own
// slot, so results do not depend on the worker count or schedule.

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fv {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs task(0) ... task(n_tasks - 1) on up to n_threads workers. Exceptions
/// from tasks are rethrown on the calling thread (first one wins).
inline void run_tasks(std::size_t n_tasks, int n_threads,
                      const std::function<void(std::size_t)>& task) {
  int workers = resolve_threads(n_threads);
  if (static_cast<std::size_t>(workers) > n_tasks) {
    workers = static_cast<int>(n_tasks);
  }
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n_tasks) break;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fv

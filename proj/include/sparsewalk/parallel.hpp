#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sparsewalk {

namespace detail {
inline std::atomic<unsigned>& worker_setting() {
  static std::atomic<unsigned> workers{0};
  return workers;
}
}  // namespace detail

/// Worker count for parallel loops; 0 means hardware concurrency.
inline void set_worker_count(unsigned n) { detail::worker_setting().store(n); }

inline unsigned worker_count() {
  const unsigned n = detail::worker_setting().load();
  if (n != 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(task) for task in [0, tasks). Each task writes only its own output slot, so
/// results never depend on how tasks are spread over workers.
template <class Body>
void parallel_tasks(std::size_t tasks, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) body(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks) return;
      try {
        body(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sparsewalk

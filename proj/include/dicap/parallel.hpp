#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dicap {

/// Runs fn(0..jobs-1) with at most `workers` threads. Job outputs must be
/// written to per-index slots so the join is deterministic regardless of
/// worker count; workers <= 1 runs inline.
template <typename F>
void parallel_for(int workers, int jobs, F&& fn) {
  if (workers <= 1 || jobs <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int count = std::min(workers, jobs);
  pool.reserve(count);
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace dicap

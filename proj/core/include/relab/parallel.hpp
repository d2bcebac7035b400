// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace relab {

/// Worker count after applying the --jobs cap (0 = hardware default).
inline int resolve_jobs(int requested) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (requested <= 0) return hw;
  return std::min(requested, hw);
}

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results are identical for any worker count; the first exception is rethrown.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::min(resolve_jobs(jobs), std::max(n, 1));
  if (n <= 0) return;
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace relab

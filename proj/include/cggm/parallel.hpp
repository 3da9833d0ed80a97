#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace cggm {

// Worker count: CGGM_WORKERS when set, otherwise the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("CGGM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs f(0..n-1) on a pool of workers. Results must be written to
// preallocated per-index slots so that the outcome does not depend on
// scheduling. Nested calls run sequentially.
inline void parallel_for(int n, const std::function<void(int)>& f,
                         int workers = worker_count()) {
  thread_local bool inside = false;
  if (inside || workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  inside = true;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n);
  const int used = std::min(workers, n);
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      inside = true;
      for (int i = w; i < n; i += used) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  inside = false;
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace cggm

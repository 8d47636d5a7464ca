#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace spdesmc {

// Runs fn(0..count-1) on up to `workers` threads in contiguous chunks. Work
// items must write to disjoint state; results do not depend on worker count.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (workers <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int n_threads = std::min(workers, count);
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int chunk = (count + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(count, begin + chunk);
    threads.emplace_back([&, begin, end] {
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace spdesmc

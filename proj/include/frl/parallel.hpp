#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace frl {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any task is rethrown on the calling thread after all finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t count = std::min(workers, n);
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace frl

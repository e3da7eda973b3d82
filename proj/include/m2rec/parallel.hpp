#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace m2rec {

// Runs fn(task, worker) for task in [0, n). Worker w takes tasks w, w + k,
// w + 2k, ... so the assignment is fixed for a given thread count. The first
// exception thrown by any task is rethrown on the calling thread.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  const std::size_t k = std::max<std::size_t>(1, std::min(threads, n));
  if (k == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, std::size_t{0});
    return;
  }
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (std::size_t w = 0; w < k; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += k) fn(i, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace m2rec

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace bridgeforge::detail {

/// Runs body(i) for i in [0, count) on up to `workers` threads. Work items are
/// claimed dynamically; callers must make each item write a disjoint slice so
/// that the result is independent of scheduling. The exception of the lowest
/// failing index is rethrown.
template <class Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
  const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

}  // namespace bridgeforge::detail

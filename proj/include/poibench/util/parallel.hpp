#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace poibench::util {

/// Run fn(i) for i in [0, n). With threads <= 1 this is a plain loop; with
/// more threads the index space is striped so each index always lands on the
/// same worker regardless of timing. Results must be written to per-index
/// slots by the caller; reductions over those slots stay in index order, so
/// output is bit-identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto worker_count = static_cast<std::size_t>(threads);
  std::vector<std::thread> workers;
  workers.reserve(worker_count);
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&fn, n, w, worker_count] {
      for (std::size_t i = w; i < n; i += worker_count) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace poibench::util

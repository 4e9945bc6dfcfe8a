#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace tracerecon {

// Runs fn(i) for i in [0, n) on `jobs` threads. Work items must be
// independent (each derives its own RNG stream), so the result is identical
// for any job count.
template <typename Fn>
void parallel_for_index(size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<size_t>(jobs, n));
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&fn, w, workers, n] {
      for (size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace tracerecon

#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>
#include <utility>
#include <vector>

namespace earlock {

// Worker cap: EARLOCK_THREADS wins, then hardware_concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("EARLOCK_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each index is processed exactly once and results
// must be written to index-addressed storage so the outcome is identical for
// any thread count. If workers throw, the exception with the lowest index is
// rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = std::min<std::size_t>(max_threads(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::pair<std::size_t, std::exception_ptr>> errors(
      threads, {std::numeric_limits<std::size_t>::max(), nullptr});
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([=, &fn, &errors]() {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          if (!errors[t].second) errors[t] = {i, std::current_exception()};
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  const auto first = std::min_element(errors.begin(), errors.end(),
                                      [](const auto& a, const auto& b) { return a.first < b.first; });
  if (first != errors.end() && first->second) std::rethrow_exception(first->second);
}

}  // namespace earlock

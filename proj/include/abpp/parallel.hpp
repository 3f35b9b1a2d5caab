#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

// 0 (or negative) means "all hardware threads"; always at least 1.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

// Runs fn(i) for every i in [0, n) on up to `threads` workers. Work is
// handed out by an atomic counter; the first exception is rethrown after all
// workers drain. Callers keep determinism by writing results into slot i
// rather than accumulating in visit order.
template <class Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  if (n <= 0) return;
  const int workers = int(std::min<Index>(Index(resolve_threads(threads)), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const Index i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> guard(error_mu);
          if (!error) error = std::current_exception();
          next.store(n, std::memory_order_relaxed);  // stop handing out work
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace abpp

#ifndef LOSSTUNNEL_PARALLEL_HPP
#define LOSSTUNNEL_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "losstunnel/types.hpp"

namespace losstunnel {

// Worker cap: LOSS_TUNNEL_THREADS env var, else hardware concurrency.
inline int maxWorkerThreads() {
  if (const char* env = std::getenv("LOSS_TUNNEL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(0..n-1); each index must write only its own output slot, which keeps
// results independent of the thread count.
inline void parallelFor(Index n, const std::function<void(Index)>& fn) {
  const int workers = std::min<Index>(maxWorkerThreads(), n);
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace losstunnel

#endif

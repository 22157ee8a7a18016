#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace conns {

namespace detail {
inline int& thread_count_ref() {
  static int n = 0;  // 0 = not yet resolved
  return n;
}
}  // namespace detail

/// Worker count used by parallel_for_chunks. Resolution order: explicit
/// set_num_threads(), CONNS_THREADS env var, hardware concurrency.
inline int num_threads() {
  int& n = detail::thread_count_ref();
  if (n <= 0) {
    if (const char* env = std::getenv("CONNS_THREADS")) {
      n = std::atoi(env);
    }
    if (n <= 0) {
      n = static_cast<int>(std::thread::hardware_concurrency());
    }
    if (n <= 0) n = 1;
  }
  return n;
}

inline void set_num_threads(int n) { detail::thread_count_ref() = n > 0 ? n : 0; }

/// Runs fn(i) for i in [0, n_items). Each item must write only to its own
/// output slot; reductions happen at the call site, in index order, after
/// this returns. Results are therefore identical for every thread count.
inline void parallel_for_chunks(int n_items, const std::function<void(int)>& fn) {
  const int workers = std::min(num_threads(), n_items);
  if (workers <= 1 || n_items <= 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_items) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace conns

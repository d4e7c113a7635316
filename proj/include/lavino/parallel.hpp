// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace lavino {

/// Worker cap: LAVINO_THREADS if set to a positive integer, else the hardware concurrency.
inline std::size_t thread_budget()
{
  if (char const *env = std::getenv("LAVINO_THREADS")) {
    try {
      long const n = std::stol(env);
      if (n > 0) {
        return static_cast<std::size_t>(n);
      }
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/* Runs fn(i) for i in [0, n) on up to thread_budget() threads. The first
 * exception thrown by any call is rethrown after all workers join.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn &&fn)
{
  std::size_t const workers = std::min(n, thread_budget());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) {
            error = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto &t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

} // namespace lavino

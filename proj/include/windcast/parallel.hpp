#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace windcast {

/// Worker cap from WINDCAST_THREADS; 0 (or 1) means run serially on the
/// calling thread. Unset means hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("WINDCAST_THREADS")) {
    try {
      const long v = std::stol(env);
      return v <= 0 ? 0u : static_cast<unsigned>(v);
    } catch (...) {
      return 0u;
    }
  }
  return std::thread::hardware_concurrency();
}

/// Runs body(i) for i in [0, count). Each task must write only to its own
/// output slot; callers reduce results in index order afterwards, so the
/// outcome is independent of the thread count.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, unsigned cap = thread_cap()) {
  const std::size_t workers = std::min<std::size_t>(cap, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failure_index = count;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        // Keep the lowest failing index so the reported error is stable.
        std::lock_guard lock(failure_mutex);
        if (i < failure_index) {
          failure_index = i;
          failure = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace windcast

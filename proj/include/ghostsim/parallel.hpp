#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace ghostsim {

/// Runs fn(i) for i in [0, n) across `threads` workers. Work items are
/// claimed atomically; callers that need determinism must write results into
/// per-index slots and reduce in index order afterwards.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int nt = std::min<size_t>(threads, n);
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace ghostsim

#pragma once

// Ordered parallel map. Results land at their input index, so output does not
// depend on the worker count or on scheduling.

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vidcurate {

// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// stops further work and is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t t = std::min<std::size_t>(jobs, n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

template <typename T, typename Fn>
auto parallel_map(const std::vector<T>& in, unsigned jobs, Fn&& fn) {
  using R = decltype(fn(in[0]));
  std::vector<R> out(in.size());
  parallel_for(in.size(), jobs, [&](std::size_t i) { out[i] = fn(in[i]); });
  return out;
}

}  // namespace vidcurate

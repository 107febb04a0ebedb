#ifndef ORBITLAB_PARALLEL_HPP
#define ORBITLAB_PARALLEL_HPP

#include <atomic>
#include <thread>
#include <vector>

namespace orbitlab {

// Run fn(i) for i in [0, n).  Each task owns its output slot and its own
// random streams, so the result is invariant under the thread count.
template <class F>
void parallel_tasks(int n, int threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      int i;
      while ((i = next.fetch_add(1)) < n) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace orbitlab

#endif

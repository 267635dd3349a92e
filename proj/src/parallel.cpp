#include "xstft/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace xstft {

namespace {
std::atomic<int> g_workers{1};
}

void set_worker_threads(int n) { g_workers.store(std::max(1, n)); }

int worker_threads() { return g_workers.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  const int workers = std::min<int64_t>(worker_threads(), n);
  if (workers <= 1 || n <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) {
    const int64_t begin = w * chunk;
    const int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace xstft

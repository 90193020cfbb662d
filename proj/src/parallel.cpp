#include "indrnn/parallel.hpp"

#include <atomic>

namespace indrnn {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  if (n < 0) throw ConfigError("set_max_threads: count must be >= 0");
  if (n == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(hw);
  }
  g_max_threads.store(std::min(n, 256));
}

int max_threads() { return g_max_threads.load(); }

void parallel_for(Index n, const std::function<void(Index, Index)>& fn) {
  if (n <= 0) return;
  const int workers = std::min<Index>(max_threads(), n);
  if (workers <= 1 || n < 64) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index begin = w * chunk;
    const Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace indrnn

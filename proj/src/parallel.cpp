#include "gllim/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>

namespace gllim {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int chunk_count(std::int64_t n) {
  if (n <= 0) return 0;
  // Fixed policy: chunks of at least 256 items, capped at 64 chunks.
  const std::int64_t chunks = std::min<std::int64_t>(64, (n + 255) / 256);
  return static_cast<int>(std::max<std::int64_t>(1, chunks));
}

void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  const int chunks = chunk_count(n);
  if (chunks == 0) return;
  const int workers = std::min(resolve_threads(threads), chunks);
  if (workers <= 1) {
    for (int c = 0; c < chunks; ++c) {
      const std::int64_t begin = n * c / chunks;
      const std::int64_t end = n * (c + 1) / chunks;
      fn(begin, end, c);
    }
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= chunks || failed.load()) return;
        const std::int64_t begin = n * c / chunks;
        const std::int64_t end = n * (c + 1) / chunks;
        try {
          fn(begin, end, c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gllim

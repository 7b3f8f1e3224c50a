#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace gllim {

/// 0 or negative -> hardware concurrency (at least 1).
int resolve_threads(int requested);

/// Runs fn(begin, end, chunk_index) over [0, n) split into chunks whose
/// boundaries depend only on n, never on the thread count. Reductions that
/// accumulate per chunk and combine in chunk order are therefore
/// bit-reproducible at any --threads setting.
void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t, int)>& fn);

/// Number of chunks parallel_chunks will use for n items.
int chunk_count(std::int64_t n);

}  // namespace gllim

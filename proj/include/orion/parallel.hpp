#pragma once

#include <cstddef>
#include <functional>

namespace orion {

/// ORION_THREADS if set to a positive integer, otherwise hardware concurrency
/// (at least 1).
std::size_t default_threads();

/// Process-wide worker count used by parallel_for. 0 restores the default.
void set_threads(std::size_t n);
std::size_t threads();

/// Splits [0, n) into contiguous chunks, one per worker, and runs
/// fn(begin, end, worker) on each. Chunk boundaries depend only on n and the
/// worker count, so per-worker reductions combined in worker order are
/// reproducible. With one worker everything runs on the calling thread.
/// The first exception thrown by a worker is rethrown after all have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Number of workers parallel_for will use for n items.
std::size_t worker_count(std::size_t n);

}  // namespace orion

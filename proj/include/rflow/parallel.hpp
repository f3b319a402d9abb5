#pragma once

#include <cstddef>
#include <functional>

namespace rflow {

// Worker cap: RFLOW_THREADS env var when set (>=1), else hardware
// concurrency. Read once per process.
std::size_t worker_count();

// Runs fn over [begin, end) split into contiguous chunks, one per worker.
// Chunk boundaries depend only on the worker count, and each unit of work
// must be independent, so results are deterministic for a fixed
// RFLOW_THREADS. Falls back to a plain loop for one worker or tiny ranges.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& chunk_fn);

}  // namespace rflow

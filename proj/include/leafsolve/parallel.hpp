#pragma once

#include <cstddef>
#include <functional>

namespace leafsolve {

/// Number of worker threads: LEAFSOLVE_THREADS if set to a positive integer,
/// otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs fn(0..n-1) across worker threads. Iterations must be independent.
/// The first exception thrown by any iteration is rethrown after all workers
/// have stopped.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace leafsolve

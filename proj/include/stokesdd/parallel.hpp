/// @file parallel.hpp
/// @brief Subdomain-level worker pool. Results are written to per-index slots
///        and reduced sequentially by the caller, so runs are reproducible at
///        any worker count.
#pragma once

#include <functional>

namespace stokesdd {

/// Worker count from STOKES_FETIDP_WORKERS, defaulting to the available
/// hardware parallelism.
int worker_count();

/// Runs fn(0..n-1) across workers. The first exception thrown by any worker
/// is rethrown on the calling thread.
void parallel_for(int n, const std::function<void(int)>& fn, int workers = 0);

}  // namespace stokesdd

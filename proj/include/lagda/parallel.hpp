#pragma once

#include <cstddef>
#include <functional>

namespace lagda {

/// Worker count from LAGDA_WORKERS, else the hardware concurrency (>= 1).
int default_worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

}  // namespace lagda

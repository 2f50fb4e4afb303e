#pragma once

#include <cstddef>
#include <functional>

namespace rcm {

/// Thread count from RCM_THREADS, else 1.
unsigned default_threads();

/// Runs fn(k) for k in [0, n) on up to `threads` workers. Each index is
/// handled exactly once; callers write results into per-index slots, so the
/// output does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace rcm

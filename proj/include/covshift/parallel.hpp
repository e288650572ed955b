#pragma once

#include <cstddef>
#include <functional>

namespace covshift {

/// Worker count from COVSHIFT_THREADS, falling back to hardware concurrency.
std::size_t default_threads();

/// Resolve a requested worker count (0 means default_threads()).
std::size_t resolve_threads(std::size_t requested);

/// Run task(i) for i in [0, count) on up to `threads` workers.  Tasks must
/// write only to their own output slots; the first exception is rethrown
/// after all workers join.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& task);

}  // namespace covshift

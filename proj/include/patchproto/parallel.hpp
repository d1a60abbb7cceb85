#pragma once

#include <cstddef>
#include <functional>

namespace patchproto {

// Hardware concurrency, overridden by PATCHPROTO_WORKERS when set to a
// positive integer.
unsigned default_workers();

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is
// visited exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception thrown by any
// invocation is rethrown after all threads join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace patchproto

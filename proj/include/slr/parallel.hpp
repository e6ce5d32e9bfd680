#pragma once

#include <cstddef>
#include <functional>

namespace slr {

// Worker count: min(SLR_THREADS if set, hardware concurrency), at least 1.
std::size_t worker_count();

// Statically partitions [0, n) into contiguous chunks, one per worker, and
// runs fn(begin, end) for each. Chunks write disjoint outputs, so results do
// not depend on scheduling. Runs inline when a single worker suffices.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace slr

#pragma once
#include <cstddef>
#include <functional>

namespace henon {

// Worker count: HENONLAB_THREADS if set (>= 1), else hardware concurrency.
unsigned worker_count();

// Runs body(i) for i in [0, n). Results must be written to per-index slots.
void parallel_for(size_t n, const std::function<void(size_t)>& body);

}  // namespace henon

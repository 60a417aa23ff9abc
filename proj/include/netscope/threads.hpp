#pragma once

#include <cstdint>
#include <functional>

namespace netscope {

// Process-wide worker cap. 0 = hardware concurrency. The deterministic CLI
// mode sets it to 1, but every parallel loop in the toolkit writes disjoint
// outputs with a fixed per-element order, so results are identical for any
// thread count.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Static contiguous chunking.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace netscope

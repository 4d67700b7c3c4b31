#pragma once

#include <functional>

namespace cotflow {

// Process-wide worker cap for parallel_for. Defaults to 1 (fully serial).
void set_max_threads(int threads);
int max_threads();

// Runs fn(i) for i in [0, n). Work items must write to disjoint state;
// results are then independent of the thread partition, so every caller
// stays bit-deterministic. Reductions over the outputs happen in index
// order on the calling thread.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace cotflow

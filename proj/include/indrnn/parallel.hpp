#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

#include "indrnn/types.hpp"

namespace indrnn {

// Worker cap for batch-parallel loops. 0 means "pick from hardware".
// Partitioning is by fixed contiguous ranges, so results are identical for
// every thread count; threading changes speed, never values.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over disjoint subranges of [0, n). Falls back to a
// plain loop when one worker suffices.
void parallel_for(Index n, const std::function<void(Index, Index)>& fn);

}  // namespace indrnn

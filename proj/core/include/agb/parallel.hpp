#pragma once

#include <cstddef>
#include <functional>

namespace agb {

// Worker count for intra-op parallelism. Read once from AGB_THREADS (default 1).
std::size_t thread_count();

// Overrides the worker count; mainly for tests.
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n) over a static partition. Callers must only
/// write disjoint outputs per index so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace agb

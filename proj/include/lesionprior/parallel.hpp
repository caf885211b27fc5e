#pragma once

#include <cstddef>
#include <functional>

namespace lesionprior {

/// Worker count: hardware concurrency, capped by LESIONPRIOR_THREADS.
std::size_t thread_count();

/// Runs body(i) for i in [0, n), split into contiguous chunks over
/// thread_count() threads. Each index is visited by exactly one thread, so
/// results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lesionprior

#pragma once

#include <cstddef>
#include <functional>

namespace fred {

/// Worker count: hardware concurrency capped by the FRED_THREADS environment variable.
std::size_t thread_count();

/// Runs body(i) for i in [0, n), split into contiguous chunks across threads.
/// Each index must only write state it owns; callers reduce afterwards in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fred

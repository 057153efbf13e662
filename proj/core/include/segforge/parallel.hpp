#pragma once

#include <cstddef>
#include <functional>

namespace segforge {

/// Number of worker threads used by kernels (including the caller). Defaults to
/// the value of SEGFORGE_THREADS when set, otherwise 1.
std::size_t num_threads();

/// Sets the worker count; 0 is treated as 1.
void set_num_threads(std::size_t n);

/// Runs body(begin, end) over a partition of [0, n) into contiguous chunks.
///
/// Chunks write disjoint outputs in every call site, so results do not depend on
/// the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace segforge

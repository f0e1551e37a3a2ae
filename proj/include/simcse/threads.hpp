#pragma once

#include <functional>

namespace simcse::threads {

/// Worker cap from SIMCSE_KIT_THREADS, clamped to at least 1. Unset, empty,
/// or unparseable values mean single-threaded.
int max_threads();

/// Splits [0, n) into at most max_threads() contiguous chunks and runs
/// fn(begin, end) on each, possibly concurrently. Chunks are disjoint, so the
/// result is bit-identical to the serial order as long as fn only writes to
/// its own range. The first chunk's exception (in chunk order) is rethrown.
void parallel_chunks(int n, const std::function<void(int, int)>& fn);

}  // namespace simcse::threads

#pragma once

#include <cstddef>
#include <functional>

namespace nanoflow {

/// Process-wide worker count used when a caller passes threads <= 0.
void set_default_threads(int threads);
int default_threads();

/// Runs task(i) for i in [0, count) on up to `threads` workers. Tasks are
/// claimed dynamically, so callers must write results into per-index slots
/// and reduce them in index order afterwards. The first exception thrown by
/// any task is rethrown on the calling thread after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task);

}  // namespace nanoflow

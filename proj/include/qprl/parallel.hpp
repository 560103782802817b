#pragma once

#include <functional>

namespace qprl {

/// Worker cap: min(hardware_concurrency, QPRL_THREADS if set). At least 1.
int worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. Tasks must write to
/// disjoint outputs; results are independent of scheduling.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace qprl

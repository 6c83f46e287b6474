#pragma once

#include <functional>

namespace qrhf {

// Worker count for parallel_for. Defaults to the QRHF_THREADS environment variable, else 1.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker; results must be
// written to per-index slots so the outcome does not depend on scheduling.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace qrhf

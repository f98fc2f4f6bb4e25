#pragma once

#include <cstdint>
#include <functional>

namespace blockcs {

// Worker cap for kernel-internal parallelism. Defaults to the hardware
// concurrency, capped by the BLOCKCS_THREADS environment variable.
int max_threads();
void set_max_threads(int n);

// Runs fn over a partition of [0, count) into contiguous [begin, end) chunks,
// one chunk per worker. Callers must only write outputs owned by their chunk;
// per-element accumulation order is then independent of the worker count.
void parallel_for(int64_t count, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace blockcs

#pragma once

#include <cstdint>
#include <functional>

namespace dfn {

// Hardware concurrency capped by the DFN_THREADS environment variable,
// never less than 1.
int worker_count();

// Runs fn(i) for i in [0, n) on worker_count() threads with a static block
// partition. fn must be safe to call concurrently for distinct i; exceptions
// propagate from the first failing index.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace dfn

#pragma once

#include <cstddef>
#include <functional>

namespace moncirc {

/// Worker cap: MC_WORKERS if set to a positive integer, else the hardware concurrency.
std::size_t worker_count();

/// Runs fn(k) for k in [0, n) on up to `workers` threads. Each index is run exactly once;
/// callers keep results per index so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace moncirc

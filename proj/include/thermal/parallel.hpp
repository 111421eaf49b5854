#pragma once

#include <cstddef>
#include <functional>

namespace thermal {

/// Hardware concurrency, at least 1.
unsigned default_workers();

/// Runs task(i) for i in [0, count) on up to `workers` threads pulling from a shared counter.
/// Tasks must write only to their own slot; the first exception thrown is rethrown after
/// all workers join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task);

}  // namespace thermal

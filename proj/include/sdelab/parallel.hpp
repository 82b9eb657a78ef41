#pragma once

#include <cstddef>
#include <functional>

namespace sdelab {

/// Worker count used when a caller passes threads = 0. Defaults to
/// std::thread::hardware_concurrency(), overridable with set_default_threads.
std::size_t default_threads() noexcept;
void set_default_threads(std::size_t n) noexcept;

/// Runs body(batch) for batch in [0, n_batches) on up to `threads` workers.
/// Batches are claimed from an atomic counter; the caller is responsible for
/// writing results to per-batch slots and reducing them in batch order.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for_batches(std::size_t n_batches, std::size_t threads,
                          const std::function<void(std::size_t)>& body);

}  // namespace sdelab

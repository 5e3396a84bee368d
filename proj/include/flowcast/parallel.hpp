#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace flowcast {

/// Worker cap: FLOWCAST_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to `workers` threads. Indices are
/// handed out in contiguous chunks; body must only write to slots owned by i.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

/// SplitMix64 finalizer; used to derive per-cell / per-chunk seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace flowcast

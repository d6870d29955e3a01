#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace rsc {

// Process-wide cap on worker threads (the CLI's --threads). 0 means hardware concurrency.
void set_max_threads(std::size_t threads);
std::size_t max_threads();

// Runs task(i) for i in [0, n_tasks). Tasks must write disjoint outputs; results
// never depend on the thread count. The first exception thrown by a task is rethrown.
void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& task);

// SplitMix64 finaliser, used to derive independent per-block seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace rsc

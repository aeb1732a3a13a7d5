#pragma once

#include <cstdint>
#include <functional>

namespace sfseg {

// Worker cap for batch-parallel kernels. Results never depend on it: every
// kernel that uses parallel_for reduces per-item partials in item order.
void set_num_threads(int threads);
int num_threads();

// Calls fn(i) for i in [0, n), splitting contiguous ranges across workers.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace sfseg

#pragma once

#include <cstddef>
#include <cstdint>

namespace adfnet {

/// Worker count used by all internal parallel loops. 0 restores the default
/// (all available cores).
void set_num_threads(int threads);
int num_threads();
int hardware_threads();

/// Runs body(i) for i in [0, count). Iterations are independent and each
/// writes its own outputs, so results never depend on the thread count.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (total > 1)
  for (std::int64_t i = 0; i < total; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace adfnet

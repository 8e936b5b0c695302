#include "adfnet/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>

namespace adfnet {
namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int threads) { g_threads.store(std::max(threads, 0)); }

int num_threads() {
  const int t = g_threads.load();
  return t > 0 ? t : hardware_threads();
}

int hardware_threads() { return std::max(omp_get_num_procs(), 1); }

}  // namespace adfnet

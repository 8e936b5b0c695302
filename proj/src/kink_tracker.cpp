#include "adfnet/kink_tracker.hpp"

#include <atomic>

#include "adfnet/rng.hpp"

namespace adfnet {
namespace {
std::atomic<bool> g_active{false};
std::atomic<std::uint64_t> g_signature{0};
}  // namespace

KinkTracker::Scope::Scope() {
  g_signature.store(0);
  g_active.store(true);
}

KinkTracker::Scope::~Scope() { g_active.store(false); }

bool KinkTracker::active() { return g_active.load(std::memory_order_relaxed); }
void KinkTracker::reset() { g_signature.store(0); }
void KinkTracker::fold(std::uint64_t value) { g_signature.fetch_add(value); }
std::uint64_t KinkTracker::signature() { return g_signature.load(); }

std::uint64_t KinkTracker::mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9E3779B97F4A7C15ull));
}

}  // namespace adfnet

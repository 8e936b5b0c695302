#pragma once

#include <cstdint>

namespace adfnet {

/// Signature of the smooth piece a forward pass was evaluated in. Ops with
/// derivative discontinuities (relu family, bilinear lattice crossings) fold
/// their discrete state into a commutative 64-bit sum while a Scope is alive.
/// Two evaluations with equal signatures lie in the same piece, so a central
/// difference between them is free of kink error. Process-wide; only one
/// Scope may be active at a time.
class KinkTracker {
 public:
  class Scope {
   public:
    Scope();
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
  };

  static bool active();
  static void reset();
  static void fold(std::uint64_t value);
  static std::uint64_t signature();

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);
};

}  // namespace adfnet

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "adfnet/network.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/training.hpp"

// Container layout (little-endian):
//   "ADFW1"
//   u32 fingerprint length, then that many u32 fields:
//     scales, channels[scales], k, dilation count, dilations[...],
//     encoder blocks, decoder blocks, activation id, image channels,
//     decode_lowest
//   u32 record count, then per record: u32 name length, name bytes, tensor
//   checkpoints add "adam.m/<name>" and "adam.v/<name>" records followed by
//   the trailer "STEP", u64 Adam step, u64 iteration
namespace adfnet {

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FingerprintMismatch : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};

std::vector<std::uint32_t> config_fingerprint(const NetworkConfig& config);
NetworkConfig config_from_fingerprint(const std::vector<std::uint32_t>& fp);

void save_weights(const ParamStore<float>& params, const NetworkConfig& config,
                  const std::filesystem::path& path);

/// Reads and validates the whole file before returning. With `expected`,
/// a different fingerprint is rejected.
ParamStore<float> load_weights(const std::filesystem::path& path, const NetworkConfig& expected);
/// Takes the configuration from the file itself.
ParamStore<float> load_weights(const std::filesystem::path& path, NetworkConfig* config_out);

struct Checkpoint {
  NetworkConfig config;
  ParamStore<float> params;  // values plus Adam moments
  AdamState adam;
  std::uint64_t iteration = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adfnet

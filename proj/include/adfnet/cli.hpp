#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adfnet/network.hpp"
#include "adfnet/training.hpp"

namespace adfnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable inputs, malformed weight or config files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string subcommand;
  std::filesystem::path weights;
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path config_file;
  double sigma = 25.0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> iterations;
  LossKind loss = LossKind::L2;
  int threads = 0;  // 0: all available cores
  bool random_weights = false;
  bool f64 = false;

  // train-toy
  std::size_t batch = 8;
  std::size_t patch = 32;
  std::optional<double> lr;

  // bench / report
  std::size_t repeats = 10;
  std::size_t size = 128;

  // grad-check
  bool skip_network = false;

  /// Starting point before --config overrides: toy widths for train-toy,
  /// the standard configuration otherwise.
  NetworkConfig network;
};

/// Parses argv. --help prints usage and returns nullopt.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out);

/// Applies the keys of a JSON object onto a configuration. Unknown keys and
/// ill-typed values are rejected.
NetworkConfig apply_overrides(NetworkConfig base, const std::string& json_text);
NetworkConfig load_overrides(const NetworkConfig& base, const std::filesystem::path& path);

/// Checks that every path the subcommand reads exists and every output
/// directory can be created, before any work starts.
void validate(const RunConfig& config);

int cmd_denoise(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train_toy(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_grad_check(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses, validates and dispatches; maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct BenchResult {
  std::string kernel;
  double naive_ms = 0.0;      // median
  double optimized_ms = 0.0;  // median
  double speedup() const { return naive_ms / optimized_ms; }
};

/// 64-channel 3x3 conv2d and dconv_apply on a 1 x 64 x size x size input,
/// one warm-up run then `repeats` timed runs of each implementation.
std::vector<BenchResult> run_bench(std::size_t size, std::size_t repeats, std::uint64_t seed);

struct MetricsRow {
  std::string file;
  double sigma = 0.0;
  double psnr_noisy = 0.0;
  double psnr_denoised = 0.0;
  double ssim_noisy = 0.0;
  double ssim_denoised = 0.0;
};

/// Header plus one line per row, shortest round-trip number formatting.
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);
void print_metrics_table(std::ostream& os, const std::vector<MetricsRow>& rows);

}  // namespace adfnet::cli

#include <CLI11.hpp>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "adfnet/cli.hpp"

namespace adfnet::cli {
namespace {

using nlohmann::json;

std::size_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw DataError("config key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<std::size_t> as_counts(const json& v, const std::string& key) {
  if (!v.is_array()) throw DataError("config key '" + key + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(as_count(e, key));
  return out;
}

void add_common(CLI::App& sub, RunConfig& rc, std::string& loss) {
  sub.add_option("--seed", rc.seed, "Seed for noise, sampling and random weights");
  sub.add_option("--threads", rc.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  sub.add_option("--config", rc.config_file, "JSON file of network configuration overrides");
  sub.add_option("--sigma", rc.sigma, "Noise level in 8-bit units")->check(CLI::NonNegativeNumber);
  sub.add_option("--loss", loss, "Training loss")->check(CLI::IsMember({"l2", "charbonnier"}));
  sub.add_flag("--f64", rc.f64, "Evaluate in double precision");
}

}  // namespace

NetworkConfig apply_overrides(NetworkConfig c, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("config must be a JSON object");
  if (j.contains("preset")) {
    const auto& p = j["preset"];
    const std::string name = p.is_string() ? p.get<std::string>() : "";
    if (name == "standard")
      c = NetworkConfig::standard();
    else if (name == "toy")
      c = NetworkConfig::toy();
    else if (name == "wide")
      c = NetworkConfig::wide();
    else
      throw DataError("config key 'preset' must be one of standard, toy, wide");
  }
  static const std::set<std::string> known{"preset",         "scales",         "channels",
                                           "encoder_blocks", "decoder_blocks", "k",
                                           "dilations",      "activation",     "in_channels",
                                           "decode_lowest"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) throw DataError("unknown config key '" + key + "'");
    if (key == "scales") c.scales = as_count(v, key);
    if (key == "channels") c.channels = as_counts(v, key);
    if (key == "encoder_blocks") c.encoder_blocks = as_count(v, key);
    if (key == "decoder_blocks") c.decoder_blocks = as_count(v, key);
    if (key == "k") c.k = as_count(v, key);
    if (key == "dilations") c.dilations = as_counts(v, key);
    if (key == "in_channels") c.in_channels = as_count(v, key);
    if (key == "decode_lowest") {
      if (!v.is_boolean()) throw DataError("config key 'decode_lowest' must be a boolean");
      c.decode_lowest = v.get<bool>();
    }
    if (key == "activation") {
      const std::string a = v.is_string() ? v.get<std::string>() : "";
      if (a == "relu")
        c.activation = graph::Activation::Relu;
      else if (a == "leaky_relu")
        c.activation = graph::Activation::LeakyRelu;
      else
        throw DataError("config key 'activation' must be relu or leaky_relu");
    }
  }
  if (j.contains("scales") && !j.contains("channels") && c.channels.size() != c.scales)
    throw DataError("config changes 'scales' without giving 'channels'");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid network configuration: ") + e.what());
  }
  return c;
}

NetworkConfig load_overrides(const NetworkConfig& base, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read config file " + path.string());
  std::ostringstream text;
  text << is.rdbuf();
  return apply_overrides(base, text.str());
}

std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out) {
  RunConfig rc;
  std::string loss = "l2";
  std::uint64_t iters = 0;

  CLI::App app{"Dynamic-filtering image denoiser: tensor kernels, training and evaluation"};
  app.name("adfnet");
  app.require_subcommand(1, 1);

  auto* denoise = app.add_subcommand("denoise", "Denoise PNG images and report PSNR/SSIM");
  add_common(*denoise, rc, loss);
  denoise->add_option("--in", rc.input, "Input PNG file or directory")->required();
  denoise->add_option("--out", rc.output, "Directory for denoised PNGs and metrics.csv");
  auto* w = denoise->add_option("--weights", rc.weights, "Weight file");
  auto* rw = denoise->add_flag("--random-weights", rc.random_weights,
                               "Use freshly initialized weights (seeded)");
  w->excludes(rw);

  auto* train = app.add_subcommand("train-toy", "Train a small network on noisy patches");
  add_common(*train, rc, loss);
  train->add_option("--in", rc.input, "Directory of training PNGs (default: synthetic images)");
  train->add_option("--out", rc.output, "Directory for checkpoint, weights and loss log")
      ->required();
  train->add_option("--iters", iters, "Iteration budget (default 200)")->check(CLI::PositiveNumber);
  train->add_option("--batch", rc.batch, "Patches per iteration")->check(CLI::PositiveNumber);
  train->add_option("--patch", rc.patch, "Patch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", rc.lr, "Base learning rate")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite (double precision)");
  add_common(*gc, rc, loss);
  gc->add_flag("--skip-network", rc.skip_network, "Leave out the sampled full-network check");

  auto* bench = app.add_subcommand("bench", "Time optimized kernels against naive loops");
  add_common(*bench, rc, loss);
  bench->add_option("--repeats", rc.repeats, "Timed repetitions (median reported)")
      ->check(CLI::Range(1, 1000));
  bench->add_option("--size", rc.size, "Spatial size of the bench input")
      ->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Parameter and operation counts of a configuration");
  add_common(*report, rc, loss);
  report->add_option("--size", rc.size, "Input size for the operation count")
      ->check(CLI::PositiveNumber);
  report->add_option("--weights", rc.weights, "Read the configuration from a weight file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  rc.subcommand = app.get_subcommands().front()->get_name();
  rc.loss = parse_loss(loss);
  if (iters > 0) rc.iterations = iters;
  rc.network = rc.subcommand == "train-toy" ? NetworkConfig::toy() : NetworkConfig::standard();
  if (rc.subcommand == "denoise" && rc.weights.empty() && !rc.random_weights)
    throw UsageError("denoise needs --weights or --random-weights");
  return rc;
}

void validate(const RunConfig& rc) {
  if (rc.sigma < 0) throw UsageError("--sigma must be >= 0");
  auto must_exist = [](const std::filesystem::path& p, const char* what) {
    if (!p.empty() && !std::filesystem::exists(p))
      throw DataError(std::string(what) + " not found: " + p.string());
  };
  must_exist(rc.weights, "weight file");
  must_exist(rc.config_file, "config file");
  must_exist(rc.input, "input");
  if (!rc.weights.empty() && std::filesystem::is_directory(rc.weights))
    throw DataError("weight path is a directory: " + rc.weights.string());
  if (rc.subcommand == "train-toy" && !rc.input.empty() && !std::filesystem::is_directory(rc.input))
    throw DataError("training input must be a directory: " + rc.input.string());
  if (!rc.output.empty()) {
    if (std::filesystem::exists(rc.output) && !std::filesystem::is_directory(rc.output))
      throw DataError("output path exists and is not a directory: " + rc.output.string());
    std::error_code ec;
    std::filesystem::create_directories(rc.output, ec);
    if (ec) throw DataError("cannot create output directory " + rc.output.string());
  }
}

}  // namespace adfnet::cli

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "adfnet/cli.hpp"
#include "adfnet/data.hpp"
#include "adfnet/dynamic_ops.hpp"
#include "adfnet/grad_check.hpp"
#include "adfnet/image_io.hpp"
#include "adfnet/metrics.hpp"
#include "adfnet/parallel.hpp"
#include "adfnet/static_ops.hpp"
#include "adfnet/weights_io.hpp"
#include "naive_ops.hpp"

namespace adfnet::cli {
namespace {

constexpr double kTargetParams = 7.65e6;
constexpr double kTargetFlops128 = 13.9e9;

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DataError("malformed number in metrics CSV: '" + s + "'");
  return v;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

NetworkConfig resolve_network(const RunConfig& rc) {
  return rc.config_file.empty() ? rc.network : load_overrides(rc.network, rc.config_file);
}

Tensor run_network(const Tensor& x, const ParamStore<float>& params, const NetworkConfig& cfg,
                   bool f64) {
  if (!f64) return forward_padded(x, params, cfg);
  const ParamStore<double> p64 = params.cast<double>();
  return forward_padded(x.cast<double>(), p64, cfg).cast<float>();
}

template <class F>
double median_ms(std::size_t repeats, F&& f) {
  f();  // warm-up
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t m = ms.size() / 2;
  return ms.size() % 2 ? ms[m] : 0.5 * (ms[m - 1] + ms[m]);
}

/// "enc0.0.mcb.branch1.weight" -> "enc0.0.mcb"; "head.weight" -> "head".
std::string param_group(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (!parts.empty()) parts.pop_back();
  const std::size_t keep = std::min<std::size_t>(parts.size(), 3);
  std::string g;
  for (std::size_t i = 0; i < keep; ++i) g += (i ? "." : "") + parts[i];
  return g;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "file,sigma,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised\n";
  for (const auto& r : rows) {
    if (r.file.find_first_of(",\"\n") != std::string::npos)
      throw DataError("file name not representable in CSV: " + r.file);
    os << r.file << ',' << format_number(r.sigma) << ',' << format_number(r.psnr_noisy) << ','
       << format_number(r.psnr_denoised) << ',' << format_number(r.ssim_noisy) << ','
       << format_number(r.ssim_denoised) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line != "file,sigma,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised")
    throw DataError("metrics CSV header missing");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw DataError("metrics CSV row has " + std::to_string(f.size()) + " fields");
    rows.push_back({f[0], parse_number(f[1]), parse_number(f[2]), parse_number(f[3]),
                    parse_number(f[4]), parse_number(f[5])});
  }
  return rows;
}

void print_metrics_table(std::ostream& os, const std::vector<MetricsRow>& rows) {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.file.size());
  os << std::left << std::setw(static_cast<int>(width)) << "file" << std::right << std::setw(7)
     << "sigma" << std::setw(13) << "psnr_noisy" << std::setw(15) << "psnr_denoised"
     << std::setw(12) << "ssim_noisy" << std::setw(15) << "ssim_denoised" << '\n';
  for (const auto& r : rows)
    os << std::left << std::setw(static_cast<int>(width)) << r.file << std::right << std::setw(7)
       << fixed(r.sigma, 1) << std::setw(13) << fixed(r.psnr_noisy, 2) << std::setw(15)
       << fixed(r.psnr_denoised, 2) << std::setw(12) << fixed(r.ssim_noisy, 4) << std::setw(15)
       << fixed(r.ssim_denoised, 4) << '\n';
}

std::vector<BenchResult> run_bench(std::size_t size, std::size_t repeats, std::uint64_t seed) {
  constexpr std::size_t c = 64, k = 3;
  Rng rng(seed);
  const Tensor x = rand_init<float>(rng, {1, c, size, size}, InitScheme::gaussian(1.0));
  const Tensor w = rand_init<float>(rng, {c, c, k, k}, InitScheme::uniform_fan_in(c * k * k));
  const Tensor b = rand_init<float>(rng, {1, c, 1, 1}, InitScheme::uniform_fan_in(c * k * k));
  const Tensor field =
      rand_init<float>(rng, {1, k * k * c, size, size}, InitScheme::uniform_fan_in(k * k));
  const ConvGeometry geom = ConvGeometry::same(k);

  std::vector<BenchResult> out;
  Tensor sink;
  out.push_back({"conv2d", median_ms(repeats, [&] { sink = reference::conv2d(x, w, &b, 1, 1, 1, 1); }),
                 median_ms(repeats, [&] { sink = conv2d(x, w, &b, geom); })});
  out.push_back({"dconv_apply",
                 median_ms(repeats, [&] { sink = reference::dconv(x, field, k, 1); }),
                 median_ms(repeats, [&] { sink = dconv_apply(x, field, k, 1); })});
  return out;
}

int cmd_denoise(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  NetworkConfig cfg;
  ParamStore<float> params;
  if (!rc.weights.empty()) {
    if (rc.config_file.empty()) {
      params = load_weights(rc.weights, &cfg);
    } else {
      cfg = resolve_network(rc);
      params = load_weights(rc.weights, cfg);
    }
  } else {
    cfg = resolve_network(rc);
    Rng rng(rc.seed);
    params = build<float>(cfg, rng);
  }

  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(rc.input))
    files = list_images(rc.input);
  else
    files.push_back(rc.input);
  if (files.empty()) throw DataError("no PNG images in " + rc.input.string());

  const Rng root(rc.seed);
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor clean = load_png(files[i]);
    Rng noise_rng = root.fork(i);
    const Tensor noisy = add_awgn(clean, rc.sigma, noise_rng);
    const Tensor raw = run_network(noisy, params, cfg, rc.f64);
    if (!all_finite(raw)) {
      err << "error: non-finite network output for " << files[i].string() << '\n';
      return kNumericFailure;
    }
    const Tensor denoised = clamp(raw, 0.0f, 1.0f);
    const std::string stem = files[i].stem().string();
    if (!rc.output.empty()) {
      save_png(denoised, rc.output / (stem + "_denoised.png"));
      if (rc.sigma > 0) save_png(noisy, rc.output / (stem + "_noisy.png"));
    }
    rows.push_back({files[i].filename().string(), rc.sigma, psnr(noisy, clean),
                    psnr(denoised, clean), ssim(noisy, clean), ssim(denoised, clean)});
  }
  MetricsRow mean{"mean", rc.sigma, 0, 0, 0, 0};
  for (const auto& r : rows) {
    mean.psnr_noisy += r.psnr_noisy / static_cast<double>(rows.size());
    mean.psnr_denoised += r.psnr_denoised / static_cast<double>(rows.size());
    mean.ssim_noisy += r.ssim_noisy / static_cast<double>(rows.size());
    mean.ssim_denoised += r.ssim_denoised / static_cast<double>(rows.size());
  }
  rows.push_back(mean);

  print_metrics_table(out, rows);
  if (!rc.output.empty()) {
    std::ofstream csv(rc.output / "metrics.csv");
    write_metrics_csv(csv, rows);
    if (!csv) throw DataError("cannot write metrics.csv in " + rc.output.string());
    out << "wrote " << files.size() << " image(s) and metrics.csv to " << rc.output.string()
        << '\n';
  } else {
    out << '\n';
    write_metrics_csv(out, rows);
  }
  return kOk;
}

int cmd_train_toy(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const NetworkConfig cfg = resolve_network(rc);
  TrainOptions opt;
  opt.iterations = rc.iterations.value_or(opt.iterations);
  opt.batch = rc.batch;
  opt.patch = rc.patch;
  opt.sigma = rc.sigma;
  opt.seed = rc.seed;
  opt.loss = rc.loss;
  if (rc.lr) opt.schedule.base = *rc.lr;
  if (opt.patch % cfg.size_multiple() != 0)
    throw UsageError("--patch must be a multiple of " + std::to_string(cfg.size_multiple()));

  ToyData data = make_toy_data(rc.seed, opt.patch, opt.sigma);
  if (!rc.input.empty()) {
    const auto files = list_images(rc.input);
    if (files.size() < 2) throw DataError("training needs at least two PNGs in " + rc.input.string());
    std::vector<Tensor> images;
    for (const auto& f : files) images.push_back(load_png(f));
    // The last image is held out; its centre patch is the evaluation target.
    const Tensor held = images.back();
    images.pop_back();
    if (held.shape().h < opt.patch || held.shape().w < opt.patch)
      throw DataError("held-out image smaller than the patch size");
    data.images = std::move(images);
    data.held_out_clean = crop_region(held, (held.shape().h - opt.patch) / 2,
                                      (held.shape().w - opt.patch) / 2, opt.patch, opt.patch);
    Rng noise = Rng(rc.seed).fork(1000);
    data.held_out_noisy = add_awgn(data.held_out_clean, opt.sigma, noise);
  }
  for (const auto& img : data.images)
    if (img.shape().h < opt.patch || img.shape().w < opt.patch)
      throw DataError("training image smaller than the patch size");

  Rng init(rc.seed);
  ParamStore<float> params = build<float>(cfg, init);
  AdamState adam;
  out << "training " << count_params(cfg) << " parameters, " << opt.iterations
      << " iterations, batch " << opt.batch << " of " << opt.patch << "x" << opt.patch
      << ", sigma " << opt.sigma << ", loss " << loss_name(opt.loss) << '\n';

  const std::uint64_t every = std::max<std::uint64_t>(1, opt.iterations / 20);
  std::ofstream log_csv(rc.output / "train_log.csv");
  log_csv << "iteration,lr,loss\n";
  std::vector<TrainLogEntry> log;
  try {
    log = train(params, adam, cfg, data.images, opt, 0, [&](const TrainLogEntry& e) {
      log_csv << e.iteration << ',' << format_number(e.lr) << ',' << format_number(e.loss) << '\n';
      if (e.iteration % every == 0 || e.iteration + 1 == opt.iterations)
        out << "iter " << std::setw(6) << e.iteration << "  lr " << std::scientific
            << std::setprecision(3) << e.lr << "  loss " << e.loss << std::defaultfloat << '\n';
    });
  } catch (const NonFiniteLoss& e) {
    err << "error: " << e.what() << "; try a lower --lr\n";
    return kNumericFailure;
  }

  Checkpoint ckpt{cfg, params, adam, opt.iterations};
  save_checkpoint(ckpt, rc.output / "checkpoint.adfw");
  save_weights(params, cfg, rc.output / "weights.adfw");

  const std::size_t window = std::min<std::size_t>(20, log.size());
  const double first = window_mean(log, 0, window);
  const double last = window_mean(log, log.size() - window, window);
  const Tensor denoised = clamp(forward(data.held_out_noisy, params, cfg), 0.0f, 1.0f);
  const double p_noisy = psnr(data.held_out_noisy, data.held_out_clean);
  const double p_den = psnr(denoised, data.held_out_clean);
  out << std::fixed << std::setprecision(6) << "loss mean first " << window << ": " << first
      << "  last " << window << ": " << last << "  ratio " << std::setprecision(3)
      << last / first << '\n'
      << std::setprecision(2) << "held-out psnr noisy " << p_noisy << " dB, denoised " << p_den
      << " dB, gain " << p_den - p_noisy << " dB\n"
      << std::defaultfloat << "wrote checkpoint.adfw, weights.adfw, train_log.csv to "
      << rc.output.string() << '\n';
  return kOk;
}

int cmd_grad_check(const RunConfig& rc, std::ostream& out, std::ostream&) {
  const auto entries = grad_check_suite(rc.seed, !rc.skip_network);
  print_grad_report(out, entries);
  const auto failed = std::count_if(entries.begin(), entries.end(),
                                    [](const GradCheckEntry& e) { return !e.passed(); });
  out << (failed == 0 ? "all " + std::to_string(entries.size()) + " checks passed"
                      : std::to_string(failed) + " of " + std::to_string(entries.size()) +
                            " checks failed")
      << '\n';
  return failed == 0 ? kOk : kNumericFailure;
}

int cmd_bench(const RunConfig& rc, std::ostream& out, std::ostream&) {
  out << "threads " << num_threads() << " (hardware " << hardware_threads() << "), input 1x64x"
      << rc.size << "x" << rc.size << ", median of " << rc.repeats << " runs\n";
  out << std::left << std::setw(14) << "kernel" << std::right << std::setw(12) << "naive_ms"
      << std::setw(15) << "optimized_ms" << std::setw(10) << "speedup" << '\n';
  for (const auto& r : run_bench(rc.size, rc.repeats, rc.seed))
    out << std::left << std::setw(14) << r.kernel << std::right << std::fixed
        << std::setprecision(2) << std::setw(12) << r.naive_ms << std::setw(15) << r.optimized_ms
        << std::setw(9) << r.speedup() << "x" << std::defaultfloat << '\n';
  const FlopReport flops = count_flops(resolve_network(rc), 128, 128);
  out << "flops (default config, 128x128): " << std::setprecision(4) << flops.total / 1e9
      << " G\n";
  return kOk;
}

int cmd_report(const RunConfig& rc, std::ostream& out, std::ostream&) {
  NetworkConfig cfg;
  if (!rc.weights.empty())
    load_weights(rc.weights, &cfg);
  else
    cfg = resolve_network(rc);
  const std::size_t m = cfg.size_multiple();
  const std::size_t size = (rc.size + m - 1) / m * m;

  out << "configuration: " << cfg.scales << " scales, widths";
  for (auto c : cfg.channels) out << ' ' << c;
  out << ", k " << cfg.k << ", dilations";
  for (auto d : cfg.dilations) out << ' ' << d;
  out << ", " << cfg.encoder_blocks << " CB+MCB pair(s) per encoder scale, "
      << cfg.decoder_blocks << " DCB+MDCB pair(s) per decoder scale"
      << (cfg.decode_lowest ? " (lowest scale included)" : " (lowest scale excluded)") << "\n\n";

  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& spec : network_layout(cfg)) {
    const std::string g = param_group(spec.name);
    if (groups.empty() || groups.back().first != g) groups.emplace_back(g, 0);
    groups.back().second += spec.shape.numel();
  }
  out << std::left << std::setw(16) << "module" << std::right << std::setw(12) << "params" << '\n';
  for (const auto& [g, n] : groups)
    out << std::left << std::setw(16) << g << std::right << std::setw(12) << n << '\n';
  const double total = static_cast<double>(count_params(cfg));
  out << std::left << std::setw(16) << "total" << std::right << std::setw(12)
      << static_cast<std::size_t>(total) << "  (" << std::fixed << std::setprecision(3)
      << total / 1e6 << "M, " << std::setprecision(2) << total / kTargetParams
      << "x of the 7.65M target)\n\n";

  const FlopReport flops = count_flops(cfg, size, size);
  out << "operation count at " << size << "x" << size << ":\n";
  for (const auto& [cat, v] : flops.by_category)
    out << "  " << std::left << std::setw(24) << cat << std::right << std::setw(10)
        << std::setprecision(3) << v / 1e9 << " G\n";
  out << "  " << std::left << std::setw(24) << "total" << std::right << std::setw(10)
      << flops.total / 1e9 << " G";
  if (size == 128)
    out << "  (" << std::setprecision(2) << flops.total / kTargetFlops128
        << "x of the 13.9G target)";
  out << std::defaultfloat << '\n';
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const auto parsed = parse_args(argc, argv, out);
    if (!parsed) return kOk;
    const RunConfig& rc = *parsed;
    validate(rc);
    set_num_threads(rc.threads);
    if (rc.subcommand == "denoise") return cmd_denoise(rc, out, err);
    if (rc.subcommand == "train-toy") return cmd_train_toy(rc, out, err);
    if (rc.subcommand == "grad-check") return cmd_grad_check(rc, out, err);
    if (rc.subcommand == "bench") return cmd_bench(rc, out, err);
    if (rc.subcommand == "report") return cmd_report(rc, out, err);
    throw UsageError("unknown subcommand " + rc.subcommand);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun 'adfnet --help' for the list of commands\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const WeightFileError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const ImageIoError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const ImageTooSmall& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NonFiniteLoss& e) {
    err << "error: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace adfnet::cli

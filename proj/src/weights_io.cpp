#include "adfnet/weights_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>

namespace adfnet {
namespace {

constexpr char kMagic[5] = {'A', 'D', 'F', 'W', '1'};
constexpr char kTrailer[4] = {'S', 'T', 'E', 'P'};
constexpr std::uint32_t kMaxFingerprint = 256;
constexpr std::uint32_t kMaxName = 4096;
constexpr std::uint32_t kMaxRecords = 1u << 20;
const std::string kMomentM = "adam.m/";
const std::string kMomentV = "adam.v/";

template <class U>
void put(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), b.size());
}

template <class U>
U get(std::istream& is, const std::string& what) {
  std::array<unsigned char, sizeof(U)> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size()))
    throw WeightFileError("weight file truncated while reading " + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_tensor(os, t);
}

struct Parsed {
  std::vector<std::uint32_t> fingerprint;
  std::map<std::string, Tensor> records;
  bool has_trailer = false;
  std::uint64_t step = 0;
  std::uint64_t iteration = 0;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WeightFileError("cannot open weight file " + path.string());
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw WeightFileError(path.string() + " is not a weight file (bad magic)");
  Parsed p;
  const auto fp_len = get<std::uint32_t>(is, "fingerprint length");
  if (fp_len == 0 || fp_len > kMaxFingerprint)
    throw WeightFileError("implausible fingerprint length " + std::to_string(fp_len));
  for (std::uint32_t i = 0; i < fp_len; ++i)
    p.fingerprint.push_back(get<std::uint32_t>(is, "fingerprint"));
  const auto count = get<std::uint32_t>(is, "record count");
  if (count > kMaxRecords) throw WeightFileError("implausible record count");
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto len = get<std::uint32_t>(is, "record name length");
    if (len == 0 || len > kMaxName) throw WeightFileError("implausible record name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw WeightFileError("weight file truncated in record name");
    Tensor t;
    try {
      t = read_tensor<float>(is);
    } catch (const std::exception& e) {
      throw WeightFileError("record '" + name + "': " + e.what());
    }
    if (!p.records.emplace(std::move(name), std::move(t)).second)
      throw WeightFileError("duplicate record in weight file");
  }
  char tag[4];
  if (is.read(tag, 4)) {
    if (std::memcmp(tag, kTrailer, 4) != 0) throw WeightFileError("unexpected trailing data");
    p.has_trailer = true;
    p.step = get<std::uint64_t>(is, "optimizer step");
    p.iteration = get<std::uint64_t>(is, "iteration");
    if (is.peek() != std::char_traits<char>::eof())
      throw WeightFileError("unexpected data after checkpoint trailer");
  } else if (is.gcount() != 0) {
    throw WeightFileError("weight file truncated in trailer");
  }
  return p;
}

NetworkConfig check_config(const Parsed& p, const NetworkConfig* expected) {
  NetworkConfig cfg;
  try {
    cfg = config_from_fingerprint(p.fingerprint);
  } catch (const std::invalid_argument& e) {
    throw WeightFileError(std::string("invalid configuration fingerprint: ") + e.what());
  }
  if (expected && config_fingerprint(*expected) != p.fingerprint)
    throw FingerprintMismatch("weight file was written for a different network configuration");
  return cfg;
}

ParamStore<float> assemble(const Parsed& p, const NetworkConfig& cfg, bool with_moments) {
  const ParamLayout layout = network_layout(cfg);
  std::size_t expected_records = layout.size() * (with_moments ? 3 : 1);
  ParamStore<float> store;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    const auto it = p.records.find(name);
    if (it == p.records.end()) throw WeightFileError("missing record '" + name + "'");
    if (it->second.shape() != shape)
      throw WeightFileError("record '" + name + "' has shape " + it->second.shape().str() +
                            ", expected " + shape.str());
    return it->second;
  };
  for (const auto& spec : layout) {
    auto& e = store.add(spec.name, fetch(spec.name, spec.shape));
    if (with_moments) {
      e.adam_m = fetch(kMomentM + spec.name, spec.shape);
      e.adam_v = fetch(kMomentV + spec.name, spec.shape);
    }
  }
  std::size_t known = 0;
  for (const auto& [name, t] : p.records) {
    const bool moment = name.rfind(kMomentM, 0) == 0 || name.rfind(kMomentV, 0) == 0;
    if (!moment || with_moments) ++known;
    if (!moment && !store.contains(name))
      throw WeightFileError("unexpected record '" + name + "'");
  }
  if (known != expected_records) throw WeightFileError("unexpected records in weight file");
  return store;
}

void write_file(const std::filesystem::path& path, const NetworkConfig& config,
                const ParamStore<float>& params, const Checkpoint* ckpt) {
  const ParamLayout layout = network_layout(config);
  if (layout.size() != params.size())
    throw WeightFileError("parameter set does not match the configuration");
  for (const auto& spec : layout)
    if (!params.contains(spec.name) || params.value(spec.name).shape() != spec.shape)
      throw WeightFileError("parameter '" + spec.name + "' does not match the configuration");

  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw WeightFileError("cannot write " + path.string());
    os.write(kMagic, 5);
    const auto fp = config_fingerprint(config);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(fp.size()));
    for (auto v : fp) put<std::uint32_t>(os, v);
    const std::size_t records = layout.size() * (ckpt ? 3 : 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(records));
    for (const auto& e : params) put_record(os, e.name, e.value);
    if (ckpt) {
      for (const auto& e : params) put_record(os, kMomentM + e.name, e.adam_m);
      for (const auto& e : params) put_record(os, kMomentV + e.name, e.adam_v);
      os.write(kTrailer, 4);
      put<std::uint64_t>(os, ckpt->adam.step);
      put<std::uint64_t>(os, ckpt->iteration);
    }
    if (!os.flush()) throw WeightFileError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<std::uint32_t> config_fingerprint(const NetworkConfig& c) {
  c.validate();
  std::vector<std::uint32_t> fp;
  fp.push_back(static_cast<std::uint32_t>(c.scales));
  for (auto ch : c.channels) fp.push_back(static_cast<std::uint32_t>(ch));
  fp.push_back(static_cast<std::uint32_t>(c.k));
  fp.push_back(static_cast<std::uint32_t>(c.dilations.size()));
  for (auto d : c.dilations) fp.push_back(static_cast<std::uint32_t>(d));
  fp.push_back(static_cast<std::uint32_t>(c.encoder_blocks));
  fp.push_back(static_cast<std::uint32_t>(c.decoder_blocks));
  fp.push_back(c.activation == graph::Activation::Relu ? 0u : 1u);
  fp.push_back(static_cast<std::uint32_t>(c.in_channels));
  fp.push_back(c.decode_lowest ? 1u : 0u);
  return fp;
}

NetworkConfig config_from_fingerprint(const std::vector<std::uint32_t>& fp) {
  std::size_t i = 0;
  auto next = [&]() -> std::uint32_t {
    if (i >= fp.size()) throw std::invalid_argument("fingerprint too short");
    return fp[i++];
  };
  NetworkConfig c;
  c.scales = next();
  if (c.scales == 0 || c.scales > 8) throw std::invalid_argument("bad scale count");
  c.channels.clear();
  for (std::size_t s = 0; s < c.scales; ++s) c.channels.push_back(next());
  c.k = next();
  const std::uint32_t nd = next();
  if (nd == 0 || nd > 16) throw std::invalid_argument("bad dilation count");
  c.dilations.clear();
  for (std::uint32_t d = 0; d < nd; ++d) c.dilations.push_back(next());
  c.encoder_blocks = next();
  c.decoder_blocks = next();
  const std::uint32_t act = next();
  if (act > 1) throw std::invalid_argument("bad activation id");
  c.activation = act == 0 ? graph::Activation::Relu : graph::Activation::LeakyRelu;
  c.in_channels = next();
  const std::uint32_t lowest = next();
  if (lowest > 1) throw std::invalid_argument("bad decode_lowest flag");
  c.decode_lowest = lowest == 1;
  if (i != fp.size()) throw std::invalid_argument("fingerprint too long");
  c.validate();
  return c;
}

void save_weights(const ParamStore<float>& params, const NetworkConfig& config,
                  const std::filesystem::path& path) {
  write_file(path, config, params, nullptr);
}

ParamStore<float> load_weights(const std::filesystem::path& path, const NetworkConfig& expected) {
  const Parsed p = parse(path);
  const NetworkConfig cfg = check_config(p, &expected);
  return assemble(p, cfg, false);
}

ParamStore<float> load_weights(const std::filesystem::path& path, NetworkConfig* config_out) {
  const Parsed p = parse(path);
  const NetworkConfig cfg = check_config(p, nullptr);
  ParamStore<float> store = assemble(p, cfg, false);
  if (config_out) *config_out = cfg;
  return store;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, ckpt.config, ckpt.params, &ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Parsed p = parse(path);
  if (!p.has_trailer) throw WeightFileError(path.string() + " holds weights only, not a checkpoint");
  Checkpoint c;
  c.config = check_config(p, nullptr);
  c.params = assemble(p, c.config, true);
  c.adam.step = p.step;
  c.iteration = p.iteration;
  return c;
}

}  // namespace adfnet

#include "adfnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace adfnet {

Tensor awgn_noise(const Shape& shape, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("noise level must be non-negative");
  Tensor out(shape);
  if (sigma == 0.0) return out;
  const double std = sigma / 255.0;
  for (auto& v : out.values()) v = static_cast<float>(std * rng.gaussian());
  return out;
}

Tensor add_awgn(const Tensor& image, double sigma, Rng& rng) {
  if (sigma == 0.0) return image;
  return clamp(add(image, awgn_noise(image.shape(), sigma, rng)), 0.0f, 1.0f);
}

Tensor hflip(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t i = 0; i < s.w; ++i) out(n, c, y, i) = x(n, c, y, s.w - 1 - i);
  return out;
}

Tensor vflip(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        std::copy_n(x.plane(n, c) + (s.h - 1 - y) * s.w, s.w, out.plane(n, c) + y * s.w);
  return out;
}

Tensor rot90(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h != s.w) throw ShapeError("rot90 needs square planes, got " + s.str());
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t i = 0; i < s.w; ++i) out(n, c, s.w - 1 - i, y) = x(n, c, y, i);
  return out;
}

PatchBatch sample_patches(const std::vector<Tensor>& images, std::size_t p, std::size_t n,
                          bool augment, double sigma, Rng& rng) {
  if (images.empty()) throw std::invalid_argument("sample_patches: no images");
  if (p == 0 || n == 0) throw std::invalid_argument("sample_patches: empty batch");
  for (const auto& img : images)
    if (img.shape().h < p || img.shape().w < p)
      throw ImageTooSmall("image " + img.shape().str() + " is smaller than patch size " +
                          std::to_string(p));
  std::vector<Tensor> clean, noisy;
  clean.reserve(n);
  noisy.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& img = images[rng.below(images.size())];
    const std::size_t y0 = rng.below(img.shape().h - p + 1);
    const std::size_t x0 = rng.below(img.shape().w - p + 1);
    Tensor patch = crop_region(img, y0, x0, p, p);
    if (augment) {
      const bool h = rng.coin(), v = rng.coin(), r = rng.coin();
      if (h) patch = hflip(patch);
      if (v) patch = vflip(patch);
      if (r) patch = rot90(patch);
    }
    Rng noise_rng = rng.fork(i);
    noisy.push_back(add(patch, awgn_noise(patch.shape(), sigma, noise_rng)));
    clean.push_back(std::move(patch));
  }
  return {stack_batch(std::span<const Tensor>(noisy)), stack_batch(std::span<const Tensor>(clean)),
          sigma};
}

Tensor synthetic_image(std::size_t h, std::size_t w, Rng& rng) {
  using Color = std::array<float, 3>;
  auto color = [&] {
    return Color{float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
  };
  Tensor img({1, 3, h, w});
  const Color c0 = color(), c1 = color();
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double span = std::abs(ux) * w + std::abs(uy) * h + 1.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double t = (ux * x + uy * y) / span;
      t = t - std::floor(t);
      for (std::size_t c = 0; c < 3; ++c)
        img(0, c, y, x) = static_cast<float>(c0[c] + (c1[c] - c0[c]) * t);
    }

  const std::size_t shapes = 6 + rng.below(6);
  for (std::size_t k = 0; k < shapes; ++k) {
    const Color fill = color();
    const double cy = rng.uniform(0.0, double(h)), cx = rng.uniform(0.0, double(w));
    const double ry = rng.uniform(0.08, 0.3) * h, rx = rng.uniform(0.08, 0.3) * w;
    const auto kind = rng.below(3);
    const double freq = rng.uniform(0.3, 1.2);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (double(y) - cy) / ry, dx = (double(x) - cx) / rx;
        const bool inside =
            kind == 1 ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        float shade = 1.0f;
        if (kind == 2) shade = static_cast<float>(0.75 + 0.25 * std::sin(freq * x + phase));
        for (std::size_t c = 0; c < 3; ++c)
          img(0, c, y, x) = std::clamp(fill[c] * shade, 0.0f, 1.0f);
      }
  }
  return img;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) {
      return static_cast<char>(std::tolower(ch));
    });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace adfnet

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "adfnet/rng.hpp"
#include "adfnet/tensor.hpp"

namespace adfnet {

class ImageTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// noisy = clean + noise, unclamped, so the pair keeps the exact noise field.
struct PatchBatch {
  Tensor noisy;
  Tensor clean;
  double sigma = 0.0;
};

/// i.i.d. N(0, (sigma / 255)^2) field; sigma is in 8-bit units.
Tensor awgn_noise(const Shape& shape, double sigma, Rng& rng);

/// clamp(img + awgn_noise(...), 0, 1).
Tensor add_awgn(const Tensor& image, double sigma, Rng& rng);

Tensor hflip(const Tensor& x);
Tensor vflip(const Tensor& x);
/// Quarter turn counter-clockwise; square planes only.
Tensor rot90(const Tensor& x);

/// n random p x p crops. Each crop picks its image and position uniformly;
/// with augment, h-flip, v-flip and rot90 are applied independently with
/// probability 1/2. Noise for patch i comes from rng.fork(i).
PatchBatch sample_patches(const std::vector<Tensor>& images, std::size_t p, std::size_t n,
                          bool augment, double sigma, Rng& rng);

/// Deterministic procedural RGB image: smooth gradients, flat shapes with
/// hard edges and a few stripe textures, values in [0, 1].
Tensor synthetic_image(std::size_t h, std::size_t w, Rng& rng);

/// *.png files directly inside dir, sorted lexicographically.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace adfnet

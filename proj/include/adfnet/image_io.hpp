#pragma once

#include <filesystem>
#include <stdexcept>

#include "adfnet/tensor.hpp"

namespace adfnet {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads any PNG as 8-bit RGB into a 1x3xhxw tensor with values v/255.
Tensor load_png(const std::filesystem::path& path);

/// Writes a 1x3xhxw (or 1x1xhxw) tensor as 8-bit PNG, clamping to [0, 1]
/// and rounding to the nearest level.
void save_png(const Tensor& image, const std::filesystem::path& path);

/// Quantizes to the 8-bit levels save_png would store.
Tensor quantize8(const Tensor& image);

}  // namespace adfnet

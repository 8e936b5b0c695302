#include "adfnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace adfnet {
namespace {

std::uint8_t to_level(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Tensor load_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw ImageIoError("cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageIoError("cannot decode " + path.string() + ": " + img.message);
  }
  const std::size_t h = img.height, w = img.width;
  Tensor out({1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out(0, c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

void save_png(const Tensor& image, const std::filesystem::path& path) {
  const Shape& s = image.shape();
  if (s.n != 1 || (s.c != 3 && s.c != 1))
    throw ImageIoError("save_png expects a 1x3xhxw or 1x1xhxw tensor, got " + s.str());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(s.w);
  img.height = static_cast<png_uint_32>(s.h);
  img.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(s.c * s.h * s.w);
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x)
      for (std::size_t c = 0; c < s.c; ++c)
        buf[(y * s.w + x) * s.c + c] = to_level(image(0, c, y, x));
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw ImageIoError("cannot write " + path.string() + ": " + img.message);
}

Tensor quantize8(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i)
    out[i] = static_cast<float>(to_level(image[i])) / 255.0f;
  return out;
}

}  // namespace adfnet

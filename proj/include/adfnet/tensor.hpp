#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adfnet {

/// Extent of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense (n, c, h, w) array in row-major order. Value semantics: copies are
/// deep and no operation in this library mutates its inputs.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor zeros(Shape shape) { return BasicTensor(shape); }
  static BasicTensor ones(Shape shape) { return BasicTensor(shape, T(1)); }
  static BasicTensor full(Shape shape, T value) { return BasicTensor(shape, value); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  /// Bounds-checked element access.
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  T* plane(std::size_t n, std::size_t c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(std::size_t n, std::size_t c) const { return data_.data() + offset(n, c, 0, 0); }

  /// Same data, new extent. Element count must match.
  BasicTensor reshaped(Shape shape) const;

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

enum class Axis : unsigned { N = 1u, C = 2u, H = 4u, W = 8u };

/// Subset of {n, c, h, w}.
class Axes {
 public:
  constexpr Axes() = default;
  constexpr Axes(std::initializer_list<Axis> axes) {
    for (Axis a : axes) bits_ |= static_cast<unsigned>(a);
  }
  constexpr bool has(Axis a) const { return (bits_ & static_cast<unsigned>(a)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr unsigned bits() const { return bits_; }

 private:
  unsigned bits_ = 0;
};

Shape reduced_shape(const Shape& s, Axes axes);

// Broadcasting: `b` may have any dimension equal to 1 where `a` is larger;
// the result always has a's shape.
bool broadcastable(const Shape& target, const Shape& operand);

template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& a, T s);
template <class T> BasicTensor<T> sigmoid(const BasicTensor<T>& a);
template <class T> BasicTensor<T> relu(const BasicTensor<T>& a);
template <class T> BasicTensor<T> leaky_relu(const BasicTensor<T>& a, T slope);
template <class T> BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi);

/// Sums `g` (shaped like the broadcast result) back down to `target`.
template <class T> BasicTensor<T> reduce_sum_to(const BasicTensor<T>& g, const Shape& target);
template <class T> BasicTensor<T> reduce_mean(const BasicTensor<T>& x, Axes axes);
/// Expands `x` (a reduced shape) to `target` by repetition.
template <class T> BasicTensor<T> broadcast_to(const BasicTensor<T>& x, const Shape& target);

template <class T> BasicTensor<T> pad_zero(const BasicTensor<T>& x, std::size_t pad);
/// Removes `pad` rows/columns from every side.
template <class T> BasicTensor<T> crop(const BasicTensor<T>& x, std::size_t pad);
template <class T>
BasicTensor<T> crop_region(const BasicTensor<T>& x, std::size_t y0, std::size_t x0, std::size_t h,
                           std::size_t w);
/// Reflection padding on the bottom and right edges (mirror without edge repeat).
template <class T>
BasicTensor<T> reflect_pad(const BasicTensor<T>& x, std::size_t bottom, std::size_t right);

template <class T> BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);
template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count);
template <class T> BasicTensor<T> slice_batch(const BasicTensor<T>& x, std::size_t index);
template <class T> BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items);

/// Bilinear interpolation at fractional (row, col) of plane (n, c). Taps that
/// fall outside the grid read as zero; a sample at or beyond one pixel past the
/// border returns exactly zero.
template <class T>
T bilinear_sample(const BasicTensor<T>& x, std::size_t n, std::size_t c, T row, T col);

template <class T> double sum(const BasicTensor<T>& x);
template <class T> double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> bool all_finite(const BasicTensor<T>& x);

// Serialization: 16-byte header of four little-endian u32 dims, then n*c*h*w
// little-endian f32 values. Double tensors are narrowed on write.
template <class T> void write_tensor(std::ostream& os, const BasicTensor<T>& x);
template <class T> BasicTensor<T> read_tensor(std::istream& is);

}  // namespace adfnet

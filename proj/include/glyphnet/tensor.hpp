#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace glyphnet {

namespace detail {

// Training allocates and frees multi-megabyte activation buffers every step.
// Left to its defaults, glibc serves each one with mmap and returns it with
// munmap, so the process spends its time faulting freshly zeroed pages back
// in. Raising the thresholds keeps freed blocks in the heap for reuse.
inline const bool malloc_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace detail

/// Error thrown when tensor shapes do not line up for an operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

/// Dense rank-1..4 array of reals in row-major order. Images use
/// (batch, channels, height, width); feature matrices use (batch, features).
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(shape_numel(shape_)), Real(0));
  }

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor full(Shape shape, Real v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  Real& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  Real& at(int a, int b) { return data_[static_cast<size_t>(a) * dim(1) + b]; }
  Real at(int a, int b) const { return data_[static_cast<size_t>(a) * dim(1) + b]; }

  Real& at(int b, int c, int h, int w) {
    return data_[((static_cast<size_t>(b) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  Real at(int b, int c, int h, int w) const {
    return data_[((static_cast<size_t>(b) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(Real v) {
    for (auto& x : data_) x = v;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return Tensor<Other>(shape_, std::move(out));
  }

 private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 4)
      throw ShapeError("tensor rank must be 1..4, got " + shape_str(shape_));
    for (int d : shape_)
      if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<Real> data_;
};

}  // namespace glyphnet

#pragma once

// Small conveniences shared by the test files: literal tensor builders,
// random fills, bit-equality, and a scalar "random projection" loss built
// from reshape+matmul so any tensor can feed Tape::backward.

#include <cstdint>
#include <vector>

#include "glyphnet/ops.hpp"
#include "glyphnet/rng.hpp"
#include "glyphnet/tensor.hpp"

namespace testutil {

template <typename Real>
glyphnet::Tensor<Real> tensor_of(glyphnet::Shape shape, std::vector<Real> vals) {
  return glyphnet::Tensor<Real>(std::move(shape), std::move(vals));
}

template <typename Real>
glyphnet::Tensor<Real> rand_tensor(glyphnet::Rng& rng, glyphnet::Shape shape, double lo = -1.0,
                                   double hi = 1.0) {
  glyphnet::Tensor<Real> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

template <typename Real>
bool bit_equal(const glyphnet::Tensor<Real>& a, const glyphnet::Tensor<Real>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

template <typename Real>
std::vector<Real> rand_proj(glyphnet::Rng& rng, std::int64_t n) {
  std::vector<Real> r(static_cast<size_t>(n));
  for (auto& v : r) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return r;
}

/// Scalar node sum_i y[i] * r[i], recorded on the tape, so backward seeds
/// every element of y with the weight r[i].
template <typename Real>
glyphnet::NodePtr<Real> project(glyphnet::Tape<Real>& tape, glyphnet::NodePtr<Real> y,
                                const std::vector<Real>& r) {
  const int n = static_cast<int>(y->value.numel());
  auto flat = glyphnet::reshape(tape, y, glyphnet::Shape{1, n});
  auto rn = glyphnet::make_node(
      glyphnet::Tensor<Real>(glyphnet::Shape{n, 1}, std::vector<Real>(r.begin(), r.end())),
      "projection");
  return glyphnet::matmul(tape, flat, rn);
}

/// The projected value sum_i t[i] * r[i] evaluated directly in double;
/// the finite-difference harness re-evaluates forwards through this.
template <typename Real>
double dot(const glyphnet::Tensor<Real>& t, const std::vector<Real>& r) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.numel(); ++i)
    acc += static_cast<double>(t[i]) * static_cast<double>(r[static_cast<size_t>(i)]);
  return acc;
}

}  // namespace testutil

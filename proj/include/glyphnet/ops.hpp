#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glyphnet/gemm.hpp"
#include "glyphnet/rng.hpp"
#include "glyphnet/tape.hpp"
#include "glyphnet/tensor.hpp"

namespace glyphnet {

namespace detail {

template <typename Real>
NodePtr<Real> make_op_node(Tensor<Real> value, const char* producer,
                           std::vector<NodePtr<Real>> inputs) {
  auto n = make_node<Real>(std::move(value));
  n->producer = producer;
  n->producer_inputs = std::move(inputs);
  return n;
}

}  // namespace detail

/// Elementwise sum of two same-shape tensors.
template <typename Real>
NodePtr<Real> add(Tape<Real>& tape, NodePtr<Real> a, NodePtr<Real> b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("add: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                     shape_str(b->value.shape()));
  Tensor<Real> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  auto y = detail::make_op_node(std::move(out), "add", {a, b});
  tape.record(y, [a, b, y] {
    if (!y->has_grad()) return;
    auto& da = a->grad_buf();
    auto& db = b->grad_buf();
    for (std::int64_t i = 0; i < y->grad.numel(); ++i) {
      da[i] += y->grad[i];
      db[i] += y->grad[i];
    }
  });
  return y;
}

/// max(x, 0); the subgradient at exactly 0 is taken as 0.
template <typename Real>
NodePtr<Real> relu(Tape<Real>& tape, NodePtr<Real> x) {
  Tensor<Real> out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = x->value[i] > Real(0) ? x->value[i] : Real(0);
  auto y = detail::make_op_node(std::move(out), "relu", {x});
  tape.record(y, [x, y] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
    for (std::int64_t i = 0; i < y->grad.numel(); ++i)
      if (x->value[i] > Real(0)) dx[i] += y->grad[i];
  });
  return y;
}

/// Inverted dropout: at train time each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); inference passes through.
template <typename Real>
NodePtr<Real> dropout(Tape<Real>& tape, NodePtr<Real> x, double rate, bool training,
                      Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const Real scale = Real(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<Real>>(static_cast<size_t>(x->value.numel()));
  Tensor<Real> out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const Real m = rng.next_double() < rate ? Real(0) : scale;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] = x->value[i] * m;
  }
  auto y = detail::make_op_node(std::move(out), "dropout", {x});
  tape.record(y, [x, y, mask] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
    for (std::int64_t i = 0; i < y->grad.numel(); ++i)
      dx[i] += y->grad[i] * (*mask)[static_cast<size_t>(i)];
  });
  return y;
}

/// Rank-2 matrix product: (M,K) x (K,N) -> (M,N).
template <typename Real>
NodePtr<Real> matmul(Tape<Real>& tape, NodePtr<Real> a, NodePtr<Real> b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->value.shape()) + " x " +
                     shape_str(b->value.shape()));
  const int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
  Tensor<Real> out({M, N});
  gemm(Trans::N, Trans::N, M, N, K, Real(1), a->value.data(), K, b->value.data(), N, Real(0),
       out.data(), N);
  auto y = detail::make_op_node(std::move(out), "matmul", {a, b});
  tape.record(y, [a, b, y, M, N, K] {
    if (!y->has_grad()) return;
    // dA = dY * B^T ; dB = A^T * dY
    gemm(Trans::N, Trans::T, M, K, N, Real(1), y->grad.data(), N, b->value.data(), N, Real(1),
         a->grad_buf().data(), K);
    gemm(Trans::T, Trans::N, K, N, M, Real(1), a->value.data(), K, y->grad.data(), N, Real(1),
         b->grad_buf().data(), N);
  });
  return y;
}

/// Fully connected layer: y = x W + bias, with x (B,F), W (F,O), bias (O).
template <typename Real>
NodePtr<Real> linear(Tape<Real>& tape, NodePtr<Real> x, NodePtr<Real> w, NodePtr<Real> bias) {
  if (x->value.rank() != 2 || w->value.rank() != 2 || bias->value.rank() != 1 ||
      x->value.dim(1) != w->value.dim(0) || w->value.dim(1) != bias->value.dim(0))
    throw ShapeError("linear: incompatible shapes x" + shape_str(x->value.shape()) + " W" +
                     shape_str(w->value.shape()) + " b" + shape_str(bias->value.shape()));
  const int B = x->value.dim(0), F = x->value.dim(1), O = w->value.dim(1);
  Tensor<Real> out({B, O});
  gemm(Trans::N, Trans::N, B, O, F, Real(1), x->value.data(), F, w->value.data(), O, Real(0),
       out.data(), O);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < O; ++j) out.at(i, j) += bias->value[j];
  auto y = detail::make_op_node(std::move(out), "linear", {x, w, bias});
  tape.record(y, [x, w, bias, y, B, F, O] {
    if (!y->has_grad()) return;
    gemm(Trans::N, Trans::T, B, F, O, Real(1), y->grad.data(), O, w->value.data(), O, Real(1),
         x->grad_buf().data(), F);
    gemm(Trans::T, Trans::N, F, O, B, Real(1), x->value.data(), F, y->grad.data(), O, Real(1),
         w->grad_buf().data(), O);
    auto& db = bias->grad_buf();
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < O; ++j) db[j] += y->grad.at(i, j);
  });
  return y;
}

/// Copy into a new shape with the same element count (row-major order kept).
template <typename Real>
NodePtr<Real> reshape(Tape<Real>& tape, NodePtr<Real> x, Shape shape) {
  Tensor<Real> out(std::move(shape));
  if (out.numel() != x->value.numel())
    throw ShapeError("reshape: element count changes from " + shape_str(x->value.shape()) +
                     " to " + shape_str(out.shape()));
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i];
  auto y = detail::make_op_node(std::move(out), "reshape", {x});
  tape.record(y, [x, y] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
    for (std::int64_t i = 0; i < y->grad.numel(); ++i) dx[i] += y->grad[i];
  });
  return y;
}

/// (B,C,H,W) -> (B, C*H*W).
template <typename Real>
NodePtr<Real> flatten(Tape<Real>& tape, NodePtr<Real> x) {
  if (x->value.rank() != 4)
    throw ShapeError("flatten expects rank-4 input, got " + shape_str(x->value.shape()));
  const auto& s = x->value.shape();
  return reshape(tape, x, Shape{s[0], s[1] * s[2] * s[3]});
}

/// Join rank-4 tensors along the channel axis (same B,H,W everywhere).
template <typename Real>
NodePtr<Real> concat_channels(Tape<Real>& tape, std::vector<NodePtr<Real>> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const auto& s0 = xs[0]->value.shape();
  int ctotal = 0;
  for (const auto& x : xs) {
    if (x->value.rank() != 4 || x->value.dim(0) != s0[0] || x->value.dim(2) != s0[2] ||
        x->value.dim(3) != s0[3])
      throw ShapeError("concat_channels: mismatched shape " + shape_str(x->value.shape()) +
                       " vs " + shape_str(s0));
    ctotal += x->value.dim(1);
  }
  const int B = s0[0], H = s0[2], W = s0[3];
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor<Real> out({B, ctotal, H, W});
  for (int b = 0; b < B; ++b) {
    std::int64_t off = 0;
    for (const auto& x : xs) {
      const std::int64_t n = static_cast<std::int64_t>(x->value.dim(1)) * plane;
      const Real* src = x->value.data() + static_cast<std::int64_t>(b) * n;
      Real* dst = out.data() + (static_cast<std::int64_t>(b) * ctotal) * plane + off;
      std::copy(src, src + n, dst);
      off += n;
    }
  }
  auto y = detail::make_op_node(std::move(out), "concat", xs);
  tape.record(y, [xs, y, B, ctotal, plane] {
    if (!y->has_grad()) return;
    for (const auto& x : xs) x->grad_buf();
    for (int b = 0; b < B; ++b) {
      std::int64_t off = 0;
      for (const auto& x : xs) {
        const std::int64_t n = static_cast<std::int64_t>(x->value.dim(1)) * plane;
        const Real* src = y->grad.data() + (static_cast<std::int64_t>(b) * ctotal) * plane + off;
        Real* dst = x->grad.data() + static_cast<std::int64_t>(b) * n;
        for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
        off += n;
      }
    }
  });
  return y;
}

/// (B,C,H,W) -> (B,C), averaging each feature map.
template <typename Real>
NodePtr<Real> global_avg_pool(Tape<Real>& tape, NodePtr<Real> x) {
  if (x->value.rank() != 4)
    throw ShapeError("global_avg_pool expects rank-4 input, got " +
                     shape_str(x->value.shape()));
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor<Real> out({B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const Real* p = x->value.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
      double acc = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
      out.at(b, c) = static_cast<Real>(acc / static_cast<double>(plane));
    }
  auto y = detail::make_op_node(std::move(out), "global_avg_pool", {x});
  tape.record(y, [x, y, B, C, plane] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
    const Real inv = Real(1.0 / static_cast<double>(plane));
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const Real g = y->grad.at(b, c) * inv;
        Real* p = dx.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) p[i] += g;
      }
  });
  return y;
}

/// Row-wise softmax over a (B,K) matrix, stabilized by a per-row max shift.
template <typename Real>
NodePtr<Real> softmax(Tape<Real>& tape, NodePtr<Real> logits) {
  if (logits->value.rank() != 2)
    throw ShapeError("softmax expects rank-2 input, got " + shape_str(logits->value.shape()));
  if (!logits->value.all_finite())
    throw std::domain_error("softmax: logits contain a non-finite value");
  const int B = logits->value.dim(0), K = logits->value.dim(1);
  Tensor<Real> out({B, K});
  for (int i = 0; i < B; ++i) {
    Real mx = logits->value.at(i, 0);
    for (int j = 1; j < K; ++j) mx = std::max(mx, logits->value.at(i, j));
    double z = 0.0;
    for (int j = 0; j < K; ++j) {
      const double e = std::exp(static_cast<double>(logits->value.at(i, j) - mx));
      out.at(i, j) = static_cast<Real>(e);
      z += e;
    }
    const Real inv = static_cast<Real>(1.0 / z);
    for (int j = 0; j < K; ++j) out.at(i, j) *= inv;
  }
  auto y = detail::make_op_node(std::move(out), "softmax", {logits});
  tape.record(y, [logits, y, B, K] {
    // When the only consumer routed its gradient straight to the logits
    // (fused cross-entropy), y->grad stays empty and there is nothing to do.
    if (!y->has_grad()) return;
    auto& dx = logits->grad_buf();
    for (int i = 0; i < B; ++i) {
      double dot = 0.0;
      for (int j = 0; j < K; ++j)
        dot += static_cast<double>(y->grad.at(i, j)) * static_cast<double>(y->value.at(i, j));
      for (int j = 0; j < K; ++j)
        dx.at(i, j) += static_cast<Real>(
            static_cast<double>(y->value.at(i, j)) *
            (static_cast<double>(y->grad.at(i, j)) - dot));
    }
  });
  return y;
}

/// Mean categorical cross-entropy of predicted class probabilities (B,K)
/// against integer labels: L = -(1/B) sum_i log p[i, label_i], with
/// probabilities clamped at 1e-12 before the log.
///
/// When `probs` came from softmax, the backward step writes the fused
/// gradient (p - onehot)/B straight into the logits, bypassing the separate
/// softmax Jacobian for both speed and numerical robustness.
template <typename Real>
NodePtr<Real> cross_entropy(Tape<Real>& tape, NodePtr<Real> probs,
                            std::vector<int> labels) {
  if (probs->value.rank() != 2)
    throw ShapeError("cross_entropy expects rank-2 probabilities, got " +
                     shape_str(probs->value.shape()));
  const int B = probs->value.dim(0), K = probs->value.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  for (int lb : labels)
    if (lb < 0 || lb >= K)
      throw std::out_of_range("cross_entropy: label " + std::to_string(lb) +
                              " outside [0," + std::to_string(K) + ")");
  constexpr double kClamp = 1e-12;
  double acc = 0.0;
  for (int i = 0; i < B; ++i)
    acc -= std::log(std::max(static_cast<double>(probs->value.at(i, labels[i])), kClamp));
  Tensor<Real> out({1});
  out[0] = static_cast<Real>(acc / B);
  auto y = detail::make_op_node(std::move(out), "cross_entropy", {probs});

  const bool fused = probs->producer == "softmax" && !probs->producer_inputs.empty();
  NodePtr<Real> logits = fused ? probs->producer_inputs[0] : nullptr;
  tape.record(y, [probs, y, labels = std::move(labels), B, K, fused, logits] {
    if (!y->has_grad()) return;
    const Real up = y->grad[0];
    if (up == Real(0)) return;
    if (fused) {
      auto& dl = logits->grad_buf();
      const Real invb = Real(1) / Real(B);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < K; ++j) {
          Real g = probs->value.at(i, j) * invb;
          if (j == labels[i]) g -= invb;
          dl.at(i, j) += up * g;
        }
    } else {
      auto& dp = probs->grad_buf();
      for (int i = 0; i < B; ++i) {
        const double p = static_cast<double>(probs->value.at(i, labels[i]));
        if (p > kClamp)
          dp.at(i, labels[i]) += static_cast<Real>(-static_cast<double>(up) / (B * p));
      }
    }
  });
  return y;
}

}  // namespace glyphnet

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyphnet/ops.hpp"

namespace glyphnet {

enum class Pad { Valid, Same };

/// Output extent of a sliding window. `Same` keeps ceil(in/stride); `Valid`
/// places windows fully inside the input.
inline int window_out_size(int in, int k, int stride, Pad pad) {
  if (stride < 1) throw ShapeError("stride must be >= 1, got " + std::to_string(stride));
  if (pad == Pad::Valid) {
    if (in < k)
      throw ShapeError("valid window of size " + std::to_string(k) +
                       " does not fit input extent " + std::to_string(in));
    return (in - k) / stride + 1;
  }
  return (in + stride - 1) / stride;
}

/// Leading (top/left) zero-pad amount; the odd pixel goes to the trailing
/// (bottom/right) side.
inline int pad_before(int in, int k, int stride, int out) {
  const int total = std::max((out - 1) * stride + k - in, 0);
  return total / 2;
}

namespace detail {

/// Lay one image (C,H,W) out as a (C*Kh*Kw, Ho*Wo) patch matrix stored with
/// row stride `ld` (so several images can share one wide matrix side by
/// side). Row index runs over (c, kh, kw) in that nesting order;
/// out-of-bounds taps write 0.
template <typename Real>
void im2col(const Real* x, int C, int H, int W, int Kh, int Kw, int stride, int ph, int pw,
            int Ho, int Wo, Real* col, std::int64_t ld) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < Kh; ++kh)
      for (int kw = 0; kw < Kw; ++kw) {
        Real* row = col + ((static_cast<std::int64_t>(c) * Kh + kh) * Kw + kw) * ld;
        for (int ho = 0; ho < Ho; ++ho) {
          const int h = ho * stride + kh - ph;
          if (h < 0 || h >= H) {
            for (int wo = 0; wo < Wo; ++wo) row[static_cast<std::int64_t>(ho) * Wo + wo] = Real(0);
            continue;
          }
          const Real* src = x + (static_cast<std::int64_t>(c) * H + h) * W;
          for (int wo = 0; wo < Wo; ++wo) {
            const int w = wo * stride + kw - pw;
            row[static_cast<std::int64_t>(ho) * Wo + wo] =
                (w < 0 || w >= W) ? Real(0) : src[w];
          }
        }
      }
}

/// Scatter a (C*Kh*Kw, Ho*Wo) gradient matrix (row stride `ld`) back onto one
/// image, summing overlapping taps.
template <typename Real>
void col2im_add(const Real* col, int C, int H, int W, int Kh, int Kw, int stride, int ph,
                int pw, int Ho, int Wo, std::int64_t ld, Real* dx) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < Kh; ++kh)
      for (int kw = 0; kw < Kw; ++kw) {
        const Real* row = col + ((static_cast<std::int64_t>(c) * Kh + kh) * Kw + kw) * ld;
        for (int ho = 0; ho < Ho; ++ho) {
          const int h = ho * stride + kh - ph;
          if (h < 0 || h >= H) continue;
          Real* dst = dx + (static_cast<std::int64_t>(c) * H + h) * W;
          for (int wo = 0; wo < Wo; ++wo) {
            const int w = wo * stride + kw - pw;
            if (w >= 0 && w < W) dst[w] += row[static_cast<std::int64_t>(ho) * Wo + wo];
          }
        }
      }
}

/// Per-thread scratch block of at least n elements, contents indeterminate.
/// Grow-only and never value-initialized: callers overwrite every cell they
/// use, and a plain resize here would memset/copy hundreds of MB per call.
template <typename Real, int Slot>
Real* conv_workspace(std::size_t n) {
  thread_local std::unique_ptr<Real[]> buf;
  thread_local std::size_t cap = 0;
  if (n > cap) {
    buf.reset();  // free the old block first so peak usage is one buffer
    buf.reset(new Real[n]);
    cap = n;
  }
  return buf.get();
}

}  // namespace detail

/// 2-D convolution (cross-correlation, no kernel flip) of x (B,Ci,H,W) with
/// weights (Co,Ci,Kh,Kw) plus a per-output-channel bias.
///
/// The whole batch is expanded into one wide patch matrix — item b owns the
/// column block [b*Ho*Wo, (b+1)*Ho*Wo) — so forward and both backward
/// products are a single GEMM each. Patch rows follow the (ci,kh,kw) scan of
/// a direct nested-loop evaluation and every output element accumulates its
/// terms in ascending patch-row order, i.e. exactly the summation order of a
/// straightforward reference implementation.
template <typename Real>
NodePtr<Real> conv2d(Tape<Real>& tape, NodePtr<Real> x, NodePtr<Real> w, NodePtr<Real> bias,
                     int stride, Pad pad) {
  if (x->value.rank() != 4 || w->value.rank() != 4 || bias->value.rank() != 1)
    throw ShapeError("conv2d: expected x rank 4, w rank 4, bias rank 1");
  const int B = x->value.dim(0), Ci = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Co = w->value.dim(0), Kh = w->value.dim(2), Kw = w->value.dim(3);
  if (w->value.dim(1) != Ci)
    throw ShapeError("conv2d: weight expects " + std::to_string(w->value.dim(1)) +
                     " input channels, data has " + std::to_string(Ci));
  if (bias->value.dim(0) != Co)
    throw ShapeError("conv2d: bias length " + std::to_string(bias->value.dim(0)) +
                     " != output channels " + std::to_string(Co));
  const int Ho = window_out_size(H, Kh, stride, pad);
  const int Wo = window_out_size(W, Kw, stride, pad);
  const int ph = pad == Pad::Same ? pad_before(H, Kh, stride, Ho) : 0;
  const int pw = pad == Pad::Same ? pad_before(W, Kw, stride, Wo) : 0;
  const int K = Ci * Kh * Kw;
  const std::int64_t ospatial = static_cast<std::int64_t>(Ho) * Wo;
  const std::int64_t cols = static_cast<std::int64_t>(B) * ospatial;

  Tensor<Real> out({B, Co, Ho, Wo});
  {
    Real* col = detail::conv_workspace<Real, 0>(static_cast<size_t>(K) * cols);
    Real* yall = detail::conv_workspace<Real, 1>(static_cast<size_t>(Co) * cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int b = 0; b < B; ++b)
      detail::im2col(x->value.data() + static_cast<std::int64_t>(b) * Ci * H * W, Ci, H, W,
                     Kh, Kw, stride, ph, pw, Ho, Wo, col + b * ospatial, cols);
    gemm(Trans::N, Trans::N, Co, static_cast<int>(cols), K, Real(1), w->value.data(), K,
         col, static_cast<int>(cols), Real(0), yall, static_cast<int>(cols));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Co; ++co) {
        const Real* src = yall + co * cols + b * ospatial;
        Real* dst = out.data() + (static_cast<std::int64_t>(b) * Co + co) * ospatial;
        const Real bv = bias->value[co];
        for (std::int64_t i = 0; i < ospatial; ++i) dst[i] = src[i] + bv;
      }
  }

  auto y = detail::make_op_node(std::move(out), "conv2d", {x, w, bias});
  tape.record(y, [x, w, bias, y, B, Ci, H, W, Co, Kh, Kw, stride, ph, pw, Ho, Wo, K, ospatial,
                  cols] {
    if (!y->has_grad()) return;
    // Bias gradient: deterministic batch-major reduction per channel.
    auto& db = bias->grad_buf();
    for (int co = 0; co < Co; ++co) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) {
        const Real* g =
            y->grad.data() + (static_cast<std::int64_t>(b) * Co + co) * ospatial;
        for (std::int64_t i = 0; i < ospatial; ++i) acc += static_cast<double>(g[i]);
      }
      db[co] += static_cast<Real>(acc);
    }

    Real* col = detail::conv_workspace<Real, 0>(static_cast<size_t>(K) * cols);
    Real* gall = detail::conv_workspace<Real, 1>(static_cast<size_t>(Co) * cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Co; ++co) {
        const Real* src = y->grad.data() + (static_cast<std::int64_t>(b) * Co + co) * ospatial;
        Real* dst = gall + co * cols + b * ospatial;
        std::copy(src, src + ospatial, dst);
      }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int b = 0; b < B; ++b)
      detail::im2col(x->value.data() + static_cast<std::int64_t>(b) * Ci * H * W, Ci, H, W,
                     Kh, Kw, stride, ph, pw, Ho, Wo, col + b * ospatial, cols);

    // Weight gradient in one product: the inner dimension runs over items in
    // ascending order, the same order as accumulating item after item.
    gemm(Trans::N, Trans::T, Co, K, static_cast<int>(cols), Real(1), gall,
         static_cast<int>(cols), col, static_cast<int>(cols), Real(1),
         w->grad_buf().data(), K);

    // Input gradient: dcol = W^T * dY (reusing the patch buffer), then the
    // per-item scatter back onto the image grid.
    gemm(Trans::T, Trans::N, K, static_cast<int>(cols), Co, Real(1), w->value.data(), K,
         gall, static_cast<int>(cols), Real(0), col, static_cast<int>(cols));
    auto& dx = x->grad_buf();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int b = 0; b < B; ++b)
      detail::col2im_add(col + b * ospatial, Ci, H, W, Kh, Kw, stride, ph, pw, Ho, Wo,
                         cols, dx.data() + static_cast<std::int64_t>(b) * Ci * H * W);
  });
  return y;
}

}  // namespace glyphnet

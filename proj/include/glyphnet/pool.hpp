#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyphnet/conv.hpp"

namespace glyphnet {

/// Max over each kxk window. `Same` windows are clipped to the image, so the
/// max never sees padding; ties keep the first cell in (h,w) scan order.
template <typename Real>
NodePtr<Real> max_pool2d(Tape<Real>& tape, NodePtr<Real> x, int k, int stride, Pad pad) {
  if (x->value.rank() != 4)
    throw ShapeError("max_pool2d expects rank-4 input, got " + shape_str(x->value.shape()));
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Ho = window_out_size(H, k, stride, pad);
  const int Wo = window_out_size(W, k, stride, pad);
  const int ph = pad == Pad::Same ? pad_before(H, k, stride, Ho) : 0;
  const int pw = pad == Pad::Same ? pad_before(W, k, stride, Wo) : 0;

  Tensor<Real> out({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<size_t>(out.numel()));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const Real* img = x->value.data() + (static_cast<std::int64_t>(b) * C + c) *
                                              (static_cast<std::int64_t>(H) * W);
      const std::int64_t base = (static_cast<std::int64_t>(b) * C + c) *
                                (static_cast<std::int64_t>(H) * W);
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          bool first = true;
          Real best = Real(0);
          std::int64_t besti = -1;
          for (int kh = 0; kh < k; ++kh) {
            const int h = ho * stride + kh - ph;
            if (h < 0 || h >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int w = wo * stride + kw - pw;
              if (w < 0 || w >= W) continue;
              const Real v = img[static_cast<std::int64_t>(h) * W + w];
              if (first || v > best) {
                best = v;
                besti = base + static_cast<std::int64_t>(h) * W + w;
                first = false;
              }
            }
          }
          if (first)
            throw ShapeError("max_pool2d: window holds no input cells");
          const std::int64_t oi =
              ((static_cast<std::int64_t>(b) * C + c) * Ho + ho) * Wo + wo;
          out[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = besti;
        }
    }

  auto y = detail::make_op_node(std::move(out), "max_pool2d", {x});
  tape.record(y, [x, y, argmax] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
    for (std::int64_t i = 0; i < y->grad.numel(); ++i)
      dx[(*argmax)[static_cast<size_t>(i)]] += y->grad[i];
  });
  return y;
}

/// Mean over each kxk window. `Same` windows are clipped to the image and the
/// divisor counts only real cells, so border means are unbiased.
template <typename Real>
NodePtr<Real> avg_pool2d(Tape<Real>& tape, NodePtr<Real> x, int k, int stride, Pad pad) {
  if (x->value.rank() != 4)
    throw ShapeError("avg_pool2d expects rank-4 input, got " + shape_str(x->value.shape()));
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Ho = window_out_size(H, k, stride, pad);
  const int Wo = window_out_size(W, k, stride, pad);
  const int ph = pad == Pad::Same ? pad_before(H, k, stride, Ho) : 0;
  const int pw = pad == Pad::Same ? pad_before(W, k, stride, Wo) : 0;

  Tensor<Real> out({B, C, Ho, Wo});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const Real* img = x->value.data() + (static_cast<std::int64_t>(b) * C + c) *
                                              (static_cast<std::int64_t>(H) * W);
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = 0.0;
          int n = 0;
          for (int kh = 0; kh < k; ++kh) {
            const int h = ho * stride + kh - ph;
            if (h < 0 || h >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int w = wo * stride + kw - pw;
              if (w < 0 || w >= W) continue;
              acc += static_cast<double>(img[static_cast<std::int64_t>(h) * W + w]);
              ++n;
            }
          }
          if (n == 0) throw ShapeError("avg_pool2d: window holds no input cells");
          out.at(b, c, ho, wo) = static_cast<Real>(acc / n);
        }
    }

  auto y = detail::make_op_node(std::move(out), "avg_pool2d", {x});
  tape.record(y, [x, y, B, C, H, W, Ho, Wo, k, stride, ph, pw] {
    if (!y->has_grad()) return;
    auto& dx = x->grad_buf();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        Real* dimg = dx.data() + (static_cast<std::int64_t>(b) * C + c) *
                                     (static_cast<std::int64_t>(H) * W);
        for (int ho = 0; ho < Ho; ++ho)
          for (int wo = 0; wo < Wo; ++wo) {
            int n = 0;
            for (int kh = 0; kh < k; ++kh) {
              const int h = ho * stride + kh - ph;
              if (h < 0 || h >= H) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int w = wo * stride + kw - pw;
                if (w >= 0 && w < W) ++n;
              }
            }
            const Real g = y->grad.at(b, c, ho, wo) / static_cast<Real>(n);
            for (int kh = 0; kh < k; ++kh) {
              const int h = ho * stride + kh - ph;
              if (h < 0 || h >= H) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int w = wo * stride + kw - pw;
                if (w >= 0 && w < W) dimg[static_cast<std::int64_t>(h) * W + w] += g;
              }
            }
          }
      }
  });
  return y;
}

}  // namespace glyphnet

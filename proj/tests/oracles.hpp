#pragma once

// Reference implementations the suite checks the library against, plus the
// central finite-difference gradient checker. Everything here is written as
// plain nested loops sharing nothing with the library beyond tensor storage,
// so the two sides cannot inherit each other's bugs. Frozen: changes to the
// library must never require changes here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "glyphnet/tensor.hpp"

namespace oracle {

using glyphnet::Tensor;

// ----- window geometry, re-derived ---------------------------------------

inline int out_size(int in, int k, int stride, bool same) {
  if (same) return (in + stride - 1) / stride;  // ceil(in/stride)
  if (in < k) throw std::invalid_argument("oracle: window larger than input");
  return (in - k) / stride + 1;
}

inline int lead_pad(int in, int k, int stride, int out) {
  int total = (out - 1) * stride + k - in;
  if (total < 0) total = 0;
  return total / 2;  // odd pixel trails (bottom/right)
}

// ----- convolution --------------------------------------------------------

// Quadruple-loop cross-correlation over (ci, kh, kw) in ascending order with
// zero padding. Out-of-range taps contribute an explicit 0 term so the
// floating-point op sequence equals a pad-then-correlate evaluation term for
// term; bias is added after the window sum, matching y = W·patch + b.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& bias, int stride, bool same) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
  const int Ho = out_size(H, Kh, stride, same);
  const int Wo = out_size(W, Kw, stride, same);
  const int ph = same ? lead_pad(H, Kh, stride, Ho) : 0;
  const int pw = same ? lead_pad(W, Kw, stride, Wo) : 0;
  Tensor<double> out({B, Co, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = 0.0;
          for (int ci = 0; ci < Ci; ++ci)
            for (int kh = 0; kh < Kh; ++kh)
              for (int kw = 0; kw < Kw; ++kw) {
                const int h = ho * stride + kh - ph;
                const int ww = wo * stride + kw - pw;
                const bool inside = h >= 0 && h < H && ww >= 0 && ww < W;
                acc += w.at(co, ci, kh, kw) * (inside ? x.at(b, ci, h, ww) : 0.0);
              }
          out.at(b, co, ho, wo) = acc + bias[co];
        }
  return out;
}

// ----- pooling ------------------------------------------------------------

// Max over each window; `same` windows are clipped to the image and ties keep
// the first cell in (h, w) scan order.
inline Tensor<double> max_pool2d(const Tensor<double>& x, int k, int stride, bool same) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = out_size(H, k, stride, same);
  const int Wo = out_size(W, k, stride, same);
  const int ph = same ? lead_pad(H, k, stride, Ho) : 0;
  const int pw = same ? lead_pad(W, k, stride, Wo) : 0;
  Tensor<double> out({B, C, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          bool seen = false;
          double best = 0.0;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int h = ho * stride + kh - ph;
              const int w = wo * stride + kw - pw;
              if (h < 0 || h >= H || w < 0 || w >= W) continue;
              const double v = x.at(b, c, h, w);
              if (!seen || v > best) {
                best = v;
                seen = true;
              }
            }
          if (!seen) throw std::logic_error("oracle: empty pooling window");
          out.at(b, c, ho, wo) = best;
        }
  return out;
}

// Mean over each window; clipped `same` windows divide by the count of real
// cells only, accumulated in (kh, kw) scan order.
inline Tensor<double> avg_pool2d(const Tensor<double>& x, int k, int stride, bool same) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = out_size(H, k, stride, same);
  const int Wo = out_size(W, k, stride, same);
  const int ph = same ? lead_pad(H, k, stride, Ho) : 0;
  const int pw = same ? lead_pad(W, k, stride, Wo) : 0;
  Tensor<double> out({B, C, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = 0.0;
          int n = 0;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int h = ho * stride + kh - ph;
              const int w = wo * stride + kw - pw;
              if (h < 0 || h >= H || w < 0 || w >= W) continue;
              acc += x.at(b, c, h, w);
              ++n;
            }
          if (n == 0) throw std::logic_error("oracle: empty pooling window");
          out.at(b, c, ho, wo) = acc / n;
        }
  return out;
}

// ----- finite differences ---------------------------------------------------

// Central finite-difference check of `analytic` (d loss / d param) against
// the scalar forward `f`, which must recompute the loss from param's current
// contents. Every element is probed with h = 1e-4 and must satisfy
// |analytic - numeric| <= tol * max(1, |numeric|) in 64-bit arithmetic.
struct FdReport {
  bool ok = true;
  double worst = 0.0;    // largest relative error seen
  std::int64_t at = -1;  // element index of the worst error
};

inline FdReport fd_check(Tensor<double>& param, const Tensor<double>& analytic,
                         const std::function<double()>& f, double h = 1e-4,
                         double tol = 1e-4) {
  if (!param.same_shape(analytic))
    throw std::logic_error("fd_check: gradient shape mismatch");
  FdReport rep;
  for (std::int64_t i = 0; i < param.numel(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double fp = f();
    param[i] = keep - h;
    const double fm = f();
    param[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (rel > rep.worst) {
      rep.worst = rel;
      rep.at = i;
    }
  }
  rep.ok = rep.worst <= tol;
  return rep;
}

}  // namespace oracle

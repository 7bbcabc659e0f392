#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyphnet/ops.hpp"

namespace glyphnet {

/// Batch normalization. Rank-4 input normalizes each channel over
/// (batch, height, width); rank-2 input normalizes each feature over the
/// batch. Uses the population variance (divide by m, not m-1).
///
/// Training computes batch statistics (m >= 2 required) and folds them into
/// the running averages as running = momentum * running + (1-momentum) * batch.
/// Inference normalizes with the running averages.
template <typename Real>
NodePtr<Real> batch_norm(Tape<Real>& tape, NodePtr<Real> x, NodePtr<Real> gamma,
                         NodePtr<Real> beta, Tensor<Real>& running_mean,
                         Tensor<Real>& running_var, bool training, double momentum = 0.99,
                         double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("batch_norm: epsilon must be positive");
  const int rank = x->value.rank();
  if (rank != 2 && rank != 4)
    throw ShapeError("batch_norm expects rank-2 or rank-4 input, got " +
                     shape_str(x->value.shape()));
  const int B = x->value.dim(0);
  const int C = x->value.dim(1);
  const std::int64_t plane =
      rank == 4 ? static_cast<std::int64_t>(x->value.dim(2)) * x->value.dim(3) : 1;
  const std::int64_t m = static_cast<std::int64_t>(B) * plane;
  if (gamma->value.rank() != 1 || gamma->value.dim(0) != C || beta->value.rank() != 1 ||
      beta->value.dim(0) != C)
    throw ShapeError("batch_norm: gamma/beta must have length " + std::to_string(C));
  if (running_mean.numel() != C || running_var.numel() != C)
    throw ShapeError("batch_norm: running stats must have length " + std::to_string(C));
  if (training && m < 2)
    throw std::invalid_argument("batch_norm: training statistics need at least 2 values per "
                                "channel, got " + std::to_string(m));

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
  auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(C));

  const std::int64_t cstride = C * plane;  // per-item stride
  Tensor<Real> out(x->value.shape());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) {
        const Real* p = x->value.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
      }
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (int b = 0; b < B; ++b) {
        const Real* p = x->value.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      running_mean[c] = static_cast<Real>(momentum * static_cast<double>(running_mean[c]) +
                                          (1.0 - momentum) * mu);
      running_var[c] = static_cast<Real>(momentum * static_cast<double>(running_var[c]) +
                                         (1.0 - momentum) * var);
    } else {
      mu = static_cast<double>(running_mean[c]);
      var = static_cast<double>(running_var[c]);
    }
    const double ic = 1.0 / std::sqrt(var + eps);
    (*mean)[static_cast<size_t>(c)] = mu;
    (*inv)[static_cast<size_t>(c)] = ic;
    const double g = static_cast<double>(gamma->value[c]);
    const double bt = static_cast<double>(beta->value[c]);
    for (int b = 0; b < B; ++b) {
      const Real* p = x->value.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
      Real* q = out.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
      for (std::int64_t i = 0; i < plane; ++i)
        q[i] = static_cast<Real>(g * ((static_cast<double>(p[i]) - mu) * ic) + bt);
    }
  }

  auto y = detail::make_op_node(std::move(out), "batch_norm", {x, gamma, beta});
  tape.record(y, [x, gamma, beta, y, mean, inv, training, B, C, plane, m, cstride] {
    if (!y->has_grad()) return;
    auto& dgamma = gamma->grad_buf();
    auto& dbeta = beta->grad_buf();
    auto& dxall = x->grad_buf();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[static_cast<size_t>(c)];
      const double ic = (*inv)[static_cast<size_t>(c)];
      const double g = static_cast<double>(gamma->value[c]);
      double s1 = 0.0, s2 = 0.0;  // sum dy, sum dy * xhat
      for (int b = 0; b < B; ++b) {
        const Real* px = x->value.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
        const Real* pg = y->grad.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double dy = static_cast<double>(pg[i]);
          s1 += dy;
          s2 += dy * ((static_cast<double>(px[i]) - mu) * ic);
        }
      }
      dgamma[c] += static_cast<Real>(s2);
      dbeta[c] += static_cast<Real>(s1);
      if (training) {
        // Batch statistics depend on x, so the mean/variance paths feed back.
        const double k1 = s1 / static_cast<double>(m);
        const double k2 = s2 / static_cast<double>(m);
        for (int b = 0; b < B; ++b) {
          const Real* px = x->value.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
          const Real* pg = y->grad.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
          Real* dx = dxall.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double xhat = (static_cast<double>(px[i]) - mu) * ic;
            dx[i] += static_cast<Real>(g * ic * (static_cast<double>(pg[i]) - k1 - xhat * k2));
          }
        }
      } else {
        for (int b = 0; b < B; ++b) {
          const Real* pg = y->grad.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
          Real* dx = dxall.data() + static_cast<std::int64_t>(b) * cstride + c * plane;
          for (std::int64_t i = 0; i < plane; ++i)
            dx[i] += static_cast<Real>(g * ic * static_cast<double>(pg[i]));
        }
      }
    }
  });
  return y;
}

}  // namespace glyphnet

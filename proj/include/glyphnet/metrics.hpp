#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphnet/tensor.hpp"

namespace glyphnet {

struct ClassMetrics {
  std::string name;
  std::int64_t support = 0;  // true samples of this class
  std::int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

struct MetricsReport {
  std::int64_t count = 0;
  double top1 = 0, top3 = 0;
  double mean_loss = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::int64_t>> confusion;  // rows = true class
};

namespace detail {

/// Indices of the k largest entries; ties resolved toward the lower index.
inline void top_k_indices(const double* row, int K, int k, int* out) {
  std::vector<int> idx(static_cast<size_t>(K));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;
  });
  std::copy(idx.begin(), idx.begin() + k, out);
}

struct KahanSum {
  double sum = 0, c = 0;
  void add(double v) {
    const double y = v - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace detail

/// Score a full matrix of class probabilities (N,K) against labels:
/// top-1/top-3 accuracy (argmax ties break toward the lower class index),
/// mean clamped cross-entropy, per-class precision/recall/F1 with macro
/// averages, and a K x K confusion matrix with rows indexed by true class.
///
/// A class absent from both the labels and the predictions is vacuously
/// perfect (precision = recall = F1 = 1): it contributes no errors, and this
/// keeps "macro-F1 = 1 exactly when the confusion matrix is diagonal" true.
template <typename Real>
MetricsReport score_probs(const Tensor<Real>& probs, const std::vector<int>& labels,
                          const std::vector<std::string>& class_names) {
  if (probs.rank() != 2)
    throw ShapeError("score_probs expects (N,K) probabilities, got " + shape_str(probs.shape()));
  const int N = probs.dim(0), K = probs.dim(1);
  if (N == 0 || labels.empty()) throw std::invalid_argument("cannot evaluate an empty test set");
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("label count does not match probability rows");
  if (!class_names.empty() && static_cast<int>(class_names.size()) != K)
    throw std::invalid_argument("class-name count does not match probability columns");

  MetricsReport r;
  r.count = N;
  r.confusion.assign(static_cast<size_t>(K), std::vector<std::int64_t>(static_cast<size_t>(K), 0));
  std::int64_t hit1 = 0, hit3 = 0;
  detail::KahanSum loss;
  const int kmax = std::min(3, K);
  std::vector<double> row(static_cast<size_t>(K));
  int top[3] = {0, 0, 0};
  for (int i = 0; i < N; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= K)
      throw std::out_of_range("label " + std::to_string(label) + " outside [0," +
                              std::to_string(K) + ")");
    for (int j = 0; j < K; ++j) row[static_cast<size_t>(j)] = static_cast<double>(probs.at(i, j));
    detail::top_k_indices(row.data(), K, kmax, top);
    const int pred = top[0];
    if (pred == label) ++hit1;
    for (int t = 0; t < kmax; ++t)
      if (top[t] == label) {
        ++hit3;
        break;
      }
    loss.add(-std::log(std::max(row[static_cast<size_t>(label)], 1e-12)));
    ++r.confusion[static_cast<size_t>(label)][static_cast<size_t>(pred)];
  }
  r.top1 = static_cast<double>(hit1) / N;
  r.top3 = static_cast<double>(hit3) / N;
  r.mean_loss = loss.sum / N;

  r.per_class.resize(static_cast<size_t>(K));
  double mp = 0, mr = 0, mf = 0;
  for (int c = 0; c < K; ++c) {
    auto& m = r.per_class[static_cast<size_t>(c)];
    m.name = class_names.empty() ? std::to_string(c) : class_names[static_cast<size_t>(c)];
    m.tp = r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    for (int j = 0; j < K; ++j) {
      if (j != c) {
        m.fn += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
        m.fp += r.confusion[static_cast<size_t>(j)][static_cast<size_t>(c)];
      }
    }
    m.support = m.tp + m.fn;
    if (m.tp + m.fp + m.fn == 0) {
      m.precision = m.recall = m.f1 = 1.0;  // vacuously perfect
    } else {
      m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
      m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
      m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
    }
    mp += m.precision;
    mr += m.recall;
    mf += m.f1;
  }
  r.macro_precision = mp / K;
  r.macro_recall = mr / K;
  r.macro_f1 = mf / K;
  return r;
}

/// Evaluate a predictor batch-by-batch over a sample list. The predictor maps
/// an input batch (B,1,H,W) to probability rows (B,K).
template <typename Real>
MetricsReport evaluate_predictor(
    const std::function<Tensor<Real>(const Tensor<Real>&)>& predictor,
    const Tensor<Real>& inputs, const std::vector<int>& labels, int classes,
    const std::vector<std::string>& class_names, int batch_size = 64) {
  const int N = inputs.dim(0);
  if (N == 0) throw std::invalid_argument("cannot evaluate an empty test set");
  Tensor<Real> all({N, classes});
  const std::int64_t item = inputs.numel() / N;
  for (int start = 0; start < N; start += batch_size) {
    const int b = std::min(batch_size, N - start);
    Tensor<Real> chunk({b, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
    std::copy(inputs.data() + static_cast<std::int64_t>(start) * item,
              inputs.data() + (static_cast<std::int64_t>(start) + b) * item, chunk.data());
    Tensor<Real> p = predictor(chunk);
    if (p.rank() != 2 || p.dim(0) != b || p.dim(1) != classes)
      throw ShapeError("predictor returned " + shape_str(p.shape()));
    std::copy(p.data(), p.data() + p.numel(),
              all.data() + static_cast<std::int64_t>(start) * classes);
  }
  return score_probs(all, labels, class_names);
}

}  // namespace glyphnet

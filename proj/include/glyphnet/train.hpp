#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphnet/data.hpp"
#include "glyphnet/metrics.hpp"
#include "glyphnet/model.hpp"

namespace glyphnet {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// lr = lr0 * drop_rate^floor(epoch / epoch_drop).
inline double step_decay(double lr0, int epoch, double drop_rate = 0.5, int epoch_drop = 5) {
  if (epoch < 0) throw std::invalid_argument("epoch must be nonnegative");
  if (epoch_drop < 1) throw std::invalid_argument("epoch_drop must be >= 1");
  return lr0 * std::pow(drop_rate, static_cast<double>(epoch / epoch_drop));
}

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr0 = 0.0005;
  double drop_rate = 0.5;
  int epoch_drop = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (lr0 < 0) throw std::invalid_argument("lr0 must be >= 0");
    if (!(drop_rate > 0 && drop_rate <= 1))
      throw std::invalid_argument("drop_rate must be in (0,1]");
    if (epoch_drop < 1) throw std::invalid_argument("epoch_drop must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw std::invalid_argument("adam betas must be in [0,1)");
    if (!(adam_eps > 0)) throw std::invalid_argument("adam epsilon must be positive");
    augment.validate();
  }
};

/// Adam with bias correction. Moment tensors mirror the parameter list by
/// position; a non-finite gradient aborts the step (and thus the epoch).
template <typename Real>
class Adam {
 public:
  Adam(const ParamStore<Real>& store, double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : store.params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  std::int64_t steps() const { return t_; }

  void step(ParamStore<Real>& store, double lr) {
    if (store.params.size() != m_.size())
      throw std::logic_error("optimizer state does not match parameter list");
    for (const auto& p : store.params)
      if (!p->grad_buf().all_finite())
        throw TrainError("non-finite gradient in parameter '" + p->name + "'");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < store.params.size(); ++i) {
      auto& p = store.params[i]->value;
      const auto& g = store.params[i]->grad;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::int64_t j = 0; j < p.numel(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<Real>(mj);
        v[j] = static_cast<Real>(vj);
        p[j] = static_cast<Real>(static_cast<double>(p[j]) -
                                 lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<Real>> m_, v_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
};

/// Argmax with ties toward the lower index.
template <typename Real>
int argmax_row(const Tensor<Real>& probs, int row) {
  int best = 0;
  for (int j = 1; j < probs.dim(1); ++j)
    if (probs.at(row, j) > probs.at(row, best)) best = j;
  return best;
}

/// Train `model` on the split for cfg.epochs epochs: step-decayed learning
/// rate, shuffled (optionally augmented) batches, Adam updates. After each
/// epoch the test split serves as the validation set for the loss/accuracy
/// curves. With epochs = 0 the model is returned untouched and the curve list
/// is empty.
template <typename Real>
std::vector<EpochStats> fit(ModelGraph<Real>& model, const DatasetSplit& split,
                            const TrainConfig& cfg,
                            const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.epochs > 0 && split.train.empty()) throw TrainError("empty training set");
  Adam<Real> opt(model.store(), cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::vector<EpochStats> curves;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats st;
    st.epoch = epoch;
    st.lr = step_decay(cfg.lr0, epoch, cfg.drop_rate, cfg.epoch_drop);
    Rng dropout_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xd709));
    auto batches = epoch_batches<Real>(split.train, cfg.batch_size, cfg.augment, cfg.seed,
                                       epoch);
    detail::KahanSum loss_sum;
    std::int64_t hits = 0, seen = 0;
    for (auto& batch : batches) {
      Tape<Real> tape;
      auto x = make_node(std::move(batch.x));
      NodePtr<Real> probs, loss;
      try {
        probs = model.forward(tape, x, true, dropout_rng);
        loss = cross_entropy(tape, probs, batch.labels);
      } catch (const std::domain_error& e) {
        // Overflowed parameters show up as non-finite activations.
        throw TrainError("training diverged at epoch " + std::to_string(epoch) + ": " +
                         e.what());
      }
      const double lv = static_cast<double>(loss->value[0]);
      if (!std::isfinite(lv))
        throw TrainError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch));
      const int b = static_cast<int>(batch.labels.size());
      loss_sum.add(lv * b);
      for (int i = 0; i < b; ++i)
        if (argmax_row(probs->value, i) == batch.labels[static_cast<size_t>(i)]) ++hits;
      seen += b;
      model.store().zero_grad();
      tape.backward(loss);
      opt.step(model.store(), st.lr);
    }
    st.train_loss = loss_sum.sum / static_cast<double>(seen);
    st.train_acc = static_cast<double>(hits) / static_cast<double>(seen);

    if (!split.test.empty()) {
      auto val = to_batch<Real>(split.test, 0, split.test.size());
      auto report = evaluate_predictor<Real>(
          [&](const Tensor<Real>& xb) { return model.predict(xb); }, val.x, val.labels,
          model.classes(), split.class_names, cfg.batch_size);
      st.val_loss = report.mean_loss;
      st.val_acc = report.top1;
    }
    curves.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return curves;
}

}  // namespace glyphnet

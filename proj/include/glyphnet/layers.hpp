#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glyphnet/conv.hpp"
#include "glyphnet/norm.hpp"
#include "glyphnet/ops.hpp"
#include "glyphnet/pool.hpp"
#include "glyphnet/rng.hpp"

namespace glyphnet {

/// Owns every learnable tensor and running-stat buffer of a model, in a
/// stable insertion order with unique names. Optimizers walk `params`;
/// checkpoints serialize params and buffers by name.
template <typename Real>
struct ParamStore {
  std::vector<NodePtr<Real>> params;
  std::vector<std::pair<std::string, std::shared_ptr<Tensor<Real>>>> buffers;

  NodePtr<Real> param(const std::string& name, Tensor<Real> v) {
    check_fresh(name);
    auto n = make_node(std::move(v), name);
    params.push_back(n);
    return n;
  }

  std::shared_ptr<Tensor<Real>> buffer(const std::string& name, Tensor<Real> v) {
    check_fresh(name);
    auto b = std::make_shared<Tensor<Real>>(std::move(v));
    buffers.emplace_back(name, b);
    return b;
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params) p->zero_grad();
  }

  NodePtr<Real> find(const std::string& name) const {
    for (const auto& p : params)
      if (p->name == name) return p;
    return nullptr;
  }

 private:
  void check_fresh(const std::string& name) {
    if (!seen_.emplace(name, true).second)
      throw std::logic_error("duplicate parameter name: " + name);
  }
  std::unordered_map<std::string, bool> seen_;
};

/// He initialization: Normal(0, std = sqrt(2/fan_in)).
template <typename Real>
Tensor<Real> he_normal(Rng& rng, Shape shape, int fan_in) {
  Tensor<Real> t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<Real>(rng.normal() * std);
  return t;
}

/// 2-D convolution layer; weights He-initialized with fan_in = Ci*Kh*Kw.
template <typename Real>
struct Conv2D {
  NodePtr<Real> w, b;
  int stride;
  Pad pad;

  Conv2D(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci, int co, int k,
         int stride_ = 1, Pad pad_ = Pad::Same)
      : stride(stride_), pad(pad_) {
    if (ci <= 0 || co <= 0 || k <= 0)
      throw std::invalid_argument("conv layer dims must be positive");
    w = ps.param(name + ".w", he_normal<Real>(rng, {co, ci, k, k}, ci * k * k));
    b = ps.param(name + ".b", Tensor<Real>({co}));
  }

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x) const {
    return conv2d(tape, x, w, b, stride, pad);
  }
};

/// Fully connected layer; weights He-initialized with fan_in = in features.
template <typename Real>
struct Dense {
  NodePtr<Real> w, b;

  Dense(ParamStore<Real>& ps, const std::string& name, Rng& rng, int fin, int fout) {
    if (fin <= 0 || fout <= 0) throw std::invalid_argument("dense layer dims must be positive");
    w = ps.param(name + ".w", he_normal<Real>(rng, {fin, fout}, fin));
    b = ps.param(name + ".b", Tensor<Real>({fout}));
  }

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x) const {
    return linear(tape, x, w, b);
  }
};

/// Batch-norm layer state: gamma starts at 1, beta at 0, running mean 0,
/// running variance 1.
template <typename Real>
struct BatchNorm {
  NodePtr<Real> gamma, beta;
  std::shared_ptr<Tensor<Real>> running_mean, running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  BatchNorm(ParamStore<Real>& ps, const std::string& name, int c) {
    gamma = ps.param(name + ".gamma", Tensor<Real>::full({c}, Real(1)));
    beta = ps.param(name + ".beta", Tensor<Real>({c}));
    running_mean = ps.buffer(name + ".running_mean", Tensor<Real>({c}));
    running_var = ps.buffer(name + ".running_var", Tensor<Real>::full({c}, Real(1)));
  }

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training) const {
    return batch_norm(tape, x, gamma, beta, *running_mean, *running_var, training, momentum,
                      eps);
  }
};

/// conv -> batch-norm -> ReLU, the activation unit shared by the inception
/// and residual builders.
template <typename Real>
struct ConvBnRelu {
  Conv2D<Real> conv;
  BatchNorm<Real> bn;

  ConvBnRelu(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci, int co, int k)
      : conv(ps, name + ".conv", rng, ci, co, k), bn(ps, name + ".bn", co) {}

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training) const {
    return relu(tape, bn(tape, conv(tape, x), training));
  }
};

}  // namespace glyphnet

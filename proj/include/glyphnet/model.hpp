#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "glyphnet/blocks.hpp"

namespace glyphnet {

enum class ModelKind { A, B, C };

inline char kind_letter(ModelKind k) {
  switch (k) {
    case ModelKind::A: return 'A';
    case ModelKind::B: return 'B';
    case ModelKind::C: return 'C';
  }
  throw std::logic_error("unreachable model kind");
}

inline ModelKind parse_kind(const std::string& s) {
  if (s == "A" || s == "a") return ModelKind::A;
  if (s == "B" || s == "b") return ModelKind::B;
  if (s == "C" || s == "c") return ModelKind::C;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected A, B, or C)");
}

/// One classifier network: an inception-residual stack (A), a deeper
/// residual stack (B), or a dense-block stack (C), each ending in softmax
/// over K classes. Input is (B,1,H,W) grayscale.
template <typename Real>
class ModelGraph {
 public:
  ModelGraph(ModelKind kind, int classes, int in_h, int in_w, std::uint64_t seed)
      : kind_(kind), classes_(classes), in_h_(in_h), in_w_(in_w), seed_(seed) {
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (in_h < 1 || in_w < 1) throw std::invalid_argument("input size must be positive");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind) + 101));
    switch (kind) {
      case ModelKind::A: build_a(rng); break;
      case ModelKind::B: build_b(rng); break;
      case ModelKind::C: build_c(rng); break;
    }
  }

  ModelKind kind() const { return kind_; }
  int classes() const { return classes_; }
  int input_h() const { return in_h_; }
  int input_w() const { return in_w_; }
  std::uint64_t init_seed() const { return seed_; }
  double block_dropout() const { return block_rate_; }

  ParamStore<Real>& store() { return store_; }
  const ParamStore<Real>& store() const { return store_; }

  // Channel counts fixed at build time, for introspection.
  int transition_in_channels() const { return c_transition_in_; }
  int transition_out_channels() const { return c_transition_out_; }
  int gap_channels() const { return c_gap_; }
  std::vector<int> residual_filters() const {
    std::vector<int> f;
    for (const auto& r : res_) f.push_back(r.conv3.w->value.dim(0));
    return f;
  }

  /// Forward pass to class probabilities (B,K). `rng` drives dropout masks
  /// and is untouched when training is false.
  NodePtr<Real> forward(Tape<Real>& tape, NodePtr<Real> x, bool training, Rng& rng) const {
    if (x->value.rank() != 4 || x->value.dim(1) != 1 || x->value.dim(2) != in_h_ ||
        x->value.dim(3) != in_w_)
      throw ShapeError("model expects (B,1," + std::to_string(in_h_) + "," +
                       std::to_string(in_w_) + ") input, got " + shape_str(x->value.shape()));
    NodePtr<Real> h = x;
    switch (kind_) {
      case ModelKind::A:
        h = (*stem_)(tape, h, training);
        h = (*incep_)(tape, h, training);
        for (const auto& r : res_) h = r(tape, h, training, rng);
        h = flatten(tape, h);
        h = head(tape, h, training, rng);
        break;
      case ModelKind::B:
        for (const auto& r : res_) h = r(tape, h, training, rng);
        h = flatten(tape, h);
        h = head(tape, h, training, rng);
        break;
      case ModelKind::C:
        h = (*stem_plain_)(tape, h);
        for (const auto& d : dense_stage1_) h = d(tape, h, training);
        h = (*transition_)(tape, h, training);
        for (const auto& d : dense_stage2_) h = d(tape, h, training);
        h = relu(tape, (*final_bn_)(tape, h, training));
        h = global_avg_pool(tape, h);
        h = (*classifier_)(tape, h);
        break;
    }
    return softmax(tape, h);
  }

  /// Inference on raw data: builds a throwaway graph in infer mode.
  Tensor<Real> predict(const Tensor<Real>& batch) const {
    Tape<Real> tape;
    Rng rng(0);  // unused: no dropout at inference
    auto probs = forward(tape, make_node(batch), false, rng);
    return probs->value;
  }

 private:
  // Model A: stem conv -> inception -> three downsampling residual blocks
  // -> flatten -> 1024 -> 512 -> K.
  void build_a(Rng& rng) {
    block_rate_ = 0.2;
    stem_.emplace(store_, "stem", rng, 1, 32, 3);
    incep_.emplace(store_, "incep", rng, 32, 16, 32, 16, 32, 16);
    int c = incep_->out_channels, h = in_h_, w = in_w_;
    const int filters[] = {64, 128, 256};
    for (int i = 0; i < 3; ++i) {
      res_.emplace_back(store_, "res" + std::to_string(i + 1), rng, c, filters[i],
                        block_rate_, true);
      c = filters[i];
      h = halved(h);
      w = halved(w);
    }
    build_fc_head(rng, c * h * w);
  }

  // Model B: five residual blocks (32..512 filters), downsampling from the
  // second on, then the same fully connected head.
  void build_b(Rng& rng) {
    block_rate_ = 0.1;
    int c = 1, h = in_h_, w = in_w_;
    const int filters[] = {32, 64, 128, 256, 512};
    for (int i = 0; i < 5; ++i) {
      const bool down = i > 0;
      res_.emplace_back(store_, "res" + std::to_string(i + 1), rng, c, filters[i],
                        block_rate_, down);
      c = filters[i];
      if (down) {
        h = halved(h);
        w = halved(w);
      }
    }
    build_fc_head(rng, c * h * w);
  }

  // Model C: plain stem conv, 6 dense blocks, transition, 12 dense blocks,
  // BN-ReLU, global average pool, classifier. No dropout anywhere.
  void build_c(Rng& rng) {
    block_rate_ = 0.0;
    stem_plain_.emplace(store_, "stem", rng, 1, 64, 3);
    int c = 64;
    const int k = 32;
    for (int i = 0; i < 6; ++i) {
      dense_stage1_.emplace_back(store_, "dense1_" + std::to_string(i + 1), rng, c, k);
      c += k;
    }
    c_transition_in_ = c;
    // Dense blocks preserve spatial size, so the transition pool sees the
    // input extent; reject inputs it cannot halve.
    halved(in_h_);
    halved(in_w_);
    transition_.emplace(store_, "transition", rng, c, 0.5);
    c = transition_->out_channels;
    c_transition_out_ = c;
    for (int i = 0; i < 12; ++i) {
      dense_stage2_.emplace_back(store_, "dense2_" + std::to_string(i + 1), rng, c, k);
      c += k;
    }
    c_gap_ = c;
    final_bn_.emplace(store_, "final_bn", c);
    classifier_.emplace(store_, "classifier", rng, c, classes_);
  }

  void build_fc_head(Rng& rng, int flat) {
    fc1_.emplace(store_, "fc1", rng, flat, 1024);
    fc2_.emplace(store_, "fc2", rng, 1024, 512);
    classifier_.emplace(store_, "classifier", rng, 512, classes_);
  }

  NodePtr<Real> head(Tape<Real>& tape, NodePtr<Real> h, bool training, Rng& rng) const {
    h = dropout(tape, (*fc1_)(tape, h), block_rate_, training, rng);
    h = dropout(tape, (*fc2_)(tape, h), block_rate_, training, rng);
    return (*classifier_)(tape, h);
  }

  int halved(int v) const {
    if (v < 2)
      throw std::invalid_argument("input " + std::to_string(in_h_) + "x" +
                                  std::to_string(in_w_) + " is too small for model " +
                                  std::string(1, kind_letter(kind_)) +
                                  "'s downsampling chain");
    return v / 2;
  }

  ModelKind kind_;
  int classes_, in_h_, in_w_;
  std::uint64_t seed_;
  double block_rate_ = 0.0;
  int c_transition_in_ = 0, c_transition_out_ = 0, c_gap_ = 0;

  ParamStore<Real> store_;
  std::optional<ConvBnRelu<Real>> stem_;
  std::optional<Conv2D<Real>> stem_plain_;
  std::optional<InceptionBlock<Real>> incep_;
  std::vector<ResidualBlock<Real>> res_;
  std::vector<DenseUnit<Real>> dense_stage1_, dense_stage2_;
  std::optional<TransitionBlock<Real>> transition_;
  std::optional<BatchNorm<Real>> final_bn_;
  std::optional<Dense<Real>> fc1_, fc2_, classifier_;
};

/// Walk a produced graph (following producer_inputs) and return each node once.
template <typename Real>
std::vector<NodePtr<Real>> collect_graph(const NodePtr<Real>& out) {
  std::vector<NodePtr<Real>> order;
  std::unordered_set<const Node<Real>*> seen;
  std::vector<NodePtr<Real>> stack{out};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    order.push_back(n);
    for (const auto& in : n->producer_inputs) stack.push_back(in);
  }
  return order;
}

template <typename Real>
int count_nodes(const NodePtr<Real>& out, const std::string& producer) {
  int n = 0;
  for (const auto& node : collect_graph(out))
    if (node->producer == producer) ++n;
  return n;
}

/// Average the class-probability rows of several trained models over the
/// same batch. Members are evaluated in order and their outputs accumulated
/// in double, so the mean is identical from run to run, independent of
/// member order, and an ensemble of n copies of one model reproduces that
/// model's output exactly.
template <typename Real>
Tensor<Real> ensemble_predict(const std::vector<const ModelGraph<Real>*>& members,
                              const Tensor<Real>& batch) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  const int K = members[0]->classes();
  for (const auto* m : members) {
    if (m->classes() != K)
      throw std::invalid_argument("ensemble members disagree on class count: " +
                                  std::to_string(m->classes()) + " vs " + std::to_string(K));
    if (m->input_h() != members[0]->input_h() || m->input_w() != members[0]->input_w())
      throw std::invalid_argument("ensemble members disagree on input size");
  }
  std::vector<double> acc;
  Shape shape;
  for (const auto* m : members) {
    Tensor<Real> p = m->predict(batch);
    if (acc.empty()) {
      shape = p.shape();
      acc.resize(static_cast<size_t>(p.numel()));
    }
    for (std::int64_t i = 0; i < p.numel(); ++i) acc[static_cast<size_t>(i)] += p[i];
  }
  Tensor<Real> mean(shape);
  const double n = static_cast<double>(members.size());
  for (std::int64_t i = 0; i < mean.numel(); ++i)
    mean[i] = static_cast<Real>(acc[static_cast<size_t>(i)] / n);
  return mean;
}

}  // namespace glyphnet

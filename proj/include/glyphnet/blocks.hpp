#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glyphnet/layers.hpp"

namespace glyphnet {

/// Inception block: three stride-1 `same` branches over the same input —
/// 1x1->3x3, 1x1->5x5, and 3x3 max-pool->1x1 — channel-concatenated. Every
/// conv runs conv->batch-norm->ReLU. Output channels = out3 + out5 + out_pool.
template <typename Real>
struct InceptionBlock {
  ConvBnRelu<Real> reduce3, conv3, reduce5, conv5, pool_proj;
  int out_channels;

  InceptionBlock(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci, int red3,
                 int out3, int red5, int out5, int out_pool)
      : reduce3(ps, name + ".reduce3", rng, ci, check_pos(red3), 1),
        conv3(ps, name + ".conv3", rng, red3, check_pos(out3), 3),
        reduce5(ps, name + ".reduce5", rng, ci, check_pos(red5), 1),
        conv5(ps, name + ".conv5", rng, red5, check_pos(out5), 5),
        pool_proj(ps, name + ".pool_proj", rng, ci, check_pos(out_pool), 1),
        out_channels(out3 + out5 + out_pool) {}

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training) const {
    auto b3 = conv3(tape, reduce3(tape, x, training), training);
    auto b5 = conv5(tape, reduce5(tape, x, training), training);
    auto bp = pool_proj(tape, max_pool2d(tape, x, 3, 1, Pad::Same), training);
    return concat_channels<Real>(tape, {b3, b5, bp});
  }

 private:
  static int check_pos(int v) {
    if (v <= 0) throw std::invalid_argument("inception filter counts must be positive");
    return v;
  }
};

/// Residual block: optional 2x2 stride-2 average-pool entry (the downsampling
/// step), then three 3x3 conv stages. The first two stages are
/// conv->BN->ReLU->dropout; the third is conv->BN, joined by the shortcut in
/// an elementwise add before the final ReLU. The shortcut carries the first
/// stage's input, through a 1x1 projection when the channel count changes.
template <typename Real>
struct ResidualBlock {
  bool downsample;
  double dropout_rate;
  ConvBnRelu<Real> stage1, stage2;
  Conv2D<Real> conv3;
  BatchNorm<Real> bn3;
  std::optional<Conv2D<Real>> projection;

  ResidualBlock(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci, int filters,
                double rate, bool down)
      : downsample(down),
        dropout_rate(rate),
        stage1(ps, name + ".stage1", rng, ci, check_pos(filters), 3),
        stage2(ps, name + ".stage2", rng, filters, filters, 3),
        conv3(ps, name + ".conv3", rng, filters, filters, 3),
        bn3(ps, name + ".bn3", filters) {
    if (ci != filters) projection.emplace(ps, name + ".proj", rng, ci, filters, 1);
  }

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training, Rng& rng) const {
    if (downsample) x = avg_pool2d(tape, x, 2, 2, Pad::Valid);
    auto h = dropout(tape, stage1(tape, x, training), dropout_rate, training, rng);
    h = dropout(tape, stage2(tape, h, training), dropout_rate, training, rng);
    h = bn3(tape, conv3(tape, h), training);
    auto s = projection ? (*projection)(tape, x) : x;
    return relu(tape, add(tape, h, s));
  }

 private:
  static int check_pos(int v) {
    if (v <= 0) throw std::invalid_argument("residual filter count must be positive");
    return v;
  }
};

/// Dense block unit (pre-activation): BN->ReLU->1x1 conv to 4*k bottleneck
/// channels, BN->ReLU->3x3 conv to k channels, then concat with the input.
/// Output channels = in + k.
template <typename Real>
struct DenseUnit {
  BatchNorm<Real> bn1;
  Conv2D<Real> bottleneck;
  BatchNorm<Real> bn2;
  Conv2D<Real> grow;
  int out_channels;

  DenseUnit(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci, int k)
      : bn1(ps, name + ".bn1", ci),
        bottleneck(ps, name + ".bottleneck", rng, ci, 4 * check_pos(k), 1),
        bn2(ps, name + ".bn2", 4 * k),
        grow(ps, name + ".grow", rng, 4 * k, k, 3),
        out_channels(ci + k) {}

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training) const {
    auto h = bottleneck(tape, relu(tape, bn1(tape, x, training)));
    h = grow(tape, relu(tape, bn2(tape, h, training)));
    return concat_channels<Real>(tape, {x, h});
  }

 private:
  static int check_pos(int k) {
    if (k <= 0) throw std::invalid_argument("dense-block growth rate must be positive");
    return k;
  }
};

/// Transition between dense stages: BN->ReLU->1x1 conv down to
/// floor(in*compression) channels, then 2x2 stride-2 average pool.
template <typename Real>
struct TransitionBlock {
  BatchNorm<Real> bn;
  Conv2D<Real> squeeze;
  int out_channels;

  TransitionBlock(ParamStore<Real>& ps, const std::string& name, Rng& rng, int ci,
                  double compression)
      : bn(ps, name + ".bn", ci),
        squeeze(ps, name + ".squeeze", rng, ci, checked_out(ci, compression), 1),
        out_channels(checked_out(ci, compression)) {}

  NodePtr<Real> operator()(Tape<Real>& tape, NodePtr<Real> x, bool training) const {
    auto h = squeeze(tape, relu(tape, bn(tape, x, training)));
    return avg_pool2d(tape, h, 2, 2, Pad::Valid);
  }

 private:
  static int checked_out(int ci, double compression) {
    if (!(compression > 0.0 && compression <= 1.0))
      throw std::invalid_argument("transition compression must be in (0,1]");
    const int out = static_cast<int>(ci * compression);
    if (out <= 0) throw std::invalid_argument("transition would squeeze channels to zero");
    return out;
  }
};

}  // namespace glyphnet

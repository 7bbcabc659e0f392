#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "glyphnet/blocks.hpp"
#include "glyphnet/ops.hpp"
#include "helpers.hpp"

using namespace glyphnet;
using testutil::bit_equal;
using testutil::project;
using testutil::rand_proj;
using testutil::rand_tensor;

namespace {

// Backward through `out` and require that every registered parameter
// received a gradient with at least one nonzero element.
template <typename Real>
void require_all_params_live(Tape<Real>& tape, ParamStore<Real>& ps, NodePtr<Real> out,
                             Rng& rng) {
  auto r = rand_proj<Real>(rng, out->value.numel());
  tape.backward(project(tape, out, r));
  for (const auto& p : ps.params) {
    INFO("parameter " << p->name);
    REQUIRE(p->has_grad());
    bool nonzero = false;
    for (std::int64_t i = 0; i < p->grad.numel() && !nonzero; ++i)
      if (p->grad[i] != Real(0)) nonzero = true;
    REQUIRE(nonzero);
  }
}

}  // namespace

TEST_CASE("inception block shapes and channel arithmetic", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(201);
  InceptionBlock<double> block(ps, "incep", rng, 8, 4, 32, 4, 32, 16);
  REQUIRE(block.out_channels == 80);

  Tape<double> tape;
  auto x = make_node(rand_tensor<double>(rng, {1, 8, 12, 12}));
  auto y = block(tape, x, false);
  REQUIRE(y->value.shape() == Shape{1, 80, 12, 12});

  ParamStore<double> ps2;
  REQUIRE_THROWS_AS(InceptionBlock<double>(ps2, "bad", rng, 8, 4, 0, 4, 8, 8),
                    std::invalid_argument);
}

TEST_CASE("inception branches are independent channel slices", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(202);
  InceptionBlock<double> block(ps, "incep", rng, 3, 2, 4, 2, 3, 2);  // slices 4 | 3 | 2
  auto xv = rand_tensor<double>(rng, {2, 3, 5, 5});

  Tape<double> t0;
  auto base = block(t0, make_node(xv), false)->value;

  // Zeroing the 5x5 branch's final conv wipes exactly channels [4,7).
  block.conv5.conv.w->value.fill(0.0);
  block.conv5.conv.b->value.fill(0.0);
  Tape<double> t1;
  auto changed = block(t1, make_node(xv), false)->value;

  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 9; ++c)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 5; ++w) {
          if (c >= 4 && c < 7)
            REQUIRE(changed.at(b, c, h, w) == 0.0);
          else
            REQUIRE(changed.at(b, c, h, w) == base.at(b, c, h, w));
        }
}

TEST_CASE("residual block with zeroed weights is ReLU of its input", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(203);
  ResidualBlock<double> block(ps, "res", rng, 8, 8, 0.2, false);
  REQUIRE_FALSE(block.projection.has_value());  // matching channels: no projection

  block.stage1.conv.w->value.fill(0.0);
  block.stage1.conv.b->value.fill(0.0);
  block.stage2.conv.w->value.fill(0.0);
  block.stage2.conv.b->value.fill(0.0);
  block.conv3.w->value.fill(0.0);
  block.conv3.b->value.fill(0.0);

  auto xv = rand_tensor<double>(rng, {2, 8, 4, 4});
  Tensor<double> want(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) want[i] = xv[i] > 0 ? xv[i] : 0.0;

  Tape<double> ti;
  Rng drop_rng(1);
  auto yi = block(ti, make_node(xv), false, drop_rng);
  REQUIRE(bit_equal(yi->value, want));

  Tape<double> tt;  // train mode: dropout of zero stays zero, BN of a zero batch is beta=0
  auto yt = block(tt, make_node(xv), true, drop_rng);
  REQUIRE(bit_equal(yt->value, want));
}

TEST_CASE("residual downsampling and projection bookkeeping", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(204);
  ResidualBlock<double> down(ps, "down", rng, 3, 16, 0.0, true);
  Tape<double> tape;
  auto y = down(tape, make_node(rand_tensor<double>(rng, {1, 3, 28, 28})), false, rng);
  REQUIRE(y->value.shape() == Shape{1, 16, 14, 14});

  ParamStore<double> ps2;
  ResidualBlock<double> proj(ps2, "proj", rng, 32, 64, 0.0, false);
  REQUIRE(proj.projection.has_value());
  REQUIRE(proj.projection->w->value.shape() == Shape{64, 32, 1, 1});
  Tape<double> t2;
  auto y2 = proj(t2, make_node(rand_tensor<double>(rng, {1, 32, 6, 6})), false, rng);
  REQUIRE(y2->value.shape() == Shape{1, 64, 6, 6});
}

TEST_CASE("dense unit growth and bottleneck width", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(205);
  DenseUnit<double> unit(ps, "du", rng, 64, 32);
  REQUIRE(unit.out_channels == 96);
  REQUIRE(unit.bottleneck.w->value.dim(0) == 128);  // 4k bottleneck channels

  Tape<double> tape;
  auto y = unit(tape, make_node(rand_tensor<double>(rng, {1, 64, 5, 5})), false);
  REQUIRE(y->value.shape() == Shape{1, 96, 5, 5});
}

TEST_CASE("a chain of six dense units grows 64 to 256 channels", "[blocks]") {
  ParamStore<double> ps;
  Rng rng(206);
  std::vector<DenseUnit<double>> chain;
  int c = 64;
  for (int i = 0; i < 6; ++i) {
    chain.emplace_back(ps, "du" + std::to_string(i), rng, c, 32);
    c = chain.back().out_channels;
    REQUIRE(c == 64 + (i + 1) * 32);
  }
  REQUIRE(c == 256);

  Tape<double> tape;
  auto h = make_node(rand_tensor<double>(rng, {1, 64, 4, 4}));
  for (const auto& u : chain) h = u(tape, h, false);
  REQUIRE(h->value.shape() == Shape{1, 256, 4, 4});
}

TEST_CASE("transition block squeezes channels and halves the extent", "[blocks]") {
  Rng rng(207);
  {
    ParamStore<double> ps;
    TransitionBlock<double> tr(ps, "tr", rng, 256, 0.5);
    REQUIRE(tr.out_channels == 128);
    Tape<double> tape;
    auto y = tr(tape, make_node(rand_tensor<double>(rng, {1, 256, 8, 8})), false);
    REQUIRE(y->value.shape() == Shape{1, 128, 4, 4});
  }
  {
    ParamStore<double> ps;
    TransitionBlock<double> tr(ps, "tr", rng, 40, 1.0);
    REQUIRE(tr.out_channels == 40);
  }
  {
    ParamStore<double> ps;
    TransitionBlock<double> tr(ps, "tr", rng, 250, 0.5);
    REQUIRE(tr.out_channels == 125);
  }
  {
    ParamStore<double> ps;
    REQUIRE_THROWS_AS(TransitionBlock<double>(ps, "tr", rng, 1, 0.5), std::invalid_argument);
    ParamStore<double> ps2;
    REQUIRE_THROWS_AS(TransitionBlock<double>(ps2, "tr", rng, 8, 0.0), std::invalid_argument);
  }
}

TEST_CASE("every block parameter receives gradient", "[blocks]") {
  SECTION("inception") {
    ParamStore<double> ps;
    Rng rng(208);
    InceptionBlock<double> block(ps, "b", rng, 4, 3, 5, 3, 4, 3);
    Tape<double> tape;
    auto y = block(tape, make_node(rand_tensor<double>(rng, {2, 4, 6, 6})), false);
    require_all_params_live(tape, ps, y, rng);
  }
  SECTION("residual with projection") {
    ParamStore<double> ps;
    Rng rng(209);
    ResidualBlock<double> block(ps, "b", rng, 3, 6, 0.0, true);
    Tape<double> tape;
    auto y = block(tape, make_node(rand_tensor<double>(rng, {2, 3, 6, 6})), false, rng);
    require_all_params_live(tape, ps, y, rng);
  }
  SECTION("residual without projection") {
    ParamStore<double> ps;
    Rng rng(210);
    ResidualBlock<double> block(ps, "b", rng, 6, 6, 0.0, false);
    Tape<double> tape;
    auto y = block(tape, make_node(rand_tensor<double>(rng, {2, 6, 5, 5})), false, rng);
    require_all_params_live(tape, ps, y, rng);
  }
  SECTION("dense unit") {
    ParamStore<double> ps;
    Rng rng(211);
    DenseUnit<double> block(ps, "b", rng, 5, 3);
    Tape<double> tape;
    auto y = block(tape, make_node(rand_tensor<double>(rng, {2, 5, 4, 4})), false);
    require_all_params_live(tape, ps, y, rng);
  }
  SECTION("transition") {
    ParamStore<double> ps;
    Rng rng(212);
    TransitionBlock<double> block(ps, "b", rng, 6, 0.5);
    Tape<double> tape;
    auto y = block(tape, make_node(rand_tensor<double>(rng, {2, 6, 4, 4})), false);
    require_all_params_live(tape, ps, y, rng);
  }
}

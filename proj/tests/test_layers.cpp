#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "glyphnet/layers.hpp"
#include "glyphnet/norm.hpp"
#include "glyphnet/ops.hpp"
#include "helpers.hpp"

using namespace glyphnet;
using testutil::bit_equal;
using testutil::project;
using testutil::rand_tensor;
using testutil::tensor_of;

TEST_CASE("batch-norm hand examples", "[layers]") {
  SECTION("constant batch collapses to beta exactly") {
    // Per-channel constants: the batch mean equals the value exactly (power-
    // of-two counts), so the normalized input is exactly zero.
    auto x = make_node(tensor_of<double>({4, 2}, {3.7, -1.2, 3.7, -1.2, 3.7, -1.2, 3.7, -1.2}));
    auto g = make_node(tensor_of<double>({2}, {2.0, 0.5}));
    auto b = make_node(tensor_of<double>({2}, {0.25, -1.0}));
    Tensor<double> rm({2}), rv = Tensor<double>::full({2}, 1.0);
    Tape<double> tape;
    auto y = batch_norm(tape, x, g, b, rm, rv, true);
    for (int i = 0; i < 4; ++i) {
      REQUIRE(y->value.at(i, 0) == 0.25);
      REQUIRE(y->value.at(i, 1) == -1.0);
    }

    auto x4 = make_node(Tensor<double>::full({2, 1, 2, 2}, 5.5));
    auto g4 = make_node(Tensor<double>::full({1}, 3.0));
    auto b4 = make_node(tensor_of<double>({1}, {-0.75}));
    Tensor<double> rm4({1}), rv4 = Tensor<double>::full({1}, 1.0);
    auto y4 = batch_norm(tape, x4, g4, b4, rm4, rv4, true);
    for (std::int64_t i = 0; i < y4->value.numel(); ++i) REQUIRE(y4->value[i] == -0.75);
  }

  SECTION("z=[1,3] normalizes to [-1,1]; gamma=2, beta=1 maps it to [-1,3]") {
    auto x = make_node(tensor_of<double>({2, 1}, {1.0, 3.0}));
    Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
    Tape<double> tape;
    auto y = batch_norm(tape, x, make_node(Tensor<double>::full({1}, 1.0)),
                        make_node(Tensor<double>({1})), rm, rv, true, 0.99, 1e-12);
    REQUIRE(std::abs(y->value.at(0, 0) - -1.0) <= 1e-6);
    REQUIRE(std::abs(y->value.at(1, 0) - 1.0) <= 1e-6);

    Tensor<double> rm2({1}), rv2 = Tensor<double>::full({1}, 1.0);
    auto y2 = batch_norm(tape, make_node(tensor_of<double>({2, 1}, {1.0, 3.0})),
                         make_node(Tensor<double>::full({1}, 2.0)),
                         make_node(Tensor<double>::full({1}, 1.0)), rm2, rv2, true, 0.99,
                         1e-12);
    REQUIRE(std::abs(y2->value.at(0, 0) - -1.0) <= 1e-6);
    REQUIRE(std::abs(y2->value.at(1, 0) - 3.0) <= 1e-6);
  }

  SECTION("unit gamma, zero beta gives a normalized batch") {
    Rng rng(61);
    const double eps = 1e-5;
    auto x = make_node(rand_tensor<double>(rng, {8, 3}, -3.0, 3.0));
    auto g = make_node(Tensor<double>::full({3}, 1.0));
    auto b = make_node(Tensor<double>({3}));
    Tensor<double> rm({3}), rv = Tensor<double>::full({3}, 1.0);
    Tape<double> tape;
    auto y = batch_norm(tape, x, g, b, rm, rv, true, 0.99, eps);
    for (int c = 0; c < 3; ++c) {
      double mean = 0;
      for (int i = 0; i < 8; ++i) mean += y->value.at(i, c);
      mean /= 8;
      double var = 0;
      for (int i = 0; i < 8; ++i) {
        const double d = y->value.at(i, c) - mean;
        var += d * d;
      }
      var /= 8;
      REQUIRE(std::abs(mean) <= 1e-6);
      REQUIRE(var >= 1.0 - 10 * eps);
      REQUIRE(var <= 1.0 + 1e-6);
    }
  }

  SECTION("running statistics update by EMA") {
    auto x = make_node(tensor_of<double>({4, 1}, {1.0, 2.0, 3.0, 4.0}));
    auto g = make_node(Tensor<double>::full({1}, 1.0));
    auto b = make_node(Tensor<double>({1}));
    Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
    Tape<double> tape;
    batch_norm(tape, x, g, b, rm, rv, true);  // mean 2.5, population var 1.25
    REQUIRE(std::abs(rm[0] - (0.99 * 0.0 + 0.01 * 2.5)) <= 1e-12);
    REQUIRE(std::abs(rv[0] - (0.99 * 1.0 + 0.01 * 1.25)) <= 1e-12);

    // Inference must not touch them.
    batch_norm(tape, x, g, b, rm, rv, false);
    REQUIRE(std::abs(rm[0] - 0.025) <= 1e-12);
    REQUIRE(std::abs(rv[0] - 1.0025) <= 1e-12);
  }

  SECTION("error cases") {
    Tape<double> tape;
    auto g = make_node(Tensor<double>::full({1}, 1.0));
    auto b = make_node(Tensor<double>({1}));
    Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
    auto tiny = make_node(Tensor<double>({1, 1}));
    REQUIRE_THROWS_AS(batch_norm(tape, tiny, g, b, rm, rv, true), std::invalid_argument);
    auto x = make_node(Tensor<double>({4, 1}));
    REQUIRE_THROWS_AS(batch_norm(tape, x, g, b, rm, rv, true, 0.99, 0.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(batch_norm(tape, x, g, b, rm, rv, true, 0.99, -1e-5),
                      std::invalid_argument);
    auto g3 = make_node(Tensor<double>::full({3}, 1.0));
    REQUIRE_THROWS_AS(batch_norm(tape, x, g3, b, rm, rv, true), ShapeError);
  }
}

TEST_CASE("dropout identity, scaling, and validation", "[layers]") {
  Tape<float> tape;
  Rng rng(71);
  auto xv = rand_tensor<float>(rng, {3, 5});
  auto x = make_node(xv);

  SECTION("rate 0 and inference are identities") {
    Rng r1(1);
    auto y0 = dropout(tape, x, 0.0, true, r1);
    REQUIRE(y0.get() == x.get());
    auto y1 = dropout(tape, x, 0.4, false, r1);
    REQUIRE(y1.get() == x.get());
  }

  SECTION("surviving mass keeps the mean near the input") {
    auto ones = make_node(Tensor<float>::full({100000}, 1.0f));
    Rng r2(123);
    auto y = dropout(tape, ones, 0.1, true, r2);
    double mean = 0;
    for (std::int64_t i = 0; i < y->value.numel(); ++i) mean += y->value[i];
    mean /= static_cast<double>(y->value.numel());
    REQUIRE(mean >= 0.99);
    REQUIRE(mean <= 1.01);

    Rng r3(321);
    auto half = dropout(tape, make_node(Tensor<float>::full({200000}, 1.0f)), 0.5, true, r3);
    double m2 = 0;
    for (std::int64_t i = 0; i < half->value.numel(); ++i) m2 += half->value[i];
    m2 /= static_cast<double>(half->value.numel());
    REQUIRE(std::abs(m2 - 1.0) <= 0.01);
  }

  SECTION("rate outside [0,1) is rejected") {
    Rng r4(5);
    REQUIRE_THROWS_AS(dropout(tape, x, -0.1, true, r4), std::invalid_argument);
    REQUIRE_THROWS_AS(dropout(tape, x, 1.0, true, r4), std::invalid_argument);
    REQUIRE_THROWS_AS(dropout(tape, x, 1.5, true, r4), std::invalid_argument);
  }
}

TEST_CASE("relu forward values and subgradient at zero", "[layers]") {
  Tape<double> tape;
  auto x = make_node(tensor_of<double>({3}, {-1.0, 0.0, 2.0}), "x");
  auto y = relu(tape, x);
  REQUIRE(y->value[0] == 0.0);
  REQUIRE(y->value[1] == 0.0);
  REQUIRE(y->value[2] == 2.0);

  auto loss = project(tape, y, std::vector<double>{1.0, 1.0, 1.0});
  tape.backward(loss);
  REQUIRE(x->grad[0] == 0.0);
  REQUIRE(x->grad[1] == 0.0);  // subgradient at the kink pinned to 0
  REQUIRE(x->grad[2] == 1.0);

  Tape<double> t2;
  Rng rng(81);
  auto pos = rand_tensor<double>(rng, {4, 4}, 0.0, 2.0);
  auto kept = relu(t2, make_node(pos));
  REQUIRE(bit_equal(kept->value, pos));
}

TEST_CASE("dense layer hand examples and parameter count", "[layers]") {
  SECTION("identity weights reproduce the input") {
    ParamStore<double> ps;
    Rng rng(91);
    Dense<double> d(ps, "d", rng, 4, 4);
    d.w->value = Tensor<double>({4, 4});
    for (int i = 0; i < 4; ++i) d.w->value.at(i, i) = 1.0;
    d.b->value = Tensor<double>({4});
    Tape<double> tape;
    auto xv = rand_tensor<double>(rng, {3, 4});
    auto y = d(tape, make_node(xv));
    REQUIRE(bit_equal(y->value, xv));
  }

  SECTION("x=[[1,2]], W=I, b=[1,1] gives [[2,3]]") {
    ParamStore<double> ps;
    Rng rng(92);
    Dense<double> d(ps, "d", rng, 2, 2);
    d.w->value = tensor_of<double>({2, 2}, {1, 0, 0, 1});
    d.b->value = tensor_of<double>({2}, {1, 1});
    Tape<double> tape;
    auto y = d(tape, make_node(tensor_of<double>({1, 2}, {1, 2})));
    REQUIRE(y->value.at(0, 0) == 2.0);
    REQUIRE(y->value.at(0, 1) == 3.0);
  }

  SECTION("a 512 -> 10 layer holds 5130 parameters") {
    ParamStore<float> ps;
    Rng rng(93);
    Dense<float> d(ps, "d", rng, 512, 10);
    REQUIRE(ps.param_count() == 5130);
  }

  SECTION("feature mismatch is an error") {
    ParamStore<double> ps;
    Rng rng(94);
    Dense<double> d(ps, "d", rng, 4, 2);
    Tape<double> tape;
    REQUIRE_THROWS_AS(d(tape, make_node(Tensor<double>({3, 5}))), ShapeError);
  }
}

TEST_CASE("global average pool hand examples", "[layers]") {
  Tape<double> tape;
  auto x = make_node(tensor_of<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto y = global_avg_pool(tape, x);
  REQUIRE(y->value.shape() == Shape{1, 1});
  REQUIRE(y->value[0] == 2.5);

  auto c = global_avg_pool(tape, make_node(Tensor<double>::full({2, 3, 5, 7}, -1.25)));
  REQUIRE(c->value.shape() == Shape{2, 3});
  for (std::int64_t i = 0; i < c->value.numel(); ++i) REQUIRE(c->value[i] == -1.25);

  Rng rng(101);
  auto any = global_avg_pool(tape, make_node(rand_tensor<double>(rng, {4, 6, 3, 9})));
  REQUIRE(any->value.shape() == Shape{4, 6});
}

TEST_CASE("initialization conventions", "[layers]") {
  ParamStore<double> ps;
  Rng rng(111);
  Conv2D<double> conv(ps, "conv", rng, 3, 8, 3);
  Dense<double> dense(ps, "dense", rng, 16, 4);
  BatchNorm<double> bn(ps, "bn", 8);

  for (std::int64_t i = 0; i < conv.b->value.numel(); ++i) REQUIRE(conv.b->value[i] == 0.0);
  for (std::int64_t i = 0; i < dense.b->value.numel(); ++i) REQUIRE(dense.b->value[i] == 0.0);
  for (std::int64_t i = 0; i < bn.gamma->value.numel(); ++i) REQUIRE(bn.gamma->value[i] == 1.0);
  for (std::int64_t i = 0; i < bn.beta->value.numel(); ++i) REQUIRE(bn.beta->value[i] == 0.0);
  for (std::int64_t i = 0; i < bn.running_mean->numel(); ++i)
    REQUIRE((*bn.running_mean)[i] == 0.0);
  for (std::int64_t i = 0; i < bn.running_var->numel(); ++i) REQUIRE((*bn.running_var)[i] == 1.0);

  // He draws: variance 2/fan_in = 0.02 for fan_in 100, within 15% over 1e4 samples.
  Rng hr(112);
  auto w = he_normal<double>(hr, {100, 100}, 100);
  double mean = 0;
  for (std::int64_t i = 0; i < w.numel(); ++i) mean += w[i];
  mean /= static_cast<double>(w.numel());
  double var = 0;
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    const double d = w[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(w.numel());
  REQUIRE(var >= 0.02 * 0.85);
  REQUIRE(var <= 0.02 * 1.15);
}

TEST_CASE("inference is deterministic call to call", "[layers]") {
  ParamStore<float> ps;
  Rng rng(121);
  ConvBnRelu<float> unit(ps, "u", rng, 3, 8, 3);
  Dense<float> dense(ps, "d", rng, 12, 5);

  auto xv = rand_tensor<float>(rng, {2, 3, 6, 6});
  Tape<float> t1, t2;
  auto y1 = unit(t1, make_node(xv), false);
  auto y2 = unit(t2, make_node(xv), false);
  REQUIRE(bit_equal(y1->value, y2->value));

  auto fv = rand_tensor<float>(rng, {3, 12});
  Tape<float> t3, t4;
  auto d1 = dense(t3, make_node(fv));
  auto d2 = dense(t4, make_node(fv));
  REQUIRE(bit_equal(d1->value, d2->value));

  // Duplicate parameter names are rejected.
  REQUIRE_THROWS_AS(Dense<float>(ps, "d", rng, 3, 3), std::logic_error);
}

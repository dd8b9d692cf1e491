#include <cmath>

#include "doctest.h"
#include "evsnn/errors.hpp"
#include "evsnn/ops.hpp"
#include "support/oracles.hpp"

using namespace evsnn;

TEST_CASE("tensor basics and checked mode") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 0.0);
  CHECK_THROWS_AS(Tensor({0, 3}), ValidationError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), ValidationError);

  set_check_finite(true);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), ValidationError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), ValidationError);
  set_check_finite(false);
  CHECK_NOTHROW(Tensor({1}, {std::nan("")}));
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(7);
  Var x = constant(oracle::random_tensor({1, 1, 4, 4}, rng));
  Var k = constant(Tensor({1, 1, 1, 1}, {1.0}));
  Var y = conv2d(x, k, 1, 0);
  REQUIRE(y->value.shape() == x->value.shape());
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == x->value[i]);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 5x5") {
  Var x = constant(Tensor::full({1, 1, 5, 5}, 1.0));
  Var k = constant(Tensor::full({1, 1, 3, 3}, 1.0));
  Var y = conv2d(x, k, 1, 0);
  REQUIRE(y->value.shape() == std::vector<int64_t>{1, 1, 3, 3});
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == doctest::Approx(9.0));
}

TEST_CASE("conv2d matches the brute-force oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 8; ++trial) {
    const int stride = trial % 2 + 1;
    const int pad = trial % 3;
    Tensor in = oracle::random_tensor({2, 3, 8, 8}, rng);
    Tensor k = oracle::random_tensor({4, 3, 3, 3}, rng);
    Var y = conv2d(constant(in), constant(k), stride, pad);
    Tensor ref = oracle::conv2d_ref(in, k, stride, pad);
    REQUIRE(y->value.shape() == ref.shape());
    for (int64_t i = 0; i < ref.numel(); ++i) CHECK(std::fabs(y->value[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("conv2d shape validation") {
  Var x = constant(Tensor::zeros({1, 2, 4, 4}));
  Var k = constant(Tensor::zeros({1, 3, 3, 3}));
  CHECK_THROWS_AS(conv2d(x, k, 1, 0), ValidationError);
  Var big = constant(Tensor::zeros({1, 2, 6, 6}));
  CHECK_THROWS_AS(conv2d(x, big, 1, 0), ValidationError);
}

TEST_CASE("conv3d identity kernel") {
  Rng rng(9);
  Var x = constant(oracle::random_tensor({1, 2, 3, 4, 4}, rng));
  Tensor kt = Tensor::zeros({2, 2, 1, 1, 1});
  kt.at({0, 0, 0, 0, 0}) = 1.0;
  kt.at({1, 1, 0, 0, 0}) = 1.0;
  Var y = conv3d(x, constant(kt), {1, 1, 1}, {0, 0, 0});
  REQUIRE(y->value.shape() == x->value.shape());
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == x->value[i]);
}

TEST_CASE("conv3d all-ones 3x3x3 interior") {
  Var x = constant(Tensor::full({1, 1, 5, 5, 5}, 1.0));
  Var k = constant(Tensor::full({1, 1, 3, 3, 3}, 1.0));
  Var y = conv3d(x, k, {1, 1, 1}, {0, 0, 0});
  REQUIRE(y->value.shape() == std::vector<int64_t>{1, 1, 3, 3, 3});
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == doctest::Approx(27.0));
}

TEST_CASE("conv3d matches the brute-force oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 6; ++trial) {
    const std::array<int, 3> stride{1, trial % 2 + 1, trial % 2 + 1};
    const std::array<int, 3> pad{trial % 2, 1, trial % 3};
    Tensor in = oracle::random_tensor({1, 2, 6, 6, 6}, rng);
    Tensor k = oracle::random_tensor({3, 2, 3, 3, 3}, rng);
    Var y = conv3d(constant(in), constant(k), stride, pad);
    Tensor ref = oracle::conv3d_ref(in, k, stride, pad);
    REQUIRE(y->value.shape() == ref.shape());
    for (int64_t i = 0; i < ref.numel(); ++i) CHECK(std::fabs(y->value[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("conv asymmetric same padding preserves shape for even kernels") {
  Rng rng(5);
  Tensor in = oracle::random_tensor({1, 2, 6, 6, 6}, rng);
  for (int f : {1, 2, 3, 4, 5}) {
    Tensor k = oracle::random_tensor({2, 2, f, f, f}, rng);
    Var y = conv3d_padded(constant(in), constant(k), {1, 1, 1},
                          {(f - 1) / 2, (f - 1) / 2, (f - 1) / 2}, {f / 2, f / 2, f / 2});
    CHECK(y->value.shape() == in.shape());
  }
}

TEST_CASE("maxpool 2x2 basics") {
  Var x = constant(Tensor({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Var y = maxpool(x, {2, 2}, {2, 2});
  REQUIRE(y->value.numel() == 1);
  CHECK(y->value[0] == 4.0);
  CHECK_THROWS_AS(maxpool(x, {3, 3}, {1, 1}), ValidationError);
}

TEST_CASE("maxpool constant input routes gradient to the first window element") {
  Var x = parameter(Tensor::full({1, 1, 2, 2}, 1.5), "x");
  Var y = maxpool(x, {2, 2}, {2, 2});
  backward(reshape(y, {1}));
  CHECK(x->grad.at({0, 0, 0, 0}) == 1.0);
  CHECK(x->grad.at({0, 0, 0, 1}) == 0.0);
  CHECK(x->grad.at({0, 0, 1, 0}) == 0.0);
  CHECK(x->grad.at({0, 0, 1, 1}) == 0.0);
}

TEST_CASE("maxpool 1x2x2 matches per-window scan oracle") {
  Rng rng(45);
  Tensor in = oracle::random_tensor({1, 1, 4, 8, 8}, rng);
  Var y = maxpool(constant(in), {1, 2, 2}, {1, 2, 2});
  Tensor ref = oracle::maxpool3_ref(in, {1, 2, 2}, {1, 2, 2});
  REQUIRE(y->value.shape() == ref.shape());
  for (int64_t i = 0; i < ref.numel(); ++i) CHECK(y->value[i] == ref[i]);
}

TEST_CASE("linear identity and zero weight") {
  Rng rng(11);
  Tensor x = oracle::random_tensor({3, 4}, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (int64_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  Var y = linear(constant(x), constant(eye), constant(Tensor::zeros({4})));
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == x[i]);

  Tensor b({3}, {0.5, -1.0, 2.0});
  Var z = linear(constant(x), constant(Tensor::zeros({4, 3})), constant(b));
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t j = 0; j < 3; ++j) CHECK(z->value.at({i, j}) == b[j]);
  }
}

TEST_CASE("linear matches triple-loop matmul") {
  Rng rng(13);
  Tensor x = oracle::random_tensor({8, 16}, rng);
  Tensor w = oracle::random_tensor({16, 4}, rng);
  Tensor b = oracle::random_tensor({4}, rng);
  Var y = linear(constant(x), constant(w), constant(b));
  Tensor ref = oracle::matmul_ref(x, w, b);
  for (int64_t i = 0; i < ref.numel(); ++i) CHECK(std::fabs(y->value[i] - ref[i]) < 1e-10);
  CHECK_THROWS_AS(linear(constant(x), constant(Tensor::zeros({5, 4})), constant(b)), ValidationError);
}

TEST_CASE("softmax symmetry, stability, direct evaluation") {
  Var a = softmax(constant(Tensor({1, 2}, {0.0, 0.0})));
  CHECK(a->value[0] == doctest::Approx(0.5));
  CHECK(a->value[1] == doctest::Approx(0.5));

  Var b = softmax(constant(Tensor({1, 2}, {1000.0, 1000.0})));
  CHECK(b->value[0] == doctest::Approx(0.5));
  CHECK(b->value[1] == doctest::Approx(0.5));

  Var c = softmax(constant(Tensor({1, 3}, {1.0, 2.0, 3.0})));
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int64_t j = 0; j < 3; ++j) {
    CHECK(std::fabs(c->value[j] - std::exp(1.0 + static_cast<double>(j)) / denom) < 1e-12);
  }
}

TEST_CASE("softmax rows sum to one for arbitrary finite logits") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t classes = 2 + static_cast<int64_t>(rng.below(6));
    Tensor logits = oracle::random_tensor({4, classes}, rng, -50.0, 50.0);
    Var y = softmax(constant(logits));
    for (int64_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int64_t j = 0; j < classes; ++j) sum += y->value.at({r, j});
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cross entropy: uniform, saturated, hand formula") {
  Var uniform = cross_entropy(constant(Tensor::zeros({2, 5})), {0, 3});
  CHECK(uniform->value[0] == doctest::Approx(std::log(5.0)));

  Tensor sharp = Tensor::full({1, 3}, -20.0);
  sharp.at({0, 1}) = 20.0;
  Var sat = cross_entropy(constant(sharp), {1});
  CHECK(std::fabs(sat->value[0]) < 1e-8);

  Rng rng(19);
  Tensor logits = oracle::random_tensor({4, 3}, rng);
  std::vector<int> targets{2, 0, 1, 1};
  Var loss = cross_entropy(constant(logits), targets);
  double expected = 0.0;
  for (int64_t i = 0; i < 4; ++i) {
    double denom = 0.0;
    for (int64_t j = 0; j < 3; ++j) denom += std::exp(logits.at({i, j}));
    expected += -std::log(std::exp(logits.at({i, targets[static_cast<size_t>(i)]})) / denom);
  }
  expected /= 4.0;
  CHECK(std::fabs(loss->value[0] - expected) < 1e-10);

  CHECK_THROWS_AS(cross_entropy(constant(logits), {0, 1, 2, 3}), ValidationError);
}

TEST_CASE("batchnorm constant input and gamma=0") {
  Var gamma = constant(Tensor::full({3}, 1.0));
  Var beta = constant(Tensor::zeros({3}));
  BatchNormState state = BatchNormState::make(3);
  Var x = constant(Tensor::full({2, 3, 4}, 5.0));
  Var y = batchnorm(x, gamma, beta, state, Mode::kTrain);
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == doctest::Approx(0.0));

  Var beta2 = constant(Tensor({3}, {1.0, -2.0, 0.5}));
  BatchNormState state2 = BatchNormState::make(3);
  Rng rng(23);
  Var x2 = constant(oracle::random_tensor({2, 3, 4}, rng));
  Var y2 = batchnorm(x2, constant(Tensor::zeros({3})), beta2, state2, Mode::kTrain);
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t s = 0; s < 4; ++s) CHECK(y2->value.at({b, c, s}) == beta2->value[c]);
    }
  }
}

TEST_CASE("batchnorm train output has zero mean unit variance per channel") {
  Rng rng(29);
  Var x = constant(oracle::random_tensor({4, 3, 10}, rng, -3.0, 3.0));
  BatchNormState state = BatchNormState::make(3, 0.1, 1e-8);
  Var y = batchnorm(x, constant(Tensor::full({3}, 1.0)), constant(Tensor::zeros({3})), state, Mode::kTrain);
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t s = 0; s < 10; ++s) mean += y->value.at({b, c, s});
    mean /= 40.0;
    double var = 0.0;
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t s = 0; s < 10; ++s) {
        const double d = y->value.at({b, c, s}) - mean;
        var += d * d;
      }
    var /= 40.0;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("batchnorm eval uses running statistics") {
  Rng rng(31);
  BatchNormState state = BatchNormState::make(2);
  Var gamma = constant(Tensor::full({2}, 1.0));
  Var beta = constant(Tensor::zeros({2}));
  // Drive the running stats with many train batches of a fixed distribution.
  for (int i = 0; i < 200; ++i) {
    Var x = constant(oracle::random_tensor({8, 2, 6}, rng, 1.0, 3.0));
    batchnorm(x, gamma, beta, state, Mode::kTrain);
  }
  CHECK(state.running_mean[0] == doctest::Approx(2.0).epsilon(0.05));
  Var probe = constant(Tensor::full({1, 2, 3}, 2.0));
  Var y = batchnorm(probe, gamma, beta, state, Mode::kEval);
  for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(std::fabs(y->value[i]) < 0.2);
}

TEST_CASE("batchnorm over a non-default channel axis") {
  Rng rng(97);
  Tensor src = oracle::random_tensor({2, 3, 4}, rng);
  Var gamma = constant(Tensor({4}, {1.0, 0.5, 2.0, 1.5}));
  Var beta = constant(Tensor({4}, {0.1, -0.1, 0.0, 0.3}));

  BatchNormState s_axis2 = BatchNormState::make(4);
  Var y = batchnorm(constant(src), gamma, beta, s_axis2, Mode::kTrain, 2);

  // reference: swap the axis to position 1 by hand and use the default path
  Var moved = permute(constant(src), {0, 2, 1});
  BatchNormState s_ref = BatchNormState::make(4);
  Var ref = permute(batchnorm(moved, gamma, beta, s_ref, Mode::kTrain), {0, 2, 1});
  for (int64_t i = 0; i < src.numel(); ++i) CHECK(y->value[i] == doctest::Approx(ref->value[i]));
  for (int64_t ch = 0; ch < 4; ++ch) CHECK(s_axis2.running_mean[ch] == s_ref.running_mean[ch]);

  CHECK_THROWS_AS(batchnorm(constant(src), gamma, beta, s_axis2, Mode::kTrain, 7), ValidationError);
}

TEST_CASE("structural ops: reshape, permute, select, stack, mean") {
  Rng rng(37);
  Tensor src = oracle::random_tensor({2, 3, 4}, rng);
  Var x = constant(src);

  Var r = reshape(x, {4, 6});
  CHECK(r->value.shape() == std::vector<int64_t>{4, 6});
  CHECK(r->value[5] == src[5]);

  Var p = permute(x, {2, 0, 1});
  CHECK(p->value.shape() == std::vector<int64_t>{4, 2, 3});
  CHECK(p->value.at({1, 0, 2}) == src.at({0, 2, 1}));

  Var s0 = select_leading(x, 1);
  CHECK(s0->value.shape() == std::vector<int64_t>{3, 4});
  CHECK(s0->value.at({2, 3}) == src.at({1, 2, 3}));
  CHECK_THROWS_AS(select_leading(x, 2), ValidationError);

  Var st = stack_leading({s0, s0});
  CHECK(st->value.shape() == std::vector<int64_t>{2, 3, 4});
  CHECK(st->value.at({1, 2, 3}) == src.at({1, 2, 3}));

  Var m = mean_leading(x);
  CHECK(m->value.shape() == std::vector<int64_t>{3, 4});
  CHECK(m->value.at({0, 0}) == doctest::Approx((src.at({0, 0, 0}) + src.at({1, 0, 0})) / 2.0));
}

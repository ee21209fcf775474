#include <doctest.h>

#include <cmath>
#include <random>

#include "polyth/grad_check.hpp"
#include "polyth/ops.hpp"
#include "polyth/tensor.hpp"
#include "support/oracles.hpp"

using namespace polyth;
using oracle::random_tensor;

namespace {

// Random tensor with every entry at least `gap` away from zero.
Tensor away_from_zero(const Shape& s, std::mt19937_64& rng, double gap) {
  Tensor t = random_tensor(s, rng);
  for (double& v : t.data()) v = v >= 0 ? v + gap : v - gap;
  return t;
}

}  // namespace

TEST_CASE("tensor construction and shape errors") {
  CHECK_THROWS_AS(Tensor(Shape{}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(t.dim(2), std::out_of_range);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  Tensor u({3, 2});
  CHECK_THROWS_AS(t += u, std::invalid_argument);
}

TEST_CASE("conv2d examples") {
  std::mt19937_64 rng(1);
  SUBCASE("1x1 identity kernel") {
    Tensor x = random_tensor({1, 1, 3, 3}, rng);
    CHECK(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0) == x);
  }
  SUBCASE("zero kernels give zero output") {
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Tensor y = conv2d(x, Tensor({4, 3, 3, 3}), Tensor({4}), 1, 1);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("matches nested-loop oracle") {
    Tensor x = random_tensor({2, 3, 8, 8}, rng), k = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
    CHECK(max_abs_diff(conv2d(x, k, b, 1, 1), oracle::conv2d(x, k, b, 1, 1)) < 1e-10);
  }
  SUBCASE("stride 2, pad 0 with odd extent floors") {
    Tensor x = random_tensor({1, 2, 7, 7}, rng), k = random_tensor({3, 2, 1, 1}, rng), b = random_tensor({3}, rng);
    Tensor y = conv2d(x, k, b, 2, 0);
    CHECK(y.shape() == Shape{1, 3, 4, 4});
    CHECK(max_abs_diff(y, oracle::conv2d(x, k, b, 2, 0)) < 1e-10);
  }
  SUBCASE("channel mismatch names the dimension") {
    Tensor x({1, 3, 4, 4});
    try {
      conv2d(x, Tensor({2, 2, 3, 3}), Tensor({2}), 1, 1);
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("channel") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(x, Tensor({2, 3, 3, 3}), Tensor({3}), 1, 1), std::invalid_argument);
  }
}

TEST_CASE("conv2d linearity") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 2, 6, 6}, rng), y = random_tensor({2, 2, 6, 6}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng), zero_b({3});
    const double a = 1.7, b = -0.3;
    Tensor lhs = conv2d(a * x + b * y, k, zero_b, 1, 1);
    Tensor rhs = a * conv2d(x, k, zero_b, 1, 1) + b * conv2d(y, k, zero_b, 1, 1);
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("depthwise_conv examples") {
  std::mt19937_64 rng(3);
  SUBCASE("center-one kernel is the identity") {
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Tensor k({3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) k[c * 9 + 4] = 1.0;
    CHECK(max_abs_diff(depthwise_conv(x, k, 1, 1), x) == 0.0);
  }
  SUBCASE("equals conv2d with block-diagonal kernels") {
    Tensor x = random_tensor({2, 4, 7, 7}, rng), k = random_tensor({4, 3, 3}, rng);
    Tensor full({4, 4, 3, 3});
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) full[(c * 4 + c) * 9 + i] = k[c * 9 + i];
    CHECK(max_abs_diff(depthwise_conv(x, k, 1, 1), conv2d(x, full, Tensor({4}), 1, 1)) < 1e-12);
    CHECK(max_abs_diff(depthwise_conv(x, k, 2, 1), oracle::depthwise(x, k, 2, 1)) < 1e-10);
  }
  SUBCASE("constant input, pad 0") {
    Tensor x({1, 2, 6, 6}, 0.5), k = random_tensor({2, 3, 3}, rng);
    Tensor y = depthwise_conv(x, k, 1, 0);
    for (std::size_t c = 0; c < 2; ++c) {
      double ksum = 0;
      for (std::size_t i = 0; i < 9; ++i) ksum += k[c * 9 + i];
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(0, c, i, j) == doctest::Approx(ksum * 0.5).epsilon(1e-12));
    }
  }
  SUBCASE("channel mismatch rejected") {
    CHECK_THROWS_AS(depthwise_conv(Tensor({1, 3, 4, 4}), Tensor({2, 3, 3}), 1, 1), std::invalid_argument);
  }
}

TEST_CASE("pointwise_conv examples") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  SUBCASE("identity weights") {
    Tensor w({3, 3});
    for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    CHECK(pointwise_conv(x, w, Tensor({3})) == x);
  }
  SUBCASE("all-ones weights sum the channels") {
    Tensor y = pointwise_conv(x, Tensor({1, 3}, 1.0), Tensor({1}));
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w)
        CHECK(y.at(1, 0, h, w) == doctest::Approx(x.at(1, 0, h, w) + x.at(1, 1, h, w) + x.at(1, 2, h, w)));
  }
  SUBCASE("equals conv2d with 1x1 kernels and the loop oracle") {
    Tensor w = random_tensor({5, 3}, rng), b = random_tensor({5}, rng);
    CHECK(max_abs_diff(pointwise_conv(x, w, b), conv2d(x, w.reshaped({5, 3, 1, 1}), b, 1, 0)) < 1e-12);
    CHECK(max_abs_diff(pointwise_conv(x, w, b), oracle::pointwise(x, w, b)) < 1e-10);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(pointwise_conv(x, Tensor({2, 4}), Tensor({2})), std::invalid_argument);
  }
}

TEST_CASE("separable_conv") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 3, 6, 6}, rng);
  SUBCASE("double identity") {
    Tensor dw({3, 3, 3}), pw({3, 3});
    for (std::size_t c = 0; c < 3; ++c) {
      dw[c * 9 + 4] = 1.0;
      pw.at(c, c) = 1.0;
    }
    CHECK(separable_conv(x, dw, pw, Tensor({3})) == x);
  }
  SUBCASE("gradient check") {
    Tensor dw = random_tensor({3, 3, 3}, rng), pw = random_tensor({4, 3}, rng), b = random_tensor({4}, rng);
    auto fwd = [](const std::vector<Tensor>& in) { return separable_conv(in[0], in[1], in[2], in[3]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      SeparableGrads g = separable_conv_backward(in[0], in[1], in[2], d);
      return std::vector<Tensor>{g.input, g.dw_kernels, g.pw_weights, g.pw_bias};
    };
    CHECK(grad_check(fwd, bwd, {x, dw, pw, b}).max_rel_error < 1e-4);
  }
}

TEST_CASE("dense examples") {
  std::mt19937_64 rng(6);
  SUBCASE("hand arithmetic") {
    Tensor y = dense(Tensor({1, 2}, {1, 2}), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, {10, 10}));
    CHECK(y == Tensor({1, 2}, {11, 12}));
  }
  SUBCASE("identity") {
    Tensor x = random_tensor({3, 4}, rng), w({4, 4});
    for (std::size_t i = 0; i < 4; ++i) w.at(i, i) = 1.0;
    CHECK(dense(x, w, Tensor({4})) == x);
  }
  SUBCASE("loop oracle") {
    Tensor x = random_tensor({4, 7}, rng), w = random_tensor({7, 5}, rng), b = random_tensor({5}, rng);
    CHECK(max_abs_diff(dense(x, w, b), oracle::matmul_bias(x, w, b)) < 1e-12);
  }
  SUBCASE("mismatch rejected") {
    CHECK_THROWS_AS(dense(Tensor({2, 3}), Tensor({4, 2}), Tensor({2})), std::invalid_argument);
  }
}

TEST_CASE("relu, softmax, maxpool2, global_avg_pool") {
  std::mt19937_64 rng(7);
  CHECK(relu(Tensor({1, 3}, {-1, 0, 2})) == Tensor({1, 3}, {0, 0, 2}));
  Tensor pos = random_tensor({2, 5}, rng, 0.0, 3.0);
  CHECK(relu(pos) == pos);

  Tensor p = softmax(Tensor({1, 3}));
  for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  Tensor big = softmax(Tensor({1, 3}, {1000, 0, 0}));
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  Tensor window({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(maxpool2(window)[0] == 4.0);
  Tensor constant({2, 3, 4, 6}, 0.7);
  const Tensor pooled_const = maxpool2(constant);
  for (double v : pooled_const.data()) CHECK(v == 0.7);
  CHECK_THROWS_AS(maxpool2(Tensor({1, 1, 3, 4})), std::invalid_argument);
  // ties route to the first element
  Tensor tie({1, 1, 2, 2}, 5.0);
  Tensor g = maxpool2_backward(tie, Tensor({1, 1, 1, 1}, 1.0));
  CHECK(g == Tensor({1, 1, 2, 2}, {1, 0, 0, 0}));

  Tensor gap = global_avg_pool(Tensor({2, 3, 4, 4}, 2.5));
  CHECK(gap.shape() == Shape{2, 3});
  for (double v : gap.data()) CHECK(v == 2.5);
  Tensor one = random_tensor({2, 3, 1, 1}, rng);
  CHECK(global_avg_pool(one) == one.reshaped({2, 3}));
  Tensor r = random_tensor({2, 4, 3, 5}, rng);
  Tensor m = global_avg_pool(r);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0;
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 5; ++w) s += r.at(n, c, h, w);
      CHECK(std::abs(m.at(n, c) - s / 15.0) < 1e-12);
    }
}

TEST_CASE("softmax properties") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 3}, rng, -20, 20);
    Tensor p = softmax(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.at(i, 0) + p.at(i, 1) + p.at(i, 2) - 1.0) < 1e-12);
    // A shift that is exactly representable keeps the max-subtracted row bitwise.
    Tensor shifted = x;
    for (double& v : shifted.data()) v += 64.0;
    CHECK(max_abs_diff(softmax(shifted), p) < 1e-12);
  }
  Tensor a({1, 3}, {1, 2, 3}), b({1, 3}, {101, 102, 103});
  CHECK(softmax(a) == softmax(b));
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({8, 16}, rng);
  SUBCASE("inference is the bitwise identity") {
    DropoutResult r = dropout(x, 0.25, false, rng);
    CHECK(r.output == x);
  }
  SUBCASE("p = 0 in training") { CHECK(dropout(x, 0.0, true, rng).output == x); }
  SUBCASE("p outside [0,1) rejected") {
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
    CHECK_THROWS_AS(dropout(x, -0.1, true, rng), std::invalid_argument);
  }
  SUBCASE("statistics over 1e6 ones") {
    std::mt19937_64 seeded(2024);
    DropoutResult r = dropout(Tensor({1000, 1000}, 1.0), 0.25, true, seeded);
    double sum = 0;
    std::size_t zeros = 0;
    for (double v : r.output.data()) {
      sum += v;
      zeros += v == 0.0;
    }
    const double mean = sum / 1e6, zero_frac = zeros / 1e6;
    CHECK(mean >= 0.99);
    CHECK(mean <= 1.01);
    CHECK(zero_frac >= 0.245);
    CHECK(zero_frac <= 0.255);
  }
}

TEST_CASE("backward passes match finite differences") {
  std::mt19937_64 rng(10);
  SUBCASE("conv2d") {
    Tensor x = random_tensor({2, 2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    for (std::size_t stride : {1, 2}) {
      auto fwd = [&](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], stride, 1); };
      auto bwd = [&](const std::vector<Tensor>& in, const Tensor& d) {
        ConvGrads g = conv2d_backward(in[0], in[1], d, stride, 1);
        return std::vector<Tensor>{g.input, g.kernels, g.bias};
      };
      CHECK(grad_check(fwd, bwd, {x, k, b}).max_rel_error < 1e-6);
    }
  }
  SUBCASE("depthwise and pointwise") {
    Tensor x = random_tensor({2, 3, 5, 5}, rng), k = random_tensor({3, 3, 3}, rng);
    auto fwd = [](const std::vector<Tensor>& in) { return depthwise_conv(in[0], in[1], 1, 1); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      ConvGrads g = depthwise_conv_backward(in[0], in[1], d, 1, 1);
      return std::vector<Tensor>{g.input, g.kernels};
    };
    CHECK(grad_check(fwd, bwd, {x, k}).max_rel_error < 1e-6);
    Tensor w = random_tensor({4, 3}, rng), b = random_tensor({4}, rng);
    auto pf = [](const std::vector<Tensor>& in) { return pointwise_conv(in[0], in[1], in[2]); };
    auto pb = [](const std::vector<Tensor>& in, const Tensor& d) {
      ConvGrads g = pointwise_conv_backward(in[0], in[1], d);
      return std::vector<Tensor>{g.input, g.kernels, g.bias};
    };
    CHECK(grad_check(pf, pb, {x, w, b}).max_rel_error < 1e-6);
  }
  SUBCASE("dense 2x3 by 3x2") {
    Tensor x = random_tensor({2, 3}, rng), w = random_tensor({3, 2}, rng), b = random_tensor({2}, rng);
    auto fwd = [](const std::vector<Tensor>& in) { return dense(in[0], in[1], in[2]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      DenseGrads g = dense_backward(in[0], in[1], d);
      return std::vector<Tensor>{g.input, g.weights, g.bias};
    };
    CHECK(grad_check(fwd, bwd, {x, w, b}).max_rel_error < 1e-6);
  }
  SUBCASE("relu away from the kink") {
    Tensor x = away_from_zero({3, 7}, rng, 1e-3);
    auto fwd = [](const std::vector<Tensor>& in) { return relu(in[0]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) { return std::vector<Tensor>{relu_backward(in[0], d)}; };
    CHECK(grad_check(fwd, bwd, {x}).max_rel_error < 1e-6);
  }
  SUBCASE("softmax") {
    Tensor x = random_tensor({3, 3}, rng, -2, 2);
    auto fwd = [](const std::vector<Tensor>& in) { return softmax(in[0]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      return std::vector<Tensor>{softmax_backward(softmax(in[0]), d)};
    };
    CHECK(grad_check(fwd, bwd, {x}).max_rel_error < 1e-4);
  }
  SUBCASE("maxpool2 with distinct values") {
    Tensor x({2, 2, 4, 4});
    std::vector<double> vals(x.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    for (std::size_t i = 0; i < vals.size(); ++i) x[i] = vals[i];
    auto fwd = [](const std::vector<Tensor>& in) { return maxpool2(in[0]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      return std::vector<Tensor>{maxpool2_backward(in[0], d)};
    };
    CHECK(grad_check(fwd, bwd, {x}).max_rel_error < 1e-4);
  }
  SUBCASE("global_avg_pool and dropout") {
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    auto fwd = [](const std::vector<Tensor>& in) { return global_avg_pool(in[0]); };
    auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      return std::vector<Tensor>{global_avg_pool_backward(in[0].shape(), d)};
    };
    CHECK(grad_check(fwd, bwd, {x}).max_rel_error < 1e-6);

    Tensor h = random_tensor({4, 6}, rng);
    auto dfwd = [](const std::vector<Tensor>& in) {
      std::mt19937_64 r(77);
      return dropout(in[0], 0.25, true, r).output;
    };
    auto dbwd = [](const std::vector<Tensor>& in, const Tensor& d) {
      std::mt19937_64 r(77);
      return std::vector<Tensor>{dropout_backward(dropout(in[0], 0.25, true, r).mask, d)};
    };
    CHECK(grad_check(dfwd, dbwd, {h}).max_rel_error < 1e-6);
  }
}

TEST_CASE("grad_check detects a wrong backward") {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({2, 3}, rng), w = random_tensor({3, 2}, rng), b = random_tensor({2}, rng);
  auto fwd = [](const std::vector<Tensor>& in) { return dense(in[0], in[1], in[2]); };
  auto bwd = [](const std::vector<Tensor>& in, const Tensor& d) {
    DenseGrads g = dense_backward(in[0], in[1], d);
    g.weights *= 1.01;
    return std::vector<Tensor>{g.input, g.weights, g.bias};
  };
  const GradCheckReport r = grad_check(fwd, bwd, {x, w, b});
  CHECK(r.max_rel_error > 5e-3);
  CHECK(r.worst_input == 1);
}

TEST_CASE("forward ops preserve finiteness") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> ext(1, 4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = ext(rng), c = ext(rng), h = 2 * ext(rng), w = 2 * ext(rng), f = ext(rng);
    Tensor x = random_tensor({n, c, h, w}, rng, -50, 50);
    CHECK(conv2d(x, random_tensor({f, c, 3, 3}, rng), random_tensor({f}, rng), 1, 1).all_finite());
    CHECK(depthwise_conv(x, random_tensor({c, 3, 3}, rng), 1, 1).all_finite());
    CHECK(pointwise_conv(x, random_tensor({f, c}, rng), random_tensor({f}, rng)).all_finite());
    CHECK(maxpool2(x).all_finite());
    CHECK(relu(x).all_finite());
    Tensor pooled = global_avg_pool(x);
    CHECK(pooled.all_finite());
    CHECK(softmax(dense(pooled, random_tensor({c, 3}, rng, -100, 100), Tensor({3}))).all_finite());
    CHECK(dropout(pooled, 0.25, true, rng).output.all_finite());
  }
}

TEST_CASE("convolutions agree with oracles on random shapes") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> small(1, 4), ext(1, 8), k(1, 3), st(1, 2), pd(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = std::min<std::size_t>(small(rng), 2), c = small(rng), f = small(rng);
    const std::size_t kk = k(rng), h = ext(rng) + kk, w = ext(rng) + kk, s = st(rng), p = pd(rng);
    CAPTURE(trial);
    Tensor x = random_tensor({n, c, h, w}, rng);
    Tensor kern = random_tensor({f, c, kk, kk}, rng), b = random_tensor({f}, rng);
    CHECK(max_abs_diff(conv2d(x, kern, b, s, p), oracle::conv2d(x, kern, b, s, p)) < 1e-10);
    Tensor dk = random_tensor({c, kk, kk}, rng);
    CHECK(max_abs_diff(depthwise_conv(x, dk, s, p), oracle::depthwise(x, dk, s, p)) < 1e-10);
    Tensor pw = random_tensor({f, c}, rng);
    CHECK(max_abs_diff(pointwise_conv(x, pw, b), oracle::pointwise(x, pw, b)) < 1e-10);
  }
}

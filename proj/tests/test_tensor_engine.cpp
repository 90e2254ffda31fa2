#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sggan/gradcheck.hpp"
#include "sggan/graph.hpp"
#include "sggan/ops.hpp"

using namespace sggan;

namespace {

Tensor t1(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor({1, 1, 1, n}, std::move(v));
}

Tensor sobel_x_kernel() {
  const auto f = sobel_pair();
  Tensor k({1, 1, 3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k.at(0, 0, i, j) = f.cx[i][j];
  return k;
}

}  // namespace

TEST_CASE("tensor construction checks data length") {
  CHECK_THROWS_AS(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  Tensor t({2, 3, 4, 5}, 1.5f);
  CHECK(t.numel() == 120);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  CHECK_THROWS(t.item());
  CHECK(Tensor::scalar(2.0f).item() == 2.0f);
}

TEST_CASE("conv2d examples") {
  Graph g;
  auto x = g.constant(Tensor({1, 1, 3, 3}, 5.0f));
  auto y = ops::conv2d(x, g.constant(sobel_x_kernel()), 1, ops::Padding::zero, 1);
  CHECK(y.value().at(0, 0, 1, 1) == 0.0f);

  auto s = ops::conv2d(g.constant(Tensor({1, 1, 1, 1}, 2.0f)), g.constant(Tensor({1, 1, 1, 1}, 3.0f)));
  CHECK(s.value().item() == 6.0f);
}

TEST_CASE("conv2d matches the loop oracle") {
  std::mt19937_64 rng(11);
  for (int stride : {1, 2})
    for (int pad : {0, 1, 2})
      for (bool refl : {false, true}) {
        const Tensor x = oracle::random_tensor({2, 2, 5, 6}, rng);
        const Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng);
        Graph g;
        auto y = ops::conv2d(g.constant(x), g.constant(k), stride,
                             refl ? ops::Padding::reflect : ops::Padding::zero, pad);
        const Tensor want = oracle::conv2d(x, k, stride, pad, refl);
        REQUIRE(y.shape() == want.shape());
        CHECK(oracle::max_abs_diff(y.value(), want) < 1e-5);
      }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  Graph g;
  auto x = g.constant(Tensor({1, 2, 5, 5}));
  CHECK_THROWS_AS(ops::conv2d(x, g.constant(Tensor({1, 3, 3, 3}))), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(x, g.constant(Tensor({1, 2, 3, 3})), 0), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(x, g.constant(Tensor({1, 2, 7, 7}))), ShapeError);
}

TEST_CASE("conv2d with a zero kernel is zero") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    Graph g;
    auto y = ops::conv2d(g.constant(oracle::random_tensor({1, 3, 7, 5}, rng, -10, 10)),
                         g.constant(Tensor({2, 3, 3, 3})), 1, ops::Padding::reflect, 1);
    for (float v : y.value().vec()) CHECK(v == 0.0f);
  }
}

TEST_CASE("conv_transpose2d examples") {
  Graph g;
  auto y = ops::conv_transpose2d(g.constant(Tensor({1, 1, 1, 1}, 1.0f)), g.constant(Tensor({1, 1, 2, 2}, 1.0f)), 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (float v : y.value().vec()) CHECK(v == 1.0f);

  auto z = ops::conv_transpose2d(g.constant(Tensor({1, 2, 3, 3})), g.constant(Tensor({2, 4, 2, 2}, 0.7f)), 2);
  for (float v : z.value().vec()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(ops::conv_transpose2d(g.constant(Tensor({1, 1, 1, 1})), g.constant(Tensor({1, 1, 2, 2})), 0),
                  ShapeError);
}

TEST_CASE("conv_transpose2d equals the input-gradient of conv2d") {
  std::mt19937_64 rng(5);
  for (int stride : {1, 2}) {
    // conv2d (1, 3, 6, 6) -> (1, 2, oh, ow) with a 2x2 kernel
    const Tensor k = oracle::random_tensor({2, 3, 2, 2}, rng);
    Graph g;
    auto x = g.variable(Tensor({1, 3, 6, 6}));
    auto y = ops::conv2d(x, g.constant(k), stride);
    const Tensor up = oracle::random_tensor(y.shape(), rng);
    g.backward(ops::sum(ops::mul(y, g.constant(up))));
    const Tensor gx = g.grad(x);

    Graph h;
    auto t = ops::conv_transpose2d(h.constant(up), h.constant(k), stride);
    // transpose output covers (oh-1)*stride + 2 pixels, which may be less than 6
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          const float want = gx.at(0, c, i, j);
          const float got = (i < t.shape().h && j < t.shape().w) ? t.value().at(0, c, i, j) : 0.0f;
          CHECK(std::abs(want - got) < 1e-5);
        }
    CHECK(oracle::max_abs_diff(t.value(), oracle::conv_transpose2d(up, k, stride)) < 1e-5);
  }
}

TEST_CASE("instance_norm examples and oracle") {
  Graph g;
  auto one = g.constant(Tensor({1, 1, 1, 1}, 1.0f));
  auto zero = g.constant(Tensor({1, 1, 1, 1}, 0.0f));
  auto y = ops::instance_norm(g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), one, zero, 1e-5f);
  double mean = 0, var = 0;
  for (float v : y.value().vec()) mean += v / 4.0;
  for (float v : y.value().vec()) var += (v - mean) * (v - mean) / 4.0;
  CHECK(std::abs(mean) < 1e-3);
  CHECK(std::abs(var - 1.0) < 1e-3);

  auto c = ops::instance_norm(g.constant(Tensor({1, 1, 2, 2}, 5.0f)), one, zero, 1e-5f);
  for (float v : c.value().vec()) CHECK(v == 0.0f);

  CHECK_THROWS_AS(ops::instance_norm(g.constant(Tensor({1, 1, 2, 2})), one, zero, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(ops::instance_norm(g.constant(Tensor({1, 2, 2, 2})), one, zero), ShapeError);

  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({2, 3, 4, 5}, rng, -3, 3);
  const Tensor sc = oracle::random_tensor({1, 3, 1, 1}, rng), sh = oracle::random_tensor({1, 3, 1, 1}, rng);
  auto r = ops::instance_norm(g.constant(x), g.constant(sc), g.constant(sh), 1e-5f);
  CHECK(oracle::max_abs_diff(r.value(), oracle::instance_norm(x, sc, sh, 1e-5)) < 1e-5);
}

TEST_CASE("instance_norm normalises every non-constant plane") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    Graph g;
    const Tensor x = oracle::random_tensor({2, 4, 6, 7}, rng, -5, 5);
    auto y = ops::instance_norm(g.constant(x), g.constant(Tensor({1, 4, 1, 1}, 1.0f)),
                                g.constant(Tensor({1, 4, 1, 1}, 0.0f)));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 4; ++c) {
        double m = 0, v = 0;
        for (std::size_t p = 0; p < 42; ++p) m += y.value().at(n, c, p / 7, p % 7) / 42.0;
        for (std::size_t p = 0; p < 42; ++p) v += std::pow(y.value().at(n, c, p / 7, p % 7) - m, 2) / 42.0;
        CHECK(std::abs(m) < 1e-4);
        CHECK(std::abs(v - 1.0) < 1e-2);
      }
  }
}

TEST_CASE("activation examples") {
  Graph g;
  CHECK(ops::activation(g.constant(t1({-1.0f})), ops::Activation::leaky_relu(0.2f)).value()[0] ==
        doctest::Approx(-0.2f));
  CHECK(ops::activation(g.constant(t1({0.0f})), ops::Activation::tanh()).value()[0] == 0.0f);
  auto r = ops::activation(g.constant(t1({-2, 3})), ops::Activation::relu());
  CHECK(r.value().vec() == std::vector<float>{0, 3});
  CHECK_THROWS_AS(ops::activation(g.constant(t1({1})), ops::Activation::leaky_relu(1.5f)), std::invalid_argument);
}

TEST_CASE("activation subgradient at zero is the negative slope") {
  Graph g;
  auto x = g.variable(t1({0.0f, 0.0f}));
  auto a = ops::activation(x, ops::Activation::leaky_relu(0.2f));
  g.backward(ops::sum(a));
  CHECK(g.grad(x)[0] == doctest::Approx(0.2f));

  Graph h;
  auto y = h.variable(t1({0.0f}));
  h.backward(ops::sum(ops::activation(y, ops::Activation::relu())));
  CHECK(h.grad(y)[0] == 0.0f);
}

TEST_CASE("elementwise examples") {
  Graph g;
  CHECK(ops::sign(g.constant(t1({-3, 0, 2}))).value().vec() == std::vector<float>{-1, 0, 1});
  CHECK(ops::abs(g.constant(t1({-1.5f}))).value()[0] == 1.5f);
  CHECK(ops::mul(g.constant(t1({2})), g.constant(t1({3}))).value()[0] == 6.0f);
  CHECK_THROWS_AS(ops::add(g.constant(t1({1, 2})), g.constant(t1({1, 2, 3}))), ShapeError);
  auto b = ops::add(g.constant(t1({1, 2})), g.constant(Tensor::scalar(10)));
  CHECK(b.value().vec() == std::vector<float>{11, 12});
}

TEST_CASE("sign is gradient-blocked") {
  Graph g;
  auto x = g.variable(t1({-2, 3}));
  auto s = ops::sign(x);
  CHECK_FALSE(s.requires_grad());
  g.backward(ops::sum(ops::mul(x, s)));
  CHECK(g.grad(x).vec() == std::vector<float>{-1, 1});
}

TEST_CASE("reductions") {
  Graph g;
  CHECK(ops::reduce(g.constant(t1({1, -2, 3})), ops::Reduction::l1_norm).value().item() == 6.0f);
  CHECK(ops::mean(g.constant(t1({2, 4}))).value().item() == 3.0f);
  CHECK_THROWS(ops::sum(g.constant(Tensor())));
  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor({3, 4, 5, 6}, rng);
  double acc = 0;
  for (float v : x.vec()) acc += v;
  CHECK(std::abs(ops::sum(g.constant(x)).value().item() - acc) < 1e-5);
}

TEST_CASE("resize_nearest") {
  Graph g;
  Tensor oh({1, 2, 2, 2});
  oh.at(0, 0, 0, 0) = oh.at(0, 1, 0, 1) = oh.at(0, 1, 1, 0) = oh.at(0, 0, 1, 1) = 1.0f;
  auto up = ops::resize_nearest(g.constant(oh), 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(up.value().at(0, 0, i, j) == oh.at(0, 0, i / 2, j / 2));
      CHECK(up.value().at(0, 0, i, j) + up.value().at(0, 1, i, j) == 1.0f);
    }
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng);
  CHECK(bitwise_equal(ops::resize_nearest(g.constant(x), 4, 4).value(), x));
  auto down = ops::resize_nearest(g.constant(x), 2, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(down.value().at(0, c, i, j) == x.at(0, c, i * 2, j * 2));
  CHECK_THROWS(ops::resize_nearest(g.constant(x), 0, 2));
}

TEST_CASE("resize_nearest keeps one-hot maps one-hot") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> cls(0, 3), dim(1, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng);
    Tensor m({1, 4, h, w});
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) m.at(0, cls(rng), i, j) = 1.0f;
    Graph g;
    const std::size_t th = dim(rng), tw = dim(rng);
    auto r = ops::resize_nearest(g.constant(m), th, tw);
    for (std::size_t i = 0; i < th; ++i)
      for (std::size_t j = 0; j < tw; ++j) {
        float s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += r.value().at(0, c, i, j);
        CHECK(s == 1.0f);
      }
  }
}

TEST_CASE("backward examples") {
  Graph g;
  auto x = g.variable(t1({1, 2}));
  g.backward(ops::sum(ops::mul(x, 2.0f)));
  CHECK(g.grad(x).vec() == std::vector<float>{2, 2});
  CHECK_THROWS(g.backward(ops::sum(x)));

  Graph h;
  auto y = h.variable(t1({3, -4}));
  h.backward(ops::reduce(y, ops::Reduction::l1_norm));
  CHECK(h.grad(y).vec() == std::vector<float>{1, -1});

  Graph k;
  CHECK_THROWS(k.backward(k.variable(t1({1, 2}))));
}

TEST_CASE("composite graph gradient matches finite differences") {
  std::mt19937_64 rng(21);
  const Tensor kernel = oracle::random_tensor({2, 2, 3, 3}, rng);
  const Tensor one({1, 2, 1, 1}, 1.0f), zero({1, 2, 1, 1}, 0.0f);
  auto f = [&](Graph& g, Var x) {
    auto y = ops::conv2d(x, g.constant(kernel), 1, ops::Padding::zero, 1);
    y = ops::instance_norm(y, g.constant(one), g.constant(zero));
    y = ops::activation(y, ops::Activation::leaky_relu(0.2f));
    return ops::reduce(y, ops::Reduction::l1_norm);
  };
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x0 = oracle::random_tensor({1, 2, 4, 4}, rng);
    Graph g;
    auto x = g.variable(x0);
    g.backward(f(g, x));
    const Tensor num = finite_diff_grad(
        [&](const Tensor& t) {
          Graph h;
          return static_cast<double>(f(h, h.constant(t)).value().item());
        },
        x0, 1e-3f);
    CHECK(relative_error(g.grad(x), num) < 1e-3);
  }
}

TEST_CASE("finite_diff_grad examples") {
  auto sq = [](const Tensor& t) { return static_cast<double>(t[0]) * t[0]; };
  CHECK(finite_diff_grad(sq, t1({3}), 1e-3f)[0] == doctest::Approx(6.0).epsilon(1e-2));
  auto l1 = [](const Tensor& t) { return std::abs(static_cast<double>(t[0])); };
  CHECK(finite_diff_grad(l1, t1({2}), 1e-3f)[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_THROWS(finite_diff_grad(l1, t1({2}), 0.0f));
}

TEST_CASE("forward ops are bitwise deterministic") {
  std::mt19937_64 rng(30);
  const Tensor x = oracle::random_tensor({1, 3, 8, 8}, rng), k = oracle::random_tensor({4, 3, 3, 3}, rng);
  auto run = [&] {
    Graph g;
    auto y = ops::conv2d(g.constant(x), g.constant(k), 2, ops::Padding::reflect, 1);
    y = ops::instance_norm(y, g.constant(Tensor({1, 4, 1, 1}, 1.0f)), g.constant(Tensor({1, 4, 1, 1})));
    y = ops::conv_transpose2d(y, g.constant(Tensor({4, 2, 2, 2}, 0.3f)), 2);
    return ops::activation(y, ops::Activation::tanh()).value();
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("gradcheck suite covers every op within tolerance") {
  const auto results = run_gradcheck_suite(0, 20);
  CHECK(results.size() == gradcheck_op_names().size());
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.cases == 20);
    CHECK(r.passed());
  }
}

TEST_CASE("gradcheck suite detects a wrong backward") {
  const auto results = run_gradcheck_suite(0, 3, "conv2d_zero");
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.passed() == (r.op != "conv2d_zero"));
  }
  CHECK_THROWS_AS(run_gradcheck_suite(0, 1, "no_such_op"), std::invalid_argument);
}

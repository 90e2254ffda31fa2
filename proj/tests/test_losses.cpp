#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sggan/losses.hpp"

using namespace sggan;

namespace {

double loss(const Tensor& x, const Tensor& y, const LabelMap& l, SoftnessParams p) {
  Graph g;
  return soft_grad_loss(g.constant(x), g.constant(y), l, p).value().item();
}

// mean over pixels of | |C x| - |C y| | * (alpha * mask + beta), in double.
double soft_grad_oracle(const Tensor& x, const Tensor& y, const LabelMap& l, SoftnessParams p) {
  const Tensor gx = oracle::gradient_magnitude(x, sobel_pair()), gy = oracle::gradient_magnitude(y, sobel_pair());
  const Tensor m = oracle::boundary_mask(l);
  double acc = 0.0;
  for (std::size_t i = 0; i < gx.numel(); ++i)
    acc += std::abs(static_cast<double>(gx[i]) - gy[i]) * (p.alpha * m[i] + p.beta);
  return acc / static_cast<double>(gx.numel());
}

SoftnessParams random_params(std::mt19937_64& rng) {
  const float a = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  return {a, 1.0f - a};
}

}  // namespace

TEST_CASE("softness and weight validation") {
  CHECK_NOTHROW((SoftnessParams{0.9f, 0.1f}.validate()));
  CHECK_NOTHROW((SoftnessParams{1.0f, 0.0f}.validate()));
  CHECK_THROWS_AS((SoftnessParams{0.9f, 0.2f}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SoftnessParams{1.5f, -0.5f}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LossWeights{-1.0f, 5.0f}.validate()), std::invalid_argument);
}

TEST_CASE("least-squares adversarial losses") {
  Graph g;
  const Tensor ones({1, 1, 4, 8}, 1.0f), zeros({1, 1, 4, 8}, 0.0f);
  CHECK(discriminator_loss_ls(g.constant(ones), g.constant(zeros)).value().item() == 0.0f);
  CHECK(discriminator_loss_ls(g.constant(zeros), g.constant(ones)).value().item() == 2.0f);
  CHECK(generator_adv_loss_ls(g.constant(ones)).value().item() == 0.0f);
  CHECK(generator_adv_loss_ls(g.constant(zeros)).value().item() == 1.0f);
  CHECK_THROWS_AS(discriminator_loss_ls(g.constant(ones), g.constant(Tensor({1, 1, 2, 2}))), ShapeError);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Tensor a = oracle::random_tensor({2, 1, 3, 5}, rng), b = oracle::random_tensor({2, 1, 3, 5}, rng);
    double d = 0, gl = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      d += (std::pow(a[i] - 1.0, 2) + std::pow(static_cast<double>(b[i]), 2)) / 30.0;
      gl += std::pow(b[i] - 1.0, 2) / 30.0;
    }
    CHECK(std::abs(discriminator_loss_ls(g.constant(a), g.constant(b)).value().item() - d) < 1e-6);
    CHECK(std::abs(generator_adv_loss_ls(g.constant(b)).value().item() - gl) < 1e-6);
    // any departure from the ideal scores costs something
    CHECK(discriminator_loss_ls(g.constant(a), g.constant(b)).value().item() > 0.0f);
  }
}

TEST_CASE("discriminator loss is zero only for ideal scores") {
  Graph g;
  const Tensor ones({1, 1, 3, 3}, 1.0f), zeros({1, 1, 3, 3}, 0.0f);
  for (std::size_t i = 0; i < 9; ++i) {
    Tensor r = ones, f = zeros;
    r[i] = 1.001f;
    CHECK(discriminator_loss_ls(g.constant(r), g.constant(zeros)).value().item() > 0.0f);
    f[i] = -0.001f;
    CHECK(discriminator_loss_ls(g.constant(ones), g.constant(f)).value().item() > 0.0f);
  }
}

TEST_CASE("cycle_loss") {
  std::mt19937_64 rng(2);
  const Tensor v = oracle::random_tensor({1, 3, 4, 4}, rng), r = oracle::random_tensor({1, 3, 4, 4}, rng);
  Graph g;
  CHECK(cycle_loss(g.constant(v), g.constant(v), g.constant(r), g.constant(r)).value().item() == 0.0f);
  Tensor off = v;
  for (auto& x : off.vec()) x += 0.5f;
  CHECK(cycle_loss(g.constant(v), g.constant(off), g.constant(r), g.constant(r)).value().item() ==
        doctest::Approx(0.5f).epsilon(1e-6));
  CHECK_THROWS_AS(cycle_loss(g.constant(v), g.constant(Tensor({1, 3, 2, 2})), g.constant(r), g.constant(r)),
                  ShapeError);

  for (int t = 0; t < 20; ++t) {
    const Tensor a = oracle::random_tensor({1, 3, 4, 6}, rng), b = oracle::random_tensor({1, 3, 4, 6}, rng);
    const Tensor c = oracle::random_tensor({1, 3, 2, 2}, rng), d = oracle::random_tensor({1, 3, 2, 2}, rng);
    double want = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) want += std::abs(static_cast<double>(b[i]) - a[i]) / a.numel();
    for (std::size_t i = 0; i < c.numel(); ++i) want += std::abs(static_cast<double>(d[i]) - c[i]) / c.numel();
    CHECK(std::abs(cycle_loss(g.constant(a), g.constant(b), g.constant(c), g.constant(d)).value().item() - want) <
          1e-6);
  }
}

TEST_CASE("soft_grad_loss of identical images is exactly zero") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = oracle::random_tensor({1, 3, 8, 10}, rng);
    CHECK(loss(x, x, oracle::random_labels(1, 8, 10, 4, rng), random_params(rng)) == 0.0);
  }
}

TEST_CASE("soft_grad_loss with uniform labels and no uniform weight is zero") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = oracle::random_tensor({1, 3, 8, 10}, rng), y = oracle::random_tensor({1, 3, 8, 10}, rng);
    CHECK(loss(x, y, LabelMap(1, 8, 10, 4, t % 4), {1.0f, 0.0f}) == 0.0);
  }
}

TEST_CASE("soft_grad_loss on a hand-evaluated step edge") {
  Tensor x({1, 1, 4, 6});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 3; j < 6; ++j) x.at(0, 0, i, j) = 1.0f;
  std::vector<std::int32_t> lv(24);
  for (std::size_t k = 0; k < 24; ++k) lv[k] = (k % 6) < 3 ? 0 : 1;
  // Boundary columns 2 and 3; Sobel response there is 4 on the middle rows,
  // 3 + 1 (column 2) and 3 + 3 (column 3) on the zero-padded top and bottom
  // rows. The zero image has no response anywhere. Sum 36 over 24 pixels.
  CHECK(loss(x, Tensor({1, 1, 4, 6}, 0.0f), LabelMap(1, 4, 6, 2, lv), {1.0f, 0.0f}) == doctest::Approx(1.5));
}

TEST_CASE("soft_grad_loss matches the loop oracle and is symmetric") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = oracle::random_tensor({1, 3, 6, 9}, rng), y = oracle::random_tensor({1, 3, 6, 9}, rng);
    const LabelMap l = oracle::random_labels(1, 6, 9, 3, rng);
    const SoftnessParams p = random_params(rng);
    CHECK(std::abs(loss(x, y, l, p) - soft_grad_oracle(x, y, l, p)) < 1e-5);
    CHECK(loss(x, y, l, p) == loss(y, x, l, p));
  }
  CHECK_THROWS_AS(loss(Tensor({1, 3, 4, 4}), Tensor({1, 3, 4, 4}), LabelMap(1, 4, 4, 2), {0.5f, 0.6f}),
                  std::invalid_argument);
}

TEST_CASE("soft_grad_loss grows with beta when only the interior differs") {
  // Two-region labels; the adapted image differs from the input only far
  // from the boundary columns.
  std::vector<std::int32_t> lv(8 * 16);
  for (std::size_t k = 0; k < lv.size(); ++k) lv[k] = (k % 16) < 8 ? 0 : 1;
  const LabelMap l(1, 8, 16, 2, lv);
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({1, 3, 8, 16}, rng);
  Tensor y = x;
  y.at(0, 1, 4, 2) += 0.7f;
  y.at(0, 0, 3, 13) -= 0.4f;
  double prev = -1.0;
  for (float beta : {0.0f, 0.1f, 0.25f, 0.5f, 0.75f, 1.0f}) {
    const double v = loss(x, y, l, {1.0f - beta, beta});
    CHECK(v > prev);
    prev = v;
  }
  CHECK(loss(x, y, l, {1.0f, 0.0f}) == 0.0);
}

TEST_CASE("soft_grad_loss passes no gradient to the labels and reaches the adapted image") {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({1, 3, 6, 6}, rng), y = oracle::random_tensor({1, 3, 6, 6}, rng);
  Graph g;
  auto xv = g.constant(x);
  auto yv = g.variable(y);
  g.backward(soft_grad_loss(xv, yv, oracle::random_labels(1, 6, 6, 3, rng), {0.9f, 0.1f}));
  double norm = 0;
  const Tensor gy = g.grad(yv);
  for (float v : gy.vec()) norm += std::abs(v);
  CHECK(norm > 0.0);
}

TEST_CASE("full_grad_objective is the sum of both directions") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Tensor v = oracle::random_tensor({1, 3, 6, 8}, rng), va = oracle::random_tensor({1, 3, 6, 8}, rng);
    const Tensor r = oracle::random_tensor({1, 3, 4, 4}, rng), ra = oracle::random_tensor({1, 3, 4, 4}, rng);
    const LabelMap sv = oracle::random_labels(1, 6, 8, 4, rng), sr = oracle::random_labels(1, 4, 4, 4, rng);
    const SoftnessParams p = random_params(rng);
    Graph g;
    const double both =
        full_grad_objective(g.constant(v), g.constant(va), sv, g.constant(r), g.constant(ra), sr, p).value().item();
    CHECK(std::abs(both - (loss(v, va, sv, p) + loss(r, ra, sr, p))) < 1e-6);
    const double one_side =
        full_grad_objective(g.constant(v), g.constant(va), sv, g.constant(r), g.constant(r), sr, p).value().item();
    CHECK(std::abs(one_side - loss(v, va, sv, p)) < 1e-7);
  }
  Graph g;
  const Tensor z({1, 3, 4, 4}, 0.3f);
  CHECK(full_grad_objective(g.constant(z), g.constant(z), LabelMap(1, 4, 4, 2), g.constant(z), g.constant(z),
                            LabelMap(1, 4, 4, 2), {0.9f, 0.1f})
            .value()
            .item() == 0.0f);
}

TEST_CASE("total_objective composition") {
  const LossWeights w{10.0f, 5.0f};
  CHECK(total_objective(ObjectiveParts{}, w).total == 0.0);
  CHECK(total_objective(ObjectiveParts{0.0, 0.0, 0.1, 0.2}, w).total == doctest::Approx(2.0));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 20; ++t) {
    const ObjectiveParts p{u(rng), u(rng), u(rng), u(rng)};
    const LossWeights wt{static_cast<float>(u(rng)), static_cast<float>(u(rng))};
    const LossReport r = total_objective(p, wt);
    CHECK(std::abs(r.total - (p.adv_v2r + p.adv_r2v + wt.lambda_c * p.cycle + wt.lambda_g * p.grad)) < 1e-6);
    CHECK(r.cycle == p.cycle);
    CHECK(r.grad_sens == p.grad);
    Graph g;
    auto s = [&](double x) { return g.constant(Tensor::scalar(static_cast<float>(x))); };
    CHECK(std::abs(total_objective(s(p.adv_v2r), s(p.adv_r2v), s(p.cycle), s(p.grad), wt).value().item() - r.total) <
          1e-5);
  }
}

TEST_CASE("loss report csv") {
  CHECK(LossReport::csv_header() == "step,adv_g_v2r,adv_g_r2v,adv_d_r,adv_d_v,cycle,grad_sens,total");
  LossReport r;
  r.cycle = 0.1;
  r.total = 1.0 / 3.0;
  const std::string row = r.csv_row(7);
  CHECK(row.rfind("7,", 0) == 0);
  CHECK(std::stod(row.substr(row.rfind(',') + 1)) == r.total);
}

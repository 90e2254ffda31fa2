#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "sggan/gradfilters.hpp"

using namespace sggan;

namespace {

// 4x6 single-channel image, 0 left of column 3 and 1 from column 3 on.
Tensor step_edge() {
  Tensor x({1, 1, 4, 6});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 3; j < 6; ++j) x.at(0, 0, i, j) = 1.0f;
  return x;
}

LabelMap split_labels(std::size_t h, std::size_t w, std::size_t k) {
  std::vector<std::int32_t> v(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) v[i * w + j] = j < k ? 0 : 1;
  return LabelMap(1, h, w, 2, v);
}

}  // namespace

TEST_CASE("sobel constants") {
  const FilterPair f = sobel_pair();
  const Kernel3 cx{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
  const Kernel3 cy{{{1, 2, 1}, {0, 0, 0}, {-1, -2, -1}}};
  CHECK(f.cx == cx);
  CHECK(f.cy == cy);
  CHECK(f.role == FilterPair::Role::image);
  float s = 0;
  for (const auto& row : f.cx) s += row[0] + row[1] + row[2];
  CHECK(s == 0.0f);
}

TEST_CASE("label filter constants") {
  const FilterPair f = label_grad_pair();
  const Kernel3 cx{{{0, 0, 0}, {-1, 0, 1}, {0, 0, 0}}};
  const Kernel3 cy{{{0, 1, 0}, {0, 0, 0}, {0, -1, 0}}};
  CHECK(f.cx == cx);
  CHECK(f.cy == cy);
  CHECK(f.role == FilterPair::Role::label);
  for (const Kernel3* k : {&f.cx, &f.cy}) {
    int zeros = 0;
    for (const auto& row : *k) zeros += static_cast<int>(std::count(row.begin(), row.end(), 0.0f));
    CHECK(zeros == 7);
  }
}

TEST_CASE("gradient_magnitude of a constant image has a zero interior") {
  const Tensor g = gradient_magnitude(Tensor({1, 3, 5, 7}, 0.4f), sobel_pair());
  CHECK(g.shape() == Shape{1, 1, 5, 7});
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 1; j < 6; ++j) CHECK(g.at(0, 0, i, j) == 0.0f);
}

TEST_CASE("gradient_magnitude of a step edge") {
  const Tensor g = gradient_magnitude(step_edge(), sobel_pair());
  // interior rows: cx gives 1 + 2 + 1 on the two columns touching the edge
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 1; j < 5; ++j) CHECK(g.at(0, 0, i, j) == ((j == 2 || j == 3) ? 4.0f : 0.0f));
}

TEST_CASE("gradient_magnitude matches the loop oracle") {
  std::mt19937_64 rng(1);
  for (const FilterPair& f : {sobel_pair(), label_grad_pair()}) {
    const Tensor x = oracle::random_tensor({2, 3, 6, 9}, rng);
    CHECK(oracle::max_abs_diff(gradient_magnitude(x, f), oracle::gradient_magnitude(x, f)) < 1e-5);
    Graph g;
    auto v = gradient_magnitude(g.constant(x), f);
    CHECK(bitwise_equal(v.value(), gradient_magnitude(x, f)));
  }
}

TEST_CASE("gradient_magnitude is translation-equivariant in the interior") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const Tensor x = oracle::random_tensor({1, 3, 10, 12}, rng);
    Tensor shifted({1, 3, 10, 12});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 12; ++j) shifted.at(0, c, i, j) = x.at(0, c, (i + 8) % 10, (j + 9) % 12);
    // shifted(i, j) = x(i - 2, j - 3)
    const Tensor a = gradient_magnitude(x, sobel_pair()), b = gradient_magnitude(shifted, sobel_pair());
    for (std::size_t i = 1; i < 7; ++i)
      for (std::size_t j = 1; j < 8; ++j) CHECK(b.at(0, 0, i + 2, j + 3) == doctest::Approx(a.at(0, 0, i, j)));
  }
}

TEST_CASE("boundary_mask examples") {
  const Tensor u = boundary_mask(LabelMap(1, 4, 6, 3, 2), label_grad_pair());
  for (float v : u.vec()) CHECK(v == 0.0f);

  const Tensor m = boundary_mask(split_labels(4, 6, 3), label_grad_pair());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(m.at(0, 0, i, j) == ((j == 2 || j == 3) ? 1.0f : 0.0f));

  // 2x2-block checkerboard: every interior pixel has a differing neighbour pair
  std::vector<std::int32_t> cb(8 * 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) cb[i * 8 + j] = static_cast<std::int32_t>(((i / 2) + (j / 2)) % 2);
  const Tensor c = boundary_mask(LabelMap(1, 8, 8, 2, cb), label_grad_pair());
  for (std::size_t i = 1; i < 7; ++i)
    for (std::size_t j = 1; j < 7; ++j) CHECK(c.at(0, 0, i, j) == 1.0f);
}

TEST_CASE("boundary_mask matches the neighbour oracle and is binary") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const LabelMap l = oracle::random_labels(2, 7, 9, 4, rng);
    const Tensor m = boundary_mask(l, label_grad_pair());
    for (float v : m.vec()) CHECK((v == 0.0f || v == 1.0f));
    CHECK(bitwise_equal(m, oracle::boundary_mask(l)));
  }
}

TEST_CASE("boundary_mask ignores how classes are numbered") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const LabelMap l = oracle::random_labels(1, 6, 8, 5, rng);
    std::vector<std::int32_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int32_t> v = l.values();
    for (auto& x : v) x = perm[x];
    const LabelMap p(1, 6, 8, 5, v);
    CHECK(bitwise_equal(boundary_mask(l, label_grad_pair()), boundary_mask(p, label_grad_pair())));
  }
}

TEST_CASE("label map validation") {
  CHECK_THROWS(LabelMap(1, 2, 2, 2, std::vector<std::int32_t>{0, 1, 2, 0}));
  CHECK_THROWS(LabelMap(1, 2, 2, 2, std::vector<std::int32_t>{0, 1, 1}));
  CHECK_THROWS(LabelMap(1, 2, 2, 2, std::vector<std::int32_t>{0, -1, 1, 0}));
}

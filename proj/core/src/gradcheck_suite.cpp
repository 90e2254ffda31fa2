#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>

#include "sggan/gradcheck.hpp"
#include "sggan/gradfilters.hpp"
#include "sggan/losses.hpp"
#include "sggan/networks.hpp"
#include "sggan/ops.hpp"

namespace sggan {

namespace {

using Rng = std::mt19937_64;
using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// One random instance. Without `reference`, the output is reduced by a
// fixed random projection and both sides use the engine. With it, `build`
// yields a scalar and `reference` recomputes that scalar in double.
struct Case {
  std::vector<Tensor> inputs;
  Builder build;
  float step = 1e-2f;
  std::function<double(const std::vector<Tensor>&)> reference;
};

using Family = std::function<Case(Rng&)>;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor uniform(Rng& rng, Shape s, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(s);
  std::uniform_real_distribution<float> d(lo, hi);
  for (float& v : t.vec()) v = d(rng);
  return t;
}

// Values with |v| in [0.2, 1], so steps below 0.2 never cross a kink at 0.
Tensor away_from_zero(Rng& rng, Shape s) {
  Tensor t = uniform(rng, s, 0.2f, 1.0f);
  std::bernoulli_distribution flip(0.5);
  for (float& v : t.vec()) {
    if (flip(rng)) v = -v;
  }
  return t;
}

LabelMap block_labels(Rng& rng, std::size_t n, std::size_t h, std::size_t w, int classes) {
  std::vector<std::int32_t> v(n * h * w);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::vector<std::int32_t> blocks(n * ((h + 1) / 2) * ((w + 1) / 2));
  for (auto& b : blocks) b = cls(rng);
  const std::size_t bw = (w + 1) / 2, bh = (h + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) v[(i * h + y) * w + x] = blocks[(i * bh + y / 2) * bw + x / 2];
    }
  }
  return LabelMap(n, h, w, classes, std::move(v));
}

// Smallest |directional Sobel response| over all channels, the kink
// arguments of gradient_magnitude.
float min_sobel_response(const Tensor& x) {
  const FilterPair f = sobel_pair();
  const Shape s = x.shape();
  Tensor k({2, 1, 3, 3});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      k.at(0, 0, i, j) = f.cx[i][j];
      k.at(1, 0, i, j) = f.cy[i][j];
    }
  }
  float lo = INFINITY;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      Tensor plane({1, 1, s.h, s.w});
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t xx = 0; xx < s.w; ++xx) plane.at(0, 0, y, xx) = x.at(n, c, y, xx);
      }
      const Tensor r = conv2d_forward(plane, k, 1, ops::Padding::zero, 1);
      for (float v : r.vec()) lo = std::min(lo, std::fabs(v));
    }
  }
  return lo;
}

float min_abs_diff(const Tensor& a, const Tensor& b) {
  float lo = INFINITY;
  for (std::size_t i = 0; i < a.numel(); ++i) lo = std::min(lo, std::fabs(a[i] - b[i]));
  return lo;
}

// Image with every Sobel response at least `margin` away from zero. Whole-image
// rejection almost never succeeds on larger shapes, so offending windows are
// repaired by redrawing one of their off-centre pixels (the centre tap is 0).
Tensor sobel_safe_image(Rng& rng, Shape s, float margin) {
  Tensor x = uniform(rng, s);
  const FilterPair f = sobel_pair();
  const long h = static_cast<long>(s.h), w = static_cast<long>(s.w);
  auto response = [&](std::size_t base, long i, long j, const Kernel3& k) {
    double acc = 0.0;
    for (long a = 0; a < 3; ++a)
      for (long b = 0; b < 3; ++b) {
        const long y = i + a - 1, xx = j + b - 1;
        if (y >= 0 && xx >= 0 && y < h && xx < w) acc += k[a][b] * x[base + y * w + xx];
      }
    return std::fabs(acc);
  };
  std::uniform_int_distribution<int> offset(0, 7);
  std::uniform_real_distribution<float> value(-1.0f, 1.0f);
  for (int sweep = 0; sweep < 1000; ++sweep) {
    bool clean = true;
    for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
      const std::size_t base = plane * s.plane();
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j) {
          if (response(base, i, j, f.cx) > margin && response(base, i, j, f.cy) > margin) continue;
          clean = false;
          long y = -1, xx = -1;
          while (y < 0 || xx < 0 || y >= h || xx >= w) {
            int o = offset(rng);
            o += o >= 4;  // skip the centre
            y = i + o / 3 - 1;
            xx = j + o % 3 - 1;
          }
          x[base + y * w + xx] = value(rng);
        }
    }
    if (clean && min_sobel_response(x) > margin) return x;
  }
  throw std::runtime_error("gradcheck: could not draw a kink-free image");
}

Case unary(Rng& rng, Tensor x, float step, std::function<Var(Var)> op) {
  (void)rng;
  return Case{{std::move(x)}, [op](Graph&, const std::vector<Var>& in) { return op(in[0]); }, step, {}};
}

Shape small_shape(Rng& rng) { return Shape{dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 2, 5), dim(rng, 2, 5)}; }

// ---- double-precision reference --------------------------------------
//
// Plain-loop forward of the networks and losses in double. The numeric side
// of the composite cases differentiates this, so float rounding in the
// engine never limits the oracle.
namespace ref {

struct T4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  T4() = default;
  T4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}
  explicit T4(const Tensor& t) : T4(t.shape().n, t.shape().c, t.shape().h, t.shape().w) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i];
  }
  double& at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) { return v[((a * c + b) * h + y) * w + x]; }
  double at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
    return v[((a * c + b) * h + y) * w + x];
  }
};

T4 conv(const T4& x, const T4& k, std::size_t stride, std::size_t pad) {
  T4 out(x.n, k.n, (x.h + 2 * pad - k.h) / stride + 1, (x.w + 2 * pad - k.w) / stride + 1);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t o = 0; o < k.n; ++o)
      for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t xx = 0; xx < out.w; ++xx) {
          double acc = 0.0;
          for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t i = 0; i < k.h; ++i)
              for (std::size_t j = 0; j < k.w; ++j) {
                const long sy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long sx = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(x.h) || sx >= static_cast<long>(x.w)) continue;
                acc += x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) * k.at(o, c, i, j);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

// Kernel layout (in, out, kh, kw).
T4 conv_t(const T4& x, const T4& k, std::size_t stride) {
  T4 out(x.n, k.c, (x.h - 1) * stride + k.h, (x.w - 1) * stride + k.w);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t ic = 0; ic < x.c; ++ic)
      for (std::size_t y = 0; y < x.h; ++y)
        for (std::size_t xx = 0; xx < x.w; ++xx)
          for (std::size_t oc = 0; oc < k.c; ++oc)
            for (std::size_t i = 0; i < k.h; ++i)
              for (std::size_t j = 0; j < k.w; ++j)
                out.at(n, oc, y * stride + i, xx * stride + j) += x.at(n, ic, y, xx) * k.at(ic, oc, i, j);
  return out;
}

T4 bias(T4 x, const T4& b) {
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t i = 0; i < x.h * x.w; ++i) x.v[(n * x.c + c) * x.h * x.w + i] += b.v[c];
  return x;
}

T4 inorm(T4 x, const T4& scale, const T4& shift) {
  const std::size_t hw = x.h * x.w;
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t c = 0; c < x.c; ++c) {
      double* p = x.v.data() + (n * x.c + c) * hw;
      double mu = 0.0, var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mu += p[i];
      mu /= static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mu) * (p[i] - mu);
      var /= static_cast<double>(hw);
      const double sd = std::sqrt(var + 1e-5);
      for (std::size_t i = 0; i < hw; ++i) p[i] = (p[i] - mu) / sd * scale.v[c] + shift.v[c];
    }
  return x;
}

// Smallest |argument| seen at any kink (leaky, abs) since the last reset.
thread_local double kink_margin = std::numeric_limits<double>::infinity();

double at_kink(double a) {
  kink_margin = std::min(kink_margin, std::fabs(a));
  return std::fabs(a);
}

T4 leaky(T4 x, double slope) {
  for (double& e : x.v) {
    at_kink(e);
    e = e > 0.0 ? e : slope * e;
  }
  return x;
}

T4 tanh(T4 x) {
  for (double& e : x.v) e = std::tanh(e);
  return x;
}

T4 concat(const T4& a, const T4& b) {
  T4 out(a.n, a.c + b.c, a.h, a.w);
  for (std::size_t n = 0; n < a.n; ++n)
    for (std::size_t y = 0; y < a.h; ++y)
      for (std::size_t x = 0; x < a.w; ++x) {
        for (std::size_t c = 0; c < a.c; ++c) out.at(n, c, y, x) = a.at(n, c, y, x);
        for (std::size_t c = 0; c < b.c; ++c) out.at(n, a.c + c, y, x) = b.at(n, c, y, x);
      }
  return out;
}

using Params = std::map<std::string, T4>;

Params params_from(const ParameterSet& layout, const std::vector<Tensor>& values, std::size_t offset) {
  Params out;
  for (std::size_t i = 0; i < layout.size(); ++i) out[layout[i].name] = T4(values[offset + i]);
  return out;
}

T4 generator(const Params& p, int depth, const T4& image) {
  std::vector<T4> skips;
  T4 x = image;
  for (int i = 1; i <= depth; ++i) {
    const std::string e = "enc" + std::to_string(i);
    x = conv(x, p.at(e + ".conv.weight"), 2, 1);
    if (i > 1) x = inorm(x, p.at(e + ".norm.scale"), p.at(e + ".norm.shift"));
    x = leaky(x, 0.2);
    skips.push_back(x);
  }
  for (int k = 1; k <= depth; ++k) {
    const std::string d = "dec" + std::to_string(k);
    x = leaky(inorm(conv_t(x, p.at(d + ".up.weight"), 2), p.at(d + ".norm.scale"), p.at(d + ".norm.shift")), 0.0);
    const int target = depth - k;
    x = concat(x, target > 0 ? skips[static_cast<std::size_t>(target - 1)] : image);
  }
  return tanh(bias(conv(x, p.at("out.conv.weight"), 1, 1), p.at("out.conv.bias")));
}

T4 trunk(const Params& p, int blocks, const T4& image) {
  T4 x = image;
  for (int i = 1; i <= blocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    x = conv(x, p.at(b + ".conv.weight"), 2, 1);
    x = i > 1 ? inorm(x, p.at(b + ".norm.scale"), p.at(b + ".norm.shift")) : bias(x, p.at(b + ".conv.bias"));
    x = leaky(x, 0.2);
  }
  return bias(conv(x, p.at("final.conv.weight"), 1, 1), p.at("final.conv.bias"));
}

T4 semantic(const T4& t, const Tensor& mask) {
  T4 out(t.n, 1, t.h, t.w);
  for (std::size_t n = 0; n < t.n; ++n)
    for (std::size_t c = 0; c < t.c; ++c)
      for (std::size_t y = 0; y < t.h; ++y)
        for (std::size_t x = 0; x < t.w; ++x) out.at(n, 0, y, x) += t.at(n, c, y, x) * mask.at(n, c, y, x);
  return out;
}

double ls_gen(const T4& score) {
  double acc = 0.0;
  for (double s : score.v) acc += (s - 1.0) * (s - 1.0);
  return acc / static_cast<double>(score.v.size());
}

double mean_abs_diff(const T4& a, const T4& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) acc += at_kink(a.v[i] - b.v[i]);
  return acc / static_cast<double>(a.v.size());
}

T4 grad_mag(const T4& x) {
  const FilterPair f = sobel_pair();
  T4 out(x.n, 1, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t y = 0; y < x.h; ++y)
        for (std::size_t xx = 0; xx < x.w; ++xx) {
          double gx = 0.0, gy = 0.0;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              const long sy = static_cast<long>(y) + i - 1, sx = static_cast<long>(xx) + j - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(x.h) || sx >= static_cast<long>(x.w)) continue;
              const double val = x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
              gx += f.cx[i][j] * val;
              gy += f.cy[i][j] * val;
            }
          out.at(n, 0, y, xx) += at_kink(gx) + at_kink(gy);
        }
  return out;
}

double soft_grad(const T4& x, const T4& xa, const LabelMap& labels, const SoftnessParams& p) {
  const T4 gx = grad_mag(x), ga = grad_mag(xa);
  const Tensor m = boundary_mask(labels, label_grad_pair());
  double acc = 0.0;
  for (std::size_t i = 0; i < gx.v.size(); ++i) {
    acc += at_kink(gx.v[i] - ga.v[i]) * (static_cast<double>(p.alpha) * m[i] + p.beta);
  }
  return acc / static_cast<double>(gx.v.size());
}

}  // namespace ref

// Depth-2 toy instance of the full generator objective. Inputs are the
// parameters of both generators; discriminators are fixed.
Case toy_objective_draw(Rng& rng) {
  const std::uint64_t s = rng();
  auto g_v2r = std::make_shared<GeneratorNet>(GeneratorConfig{2, 2, s + 1});
  auto g_r2v = std::make_shared<GeneratorNet>(GeneratorConfig{2, 2, s + 2});
  auto d_v = std::make_shared<SemanticDiscriminatorNet>(DiscriminatorConfig{1, 2, 2, s + 3});
  auto d_r = std::make_shared<SemanticDiscriminatorNet>(DiscriminatorConfig{1, 2, 2, s + 4});
  // Larger init than training uses so every term carries gradient.
  for (ParameterSet* ps : {&g_v2r->params(), &g_r2v->params(), &d_v->params(), &d_r->params()}) {
    for (auto& e : ps->entries()) {
      if (e.name.find("norm") != std::string::npos) continue;
      e.value = uniform(rng, e.value.shape(), -0.5f, 0.5f);
    }
  }
  const Tensor v = uniform(rng, {1, 3, 8, 8});
  const Tensor r = uniform(rng, {1, 3, 8, 8});
  const LabelMap sv = block_labels(rng, 1, 8, 8, 2);
  const LabelMap sr = block_labels(rng, 1, 8, 8, 2);
  const float alpha = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  const SoftnessParams p{alpha, 1.0f - alpha};
  const LossWeights w{10.0f, 5.0f};
  auto [hk, wk] = discriminator_receptive_dims(*d_r, 8, 8);
  const Tensor mv = one_hot_mask(sv, 2, hk, wk);
  const Tensor mr = one_hot_mask(sr, 2, hk, wk);
  const std::size_t n1 = g_v2r->params().size();

  Case c;
  for (const ParameterSet* ps : {&g_v2r->params(), &g_r2v->params()}) {
    for (const auto& e : ps->entries()) c.inputs.push_back(e.value);
  }
  c.step = 1e-6f;
  c.build = [=](Graph& g, const std::vector<Var>& in) {
    BoundParams p1{{in.begin(), in.begin() + static_cast<long>(n1)}};
    BoundParams p2{{in.begin() + static_cast<long>(n1), in.end()}};
    const BoundParams pdv = bind(g, d_v->params(), false);
    const BoundParams pdr = bind(g, d_r->params(), false);
    Var vi = g.constant(v), ri = g.constant(r);
    Var fake_r = g_v2r->forward(p1, vi);
    Var cyc_v = g_r2v->forward(p2, fake_r);
    Var fake_v = g_r2v->forward(p2, ri);
    Var cyc_r = g_v2r->forward(p1, fake_v);
    return total_objective(generator_adv_loss_ls(sd_forward(*d_r, pdr, fake_r, mv)),
                           generator_adv_loss_ls(sd_forward(*d_v, pdv, fake_v, mr)),
                           cycle_loss(vi, cyc_v, ri, cyc_r),
                           full_grad_objective(vi, fake_r, sv, ri, fake_v, sr, p), w);
  };
  c.reference = [=](const std::vector<Tensor>& in) {
    const ref::Params p1 = ref::params_from(g_v2r->params(), in, 0);
    const ref::Params p2 = ref::params_from(g_r2v->params(), in, n1);
    auto fixed = [](const ParameterSet& ps) {
      std::vector<Tensor> t;
      for (const auto& e : ps.entries()) t.push_back(e.value);
      return ref::params_from(ps, t, 0);
    };
    const ref::Params pdv = fixed(d_v->params());
    const ref::Params pdr = fixed(d_r->params());
    const ref::T4 vi(v), ri(r);
    const ref::T4 fake_r = ref::generator(p1, 2, vi);
    const ref::T4 cyc_v = ref::generator(p2, 2, fake_r);
    const ref::T4 fake_v = ref::generator(p2, 2, ri);
    const ref::T4 cyc_r = ref::generator(p1, 2, fake_v);
    const double adv = ref::ls_gen(ref::semantic(ref::trunk(pdr, 1, fake_r), mv)) +
                       ref::ls_gen(ref::semantic(ref::trunk(pdv, 1, fake_v), mr));
    const double cyc = ref::mean_abs_diff(cyc_v, vi) + ref::mean_abs_diff(cyc_r, ri);
    const double grad = ref::soft_grad(vi, fake_r, sv, p) + ref::soft_grad(ri, fake_v, sr, p);
    return adv + w.lambda_c * cyc + w.lambda_g * grad;
  };
  return c;
}

Case toy_objective(Rng& rng) {
  for (int tries = 0; tries < 1000; ++tries) {
    Case c = toy_objective_draw(rng);
    ref::kink_margin = std::numeric_limits<double>::infinity();
    c.reference(c.inputs);
    // 100x the finite-difference step
    if (ref::kink_margin > 1e-4) return c;
  }
  throw std::runtime_error("gradcheck: could not draw a kink-free toy objective");
}

// Semantic discriminator with every parameter and the image as inputs,
// reduced by a fixed projection.
Case sd_forward_case(Rng& rng) {
  const int classes = static_cast<int>(dim(rng, 1, 3));
  const int blocks = static_cast<int>(dim(rng, 1, 2));
  auto d = std::make_shared<SemanticDiscriminatorNet>(DiscriminatorConfig{blocks, 2, classes, rng()});
  const LabelMap labels = block_labels(rng, 1, 8, 8, classes);
  auto [hk, wk] = discriminator_receptive_dims(*d, 8, 8);
  const Tensor mask = one_hot_mask(labels, classes, hk, wk);
  const Tensor proj = uniform(rng, {1, 1, hk, wk});
  Case c;
  c.inputs.push_back(uniform(rng, {1, 3, 8, 8}));
  for (const auto& e : d->params().entries()) {
    c.inputs.push_back(e.name.find("norm") == std::string::npos ? uniform(rng, e.value.shape(), -0.5f, 0.5f)
                                                                : e.value);
  }
  c.step = 1e-6f;
  c.build = [=](Graph& g, const std::vector<Var>& in) {
    Var y = sd_forward(*d, BoundParams{{in.begin() + 1, in.end()}}, in[0], mask);
    return ops::sum(ops::mul(y, g.constant(proj)));
  };
  c.reference = [=](const std::vector<Tensor>& in) {
    const ref::Params p = ref::params_from(d->params(), in, 1);
    const ref::T4 y = ref::semantic(ref::trunk(p, blocks, ref::T4(in[0])), mask);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * proj[i];
    return acc;
  };
  return c;
}

struct NamedFamily {
  std::string name;
  Family make;
};

const std::vector<NamedFamily>& families() {
  static const std::vector<NamedFamily> all = {
      {"conv2d_zero",
       [](Rng& rng) {
         const std::size_t n = dim(rng, 1, 2), c = dim(rng, 1, 3), h = dim(rng, 4, 7), w = dim(rng, 4, 7);
         const std::size_t oc = dim(rng, 1, 3), k = dim(rng, 1, 3);
         const int stride = static_cast<int>(dim(rng, 1, 2)), pad = static_cast<int>(dim(rng, 0, 1));
         return Case{{uniform(rng, {n, c, h, w}), uniform(rng, {oc, c, k, k})},
                     [=](Graph&, const std::vector<Var>& in) {
                       return ops::conv2d(in[0], in[1], stride, ops::Padding::zero, pad);
                     },
                     0.1f, {}};
       }},
      {"conv2d_reflect",
       [](Rng& rng) {
         const std::size_t n = dim(rng, 1, 2), c = dim(rng, 1, 3), h = dim(rng, 4, 7), w = dim(rng, 4, 7);
         const std::size_t oc = dim(rng, 1, 3), k = dim(rng, 3, 4);
         const int stride = static_cast<int>(dim(rng, 1, 2));
         return Case{{uniform(rng, {n, c, h, w}), uniform(rng, {oc, c, k, k})},
                     [=](Graph&, const std::vector<Var>& in) {
                       return ops::conv2d(in[0], in[1], stride, ops::Padding::reflect, 1);
                     },
                     0.1f, {}};
       }},
      {"conv_transpose2d",
       [](Rng& rng) {
         const std::size_t n = dim(rng, 1, 2), c = dim(rng, 1, 3), h = dim(rng, 2, 4), w = dim(rng, 2, 4);
         const std::size_t oc = dim(rng, 1, 3), k = dim(rng, 2, 3);
         const int stride = static_cast<int>(dim(rng, 1, 2));
         return Case{{uniform(rng, {n, c, h, w}), uniform(rng, {c, oc, k, k})},
                     [=](Graph&, const std::vector<Var>& in) { return ops::conv_transpose2d(in[0], in[1], stride); },
                     0.1f, {}};
       }},
      {"bias_add",
       [](Rng& rng) {
         const Shape s = small_shape(rng);
         return Case{{uniform(rng, s), uniform(rng, {1, s.c, 1, 1})},
                     [](Graph&, const std::vector<Var>& in) { return ops::bias_add(in[0], in[1]); }, 0.1f, {}};
       }},
      {"instance_norm",
       [](Rng& rng) {
         const Shape s{dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 3, 5), dim(rng, 3, 5)};
         return Case{{uniform(rng, s), uniform(rng, {1, s.c, 1, 1}, 0.5f, 1.5f), uniform(rng, {1, s.c, 1, 1})},
                     [](Graph&, const std::vector<Var>& in) { return ops::instance_norm(in[0], in[1], in[2]); },
                     1e-2f, {}};
       }},
      {"relu", [](Rng& rng) { return unary(rng, away_from_zero(rng, small_shape(rng)), 0.1f, [](Var x) {
                 return ops::activation(x, ops::Activation::relu());
               }); }},
      {"leaky_relu", [](Rng& rng) { return unary(rng, away_from_zero(rng, small_shape(rng)), 0.1f, [](Var x) {
                       return ops::activation(x, ops::Activation::leaky_relu(0.2f));
                     }); }},
      {"tanh", [](Rng& rng) { return unary(rng, uniform(rng, small_shape(rng), -2.0f, 2.0f), 1e-2f, [](Var x) {
                 return ops::activation(x, ops::Activation::tanh());
               }); }},
      {"add",
       [](Rng& rng) {
         const Shape s = small_shape(rng);
         return Case{{uniform(rng, s), uniform(rng, s)},
                     [](Graph&, const std::vector<Var>& in) { return ops::add(in[0], in[1]); }, 0.1f, {}};
       }},
      {"sub",
       [](Rng& rng) {
         const Shape s = small_shape(rng);
         return Case{{uniform(rng, s), uniform(rng, s)},
                     [](Graph&, const std::vector<Var>& in) { return ops::sub(in[0], in[1]); }, 0.1f, {}};
       }},
      {"mul",
       [](Rng& rng) {
         const Shape s = small_shape(rng);
         return Case{{uniform(rng, s), uniform(rng, s)},
                     [](Graph&, const std::vector<Var>& in) { return ops::mul(in[0], in[1]); }, 0.1f, {}};
       }},
      {"mul_scalar_broadcast",
       [](Rng& rng) {
         const Shape s = small_shape(rng);
         return Case{{uniform(rng, s), uniform(rng, {1, 1, 1, 1})},
                     [](Graph&, const std::vector<Var>& in) { return ops::mul(in[0], in[1]); }, 0.1f, {}};
       }},
      {"abs", [](Rng& rng) { return unary(rng, away_from_zero(rng, small_shape(rng)), 0.1f, [](Var x) {
                return ops::abs(x);
              }); }},
      {"sum", [](Rng& rng) { return unary(rng, uniform(rng, small_shape(rng)), 0.1f, [](Var x) { return ops::sum(x); }); }},
      {"mean", [](Rng& rng) { return unary(rng, uniform(rng, small_shape(rng)), 0.1f, [](Var x) { return ops::mean(x); }); }},
      {"l1_norm", [](Rng& rng) { return unary(rng, away_from_zero(rng, small_shape(rng)), 0.1f, [](Var x) {
                    return ops::reduce(x, ops::Reduction::l1_norm);
                  }); }},
      {"resize_nearest",
       [](Rng& rng) {
         const Shape s{dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 2, 6), dim(rng, 2, 6)};
         const std::size_t th = dim(rng, 1, 8), tw = dim(rng, 1, 8);
         return unary(rng, uniform(rng, s), 0.1f, [=](Var x) { return ops::resize_nearest(x, th, tw); });
       }},
      {"concat_channels",
       [](Rng& rng) {
         const Shape a = small_shape(rng);
         const Shape b{a.n, dim(rng, 1, 3), a.h, a.w};
         return Case{{uniform(rng, a), uniform(rng, b)},
                     [](Graph&, const std::vector<Var>& in) { return ops::concat_channels(in[0], in[1]); }, 0.1f,
                     {}};
       }},
      {"channel_sum",
       [](Rng& rng) { return unary(rng, uniform(rng, small_shape(rng)), 0.1f, [](Var x) { return ops::channel_sum(x); }); }},
      {"gradient_magnitude",
       [](Rng& rng) {
         const Shape s{dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 4, 6), dim(rng, 4, 6)};
         // Steps of 0.01 move a response by at most 0.02.
         return unary(rng, sobel_safe_image(rng, s, 0.05f), 1e-2f,
                      [](Var x) { return gradient_magnitude(x, sobel_pair()); });
       }},
      {"soft_grad_loss",
       [](Rng& rng) {
         const Shape s{1, dim(rng, 1, 3), dim(rng, 5, 6), dim(rng, 5, 6)};
         const LabelMap labels = block_labels(rng, 1, s.h, s.w, 2);
         const float alpha = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
         const SoftnessParams p{alpha, 1.0f - alpha};
         for (int tries = 0; tries < 10000; ++tries) {
           Tensor x = sobel_safe_image(rng, s, 0.05f);
           Tensor xa = sobel_safe_image(rng, s, 0.05f);
           if (min_abs_diff(gradient_magnitude(x, sobel_pair()), gradient_magnitude(xa, sobel_pair())) < 0.2f) continue;
           return Case{{std::move(x), std::move(xa)},
                       [=](Graph&, const std::vector<Var>& in) { return soft_grad_loss(in[0], in[1], labels, p); },
                       1e-2f, {}};
         }
         throw std::runtime_error("gradcheck: could not draw a kink-free soft_grad_loss case");
       }},
      {"cycle_loss",
       [](Rng& rng) {
         const Shape s{1, 3, dim(rng, 2, 4), dim(rng, 2, 4)};
         Tensor v = uniform(rng, s), r = uniform(rng, s);
         Tensor vc = v, rc = r;
         const Tensor dv = away_from_zero(rng, s), dr = away_from_zero(rng, s);
         for (std::size_t i = 0; i < v.numel(); ++i) {
           vc[i] += dv[i];
           rc[i] += dr[i];
         }
         // Steps of 0.05 on either side move a difference by at most 0.05 < 0.2.
         return Case{{v, vc, r, rc},
                     [](Graph&, const std::vector<Var>& in) { return cycle_loss(in[0], in[1], in[2], in[3]); },
                     0.05f, {}};
       }},
      {"discriminator_loss_ls",
       [](Rng& rng) {
         const Shape s{1, 1, dim(rng, 1, 4), dim(rng, 1, 4)};
         return Case{{uniform(rng, s), uniform(rng, s)},
                     [](Graph&, const std::vector<Var>& in) { return discriminator_loss_ls(in[0], in[1]); }, 0.1f,
                     {}};
       }},
      {"generator_adv_loss_ls",
       [](Rng& rng) {
         const Shape s{1, 1, dim(rng, 1, 4), dim(rng, 1, 4)};
         return unary(rng, uniform(rng, s), 0.1f, [](Var x) { return generator_adv_loss_ls(x); });
       }},
      {"sd_forward", sd_forward_case},
      {"total_objective_toy", toy_objective},
  };
  return all;
}

// Identity in the forward pass with a 10% gradient error on the way back.
Var corrupt(Var y) {
  Graph& g = *y.graph;
  return g.record(y.value(), {y},
                  [y](Graph& graph, std::uint32_t self) {
                    float* dx = graph.grad_buffer(y);
                    if (!dx) return;
                    const std::vector<float>& go = graph.out_grad(self);
                    for (std::size_t i = 0; i < go.size(); ++i) dx[i] += 1.1f * go[i];
                  },
                  "corrupt");
}

Tensor flatten(const std::vector<Tensor>& parts) {
  std::size_t total = 0;
  for (const Tensor& t : parts) total += t.numel();
  std::vector<float> flat;
  flat.reserve(total);
  for (const Tensor& t : parts) flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  return Tensor({1, 1, 1, total}, std::move(flat));
}

double check_case(const Case& c, bool corrupted, Rng& rng) {
  Tensor projection;
  if (!c.reference) {
    Graph g0;
    std::vector<Var> in0;
    for (const Tensor& t : c.inputs) in0.push_back(g0.constant(t));
    projection = uniform(rng, c.build(g0, in0).shape());
  }
  auto numeric_value = [&](const std::vector<Tensor>& inputs) {
    if (c.reference) return c.reference(inputs);
    Graph g;
    std::vector<Var> in;
    for (const Tensor& t : inputs) in.push_back(g.constant(t));
    const Tensor y = c.build(g, in).value();
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(projection[i]) * y[i];
    return acc;
  };

  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : c.inputs) vars.push_back(g.variable(t));
  Var y = c.build(g, vars);
  if (corrupted) y = corrupt(y);
  Var loss = c.reference ? y : ops::sum(ops::mul(y, g.constant(projection)));
  g.backward(loss);

  std::vector<Tensor> analytic, numeric;
  std::vector<Tensor> probe = c.inputs;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    analytic.push_back(g.grad(vars[k]));
    numeric.push_back(finite_diff_grad(
        [&](const Tensor& x) {
          probe[k] = x;
          const double f = numeric_value(probe);
          probe[k] = c.inputs[k];
          return f;
        },
        c.inputs[k], c.step));
  }
  return relative_error(flatten(analytic), flatten(numeric));
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& f : families()) names.push_back(f.name);
  return names;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int cases, const std::string& corrupt_op) {
  if (cases < 1) throw std::invalid_argument("run_gradcheck_suite: cases must be >= 1");
  if (!corrupt_op.empty()) {
    const auto names = gradcheck_op_names();
    if (std::find(names.begin(), names.end(), corrupt_op) == names.end()) {
      throw std::invalid_argument("run_gradcheck_suite: unknown op '" + corrupt_op + "'");
    }
  }
  std::vector<GradcheckResult> out;
  std::uint32_t family_index = 0;
  for (const auto& f : families()) {
    GradcheckResult r{f.name, cases, 0.0};
    for (int i = 0; i < cases; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), family_index,
                        static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      const Case c = f.make(rng);
      const double e = check_case(c, f.name == corrupt_op, rng);
      r.max_rel_error = std::max(r.max_rel_error, e);
    }
    out.push_back(r);
    ++family_index;
  }
  return out;
}

}  // namespace sggan

#pragma once
// Independent reference computations used by the unit tests. Plain loops in
// double precision; nothing here calls into the library's kernels.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sggan/gradfilters.hpp"
#include "sggan/tensor.hpp"

namespace oracle {

using sggan::Shape;
using sggan::Tensor;

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

inline long reflect(long i, long n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

// Direct nested-loop cross-correlation.
inline Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad, bool reflect_pad = false) {
  const Shape xs = x.shape(), ks = k.shape();
  const long oh = (static_cast<long>(xs.h) + 2 * pad - static_cast<long>(ks.h)) / stride + 1;
  const long ow = (static_cast<long>(xs.w) + 2 * pad - static_cast<long>(ks.w)) / stride + 1;
  Tensor y({xs.n, ks.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ks.n; ++o)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t ky = 0; ky < ks.h; ++ky)
              for (std::size_t kx = 0; kx < ks.w; ++kx) {
                long iy = oy * stride + static_cast<long>(ky) - pad;
                long ix = ox * stride + static_cast<long>(kx) - pad;
                if (reflect_pad) {
                  iy = reflect(iy, static_cast<long>(xs.h));
                  ix = reflect(ix, static_cast<long>(xs.w));
                } else if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w)) {
                  continue;
                }
                acc += static_cast<double>(x.at(n, c, iy, ix)) * k.at(o, c, ky, kx);
              }
          y.at(n, o, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

// Scatter form of the transposed convolution: every input pixel stamps the kernel.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& k, int stride) {
  const Shape xs = x.shape(), ks = k.shape();
  const std::size_t oh = (xs.h - 1) * stride + ks.h, ow = (xs.w - 1) * stride + ks.w;
  std::vector<double> acc(xs.n * ks.c * oh * ow, 0.0);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < xs.c; ++i)
      for (std::size_t y = 0; y < xs.h; ++y)
        for (std::size_t xx = 0; xx < xs.w; ++xx)
          for (std::size_t o = 0; o < ks.c; ++o)
            for (std::size_t ky = 0; ky < ks.h; ++ky)
              for (std::size_t kx = 0; kx < ks.w; ++kx)
                acc[((n * ks.c + o) * oh + y * stride + ky) * ow + xx * stride + kx] +=
                    static_cast<double>(x.at(n, i, y, xx)) * k.at(i, o, ky, kx);
  Tensor out({xs.n, ks.c, oh, ow});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

inline Tensor instance_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps) {
  const Shape s = x.shape();
  Tensor y(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) mean += x.at(n, c, i, j);
      mean /= static_cast<double>(s.plane());
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) var += std::pow(x.at(n, c, i, j) - mean, 2);
      var /= static_cast<double>(s.plane());
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j)
          y.at(n, c, i, j) =
              static_cast<float>((x.at(n, c, i, j) - mean) / std::sqrt(var + eps) * scale[c] + shift[c]);
    }
  return y;
}

// sum_c |cx * x_c| + |cy * x_c| with zero padding 1.
inline Tensor gradient_magnitude(const Tensor& x, const sggan::FilterPair& f) {
  const Shape s = x.shape();
  Tensor y({s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (long i = 0; i < static_cast<long>(s.h); ++i)
      for (long j = 0; j < static_cast<long>(s.w); ++j) {
        double total = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          double gx = 0.0, gy = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const long yy = i + a - 1, xx = j + b - 1;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(s.h) || xx >= static_cast<long>(s.w)) continue;
              gx += f.cx[a][b] * x.at(n, c, yy, xx);
              gy += f.cy[a][b] * x.at(n, c, yy, xx);
            }
          total += std::abs(gx) + std::abs(gy);
        }
        y.at(n, 0, i, j) = static_cast<float>(total);
      }
  return y;
}

// Label boundary: a pixel is on a boundary when its left/right or up/down
// neighbours (reflected at the border) carry different classes.
inline Tensor boundary_mask(const sggan::LabelMap& l) {
  const long h = static_cast<long>(l.height()), w = static_cast<long>(l.width());
  Tensor m({l.batch(), 1, l.height(), l.width()});
  for (std::size_t n = 0; n < l.batch(); ++n)
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j) {
        const bool horiz = l(n, i, reflect(j - 1, w)) != l(n, i, reflect(j + 1, w));
        const bool vert = l(n, reflect(i - 1, h), j) != l(n, reflect(i + 1, h), j);
        m.at(n, 0, i, j) = (horiz || vert) ? 1.0f : 0.0f;
      }
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline sggan::LabelMap random_labels(std::size_t n, std::size_t h, std::size_t w, int s, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, s - 1);
  std::vector<std::int32_t> v(n * h * w);
  for (auto& x : v) x = u(rng);
  return sggan::LabelMap(n, h, w, s, std::move(v));
}

}  // namespace oracle

#include "sggan/gradfilters.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sggan/ops.hpp"

namespace sggan {

LabelMap::LabelMap(std::size_t batch, std::size_t height, std::size_t width, int num_classes,
                   std::vector<std::int32_t> values)
    : batch_(batch), height_(height), width_(width), num_classes_(num_classes), values_(std::move(values)) {
  validate();
}

LabelMap::LabelMap(std::size_t batch, std::size_t height, std::size_t width, int num_classes,
                   std::int32_t fill)
    : LabelMap(batch, height, width, num_classes,
               std::vector<std::int32_t>(batch * height * width, fill)) {}

void LabelMap::validate() const {
  if (num_classes_ < 1) throw std::invalid_argument("LabelMap: num_classes must be >= 1");
  if (values_.size() != batch_ * height_ * width_) {
    throw ShapeError("LabelMap: " + std::to_string(values_.size()) + " values for " +
                     std::to_string(batch_) + "x" + std::to_string(height_) + "x" + std::to_string(width_));
  }
  for (std::int32_t v : values_) {
    if (v < 0 || v >= num_classes_) {
      throw std::out_of_range("LabelMap: class id " + std::to_string(v) + " outside [0, " +
                              std::to_string(num_classes_) + ")");
    }
  }
}

Tensor LabelMap::as_float() const {
  Tensor t({batch_, 1, height_, width_});
  for (std::size_t i = 0; i < values_.size(); ++i) t[i] = static_cast<float>(values_[i]);
  return t;
}

LabelMap stack_labels(const std::vector<LabelMap>& items) {
  if (items.empty()) throw ShapeError("stack_labels: no items");
  const LabelMap& first = items.front();
  std::vector<std::int32_t> values;
  std::size_t batch = 0;
  for (const LabelMap& m : items) {
    if (m.height() != first.height() || m.width() != first.width() ||
        m.num_classes() != first.num_classes()) {
      throw ShapeError("stack_labels: label maps differ in size or class count");
    }
    values.insert(values.end(), m.values().begin(), m.values().end());
    batch += m.batch();
  }
  return LabelMap(batch, first.height(), first.width(), first.num_classes(), std::move(values));
}

FilterPair sobel_pair() {
  return FilterPair{{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}},
                    {{{1, 2, 1}, {0, 0, 0}, {-1, -2, -1}}},
                    FilterPair::Role::image};
}

FilterPair label_grad_pair() {
  return FilterPair{{{{0, 0, 0}, {-1, 0, 1}, {0, 0, 0}}},
                    {{{0, 1, 0}, {0, 0, 0}, {0, -1, 0}}},
                    FilterPair::Role::label};
}

namespace {

// Depthwise kernel (2C, C, 3, 3): output c applies cx to channel c, output C + c applies cy.
Tensor directional_kernel(const FilterPair& f, std::size_t channels) {
  Tensor k({2 * channels, channels, 3, 3});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t x = 0; x < 3; ++x) {
        k.at(c, c, y, x) = f.cx[y][x];
        k.at(channels + c, c, y, x) = f.cy[y][x];
      }
    }
  }
  return k;
}

}  // namespace

namespace {

// Zero-padded 3x3 response of one plane at (i, j). Double accumulation makes
// the integer-tap sums cancel exactly on flat regions.
double stencil(const float* plane, long h, long w, long i, long j, const Kernel3& k) {
  double acc = 0.0;
  for (long a = 0; a < 3; ++a) {
    const long y = i + a - 1;
    if (y < 0 || y >= h) continue;
    for (long b = 0; b < 3; ++b) {
      const long x = j + b - 1;
      if (x < 0 || x >= w || k[a][b] == 0.0f) continue;
      acc += static_cast<double>(k[a][b]) * plane[y * w + x];
    }
  }
  return acc;
}

}  // namespace

Var gradient_magnitude(Var image, const FilterPair& filters) {
  const Tensor& x = image.value();
  const Shape s = x.shape();
  const long h = static_cast<long>(s.h), w = static_cast<long>(s.w);
  const std::size_t hw = s.plane();
  Tensor out({s.n, 1, s.h, s.w});
  // signs of the directional responses, kept for the backward pass
  auto signs = std::make_shared<std::vector<std::int8_t>>(2 * x.numel());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * hw;
      const float* plane = x.data().data() + base;
      for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
          const std::size_t p = static_cast<std::size_t>(i * w + j);
          const double gx = stencil(plane, h, w, i, j, filters.cx);
          const double gy = stencil(plane, h, w, i, j, filters.cy);
          (*signs)[2 * (base + p)] = static_cast<std::int8_t>((gx > 0) - (gx < 0));
          (*signs)[2 * (base + p) + 1] = static_cast<std::int8_t>((gy > 0) - (gy < 0));
          out[n * hw + p] += static_cast<float>(std::abs(gx) + std::abs(gy));
        }
      }
    }
  }
  return image.graph->record(
      std::move(out), {image},
      [image, filters, signs, s, h, w, hw](Graph& g, std::uint32_t self) {
        float* gi = g.grad_buffer(image);
        if (gi == nullptr) return;
        const std::vector<float>& go = g.out_grad(self);
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = (n * s.c + c) * hw;
            for (long i = 0; i < h; ++i) {
              for (long j = 0; j < w; ++j) {
                const std::size_t p = static_cast<std::size_t>(i * w + j);
                const float up = go[n * hw + p];
                const float sx = up * (*signs)[2 * (base + p)];
                const float sy = up * (*signs)[2 * (base + p) + 1];
                if (sx == 0.0f && sy == 0.0f) continue;
                for (long a = 0; a < 3; ++a) {
                  const long y = i + a - 1;
                  if (y < 0 || y >= h) continue;
                  for (long b = 0; b < 3; ++b) {
                    const long x = j + b - 1;
                    if (x < 0 || x >= w) continue;
                    gi[base + y * w + x] += sx * filters.cx[a][b] + sy * filters.cy[a][b];
                  }
                }
              }
            }
          }
        }
      },
      "gradient_magnitude");
}

Tensor gradient_magnitude(const Tensor& image, const FilterPair& filters) {
  Graph g;
  return gradient_magnitude(g.constant(image), filters).value();
}

Tensor boundary_mask(const LabelMap& labels, const FilterPair& filters) {
  Tensor response = conv2d_forward(labels.as_float(), directional_kernel(filters, 1), 1,
                                   ops::Padding::reflect, 1);
  const std::size_t hw = labels.height() * labels.width();
  Tensor mask({labels.batch(), 1, labels.height(), labels.width()});
  for (std::size_t n = 0; n < labels.batch(); ++n) {
    const float* rx = response.data().data() + 2 * n * hw;
    const float* ry = rx + hw;
    for (std::size_t i = 0; i < hw; ++i) {
      mask[n * hw + i] = (rx[i] != 0.0f || ry[i] != 0.0f) ? 1.0f : 0.0f;
    }
  }
  return mask;
}

}  // namespace sggan

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sggan/graph.hpp"
#include "sggan/tensor.hpp"

namespace sggan {

/// Per-pixel integer class map of shape (batch, height, width).
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t batch, std::size_t height, std::size_t width, int num_classes,
           std::vector<std::int32_t> values);
  /// All pixels set to `fill`.
  LabelMap(std::size_t batch, std::size_t height, std::size_t width, int num_classes,
           std::int32_t fill = 0);

  std::size_t batch() const { return batch_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return values_.size(); }

  std::int32_t operator()(std::size_t n, std::size_t y, std::size_t x) const {
    return values_[(n * height_ + y) * width_ + x];
  }
  const std::vector<std::int32_t>& values() const { return values_; }

  /// Labels cast to float, shape (batch, 1, height, width).
  Tensor as_float() const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  void validate() const;

  std::size_t batch_ = 0, height_ = 0, width_ = 0;
  int num_classes_ = 0;
  std::vector<std::int32_t> values_;
};

LabelMap stack_labels(const std::vector<LabelMap>& items);

using Kernel3 = std::array<std::array<float, 3>, 3>;

/// Horizontal/vertical 3x3 derivative kernels.
struct FilterPair {
  enum class Role { image, label };
  Kernel3 cx;
  Kernel3 cy;
  Role role;
};

/// Sobel kernels used on images.
FilterPair sobel_pair();
/// Centre-skipping difference kernels used on label maps.
FilterPair label_grad_pair();

/// Sum over channels and both directions of |cx * x_c| + |cy * x_c|, with
/// zero padding 1 so the spatial size is kept. Output (N, 1, H, W).
Var gradient_magnitude(Var image, const FilterPair& filters);
Tensor gradient_magnitude(const Tensor& image, const FilterPair& filters);

/// 0/1 map (N, 1, H, W) marking pixels whose filtered label response is
/// nonzero in either direction. Reflect padding keeps image borders clean.
Tensor boundary_mask(const LabelMap& labels, const FilterPair& filters);

}  // namespace sggan

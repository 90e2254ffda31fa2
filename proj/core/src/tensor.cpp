#include "sggan/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace sggan {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " + shape_.str());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape s = items.front().shape();
  std::vector<float> out;
  out.reserve(s.numel() * items.size());
  for (const Tensor& t : items) {
    if (t.shape() != s) {
      throw ShapeError("stack_batch: shape " + t.shape().str() + " differs from " + s.str());
    }
    out.insert(out.end(), t.vec().begin(), t.vec().end());
  }
  std::size_t n = s.n * items.size();
  return Tensor({n, s.c, s.h, s.w}, std::move(out));
}

Tensor batch_item(const Tensor& t, std::size_t index) {
  const Shape& s = t.shape();
  if (index >= s.n) throw ShapeError("batch_item: index out of range for " + s.str());
  std::size_t per = s.c * s.h * s.w;
  std::vector<float> out(t.vec().begin() + static_cast<std::ptrdiff_t>(index * per),
                         t.vec().begin() + static_cast<std::ptrdiff_t>((index + 1) * per));
  return Tensor({1, s.c, s.h, s.w}, std::move(out));
}

}  // namespace sggan

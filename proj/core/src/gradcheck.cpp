#include "sggan/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace sggan {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float step) {
  if (!(step > 0.0f)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
  Tensor probe = x;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float orig = x[i];
    const float hi = orig + step;
    const float lo = orig - step;
    probe[i] = hi;
    const double f_hi = f(probe);
    probe[i] = lo;
    const double f_lo = f(probe);
    probe[i] = orig;
    // Divide by the step actually taken after float rounding.
    out[i] = static_cast<float>((f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo)));
  }
  return out;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("relative_error: shape mismatch " + analytic.shape().str() + " vs " +
                     numeric.shape().str());
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i], b = numeric[i];
    diff += (a - b) * (a - b);
    na += a * a;
    nb += b * b;
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace sggan

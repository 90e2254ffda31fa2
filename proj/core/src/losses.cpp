#include "sggan/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sggan/ops.hpp"

namespace sggan {

void SoftnessParams::validate() const {
  if (!(alpha >= 0.0f) || !(beta >= 0.0f)) {
    throw std::invalid_argument("softness params: alpha and beta must be >= 0 (alpha=" +
                                std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
  if (std::fabs(static_cast<double>(alpha) + beta - 1.0) > 1e-6) {
    throw std::invalid_argument("softness params: alpha + beta must equal 1 (alpha=" +
                                std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

void LossWeights::validate() const {
  if (!(lambda_c >= 0.0f) || !(lambda_g >= 0.0f)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

std::string LossReport::csv_header() {
  return "step,adv_g_v2r,adv_g_r2v,adv_d_r,adv_d_v,cycle,grad_sens,total";
}

std::string LossReport::csv_row(long step) const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", step, adv_g_v2r,
                adv_g_r2v, adv_d_r, adv_d_v, cycle, grad_sens, total);
  return buf;
}

namespace {

void require_same(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

Var discriminator_loss_ls(Var d_on_real, Var d_on_fake) {
  require_same(d_on_real, d_on_fake, "discriminator_loss_ls");
  Var real_err = ops::sub(d_on_real, 1.0f);
  return ops::add(ops::mean(ops::mul(real_err, real_err)), ops::mean(ops::mul(d_on_fake, d_on_fake)));
}

Var generator_adv_loss_ls(Var d_on_fake) {
  Var err = ops::sub(d_on_fake, 1.0f);
  return ops::mean(ops::mul(err, err));
}

Var cycle_loss(Var v, Var v_cycled, Var r, Var r_cycled) {
  require_same(v, v_cycled, "cycle_loss");
  require_same(r, r_cycled, "cycle_loss");
  return ops::add(ops::mean(ops::abs(ops::sub(v_cycled, v))), ops::mean(ops::abs(ops::sub(r_cycled, r))));
}

Var soft_grad_loss(Var x, Var x_adapted, const LabelMap& labels, const SoftnessParams& p) {
  p.validate();
  require_same(x, x_adapted, "soft_grad_loss");
  const Shape& s = x.shape();
  if (labels.batch() != s.n || labels.height() != s.h || labels.width() != s.w) {
    throw ShapeError("soft_grad_loss: labels do not match image shape " + s.str());
  }
  Graph& g = *x.graph;
  const FilterPair image_filters = sobel_pair();
  Var diff = ops::abs(ops::sub(gradient_magnitude(x, image_filters),
                               gradient_magnitude(x_adapted, image_filters)));
  Tensor weight = boundary_mask(labels, label_grad_pair());
  for (float& m : weight.vec()) m = p.alpha * m + p.beta;
  return ops::mean(ops::mul(diff, g.constant(std::move(weight))));
}

Var full_grad_objective(Var v, Var v_adapted, const LabelMap& s_v, Var r, Var r_adapted,
                        const LabelMap& s_r, const SoftnessParams& p) {
  return ops::add(soft_grad_loss(v, v_adapted, s_v, p), soft_grad_loss(r, r_adapted, s_r, p));
}

LossReport total_objective(const ObjectiveParts& parts, const LossWeights& w) {
  LossReport r;
  r.adv_g_v2r = parts.adv_v2r;
  r.adv_g_r2v = parts.adv_r2v;
  r.cycle = parts.cycle;
  r.grad_sens = parts.grad;
  r.total = parts.adv_v2r + parts.adv_r2v + static_cast<double>(w.lambda_c) * parts.cycle +
            static_cast<double>(w.lambda_g) * parts.grad;
  return r;
}

Var total_objective(Var adv_v2r, Var adv_r2v, Var cycle, Var grad, const LossWeights& w) {
  return ops::add(ops::add(adv_v2r, adv_r2v),
                  ops::add(ops::mul(cycle, w.lambda_c), ops::mul(grad, w.lambda_g)));
}

}  // namespace sggan

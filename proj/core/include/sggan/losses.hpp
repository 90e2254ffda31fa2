#pragma once

#include <iosfwd>
#include <string>

#include "sggan/gradfilters.hpp"
#include "sggan/graph.hpp"

namespace sggan {

/// Boundary weight alpha and uniform weight beta; alpha + beta = 1, both >= 0.
struct SoftnessParams {
  float alpha = 1.0f;
  float beta = 0.0f;

  /// Throws std::invalid_argument when the constraint is violated.
  void validate() const;
};

struct LossWeights {
  float lambda_c = 10.0f;
  float lambda_g = 5.0f;

  void validate() const;
};

/// Scalar values of every objective term at one training step.
struct LossReport {
  double adv_g_v2r = 0.0;
  double adv_g_r2v = 0.0;
  double adv_d_r = 0.0;
  double adv_d_v = 0.0;
  double cycle = 0.0;
  double grad_sens = 0.0;
  double total = 0.0;

  static std::string csv_header();
  /// "step,adv_g_v2r,...,total" with round-trip precision.
  std::string csv_row(long step) const;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// mean((real - 1)^2) + mean(fake^2).
Var discriminator_loss_ls(Var d_on_real, Var d_on_fake);

/// mean((fake - 1)^2).
Var generator_adv_loss_ls(Var d_on_fake);

/// mean|v_cycled - v| + mean|r_cycled - r|.
Var cycle_loss(Var v, Var v_cycled, Var r, Var r_cycled);

/// mean( | |C_i*x| - |C_i*x_adapted| | * (alpha * boundary + beta) ) with
/// Sobel image filters and the label-difference filters for the boundary.
/// The label map only contributes a constant mask.
Var soft_grad_loss(Var x, Var x_adapted, const LabelMap& labels, const SoftnessParams& p);

/// Sum of the soft gradient-sensitive terms of both translation directions.
Var full_grad_objective(Var v, Var v_adapted, const LabelMap& s_v, Var r, Var r_adapted,
                        const LabelMap& s_r, const SoftnessParams& p);

/// Generator-side objective terms of one step.
struct ObjectiveParts {
  double adv_v2r = 0.0;
  double adv_r2v = 0.0;
  double cycle = 0.0;
  double grad = 0.0;
};

/// total = adv_v2r + adv_r2v + lambda_c * cycle + lambda_g * grad.
LossReport total_objective(const ObjectiveParts& parts, const LossWeights& w);

/// Same composition on graph variables, for backpropagation.
Var total_objective(Var adv_v2r, Var adv_r2v, Var cycle, Var grad, const LossWeights& w);

}  // namespace sggan

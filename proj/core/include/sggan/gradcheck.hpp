#pragma once

#include <functional>

#include "sggan/tensor.hpp"

namespace sggan {

/// Central-difference gradient estimate of a scalar function, one element at a time.
/// `f` returns double so the oracle is not limited by float rounding of the loss.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float step);

/// Normwise relative error ||a - b||_2 / (||a||_2 + ||b||_2); 0 when both are zero.
double relative_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace sggan

#include <cstdint>
#include <string>
#include <vector>

namespace sggan {

inline constexpr double kGradcheckTolerance = 1e-3;

struct GradcheckResult {
  std::string op;
  int cases = 0;
  double max_rel_error = 0.0;

  bool passed(double tol = kGradcheckTolerance) const { return max_rel_error < tol; }
};

/// Names of every case family of run_gradcheck_suite, in run order.
std::vector<std::string> gradcheck_op_names();

/// Compares backward() with central differences for every differentiable op,
/// the losses, the semantic discriminator and the composed objective on a
/// depth-2 toy network. Each family runs `cases` seeded random instances.
/// `corrupt_op` names a family whose op gets a deliberately wrong backward
/// (test fixture for the failure path).
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int cases = 20,
                                                 const std::string& corrupt_op = {});

}  // namespace sggan

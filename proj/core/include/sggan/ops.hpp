#pragma once

#include <cstddef>

#include "sggan/graph.hpp"
#include "sggan/tensor.hpp"

/// Differentiable operations on Graph variables. Every op validates shapes,
/// computes its forward value eagerly and records a backward rule.
namespace sggan::ops {

enum class Padding { zero, reflect };

/// Cross-correlation (the deep-learning "convolution").
/// input (N, C, H, W), kernel (OC, C, KH, KW) -> (N, OC, OH, OW) with
/// OH = (H + 2*pad - KH) / stride + 1.
Var conv2d(Var input, Var kernel, int stride = 1, Padding padding = Padding::zero, int pad_size = 0);

/// Transposed convolution without padding: input (N, IC, H, W), kernel
/// (IC, OC, KH, KW) -> (N, OC, (H-1)*stride + KH, (W-1)*stride + KW).
/// Its forward pass is the input-gradient of conv2d with the same kernel.
Var conv_transpose2d(Var input, Var kernel, int stride);

/// Adds a per-channel bias of shape (1, C, 1, 1).
Var bias_add(Var input, Var bias);

/// Per (sample, channel) plane normalisation with biased variance, then a
/// per-channel affine map. scale/shift have shape (1, C, 1, 1).
Var instance_norm(Var input, Var scale, Var shift, float epsilon = 1e-5f);

struct Activation {
  enum class Kind { relu, leaky_relu, tanh };
  Kind kind = Kind::relu;
  float slope = 0.0f;

  static Activation relu() { return {Kind::relu, 0.0f}; }
  static Activation leaky_relu(float slope) { return {Kind::leaky_relu, slope}; }
  static Activation tanh() { return {Kind::tanh, 0.0f}; }
};

/// Element-wise activation. The (sub)gradient at 0 is the negative-branch slope.
Var activation(Var input, Activation kind);

enum class Elementwise { add, sub, mul, abs, sign };

/// Binary add/sub/mul. `b` may have the same shape as `a` or be a scalar.
Var elementwise(Var a, Var b, Elementwise kind);
/// Binary op against a constant scalar.
Var elementwise(Var a, float b, Elementwise kind);
/// Unary abs/sign. sign() is always gradient-blocked.
Var elementwise(Var a, Elementwise kind);

inline Var add(Var a, Var b) { return elementwise(a, b, Elementwise::add); }
inline Var sub(Var a, Var b) { return elementwise(a, b, Elementwise::sub); }
inline Var mul(Var a, Var b) { return elementwise(a, b, Elementwise::mul); }
inline Var add(Var a, float b) { return elementwise(a, b, Elementwise::add); }
inline Var sub(Var a, float b) { return elementwise(a, b, Elementwise::sub); }
inline Var mul(Var a, float b) { return elementwise(a, b, Elementwise::mul); }
inline Var abs(Var a) { return elementwise(a, Elementwise::abs); }
inline Var sign(Var a) { return elementwise(a, Elementwise::sign); }

enum class Reduction { sum, mean, l1_norm };

/// Full reduction to a (1, 1, 1, 1) scalar. Accumulates in double.
Var reduce(Var input, Reduction kind);
inline Var sum(Var a) { return reduce(a, Reduction::sum); }
inline Var mean(Var a) { return reduce(a, Reduction::mean); }

/// Nearest-neighbour resize: source index = floor(dst * in / out).
Var resize_nearest(Var input, std::size_t target_h, std::size_t target_w);

/// Concatenate along the channel dimension.
Var concat_channels(Var a, Var b);

/// Sum over the channel dimension: (N, C, H, W) -> (N, 1, H, W).
Var channel_sum(Var input);

}  // namespace sggan::ops

namespace sggan {

/// Graph-free forward kernels shared by the ops and by constant-only paths
/// (label masks, evaluation).
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride,
                      ops::Padding padding, int pad_size);
Tensor resize_nearest(const Tensor& input, std::size_t target_h, std::size_t target_w);

}  // namespace sggan

#include "sggan/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

namespace sggan {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t channels, in_h, in_w, k_h, k_w;
  int stride, pad;
  ops::Padding padding;

  std::size_t out_h() const { return (in_h + 2 * pad - k_h) / static_cast<std::size_t>(stride) + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - k_w) / static_cast<std::size_t>(stride) + 1; }
  std::size_t rows() const { return channels * k_h * k_w; }
  std::size_t cols() const { return out_h() * out_w(); }
};

// Maps a padded coordinate into [0, n); returns -1 for a zero-padded tap.
inline long source_index(long i, long n, ops::Padding padding) {
  if (i >= 0 && i < n) return i;
  if (padding == ops::Padding::zero) return -1;
  if (i < 0) return -i;
  return 2 * (n - 1) - i;
}

void im2col(const float* img, const ConvGeometry& g, float* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long h = static_cast<long>(g.in_h), w = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx, ++row) {
        float* out = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          long iy = source_index(static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad, h,
                                 g.padding);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            long ix = source_index(static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.pad,
                                   w, g.padding);
            out[oy * ow + ox] = (iy < 0 || ix < 0) ? 0.0f : plane[iy * w + ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into img.
void col2im(const float* cols, const ConvGeometry& g, float* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long h = static_cast<long>(g.in_h), w = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx, ++row) {
        const float* in = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          long iy = source_index(static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad, h,
                                 g.padding);
          if (iy < 0) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            long ix = source_index(static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.pad,
                                   w, g.padding);
            if (ix >= 0) plane[iy * w + ix] += in[oy * ow + ox];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& in, const Shape& k, int stride, ops::Padding padding,
                           int pad) {
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ShapeError("conv2d: pad_size must be >= 0");
  if (in.c != k.c) {
    throw ShapeError("conv2d: input channel dimension " + std::to_string(in.c) +
                     " != kernel in_ch dimension " + std::to_string(k.c));
  }
  if (in.h + 2 * static_cast<std::size_t>(pad) < k.h || in.w + 2 * static_cast<std::size_t>(pad) < k.w) {
    throw ShapeError("conv2d: kernel " + k.str() + " larger than padded input " + in.str());
  }
  if (padding == ops::Padding::reflect &&
      (static_cast<std::size_t>(pad) >= in.h || static_cast<std::size_t>(pad) >= in.w)) {
    throw ShapeError("conv2d: reflect pad_size must be smaller than the spatial dims " + in.str());
  }
  return ConvGeometry{in.c, in.h, in.w, k.h, k.w, stride, pad, padding};
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

void require_channel_param(const Shape& x, const Shape& p, const char* op, const char* what) {
  if (p != Shape{1, x.c, 1, 1}) {
    throw ShapeError(std::string(op) + ": " + what + " must have shape (1, " + std::to_string(x.c) +
                     ", 1, 1), got " + p.str());
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride, ops::Padding padding,
                      int pad_size) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  ConvGeometry g = conv_geometry(is, ks, stride, padding, pad_size);
  const std::size_t oh = g.out_h(), ow = g.out_w();
  Tensor out({is.n, ks.n, oh, ow});
  std::vector<float> cols(g.rows() * g.cols());
  ConstMapMat w(kernel.data().data(), static_cast<Eigen::Index>(ks.n), static_cast<Eigen::Index>(g.rows()));
  for (std::size_t n = 0; n < is.n; ++n) {
    im2col(input.data().data() + n * is.c * is.h * is.w, g, cols.data());
    ConstMapMat c(cols.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    MapMat y(out.data().data() + n * ks.n * oh * ow, static_cast<Eigen::Index>(ks.n),
             static_cast<Eigen::Index>(g.cols()));
    y.noalias() = w * c;
  }
  return out;
}

Tensor resize_nearest(const Tensor& input, std::size_t target_h, std::size_t target_w) {
  if (target_h < 1 || target_w < 1) throw ShapeError("resize_nearest: target dims must be >= 1");
  const Shape& s = input.shape();
  Tensor out({s.n, s.c, target_h, target_w});
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const float* src = input.data().data() + p * s.h * s.w;
    float* dst = out.data().data() + p * target_h * target_w;
    for (std::size_t y = 0; y < target_h; ++y) {
      std::size_t sy = y * s.h / target_h;
      for (std::size_t x = 0; x < target_w; ++x) {
        dst[y * target_w + x] = src[sy * s.w + x * s.w / target_w];
      }
    }
  }
  return out;
}

namespace ops {

Var conv2d(Var input, Var kernel, int stride, Padding padding, int pad_size) {
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  ConvGeometry g = conv_geometry(x.shape(), k.shape(), stride, padding, pad_size);
  Tensor out = conv2d_forward(x, k, stride, padding, pad_size);
  const Shape xs = x.shape(), ks = k.shape();
  auto fn = [input, kernel, g, xs, ks](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    const Tensor& xv = input.value();
    const Tensor& kv = kernel.value();
    float* dx = graph.grad_buffer(input);
    float* dk = graph.grad_buffer(kernel);
    const auto rows = static_cast<Eigen::Index>(g.rows());
    const auto cols = static_cast<Eigen::Index>(g.cols());
    const auto oc = static_cast<Eigen::Index>(ks.n);
    std::vector<float> buf(g.rows() * g.cols());
    ConstMapMat w(kv.data().data(), oc, rows);
    for (std::size_t n = 0; n < xs.n; ++n) {
      ConstMapMat dyn(dy.data() + n * ks.n * g.cols(), oc, cols);
      if (dk != nullptr) {
        im2col(xv.data().data() + n * xs.c * xs.h * xs.w, g, buf.data());
        ConstMapMat c(buf.data(), rows, cols);
        MapMat dkm(dk, oc, rows);
        dkm.noalias() += dyn * c.transpose();
      }
      if (dx != nullptr) {
        MapMat dcols(buf.data(), rows, cols);
        dcols.noalias() = w.transpose() * dyn;
        col2im(buf.data(), g, dx + n * xs.c * xs.h * xs.w);
      }
    }
  };
  return input.graph->record(std::move(out), {input, kernel}, fn, "conv2d");
}

Var conv_transpose2d(Var input, Var kernel, int stride) {
  if (stride < 1) {
    throw ShapeError("conv_transpose2d: stride must be >= 1, got " + std::to_string(stride));
  }
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const Shape xs = x.shape(), ks = k.shape();
  if (xs.c != ks.n) {
    throw ShapeError("conv_transpose2d: input channel dimension " + std::to_string(xs.c) +
                     " != kernel in_ch dimension " + std::to_string(ks.n));
  }
  const std::size_t oh = (xs.h - 1) * static_cast<std::size_t>(stride) + ks.h;
  const std::size_t ow = (xs.w - 1) * static_cast<std::size_t>(stride) + ks.w;
  // Geometry of the adjoint convolution: maps the (OC, oh, ow) output back to (H, W).
  ConvGeometry g{ks.c, oh, ow, ks.h, ks.w, stride, 0, Padding::zero};
  const auto ic = static_cast<Eigen::Index>(xs.c);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto hw = static_cast<Eigen::Index>(xs.h * xs.w);

  Tensor out({xs.n, ks.c, oh, ow});
  std::vector<float> cols(g.rows() * xs.h * xs.w);
  ConstMapMat km(k.data().data(), ic, rows);
  for (std::size_t n = 0; n < xs.n; ++n) {
    ConstMapMat xm(x.data().data() + n * xs.c * xs.h * xs.w, ic, hw);
    MapMat cm(cols.data(), rows, hw);
    cm.noalias() = km.transpose() * xm;
    col2im(cols.data(), g, out.data().data() + n * ks.c * oh * ow);
  }

  auto fn = [input, kernel, g, xs, ks, ic, rows, hw](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* dx = graph.grad_buffer(input);
    float* dk = graph.grad_buffer(kernel);
    std::vector<float> buf(g.rows() * xs.h * xs.w);
    ConstMapMat km(kernel.value().data().data(), ic, rows);
    for (std::size_t n = 0; n < xs.n; ++n) {
      im2col(dy.data() + n * ks.c * g.in_h * g.in_w, g, buf.data());
      ConstMapMat dcols(buf.data(), rows, hw);
      if (dx != nullptr) {
        MapMat dxm(dx + n * xs.c * xs.h * xs.w, ic, hw);
        dxm.noalias() += km * dcols;
      }
      if (dk != nullptr) {
        ConstMapMat xm(input.value().data().data() + n * xs.c * xs.h * xs.w, ic, hw);
        MapMat dkm(dk, ic, rows);
        dkm.noalias() += xm * dcols.transpose();
      }
    }
  };
  return input.graph->record(std::move(out), {input, kernel}, fn, "conv_transpose2d");
}

Var bias_add(Var input, Var bias) {
  const Tensor& x = input.value();
  const Shape s = x.shape();
  require_channel_param(s, bias.shape(), "bias_add", "bias");
  Tensor out = x;
  const Tensor& b = bias.value();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      float* p = out.data().data() + (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] += b[c];
    }
  }
  auto fn = [input, bias, s](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    if (float* dx = graph.grad_buffer(input)) {
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
    if (float* db = graph.grad_buffer(bias)) {
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const float* p = dy.data() + (n * s.c + c) * s.plane();
          double acc = 0.0;
          for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
          db[c] += static_cast<float>(acc);
        }
      }
    }
  };
  return input.graph->record(std::move(out), {input, bias}, fn, "bias_add");
}

Var instance_norm(Var input, Var scale, Var shift, float epsilon) {
  if (!(epsilon > 0.0f)) throw std::invalid_argument("instance_norm: epsilon must be > 0");
  const Tensor& x = input.value();
  const Shape s = x.shape();
  require_channel_param(s, scale.shape(), "instance_norm", "scale");
  require_channel_param(s, shift.shape(), "instance_norm", "shift");
  const Tensor& gamma = scale.value();
  const Tensor& beta = shift.value();
  const std::size_t planes = s.n * s.c, hw = s.plane();

  Tensor out(s);
  std::vector<float> xhat(x.numel());
  std::vector<float> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data().data() + p * hw;
    double mu = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mu += src[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    inv_std[p] = static_cast<float>(is);
    const std::size_t c = p % s.c;
    for (std::size_t i = 0; i < hw; ++i) {
      const float h = static_cast<float>((src[i] - mu) * is);
      xhat[p * hw + i] = h;
      out[p * hw + i] = gamma[c] * h + beta[c];
    }
  }

  auto fn = [input, scale, shift, s, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    const Tensor& gamma = scale.value();
    const std::size_t hw = s.plane();
    float* dx = graph.grad_buffer(input);
    float* dgamma = graph.grad_buffer(scale);
    float* dbeta = graph.grad_buffer(shift);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
      const std::size_t c = p % s.c;
      const float* g = dy.data() + p * hw;
      const float* h = xhat.data() + p * hw;
      double sum_g = 0.0, sum_gh = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_g += g[i];
        sum_gh += static_cast<double>(g[i]) * h[i];
      }
      if (dgamma != nullptr) dgamma[c] += static_cast<float>(sum_gh);
      if (dbeta != nullptr) dbeta[c] += static_cast<float>(sum_g);
      if (dx != nullptr) {
        const double mean_g = sum_g / static_cast<double>(hw);
        const double mean_gh = sum_gh / static_cast<double>(hw);
        const double k = static_cast<double>(gamma[c]) * inv_std[p];
        for (std::size_t i = 0; i < hw; ++i) {
          dx[p * hw + i] += static_cast<float>(k * (g[i] - mean_g - h[i] * mean_gh));
        }
      }
    }
  };
  return input.graph->record(std::move(out), {input, scale, shift}, fn, "instance_norm");
}

Var activation(Var input, Activation kind) {
  if (kind.kind == Activation::Kind::leaky_relu && !(kind.slope > 0.0f && kind.slope < 1.0f)) {
    throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  }
  Tensor out = input.value();
  const float neg = kind.kind == Activation::Kind::leaky_relu ? kind.slope : 0.0f;
  std::string name;
  switch (kind.kind) {
    case Activation::Kind::relu:
    case Activation::Kind::leaky_relu:
      for (float& v : out.vec()) v = v > 0.0f ? v : v * neg;
      name = kind.kind == Activation::Kind::relu ? "relu" : "leaky_relu";
      break;
    case Activation::Kind::tanh:
      for (float& v : out.vec()) v = std::tanh(v);
      name = "tanh";
      break;
  }
  const bool is_tanh = kind.kind == Activation::Kind::tanh;
  // tanh reads its own output; the piecewise-linear kinds read the input.
  const std::uint32_t out_id = static_cast<std::uint32_t>(input.graph->size());
  auto fn = [input, neg, is_tanh, out_id](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* dx = graph.grad_buffer(input);
    if (is_tanh) {
      const Tensor& y = graph.value(Var{&graph, out_id});
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0f - y[i] * y[i]);
    } else {
      const Tensor& x = input.value();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += x[i] > 0.0f ? dy[i] : dy[i] * neg;
    }
  };
  return input.graph->record(std::move(out), {input}, fn, name);
}

Var elementwise(Var a, Var b, Elementwise kind) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool scalar_b = bv.numel() == 1 && av.numel() != 1;
  if (!scalar_b) require_same_shape(av.shape(), bv.shape(), "elementwise");
  if (kind == Elementwise::abs || kind == Elementwise::sign) {
    throw std::invalid_argument("elementwise: abs/sign are unary");
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const float rhs = scalar_b ? bv[0] : bv[i];
    switch (kind) {
      case Elementwise::add: out[i] = av[i] + rhs; break;
      case Elementwise::sub: out[i] = av[i] - rhs; break;
      default: out[i] = av[i] * rhs; break;
    }
  }
  auto fn = [a, b, kind, scalar_b](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (float* da = graph.grad_buffer(a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) {
        da[i] += kind == Elementwise::mul ? dy[i] * (scalar_b ? bv[0] : bv[i]) : dy[i];
      }
    }
    if (float* db = graph.grad_buffer(b)) {
      const float sgn = kind == Elementwise::sub ? -1.0f : 1.0f;
      if (scalar_b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dy.size(); ++i) {
          acc += kind == Elementwise::mul ? static_cast<double>(dy[i]) * av[i] : sgn * dy[i];
        }
        db[0] += static_cast<float>(acc);
      } else {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          db[i] += kind == Elementwise::mul ? dy[i] * av[i] : sgn * dy[i];
        }
      }
    }
  };
  static constexpr const char* names[] = {"add", "sub", "mul", "abs", "sign"};
  return a.graph->record(std::move(out), {a, b}, fn, names[static_cast<int>(kind)]);
}

Var elementwise(Var a, float b, Elementwise kind) {
  if (kind == Elementwise::abs || kind == Elementwise::sign) {
    throw std::invalid_argument("elementwise: abs/sign are unary");
  }
  Tensor out = a.value();
  for (float& v : out.vec()) {
    switch (kind) {
      case Elementwise::add: v += b; break;
      case Elementwise::sub: v -= b; break;
      default: v *= b; break;
    }
  }
  const float dscale = kind == Elementwise::mul ? b : 1.0f;
  auto fn = [a, dscale](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* da = graph.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * dscale;
  };
  return a.graph->record(std::move(out), {a}, fn, "scalar_op");
}

Var elementwise(Var a, Elementwise kind) {
  Tensor out = a.value();
  if (kind == Elementwise::sign) {
    for (float& v : out.vec()) v = static_cast<float>((v > 0.0f) - (v < 0.0f));
    return a.graph->constant(std::move(out));
  }
  if (kind != Elementwise::abs) throw std::invalid_argument("elementwise: op is binary");
  for (float& v : out.vec()) v = std::fabs(v);
  auto fn = [a](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    const Tensor& x = a.value();
    float* da = graph.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      da[i] += x[i] > 0.0f ? dy[i] : (x[i] < 0.0f ? -dy[i] : 0.0f);
    }
  };
  return a.graph->record(std::move(out), {a}, fn, "abs");
}

Var reduce(Var input, Reduction kind) {
  const Tensor& x = input.value();
  if (x.empty()) throw ShapeError("reduce: empty tensor");
  double acc = 0.0;
  for (float v : x.vec()) acc += kind == Reduction::l1_norm ? std::fabs(v) : v;
  if (kind == Reduction::mean) acc /= static_cast<double>(x.numel());
  auto fn = [input, kind](Graph& graph, std::uint32_t self) {
    const float g = graph.out_grad(self)[0];
    const Tensor& x = input.value();
    float* dx = graph.grad_buffer(input);
    const float scale = kind == Reduction::mean ? g / static_cast<float>(x.numel()) : g;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (kind == Reduction::l1_norm) {
        dx[i] += x[i] > 0.0f ? scale : (x[i] < 0.0f ? -scale : 0.0f);
      } else {
        dx[i] += scale;
      }
    }
  };
  static constexpr const char* names[] = {"sum", "mean", "l1_norm"};
  return input.graph->record(Tensor::scalar(static_cast<float>(acc)), {input}, fn,
                             names[static_cast<int>(kind)]);
}

Var resize_nearest(Var input, std::size_t target_h, std::size_t target_w) {
  Tensor out = sggan::resize_nearest(input.value(), target_h, target_w);
  const Shape s = input.shape();
  auto fn = [input, s, target_h, target_w](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* dx = graph.grad_buffer(input);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
      for (std::size_t y = 0; y < target_h; ++y) {
        const std::size_t sy = y * s.h / target_h;
        for (std::size_t x = 0; x < target_w; ++x) {
          dx[p * s.plane() + sy * s.w + x * s.w / target_w] +=
              dy[(p * target_h + y) * target_w + x];
        }
      }
    }
  };
  return input.graph->record(std::move(out), {input}, fn, "resize_nearest");
}

Var concat_channels(Var a, Var b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: shapes " + sa.str() + " and " + sb.str() +
                     " differ outside the channel dimension");
  }
  const std::size_t hw = sa.plane();
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data().data() + n * sa.c * hw, sa.c * hw,
                out.data().data() + n * (sa.c + sb.c) * hw);
    std::copy_n(b.value().data().data() + n * sb.c * hw, sb.c * hw,
                out.data().data() + (n * (sa.c + sb.c) + sa.c) * hw);
  }
  auto fn = [a, b, sa, sb, hw](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* da = graph.grad_buffer(a);
    float* db = graph.grad_buffer(b);
    for (std::size_t n = 0; n < sa.n; ++n) {
      const float* src = dy.data() + n * (sa.c + sb.c) * hw;
      if (da != nullptr) {
        for (std::size_t i = 0; i < sa.c * hw; ++i) da[n * sa.c * hw + i] += src[i];
      }
      if (db != nullptr) {
        for (std::size_t i = 0; i < sb.c * hw; ++i) db[n * sb.c * hw + i] += src[sa.c * hw + i];
      }
    }
  };
  return a.graph->record(std::move(out), {a, b}, fn, "concat_channels");
}

Var channel_sum(Var input) {
  const Shape s = input.shape();
  const std::size_t hw = s.plane();
  Tensor out({s.n, 1, s.h, s.w});
  const Tensor& x = input.value();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = x.data().data() + (n * s.c + c) * hw;
      float* dst = out.data().data() + n * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
  }
  auto fn = [input, s, hw](Graph& graph, std::uint32_t self) {
    const std::vector<float>& dy = graph.out_grad(self);
    float* dx = graph.grad_buffer(input);
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        float* dst = dx + (n * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] += dy[n * hw + i];
      }
    }
  };
  return input.graph->record(std::move(out), {input}, fn, "channel_sum");
}

}  // namespace ops
}  // namespace sggan

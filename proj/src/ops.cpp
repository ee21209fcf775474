#include "polyth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polyth {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const std::string& op, const std::string& name, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, name + " must have rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_extent(const std::string& op, const std::string& what, std::size_t got, std::size_t expected) {
  if (got != expected) {
    shape_error(op, what + " is " + std::to_string(got) + ", expected " + std::to_string(expected));
  }
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "gradient shape " + shape_str(b.shape()) + " does not match " + shape_str(a.shape()));
  }
}

struct Window {
  std::size_t out_h, out_w;
};

Window window_geometry(const std::string& op, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad) {
  if (stride == 0) shape_error(op, "stride must be positive");
  if (kh > h + 2 * pad) {
    shape_error(op, "kernel height " + std::to_string(kh) + " exceeds padded input height " +
                        std::to_string(h + 2 * pad));
  }
  if (kw > w + 2 * pad) {
    shape_error(op, "kernel width " + std::to_string(kw) + " exceeds padded input width " +
                        std::to_string(w + 2 * pad));
  }
  return {conv_out_extent(h, kh, stride, pad), conv_out_extent(w, kw, stride, pad)};
}

// Accumulates one kernel tap of a single-channel correlation:
// out[oy,ox] += weight * in[oy*stride+ky-pad, ox*stride+kx-pad].
inline void accumulate_tap(const double* in, std::size_t h, std::size_t w, double* out, std::size_t oh,
                           std::size_t ow, double weight, std::size_t ky, std::size_t kx, std::size_t stride,
                           std::size_t pad) {
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
    const double* in_row = in + iy * w;
    double* out_row = out + oy * ow;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
      out_row[ox] += weight * in_row[ix];
    }
  }
}

// Sum over the output grid of dout[oy,ox] * in[oy*stride+ky-pad, ox*stride+kx-pad].
inline double tap_correlation(const double* in, std::size_t h, std::size_t w, const double* dout, std::size_t oh,
                              std::size_t ow, std::size_t ky, std::size_t kx, std::size_t stride, std::size_t pad) {
  double acc = 0.0;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
    const double* in_row = in + iy * w;
    const double* d_row = dout + oy * ow;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
      acc += d_row[ox] * in_row[ix];
    }
  }
  return acc;
}

// din[oy*stride+ky-pad, ox*stride+kx-pad] += weight * dout[oy,ox].
inline void scatter_tap(double* din, std::size_t h, std::size_t w, const double* dout, std::size_t oh,
                        std::size_t ow, double weight, std::size_t ky, std::size_t kx, std::size_t stride,
                        std::size_t pad) {
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
    double* din_row = din + iy * w;
    const double* d_row = dout + oy * ow;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
      din_row[ix] += weight * d_row[ox];
    }
  }
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t pad) {
  const std::string op = "conv2d";
  require_rank(op, "input", input, 4);
  require_rank(op, "kernels", kernels, 4);
  require_rank(op, "bias", bias, 1);
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  require_extent(op, "kernel input-channel extent", kernels.dim(1), cin);
  require_extent(op, "bias length", bias.dim(0), cout);
  const auto [oh, ow] = window_geometry(op, h, w, kh, kw, stride, pad);

  Tensor out({n, cout, oh, ow});
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* plane = o + (b * cout + co) * oh * ow;
      std::fill(plane, plane + oh * ow, bias[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in_plane = in + (b * cin + ci) * h * w;
        const double* kern = k + (co * cin + ci) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            accumulate_tap(in_plane, h, w, plane, oh, ow, kern[ky * kw + kx], ky, kx, stride, pad);
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& dout, std::size_t stride,
                          std::size_t pad, bool need_input_grad) {
  const std::string op = "conv2d_backward";
  require_rank(op, "input", input, 4);
  require_rank(op, "kernels", kernels, 4);
  require_rank(op, "dout", dout, 4);
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  require_extent(op, "kernel input-channel extent", kernels.dim(1), cin);
  const auto [oh, ow] = window_geometry(op, h, w, kh, kw, stride, pad);
  require_extent(op, "dout batch", dout.dim(0), n);
  require_extent(op, "dout channels", dout.dim(1), cout);
  require_extent(op, "dout height", dout.dim(2), oh);
  require_extent(op, "dout width", dout.dim(3), ow);

  ConvGrads g{need_input_grad ? Tensor(input.shape()) : Tensor{}, Tensor(kernels.shape()), Tensor({cout})};
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  const double* d = dout.data().data();
  double* dk = g.kernels.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* d_plane = d + (b * cout + co) * oh * ow;
      double db = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) db += d_plane[i];
      g.bias[co] += db;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in_plane = in + (b * cin + ci) * h * w;
        double* dkern = dk + (co * cin + ci) * kh * kw;
        const double* kern = k + (co * cin + ci) * kh * kw;
        double* din_plane = need_input_grad ? g.input.data().data() + (b * cin + ci) * h * w : nullptr;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            dkern[ky * kw + kx] += tap_correlation(in_plane, h, w, d_plane, oh, ow, ky, kx, stride, pad);
            if (din_plane) scatter_tap(din_plane, h, w, d_plane, oh, ow, kern[ky * kw + kx], ky, kx, stride, pad);
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// depthwise

Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
  const std::string op = "depthwise_conv";
  require_rank(op, "input", input, 4);
  require_rank(op, "kernels", kernels, 3);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t kh = kernels.dim(1), kw = kernels.dim(2);
  require_extent(op, "kernel channel count", kernels.dim(0), c);
  const auto [oh, ow] = window_geometry(op, h, w, kh, kw, stride, pad);

  Tensor out({n, c, oh, ow});
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* in_plane = in + (b * c + ch) * h * w;
      double* plane = o + (b * c + ch) * oh * ow;
      const double* kern = k + ch * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          accumulate_tap(in_plane, h, w, plane, oh, ow, kern[ky * kw + kx], ky, kx, stride, pad);
        }
      }
    }
  }
  return out;
}

ConvGrads depthwise_conv_backward(const Tensor& input, const Tensor& kernels, const Tensor& dout,
                                  std::size_t stride, std::size_t pad) {
  const std::string op = "depthwise_conv_backward";
  require_rank(op, "input", input, 4);
  require_rank(op, "kernels", kernels, 3);
  require_rank(op, "dout", dout, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t kh = kernels.dim(1), kw = kernels.dim(2);
  require_extent(op, "kernel channel count", kernels.dim(0), c);
  const auto [oh, ow] = window_geometry(op, h, w, kh, kw, stride, pad);
  if (dout.shape() != Shape{n, c, oh, ow}) {
    shape_error(op, "dout shape " + shape_str(dout.shape()) + " does not match output " +
                        shape_str(Shape{n, c, oh, ow}));
  }

  ConvGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor{}};
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  const double* d = dout.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* in_plane = in + (b * c + ch) * h * w;
      const double* d_plane = d + (b * c + ch) * oh * ow;
      double* din_plane = g.input.data().data() + (b * c + ch) * h * w;
      double* dkern = g.kernels.data().data() + ch * kh * kw;
      const double* kern = k + ch * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          dkern[ky * kw + kx] += tap_correlation(in_plane, h, w, d_plane, oh, ow, ky, kx, stride, pad);
          scatter_tap(din_plane, h, w, d_plane, oh, ow, kern[ky * kw + kx], ky, kx, stride, pad);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// pointwise

Tensor pointwise_conv(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::string op = "pointwise_conv";
  require_rank(op, "input", input, 4);
  require_rank(op, "weights", weights, 2);
  require_rank(op, "bias", bias, 1);
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const std::size_t cout = weights.dim(0);
  require_extent(op, "weights input-channel extent", weights.dim(1), c);
  require_extent(op, "bias length", bias.dim(0), cout);

  Tensor out({n, cout, input.dim(2), input.dim(3)});
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  double* o = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* plane = o + (b * cout + co) * hw;
      std::fill(plane, plane + hw, bias[co]);
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double wv = wt[co * c + ci];
        const double* in_plane = in + (b * c + ci) * hw;
        for (std::size_t p = 0; p < hw; ++p) plane[p] += wv * in_plane[p];
      }
    }
  }
  return out;
}

ConvGrads pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& dout) {
  const std::string op = "pointwise_conv_backward";
  require_rank(op, "input", input, 4);
  require_rank(op, "weights", weights, 2);
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const std::size_t cout = weights.dim(0);
  require_extent(op, "weights input-channel extent", weights.dim(1), c);
  if (dout.shape() != Shape{n, cout, input.dim(2), input.dim(3)}) {
    shape_error(op, "dout shape " + shape_str(dout.shape()) + " does not match output");
  }

  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({cout})};
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  const double* d = dout.data().data();
  double* din = g.input.data().data();
  double* dw = g.kernels.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* d_plane = d + (b * cout + co) * hw;
      double db = 0.0;
      for (std::size_t p = 0; p < hw; ++p) db += d_plane[p];
      g.bias[co] += db;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in_plane = in + (b * c + ci) * hw;
        double* din_plane = din + (b * c + ci) * hw;
        const double wv = wt[co * c + ci];
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
          acc += d_plane[p] * in_plane[p];
          din_plane[p] += wv * d_plane[p];
        }
        dw[co * c + ci] += acc;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// separable

Tensor separable_conv(const Tensor& input, const Tensor& dw_kernels, const Tensor& pw_weights, const Tensor& pw_bias,
                      std::size_t stride, std::size_t pad) {
  return pointwise_conv(depthwise_conv(input, dw_kernels, stride, pad), pw_weights, pw_bias);
}

SeparableGrads separable_conv_backward(const Tensor& input, const Tensor& dw_kernels, const Tensor& pw_weights,
                                       const Tensor& dout, std::size_t stride, std::size_t pad) {
  const Tensor mid = depthwise_conv(input, dw_kernels, stride, pad);
  ConvGrads pw = pointwise_conv_backward(mid, pw_weights, dout);
  ConvGrads dw = depthwise_conv_backward(input, dw_kernels, pw.input, stride, pad);
  return {std::move(dw.input), std::move(dw.kernels), std::move(pw.kernels), std::move(pw.bias)};
}

// ---------------------------------------------------------------------------
// dense

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::string op = "dense";
  require_rank(op, "input", input, 2);
  require_rank(op, "weights", weights, 2);
  require_rank(op, "bias", bias, 1);
  const std::size_t n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  require_extent(op, "weights row count", weights.dim(0), d);
  require_extent(op, "bias length", bias.dim(0), k);

  Tensor out({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.data().data() + r * k;
    for (std::size_t j = 0; j < k; ++j) o[j] = bias[j];
    for (std::size_t i = 0; i < d; ++i) {
      const double x = input[r * d + i];
      const double* wrow = weights.data().data() + i * k;
      for (std::size_t j = 0; j < k; ++j) o[j] += x * wrow[j];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& dout) {
  const std::string op = "dense_backward";
  require_rank(op, "input", input, 2);
  require_rank(op, "weights", weights, 2);
  require_rank(op, "dout", dout, 2);
  const std::size_t n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  require_extent(op, "weights row count", weights.dim(0), d);
  require_extent(op, "dout rows", dout.dim(0), n);
  require_extent(op, "dout columns", dout.dim(1), k);

  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({k})};
  for (std::size_t r = 0; r < n; ++r) {
    const double* drow = dout.data().data() + r * k;
    for (std::size_t j = 0; j < k; ++j) g.bias[j] += drow[j];
    for (std::size_t i = 0; i < d; ++i) {
      const double x = input[r * d + i];
      const double* wrow = weights.data().data() + i * k;
      double* dwrow = g.weights.data().data() + i * k;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        dwrow[j] += x * drow[j];
        acc += wrow[j] * drow[j];
      }
      g.input[r * d + i] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// elementwise and reductions

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& dout) {
  require_same_shape("relu_backward", input, dout);
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? dout[i] : 0.0;
  return g;
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", "logits", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = logits.data().data() + r * k;
    double* o = out.data().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(row[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= sum;
  }
  return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& dout) {
  require_rank("softmax_backward", "probs", probs, 2);
  require_same_shape("softmax_backward", probs, dout);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor g(probs.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += probs.at(r, j) * dout.at(r, j);
    for (std::size_t j = 0; j < k; ++j) g.at(r, j) = probs.at(r, j) * (dout.at(r, j) - dot);
  }
  return g;
}

Tensor maxpool2(const Tensor& input) {
  const std::string op = "maxpool2";
  require_rank(op, "input", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0) shape_error(op, "input height " + std::to_string(h) + " is odd");
  if (w % 2 != 0) shape_error(op, "input width " + std::to_string(w) + " is odd");
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* in = input.data().data() + p * h * w;
    double* o = out.data().data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double* top = in + 2 * y * w + 2 * x;
        o[y * ow + x] = std::max({top[0], top[1], top[w], top[w + 1]});
      }
    }
  }
  return out;
}

Tensor maxpool2_backward(const Tensor& input, const Tensor& dout) {
  const std::string op = "maxpool2_backward";
  require_rank(op, "input", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) shape_error(op, "input spatial extents must be even, got " + shape_str(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  if (dout.shape() != Shape{n, c, oh, ow}) shape_error(op, "dout shape " + shape_str(dout.shape()) + " mismatch");
  Tensor g(input.shape());
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* in = input.data().data() + p * h * w;
    const double* d = dout.data().data() + p * oh * ow;
    double* gi = g.data().data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = 2 * y * w + 2 * x;
        const std::size_t offsets[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = offsets[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (in[offsets[i]] > in[best]) best = offsets[i];
        }
        gi[best] += d[y * ow + x];
      }
    }
  }
  return g;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank("global_avg_pool", "input", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* in = input.data().data() + p * hw;
    double sum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sum += in[i];
    out[p] = sum / static_cast<double>(hw);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout) {
  if (input_shape.size() != 4) shape_error("global_avg_pool_backward", "input must have rank 4");
  const std::size_t n = input_shape[0], c = input_shape[1], hw = input_shape[2] * input_shape[3];
  if (dout.shape() != Shape{n, c}) {
    shape_error("global_avg_pool_backward", "dout shape " + shape_str(dout.shape()) + " mismatch");
  }
  Tensor g(input_shape);
  const double scale = 1.0 / static_cast<double>(hw);
  for (std::size_t p = 0; p < n * c; ++p) {
    double* gi = g.data().data() + p * hw;
    std::fill(gi, gi + hw, dout[p] * scale);
  }
  return g;
}

DropoutResult dropout(const Tensor& input, double drop_prob, bool training, std::mt19937_64& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw std::invalid_argument("dropout: drop probability " + std::to_string(drop_prob) + " outside [0,1)");
  }
  if (!training) return {input, Tensor(input.shape(), 1.0)};
  Tensor mask(input.shape());
  Tensor out(input.shape());
  const double keep_scale = 1.0 / (1.0 - drop_prob);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < input.size(); ++i) {
    mask[i] = uniform(rng) < drop_prob ? 0.0 : keep_scale;
    out[i] = input[i] * mask[i];
  }
  return {std::move(out), std::move(mask)};
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dout) {
  require_same_shape("dropout_backward", mask, dout);
  Tensor g(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) g[i] = dout[i] * mask[i];
  return g;
}

}  // namespace polyth

#pragma once

#include <random>

#include "polyth/tensor.hpp"

// Layer primitives with explicit forward and backward passes. Every
// backward function takes the forward inputs plus the upstream gradient and
// returns gradients for each differentiable argument.

namespace polyth {

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

struct SeparableGrads {
  Tensor input;
  Tensor dw_kernels;
  Tensor pw_weights;
  Tensor pw_bias;
};

/// Output extent of a strided window: (in + 2*pad - k) / stride + 1, floored.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

// input N x Cin x H x W, kernels Cout x Cin x kh x kw, bias Cout.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t pad);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& dout, std::size_t stride,
                          std::size_t pad, bool need_input_grad = true);

// input N x C x H x W, kernels C x kh x kw. No bias.
Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);
ConvGrads depthwise_conv_backward(const Tensor& input, const Tensor& kernels, const Tensor& dout,
                                  std::size_t stride, std::size_t pad);

// input N x C x H x W, weights Cout x C, bias Cout.
Tensor pointwise_conv(const Tensor& input, const Tensor& weights, const Tensor& bias);
ConvGrads pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& dout);

/// pointwise_conv(depthwise_conv(input, dw_kernels, stride, pad), pw_weights, pw_bias)
Tensor separable_conv(const Tensor& input, const Tensor& dw_kernels, const Tensor& pw_weights, const Tensor& pw_bias,
                      std::size_t stride = 1, std::size_t pad = 1);
SeparableGrads separable_conv_backward(const Tensor& input, const Tensor& dw_kernels, const Tensor& pw_weights,
                                       const Tensor& dout, std::size_t stride = 1, std::size_t pad = 1);

// input N x D, weights D x K, bias K.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& dout);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& dout);

/// Row-wise softmax of an N x K tensor with per-row max subtraction.
Tensor softmax(const Tensor& logits);
/// Vector-Jacobian product of softmax given its output.
Tensor softmax_backward(const Tensor& probs, const Tensor& dout);

/// 2x2 stride-2 max pooling. Requires even H and W.
Tensor maxpool2(const Tensor& input);
/// Routes each window's gradient to its first maximal element in row-major order.
Tensor maxpool2_backward(const Tensor& input, const Tensor& dout);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 or 1/(1-p) per element; all ones in inference mode
};

/// Inverted dropout. In inference mode the output is the input, bitwise.
DropoutResult dropout(const Tensor& input, double drop_prob, bool training, std::mt19937_64& rng);
Tensor dropout_backward(const Tensor& mask, const Tensor& dout);

}  // namespace polyth

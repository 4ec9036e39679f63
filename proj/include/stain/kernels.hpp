#pragma once

#include <cstddef>
#include <vector>

#include "stain/tensor.hpp"

// Forward and backward kernels for the layer primitives. Backward functions
// accumulate into the gradient tensors they are handed; a null pointer skips
// that gradient.
namespace stain::numerics {

inline constexpr std::size_t kKernel = 2;

// Valid 2x2 correlation, stride 1: [C_in,H,W] x [C_out,C_in,2,2] -> [C_out,H-1,W-1].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                     Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias);

// Transposed 2x2 convolution, stride 1: [C_in,H,W] x [C_out,C_in,2,2] -> [C_out,H+1,W+1].
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
void conv_transpose2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                               Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias);

struct PoolResult {
  Tensor output;
  // Flat input index of the selected element for each output element.
  std::vector<std::size_t> argmax;
};

// 2x2 window, stride 2, trailing odd row/column dropped. Ties resolve to the
// first element in row-major window order.
PoolResult maxpool2d_with_indices(const Tensor& input);
Tensor maxpool2d(const Tensor& input);
void maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out, Tensor& grad_input);

Tensor matvec(const Tensor& weight, const Tensor& input);
void matvec_backward(const Tensor& weight, const Tensor& input, const Tensor& grad_out,
                     Tensor* grad_weight, Tensor* grad_input);

// weight[M,N] * input[N] + bias[M]
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

enum class Activation { relu, sigmoid, tanh };

Tensor activation(const Tensor& input, Activation kind);
// Uses the forward output where the derivative is expressible through it.
void activation_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out, Activation kind,
                         Tensor& grad_input);

double sigmoid(double x);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count);

// Crop or zero-pad (at the high end) each channel to height x width.
Tensor crop_pad(const Tensor& input, std::size_t height, std::size_t width);

// [C,H,W] -> [1,H,W]
Tensor channel_mean(const Tensor& input);

// [C,H,W] -> [C,2H,2W]
Tensor upsample_nearest2x(const Tensor& input);

inline constexpr double kBceEpsilon = 1e-7;

double bce_loss(double prediction, int label);
// Derivative with respect to the prediction, evaluated at the clamped value.
double bce_loss_grad(double prediction, int label);

}  // namespace stain::numerics

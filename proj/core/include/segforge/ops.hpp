#pragma once

#include <cstddef>

#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

enum class Mode { kTrain, kInfer };

struct Conv2dOptions {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

/// 2-D cross-correlation (the kernel is not flipped) with zero padding.
///
/// x: [N, Cin, H, W], weight: [Cout, Cin, k, k], bias: [Cout] or undefined.
/// Output extent: floor((H + 2p - d(k-1) - 1) / s) + 1 per spatial axis.
///
/// All three passes run through one im2col/GEMM path: the input gradient is the
/// transposed correlation (col2im of W^T * dY), the weight gradient is dY
/// correlated with the unfolded input.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

/// Per-channel running statistics of a batch-norm layer.
struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  bool initialized = false;

  /// Mean 0, variance 1, marked initialized.
  static BatchNormState identity(std::size_t channels);
};

struct BatchNormOptions {
  Real momentum = Real(0.1);
  Real epsilon = Real(1e-5);
};

/// Batch normalization over (N, H, W) per channel followed by gamma * x_hat + beta.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// mean and the unbiased batch variance into the running state with
/// r <- (1 - momentum) r + momentum * batch. Infer mode reads the running state
/// only and throws ContractError when it was never initialized.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                   BatchNormOptions options = {});

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
/// Elementwise product of equally shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);
/// x: [N, C, H, W] scaled by s: [N, C, 1, 1] broadcast over H, W.
Tensor mul_channel(const Tensor& x, const Tensor& s);
/// Multiplies every element by a constant.
Tensor scale(const Tensor& x, Real factor);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Copies channels [begin, end) of a rank-4 tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

Tensor global_avg_pool(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int factor);

/// Max over k x k windows. The gradient goes to the first maximal element in
/// row-major window order.
Tensor maxpool2d(const Tensor& x, int kernel, int stride);

/// Sum of all elements as a scalar.
Tensor sum(const Tensor& x);

/// Output extent of a convolution along one axis.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, int stride, int dilation, int padding);

SEGFORGE_NAMESPACE_END

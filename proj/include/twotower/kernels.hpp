#pragma once

#include <cstddef>
#include <vector>

#include "twotower/tensor.hpp"

// Forward and backward kernels for the differentiable operators. These work on
// plain tensors; graph.hpp records them on a tape.
namespace twotower::kernels {

/// Stride-1 convolution with zero padding.
/// input N x Cin x H x W, weight Cout x Cin x k x k, bias Cout.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t pad);

/// Accumulates into the non-null gradient outputs.
void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     std::size_t pad, Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias);

inline constexpr std::size_t kUpKernel = 4;
inline constexpr std::size_t kUpStride = 2;
inline constexpr std::size_t kUpPad = 1;

/// 4x4 / stride 2 / pad 1 transposed convolution, exactly doubling H and W.
/// input N x Cin x H x W, weight Cin x Cout x 4 x 4, bias Cout.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

void conv_transpose2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                               Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias);

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping 2x2 max-pool. Ties go to the first position in row-major
/// window order.
PoolResult maxpool2d(const Tensor& input);

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& grad_out);

}  // namespace twotower::kernels

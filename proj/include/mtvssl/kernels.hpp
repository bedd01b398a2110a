#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace mtvssl {

// Geometry of a 3D convolution over (channels, time, height, width) tensors.
struct Conv3dGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::array<std::size_t, 3> input{};    // T, H, W
  std::array<std::size_t, 3> kernel{3, 3, 3};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{1, 1, 1};

  std::array<std::size_t, 3> output() const;
  std::size_t input_size() const { return in_channels * input[0] * input[1] * input[2]; }
  std::size_t output_size() const;
  std::size_t weight_size() const {
    return out_channels * in_channels * kernel[0] * kernel[1] * kernel[2];
  }
  // Throws std::invalid_argument when the kernel does not fit the padded input.
  void validate() const;
};

// OpenMP-parallel kernels used by the model. Every function here has a naive
// counterpart in `reference` with the same signature and semantics.
namespace kernels {

// output = conv(input, weight) + bias. Output is overwritten.
void conv3d_forward(const Conv3dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
// grad_input is overwritten.
void conv3d_backward_input(const Conv3dGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
// grad_weight and grad_bias are accumulated into.
void conv3d_backward_weight(const Conv3dGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// y = W x + b with W stored (out, in) row-major. y is overwritten.
void linear_forward(std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);
// grad_x overwritten; grad_weight, grad_bias accumulated.
void linear_backward(std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias);

int max_threads();

}  // namespace kernels

namespace reference {

void conv3d_forward(const Conv3dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv3d_backward_input(const Conv3dGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
void conv3d_backward_weight(const Conv3dGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void linear_forward(std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);
void linear_backward(std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias);

}  // namespace reference
}  // namespace mtvssl

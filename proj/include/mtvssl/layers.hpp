#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtvssl/kernels.hpp"
#include "mtvssl/tensor.hpp"

namespace mtvssl {

struct Param {
  Tensor value;
  Tensor grad;

  Param() = default;
  explicit Param(Shape shape) : value(shape), grad(shape) {}
  void zero_grad() { grad.fill(0.0); }
};

// Non-owning (name, parameter) view used for optimisation, checkpoints and
// momentum updates.
struct NamedParam {
  std::string name;
  Param* param;
};
struct ConstNamedParam {
  std::string name;
  const Param* param;
};

// He-normal initialisation from a seed derived from (seed, name).
void init_he_normal(Param& p, std::size_t fan_in, std::uint64_t seed, const std::string& name);

// 3D convolution over (C, T, H, W) followed by ReLU.
class Conv3dRelu {
 public:
  Conv3dRelu() = default;
  Conv3dRelu(std::size_t in_channels, std::size_t out_channels, std::array<std::size_t, 3> stride);

  struct Trace {
    Tensor input;
    Tensor output;  // post-ReLU
  };

  Tensor forward(const Tensor& input, Trace* trace) const;
  // Accumulates parameter gradients; returns d loss / d input.
  Tensor backward(const Trace& trace, const Tensor& grad_output);

  Conv3dGeometry geometry_for(const Shape& input_shape) const;
  Shape output_shape(const Shape& input_shape) const;
  // Rescales weight and bias so every output channel's pre-activation has zero
  // mean and unit variance over `inputs` (all positions pooled).
  void standardize(const std::vector<Tensor>& inputs);
  void init(std::uint64_t seed, const std::string& name);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  std::size_t in_channels_ = 0;
  std::size_t out_channels_ = 0;
  std::array<std::size_t, 3> stride_{1, 1, 1};
  Param weight_, bias_;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_y);
  // Same as Conv3dRelu::standardize, per output unit.
  void standardize(const std::vector<Tensor>& inputs);
  void init(std::uint64_t seed, const std::string& name);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Param weight_, bias_;
};

// Transposed 2D convolution with kernel 2, stride 2: (Cin, h, w) -> (h*2, w*2, Cout),
// emitting channels-last so the output feeds a class-axis softmax directly.
class Upsample2x {
 public:
  Upsample2x() = default;
  Upsample2x(std::size_t in_channels, std::size_t out_channels);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_y);
  void init(std::uint64_t seed, const std::string& name);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  std::size_t in_ = 0, out_ = 0;
  Param weight_, bias_;  // weight (Cin, Cout, 2, 2)
};

Tensor relu(const Tensor& x);
// grad * [output > 0]
Tensor relu_backward(const Tensor& output, const Tensor& grad);

// (C, ...) -> (C) mean over everything but the leading axis.
Tensor global_average_pool(const Tensor& x);
Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad);

// x / max(|x|, eps)
Tensor l2_normalize(const Tensor& x);
Tensor l2_normalize_backward(const Tensor& x, const Tensor& grad_y);

// Backward of a class-axis softmax given its output probabilities.
Tensor softmax_classes_backward(const Tensor& probs, const Tensor& grad_probs);

}  // namespace mtvssl

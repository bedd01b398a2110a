#include "mtvssl/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtvssl/losses.hpp"
#include "mtvssl/rng.hpp"

namespace mtvssl {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Divides row o of `weight` and bias[o] by the spread of unit o, after
// shifting the bias to cancel its mean. Units that never vary keep their scale.
void standardize_units(Param& weight, Param& bias, const std::vector<double>& sum,
                       const std::vector<double>& sum_sq, double count) {
  const std::size_t out = bias.value.size();
  const std::size_t row = weight.value.size() / out;
  for (std::size_t o = 0; o < out; ++o) {
    const double mean = sum[o] / count;
    const double var = std::max(0.0, sum_sq[o] / count - mean * mean);
    const double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
    for (std::size_t k = 0; k < row; ++k) weight.value[o * row + k] /= sd;
    bias.value[o] = (bias.value[o] - mean) / sd;
  }
}

}  // namespace

void init_he_normal(Param& p, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, fnv1a(name)));
  const double std_dev = std::sqrt(2.0 / double(fan_in));
  for (double& v : p.value.values()) v = std_dev * rng.normal();
  p.zero_grad();
}

Conv3dRelu::Conv3dRelu(std::size_t in_channels, std::size_t out_channels,
                       std::array<std::size_t, 3> stride)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      stride_(stride),
      weight_({out_channels, in_channels, 3, 3, 3}),
      bias_({out_channels}) {}

Conv3dGeometry Conv3dRelu::geometry_for(const Shape& s) const {
  if (s.size() != 4 || s[0] != in_channels_) {
    throw std::invalid_argument("Conv3dRelu: expected (" + std::to_string(in_channels_) +
                                ", T, H, W) input, got " + shape_to_string(s));
  }
  Conv3dGeometry g;
  g.in_channels = in_channels_;
  g.out_channels = out_channels_;
  g.input = {s[1], s[2], s[3]};
  g.stride = stride_;
  g.validate();
  return g;
}

Shape Conv3dRelu::output_shape(const Shape& input_shape) const {
  const auto o = geometry_for(input_shape).output();
  return {out_channels_, o[0], o[1], o[2]};
}

Tensor Conv3dRelu::forward(const Tensor& input, Trace* trace) const {
  const Conv3dGeometry g = geometry_for(input.shape());
  Tensor out(output_shape(input.shape()));
  kernels::conv3d_forward(g, input.span(), weight_.value.span(), bias_.value.span(), out.span());
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (trace) {
    trace->input = input;
    trace->output = out;
  }
  return out;
}

Tensor Conv3dRelu::backward(const Trace& trace, const Tensor& grad_output) {
  const Conv3dGeometry g = geometry_for(trace.input.shape());
  const Tensor pre_grad = relu_backward(trace.output, grad_output);
  kernels::conv3d_backward_weight(g, trace.input.span(), pre_grad.span(), weight_.grad.span(),
                                  bias_.grad.span());
  Tensor grad_input(trace.input.shape());
  kernels::conv3d_backward_input(g, pre_grad.span(), weight_.value.span(), grad_input.span());
  return grad_input;
}

void Conv3dRelu::standardize(const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("Conv3dRelu::standardize: no inputs");
  std::vector<double> sum(out_channels_, 0.0), sum_sq(out_channels_, 0.0);
  double count = 0.0;
  for (const Tensor& input : inputs) {
    const Conv3dGeometry g = geometry_for(input.shape());
    Tensor pre(output_shape(input.shape()));
    kernels::conv3d_forward(g, input.span(), weight_.value.span(), bias_.value.span(), pre.span());
    const std::size_t per = pre.size() / out_channels_;
    for (std::size_t c = 0; c < out_channels_; ++c) {
      for (std::size_t k = 0; k < per; ++k) {
        const double v = pre[c * per + k];
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    }
    count += double(per);
  }
  standardize_units(weight_, bias_, sum, sum_sq, count);
}

void Conv3dRelu::init(std::uint64_t seed, const std::string& name) {
  init_he_normal(weight_, in_channels_ * 27, seed, name + ".weight");
  bias_.value.fill(0.0);
  bias_.zero_grad();
}

void Conv3dRelu::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

Linear::Linear(std::size_t in, std::size_t out)
    : in_(in), out_(out), weight_({out, in}), bias_({out}) {}

Tensor Linear::forward(const Tensor& x) const {
  if (x.size() != in_) {
    throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " inputs, got " +
                                std::to_string(x.size()));
  }
  Tensor y({out_});
  kernels::linear_forward(x.span(), weight_.value.span(), bias_.value.span(), y.span());
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_y) {
  Tensor grad_x(x.shape());
  kernels::linear_backward(x.span(), weight_.value.span(), grad_y.span(), grad_x.span(),
                           weight_.grad.span(), bias_.grad.span());
  return grad_x;
}

void Linear::standardize(const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("Linear::standardize: no inputs");
  std::vector<double> sum(out_, 0.0), sum_sq(out_, 0.0);
  for (const Tensor& x : inputs) {
    const Tensor y = forward(x);
    for (std::size_t o = 0; o < out_; ++o) {
      sum[o] += y[o];
      sum_sq[o] += y[o] * y[o];
    }
  }
  standardize_units(weight_, bias_, sum, sum_sq, double(inputs.size()));
}

void Linear::init(std::uint64_t seed, const std::string& name) {
  init_he_normal(weight_, in_, seed, name + ".weight");
  bias_.value.fill(0.0);
  bias_.zero_grad();
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

Upsample2x::Upsample2x(std::size_t in_channels, std::size_t out_channels)
    : in_(in_channels), out_(out_channels), weight_({in_channels, out_channels, 2, 2}),
      bias_({out_channels}) {}

Tensor Upsample2x::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != in_) {
    throw std::invalid_argument("Upsample2x: expected (" + std::to_string(in_) + ", h, w) input");
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  Tensor y({2 * h, 2 * w, out_});
  const double* W = weight_.value.data();
  for (std::size_t i = 0; i < 2 * h; ++i) {
    for (std::size_t j = 0; j < 2 * w; ++j) {
      const std::size_t a = i & 1, b = j & 1, si = i / 2, sj = j / 2;
      double* cell = y.data() + (i * 2 * w + j) * out_;
      for (std::size_t co = 0; co < out_; ++co) {
        double acc = bias_.value[co];
        for (std::size_t ci = 0; ci < in_; ++ci) {
          acc += W[((ci * out_ + co) * 2 + a) * 2 + b] * x[(ci * h + si) * w + sj];
        }
        cell[co] = acc;
      }
    }
  }
  return y;
}

Tensor Upsample2x::backward(const Tensor& x, const Tensor& grad_y) {
  const std::size_t h = x.dim(1), w = x.dim(2);
  Tensor grad_x(x.shape());
  const double* W = weight_.value.data();
  double* gW = weight_.grad.data();
  for (std::size_t i = 0; i < 2 * h; ++i) {
    for (std::size_t j = 0; j < 2 * w; ++j) {
      const std::size_t a = i & 1, b = j & 1, si = i / 2, sj = j / 2;
      const double* g = grad_y.data() + (i * 2 * w + j) * out_;
      for (std::size_t co = 0; co < out_; ++co) {
        bias_.grad[co] += g[co];
        for (std::size_t ci = 0; ci < in_; ++ci) {
          const std::size_t widx = ((ci * out_ + co) * 2 + a) * 2 + b;
          const std::size_t xidx = (ci * h + si) * w + sj;
          grad_x[xidx] += W[widx] * g[co];
          gW[widx] += g[co] * x[xidx];
        }
      }
    }
  }
  return grad_x;
}

void Upsample2x::init(std::uint64_t seed, const std::string& name) {
  init_he_normal(weight_, in_, seed, name + ".weight");
  bias_.value.fill(0.0);
  bias_.zero_grad();
}

void Upsample2x::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad) {
  Tensor g = grad;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor global_average_pool(const Tensor& x) {
  const std::size_t C = x.dim(0);
  const std::size_t per = x.size() / C;
  Tensor y({C});
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += x[c * per + i];
    y[c] = acc / double(per);
  }
  return y;
}

Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad) {
  Tensor g(input_shape);
  const std::size_t C = input_shape[0];
  const std::size_t per = g.size() / C;
  for (std::size_t c = 0; c < C; ++c) {
    const double v = grad[c] / double(per);
    for (std::size_t i = 0; i < per; ++i) g[c * per + i] = v;
  }
  return g;
}

Tensor l2_normalize(const Tensor& x) {
  const double n = std::max(l2_norm(x.span()), kNormEpsilon);
  Tensor y = x;
  for (double& v : y.values()) v /= n;
  return y;
}

Tensor l2_normalize_backward(const Tensor& x, const Tensor& grad_y) {
  const double raw = l2_norm(x.span());
  const double n = std::max(raw, kNormEpsilon);
  Tensor g(x.shape());
  const double proj = raw > kNormEpsilon ? dot(x.span(), grad_y.span()) / (n * n * n) : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = grad_y[i] / n - proj * x[i];
  return g;
}

Tensor softmax_classes_backward(const Tensor& probs, const Tensor& grad_probs) {
  const std::size_t C = probs.dim(probs.rank() - 1);
  const std::size_t L = probs.size() / C;
  Tensor g(probs.shape());
  for (std::size_t loc = 0; loc < L; ++loc) {
    const double* p = probs.data() + loc * C;
    const double* gp = grad_probs.data() + loc * C;
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += p[c] * gp[c];
    for (std::size_t c = 0; c < C; ++c) g[loc * C + c] = p[c] * (gp[c] - s);
  }
  return g;
}

}  // namespace mtvssl

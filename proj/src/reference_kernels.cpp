// Straightforward loop nests that follow the textbook definitions. Kept for
// cross-checking the parallel kernels and as the baseline in benchmarks.
#include <stdexcept>

#include "mtvssl/kernels.hpp"

namespace mtvssl::reference {

namespace {

using Index = std::ptrdiff_t;

struct Dims {
  Index cin, cout, T, H, W, OT, OH, OW, KT, KH, KW, st, sh, sw, pt, ph, pw;
};

Dims dims_of(const Conv3dGeometry& g) {
  g.validate();
  const auto o = g.output();
  return {Index(g.in_channels), Index(g.out_channels), Index(g.input[0]), Index(g.input[1]),
          Index(g.input[2]),    Index(o[0]),           Index(o[1]),        Index(o[2]),
          Index(g.kernel[0]),   Index(g.kernel[1]),    Index(g.kernel[2]), Index(g.stride[0]),
          Index(g.stride[1]),   Index(g.stride[2]),    Index(g.padding[0]), Index(g.padding[1]),
          Index(g.padding[2])};
}

Index in_idx(const Dims& d, Index c, Index t, Index h, Index w) {
  return ((c * d.T + t) * d.H + h) * d.W + w;
}
Index out_idx(const Dims& d, Index c, Index t, Index h, Index w) {
  return ((c * d.OT + t) * d.OH + h) * d.OW + w;
}
Index w_idx(const Dims& d, Index co, Index ci, Index kt, Index kh, Index kw) {
  return (((co * d.cin + ci) * d.KT + kt) * d.KH + kh) * d.KW + kw;
}

bool inside(const Dims& d, Index t, Index h, Index w) {
  return t >= 0 && t < d.T && h >= 0 && h < d.H && w >= 0 && w < d.W;
}

}  // namespace

void conv3d_forward(const Conv3dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const Dims d = dims_of(g);
  if (input.size() != g.input_size() || weight.size() != g.weight_size() ||
      output.size() != g.output_size() || bias.size() != g.out_channels) {
    throw std::invalid_argument("reference::conv3d_forward: size mismatch");
  }
  for (Index co = 0; co < d.cout; ++co)
    for (Index ot = 0; ot < d.OT; ++ot)
      for (Index oh = 0; oh < d.OH; ++oh)
        for (Index ow = 0; ow < d.OW; ++ow) {
          double acc = bias[co];
          for (Index ci = 0; ci < d.cin; ++ci)
            for (Index kt = 0; kt < d.KT; ++kt)
              for (Index kh = 0; kh < d.KH; ++kh)
                for (Index kw = 0; kw < d.KW; ++kw) {
                  const Index t = ot * d.st + kt - d.pt;
                  const Index h = oh * d.sh + kh - d.ph;
                  const Index w = ow * d.sw + kw - d.pw;
                  if (!inside(d, t, h, w)) continue;
                  acc += weight[w_idx(d, co, ci, kt, kh, kw)] * input[in_idx(d, ci, t, h, w)];
                }
          output[out_idx(d, co, ot, oh, ow)] = acc;
        }
}

// Gather form: each input cell sums the output cells that read it.
void conv3d_backward_input(const Conv3dGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const Dims d = dims_of(g);
  if (grad_input.size() != g.input_size() || weight.size() != g.weight_size() ||
      grad_output.size() != g.output_size()) {
    throw std::invalid_argument("reference::conv3d_backward_input: size mismatch");
  }
  for (Index ci = 0; ci < d.cin; ++ci)
    for (Index t = 0; t < d.T; ++t)
      for (Index h = 0; h < d.H; ++h)
        for (Index w = 0; w < d.W; ++w) {
          double acc = 0.0;
          for (Index co = 0; co < d.cout; ++co)
            for (Index kt = 0; kt < d.KT; ++kt)
              for (Index kh = 0; kh < d.KH; ++kh)
                for (Index kw = 0; kw < d.KW; ++kw) {
                  const Index nt = t + d.pt - kt, nh = h + d.ph - kh, nw = w + d.pw - kw;
                  if (nt < 0 || nh < 0 || nw < 0) continue;
                  if (nt % d.st || nh % d.sh || nw % d.sw) continue;
                  const Index ot = nt / d.st, oh = nh / d.sh, ow = nw / d.sw;
                  if (ot >= d.OT || oh >= d.OH || ow >= d.OW) continue;
                  acc += weight[w_idx(d, co, ci, kt, kh, kw)] *
                         grad_output[out_idx(d, co, ot, oh, ow)];
                }
          grad_input[in_idx(d, ci, t, h, w)] = acc;
        }
}

void conv3d_backward_weight(const Conv3dGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const Dims d = dims_of(g);
  if (input.size() != g.input_size() || grad_weight.size() != g.weight_size() ||
      grad_output.size() != g.output_size() || grad_bias.size() != g.out_channels) {
    throw std::invalid_argument("reference::conv3d_backward_weight: size mismatch");
  }
  for (Index co = 0; co < d.cout; ++co)
    for (Index ot = 0; ot < d.OT; ++ot)
      for (Index oh = 0; oh < d.OH; ++oh)
        for (Index ow = 0; ow < d.OW; ++ow) {
          const double go = grad_output[out_idx(d, co, ot, oh, ow)];
          grad_bias[co] += go;
          for (Index ci = 0; ci < d.cin; ++ci)
            for (Index kt = 0; kt < d.KT; ++kt)
              for (Index kh = 0; kh < d.KH; ++kh)
                for (Index kw = 0; kw < d.KW; ++kw) {
                  const Index t = ot * d.st + kt - d.pt;
                  const Index h = oh * d.sh + kh - d.ph;
                  const Index w = ow * d.sw + kw - d.pw;
                  if (!inside(d, t, h, w)) continue;
                  grad_weight[w_idx(d, co, ci, kt, kh, kw)] += go * input[in_idx(d, ci, t, h, w)];
                }
        }
}

void linear_forward(std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
  if (weight.size() != x.size() * y.size() || bias.size() != y.size()) {
    throw std::invalid_argument("reference::linear_forward: size mismatch");
  }
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += weight[o * x.size() + i] * x[i];
  }
}

void linear_backward(std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  if (weight.size() != x.size() * grad_y.size() || grad_x.size() != x.size()) {
    throw std::invalid_argument("reference::linear_backward: size mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad_x[i] = 0.0;
    for (std::size_t o = 0; o < grad_y.size(); ++o) grad_x[i] += weight[o * x.size() + i] * grad_y[o];
  }
  for (std::size_t o = 0; o < grad_y.size(); ++o) {
    grad_bias[o] += grad_y[o];
    for (std::size_t i = 0; i < x.size(); ++i) grad_weight[o * x.size() + i] += grad_y[o] * x[i];
  }
}

}  // namespace mtvssl::reference

#include "mtvssl/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtvssl {

using Index = std::ptrdiff_t;

std::array<std::size_t, 3> Conv3dGeometry::output() const {
  std::array<std::size_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (input[a] + 2 * padding[a] - kernel[a]) / stride[a] + 1;
  }
  return out;
}

std::size_t Conv3dGeometry::output_size() const {
  const auto o = output();
  return out_channels * o[0] * o[1] * o[2];
}

void Conv3dGeometry::validate() const {
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("Conv3dGeometry: zero channels");
  }
  for (int a = 0; a < 3; ++a) {
    if (stride[a] == 0 || kernel[a] == 0) {
      throw std::invalid_argument("Conv3dGeometry: zero stride or kernel");
    }
    if (input[a] + 2 * padding[a] < kernel[a]) {
      throw std::invalid_argument("Conv3dGeometry: kernel larger than padded input on axis " +
                                  std::to_string(a));
    }
  }
}

namespace {

void check_sizes(const Conv3dGeometry& g, std::size_t in, std::size_t w, std::size_t out) {
  g.validate();
  if (in != g.input_size() || w != g.weight_size() || out != g.output_size()) {
    throw std::invalid_argument("conv3d: buffer sizes do not match geometry");
  }
}

// Range [lo, hi) of output positions whose input tap o*stride + k - pad is in [0, n).
struct TapRange {
  Index lo;
  Index hi;
};

TapRange tap_range(Index n_out, Index n_in, Index stride, Index k, Index pad) {
  Index lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  const Index last = n_in - 1 + pad - k;
  Index hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, n_out);
  return {lo, std::max(lo, hi)};
}

}  // namespace

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv3d_forward(const Conv3dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  check_sizes(g, input.size(), weight.size(), output.size());
  if (bias.size() != g.out_channels) throw std::invalid_argument("conv3d_forward: bias size");
  const Index cin = g.in_channels, cout = g.out_channels;
  const Index T = g.input[0], H = g.input[1], W = g.input[2];
  const auto o = g.output();
  const Index OT = o[0], OH = o[1], OW = o[2];
  const Index KT = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const Index st = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const Index pt = g.padding[0], ph = g.padding[1], pw = g.padding[2];
  const double* in = input.data();
  const double* wt = weight.data();
  double* out = output.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (Index co = 0; co < cout; ++co) {
    for (Index ot = 0; ot < OT; ++ot) {
      double* plane = out + (co * OT + ot) * OH * OW;
      std::fill(plane, plane + OH * OW, bias[co]);
      for (Index ci = 0; ci < cin; ++ci) {
        for (Index kt = 0; kt < KT; ++kt) {
          const Index it = ot * st + kt - pt;
          if (it < 0 || it >= T) continue;
          const double* in_slice = in + (ci * T + it) * H * W;
          const double* w_slice = wt + ((co * cin + ci) * KT + kt) * KH * KW;
          for (Index kh = 0; kh < KH; ++kh) {
            const TapRange rh = tap_range(OH, H, sh, kh, ph);
            for (Index oh = rh.lo; oh < rh.hi; ++oh) {
              const double* in_row = in_slice + (oh * sh + kh - ph) * W;
              double* out_row = plane + oh * OW;
              for (Index kw = 0; kw < KW; ++kw) {
                const double w = w_slice[kh * KW + kw];
                const TapRange rw = tap_range(OW, W, sw, kw, pw);
                const double* src = in_row + kw - pw;
                for (Index ow = rw.lo; ow < rw.hi; ++ow) out_row[ow] += w * src[ow * sw];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_input(const Conv3dGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  check_sizes(g, grad_input.size(), weight.size(), grad_output.size());
  const Index cin = g.in_channels, cout = g.out_channels;
  const Index T = g.input[0], H = g.input[1], W = g.input[2];
  const auto o = g.output();
  const Index OT = o[0], OH = o[1], OW = o[2];
  const Index KT = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const Index st = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const Index pt = g.padding[0], ph = g.padding[1], pw = g.padding[2];
  const double* gout = grad_output.data();
  const double* wt = weight.data();
  double* gin = grad_input.data();

  // Each thread owns whole input channels, so the scatter is race-free.
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < cin; ++ci) {
    double* gin_c = gin + ci * T * H * W;
    std::fill(gin_c, gin_c + T * H * W, 0.0);
    for (Index co = 0; co < cout; ++co) {
      for (Index kt = 0; kt < KT; ++kt) {
        const double* w_slice = wt + ((co * cin + ci) * KT + kt) * KH * KW;
        for (Index ot = 0; ot < OT; ++ot) {
          const Index it = ot * st + kt - pt;
          if (it < 0 || it >= T) continue;
          const double* gout_plane = gout + (co * OT + ot) * OH * OW;
          double* gin_slice = gin_c + it * H * W;
          for (Index kh = 0; kh < KH; ++kh) {
            const TapRange rh = tap_range(OH, H, sh, kh, ph);
            for (Index oh = rh.lo; oh < rh.hi; ++oh) {
              const double* g_row = gout_plane + oh * OW;
              double* dst_row = gin_slice + (oh * sh + kh - ph) * W;
              for (Index kw = 0; kw < KW; ++kw) {
                const double w = w_slice[kh * KW + kw];
                const TapRange rw = tap_range(OW, W, sw, kw, pw);
                double* dst = dst_row + kw - pw;
                for (Index ow = rw.lo; ow < rw.hi; ++ow) dst[ow * sw] += w * g_row[ow];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_weight(const Conv3dGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  check_sizes(g, input.size(), grad_weight.size(), grad_output.size());
  if (grad_bias.size() != g.out_channels) {
    throw std::invalid_argument("conv3d_backward_weight: bias size");
  }
  const Index cin = g.in_channels, cout = g.out_channels;
  const Index T = g.input[0], H = g.input[1], W = g.input[2];
  const auto o = g.output();
  const Index OT = o[0], OH = o[1], OW = o[2];
  const Index KT = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const Index st = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const Index pt = g.padding[0], ph = g.padding[1], pw = g.padding[2];
  const double* in = input.data();
  const double* gout = grad_output.data();
  double* gw = grad_weight.data();

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < cout; ++co) {
    const double* gout_c = gout + co * OT * OH * OW;
    double bias_acc = 0.0;
    for (Index i = 0; i < OT * OH * OW; ++i) bias_acc += gout_c[i];
    grad_bias[co] += bias_acc;
    for (Index ci = 0; ci < cin; ++ci) {
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kh = 0; kh < KH; ++kh) {
          const TapRange rh = tap_range(OH, H, sh, kh, ph);
          for (Index kw = 0; kw < KW; ++kw) {
            const TapRange rw = tap_range(OW, W, sw, kw, pw);
            double acc = 0.0;
            for (Index ot = 0; ot < OT; ++ot) {
              const Index it = ot * st + kt - pt;
              if (it < 0 || it >= T) continue;
              const double* in_slice = in + (ci * T + it) * H * W;
              const double* g_plane = gout_c + ot * OH * OW;
              for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                const double* src = in_slice + (oh * sh + kh - ph) * W + kw - pw;
                const double* g_row = g_plane + oh * OW;
                for (Index ow = rw.lo; ow < rw.hi; ++ow) acc += g_row[ow] * src[ow * sw];
              }
            }
            gw[(((co * cin + ci) * KT + kt) * KH + kh) * KW + kw] += acc;
          }
        }
      }
    }
  }
}

void linear_forward(std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
  const Index n_in = x.size(), n_out = y.size();
  if (weight.size() != static_cast<std::size_t>(n_in * n_out) ||
      bias.size() != static_cast<std::size_t>(n_out)) {
    throw std::invalid_argument("linear_forward: size mismatch");
  }
#pragma omp parallel for schedule(static) if (n_in * n_out > 65536)
  for (Index o = 0; o < n_out; ++o) {
    const double* row = weight.data() + o * n_in;
    double acc = bias[o];
    for (Index i = 0; i < n_in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void linear_backward(std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const Index n_in = x.size(), n_out = grad_y.size();
  if (weight.size() != static_cast<std::size_t>(n_in * n_out) ||
      grad_weight.size() != weight.size() || grad_bias.size() != grad_y.size() ||
      grad_x.size() != x.size()) {
    throw std::invalid_argument("linear_backward: size mismatch");
  }
  std::fill(grad_x.begin(), grad_x.end(), 0.0);
  for (Index o = 0; o < n_out; ++o) {
    const double g = grad_y[o];
    const double* row = weight.data() + o * n_in;
    double* grow = grad_weight.data() + o * n_in;
    grad_bias[o] += g;
    for (Index i = 0; i < n_in; ++i) {
      grad_x[i] += row[i] * g;
      grow[i] += g * x[i];
    }
  }
}

}  // namespace kernels
}  // namespace mtvssl

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mtvssl/kernels.hpp"
#include "mtvssl/rng.hpp"

using namespace mtvssl;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> v(n);
  for (double& x : v) x = r.normal();
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at " << i;
}

struct Case {
  std::size_t cin, cout, t, h, w;
  std::array<std::size_t, 3> stride;
};

class ConvKernels : public ::testing::TestWithParam<Case> {};

}  // namespace

TEST(Conv3dGeometry, OutputSizeAndValidation) {
  Conv3dGeometry g;
  g.in_channels = 3;
  g.out_channels = 8;
  g.input = {8, 32, 32};
  g.stride = {1, 2, 2};
  EXPECT_EQ(g.output(), (std::array<std::size_t, 3>{8, 16, 16}));
  g.stride = {2, 2, 2};
  EXPECT_EQ(g.output(), (std::array<std::size_t, 3>{4, 16, 16}));
  g.kernel = {5, 3, 3};
  g.padding = {0, 1, 1};
  g.input = {4, 8, 8};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST_P(ConvKernels, ForwardMatchesReference) {
  const Case c = GetParam();
  Conv3dGeometry g;
  g.in_channels = c.cin;
  g.out_channels = c.cout;
  g.input = {c.t, c.h, c.w};
  g.stride = c.stride;
  const auto x = random_vector(g.input_size(), 1);
  const auto w = random_vector(g.weight_size(), 2);
  const auto b = random_vector(c.cout, 3);
  std::vector<double> fast(g.output_size()), slow(g.output_size());
  kernels::conv3d_forward(g, x, w, b, fast);
  reference::conv3d_forward(g, x, w, b, slow);
  expect_close(fast, slow, 1e-12);
}

TEST_P(ConvKernels, BackwardMatchesReference) {
  const Case c = GetParam();
  Conv3dGeometry g;
  g.in_channels = c.cin;
  g.out_channels = c.cout;
  g.input = {c.t, c.h, c.w};
  g.stride = c.stride;
  const auto x = random_vector(g.input_size(), 4);
  const auto w = random_vector(g.weight_size(), 5);
  const auto gy = random_vector(g.output_size(), 6);
  std::vector<double> gx_fast(g.input_size()), gx_slow(g.input_size());
  kernels::conv3d_backward_input(g, gy, w, gx_fast);
  reference::conv3d_backward_input(g, gy, w, gx_slow);
  expect_close(gx_fast, gx_slow, 1e-11);

  // Accumulation: both start from the same nonzero buffers.
  std::vector<double> gw_fast(g.weight_size(), 0.5), gw_slow(g.weight_size(), 0.5);
  std::vector<double> gb_fast(c.cout, -1.0), gb_slow(c.cout, -1.0);
  kernels::conv3d_backward_weight(g, x, gy, gw_fast, gb_fast);
  reference::conv3d_backward_weight(g, x, gy, gw_slow, gb_slow);
  expect_close(gw_fast, gw_slow, 1e-10);
  expect_close(gb_fast, gb_slow, 1e-11);
}

// <conv(x), gy> == <x, conv^T(gy)>: checks the reference itself.
TEST_P(ConvKernels, ReferenceBackwardIsAdjoint) {
  const Case c = GetParam();
  Conv3dGeometry g;
  g.in_channels = c.cin;
  g.out_channels = c.cout;
  g.input = {c.t, c.h, c.w};
  g.stride = c.stride;
  const auto x = random_vector(g.input_size(), 7);
  const auto w = random_vector(g.weight_size(), 8);
  const auto gy = random_vector(g.output_size(), 9);
  const std::vector<double> zero_bias(c.cout, 0.0);
  std::vector<double> y(g.output_size()), gx(g.input_size());
  reference::conv3d_forward(g, x, w, zero_bias, y);
  reference::conv3d_backward_input(g, gy, w, gx);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));

  // d<y, gy>/dw = grad_weight, so <w, grad_weight> equals <y, gy> too.
  std::vector<double> gw(g.weight_size(), 0.0), gb(c.cout, 0.0);
  reference::conv3d_backward_weight(g, x, gy, gw, gb);
  double wdot = 0;
  for (std::size_t i = 0; i < w.size(); ++i) wdot += w[i] * gw[i];
  EXPECT_NEAR(wdot, lhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvKernels,
                         ::testing::Values(Case{3, 4, 4, 8, 8, {1, 2, 2}},
                                           Case{4, 5, 5, 7, 9, {2, 2, 2}},
                                           Case{2, 3, 3, 5, 5, {1, 1, 1}},
                                           Case{1, 1, 1, 3, 3, {1, 1, 1}}));

TEST(Conv3d, HandComputedSingleTap) {
  // 1x1x1 kernel, no padding: output = w * x + b elementwise.
  Conv3dGeometry g;
  g.in_channels = 1;
  g.out_channels = 1;
  g.input = {1, 2, 2};
  g.kernel = {1, 1, 1};
  g.padding = {0, 0, 0};
  std::vector<double> x{1, 2, 3, 4}, w{2.0}, b{0.5}, y(4);
  kernels::conv3d_forward(g, x, w, b, y);
  EXPECT_EQ(y, (std::vector<double>{2.5, 4.5, 6.5, 8.5}));
}

TEST(Linear, MatchesReferenceAndHandValues) {
  std::vector<double> x{1, 2}, w{1, 0, -1, 3}, b{0.5, -0.5}, y(2), y_ref(2);
  kernels::linear_forward(x, w, b, y);
  reference::linear_forward(x, w, b, y_ref);
  EXPECT_EQ(y, (std::vector<double>{1.5, 4.5}));
  EXPECT_EQ(y, y_ref);

  const auto xs = random_vector(17, 1), ws = random_vector(17 * 9, 2), gy = random_vector(9, 3);
  std::vector<double> gx(17), gx_ref(17), gw(17 * 9, 1.0), gw_ref(17 * 9, 1.0), gb(9), gb_ref(9);
  kernels::linear_backward(xs, ws, gy, gx, gw, gb);
  reference::linear_backward(xs, ws, gy, gx_ref, gw_ref, gb_ref);
  expect_close(gx, gx_ref, 1e-12);
  expect_close(gw, gw_ref, 1e-12);
  expect_close(gb, gb_ref, 1e-12);
}

#include <gtest/gtest.h>

#include <cmath>

#include "bpa/nn/layers.hpp"
#include "bpa/nn/ops.hpp"
#include "gradcheck.hpp"

using namespace bpa;
using namespace bpa::nn;
using bpa::testing::gradcheck;
using bpa::testing::random_tensor;

namespace {

// Direct-loop convolution used as an oracle for the im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t co = w.dim(0), k = w.dim(2);
  const int64_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, co, ho, wo}, 0.0);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = 0;
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += x.at(b, c, iy, ix) * w.at(o, c, ky, kx);
              }
          y.at(b, o, oy, ox) = acc;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

Var weighted_sum(const Var& v, const Tensor& weights) { return sum(mul_const(v, weights)); }

}  // namespace

TEST(Conv, MatchesDirectLoops) {
  Rng rng(1);
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {2, 1, 4}, {1, 3, 7}}) {
    Tensor x = random_tensor({2, 3, 9, 9}, rng);
    Tensor w = random_tensor({4, 3, k, k}, rng);
    Var y = conv2d(Var::constant(x), Var::constant(w), {stride, pad});
    EXPECT_LT(max_abs_diff(y.value(), naive_conv(x, w, stride, pad)), 1e-12) << stride << pad << k;
  }
}

TEST(Conv, TransposeAndWeightOpsAreAdjoints) {
  Rng rng(2);
  const ConvGeometry geom{2, 1};
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor w = random_tensor({5, 3, 3, 3}, rng);
  Var y = conv2d(Var::constant(x), Var::constant(w), geom);
  Tensor g = random_tensor(y.shape(), rng);
  Var xt = conv_transpose2d(Var::constant(g), Var::constant(w), geom, 8, 8);
  Var wt = conv2d_weight(Var::constant(x), Var::constant(g), geom, 3);
  const double lhs = dot(y.value(), g);
  EXPECT_NEAR(lhs, dot(x, xt.value()), 1e-9 * std::abs(lhs));
  EXPECT_NEAR(lhs, dot(w, wt.value()), 1e-9 * std::abs(lhs));
}

TEST(GradCheck, ElementwiseOps) {
  Rng rng(3);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor pos = a;
  for (auto& v : pos.data()) v = std::abs(v) + 0.5;
  Tensor weights = random_tensor({3, 4}, rng);

  auto check = [&](const char* name, const bpa::testing::ScalarFn& f, std::vector<Tensor> in) {
    EXPECT_LT(gradcheck(f, in), 1e-5) << name;
  };
  check("add", [&](auto& v) { return weighted_sum(add(v[0], v[1]), weights); }, {a, b});
  check("sub", [&](auto& v) { return weighted_sum(sub(v[0], v[1]), weights); }, {a, b});
  check("mul", [&](auto& v) { return weighted_sum(mul(v[0], v[1]), weights); }, {a, b});
  check("div", [&](auto& v) { return weighted_sum(div(v[0], v[1]), weights); }, {a, pos});
  check("exp", [&](auto& v) { return weighted_sum(exp(v[0]), weights); }, {a});
  check("log", [&](auto& v) { return weighted_sum(log(v[0]), weights); }, {pos});
  check("sqrt", [&](auto& v) { return weighted_sum(sqrt(v[0]), weights); }, {pos});
  check("tanh", [&](auto& v) { return weighted_sum(tanh(v[0]), weights); }, {a});
  check("sigmoid", [&](auto& v) { return weighted_sum(sigmoid(v[0]), weights); }, {a});
  check("leaky_relu", [&](auto& v) { return weighted_sum(leaky_relu(v[0], 0.2), weights); }, {a});
  check("matmul", [&](auto& v) { return sum(square(matmul(v[0], v[1], false, true))); }, {a, b});
  check("matmul_ta", [&](auto& v) { return sum(square(matmul(v[0], v[1], true, false))); }, {a, b});
  check("matmul_tt", [&](auto& v) { return sum(square(matmul(v[0], v[1], true, true))); },
        {a, random_tensor({4, 3}, rng)});
}

TEST(GradCheck, SpatialOps) {
  Rng rng(4);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tensor wx = random_tensor({2, 3, 4, 4}, rng);
  auto check = [&](const char* name, const bpa::testing::ScalarFn& f, std::vector<Tensor> in) {
    EXPECT_LT(gradcheck(f, in), 1e-5) << name;
  };
  check("upsample", [&](auto& v) { return sum(square(upsample_nearest2x(v[0]))); }, {x});
  check("avgpool", [&](auto& v) { return sum(square(avg_pool2x(v[0]))); }, {x});
  check("reflect", [&](auto& v) { return sum(square(reflect_pad(v[0], 2))); }, {x});
  check("pixel_norm", [&](auto& v) { return weighted_sum(pixel_norm(v[0]), wx); }, {x});
  check("instance_norm", [&](auto& v) { return weighted_sum(instance_norm(v[0]), wx); }, {x});
  check("minibatch_stddev", [&](auto& v) { return sum(square(minibatch_stddev(v[0]))); }, {x});
  check("concat", [&](auto& v) { return sum(square(concat_channels(v[0], v[1]))); },
        {x, random_tensor({2, 1, 4, 4}, rng)});
  check("conv", [&](auto& v) { return sum(square(conv2d(v[0], v[1], {2, 1}))); },
        {x, random_tensor({2, 3, 3, 3}, rng)});
  check("conv_transpose",
        [&](auto& v) { return sum(square(conv_transpose2d(v[0], v[1], {2, 1}, 8, 8))); },
        {random_tensor({2, 3, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng)});
  check("bias", [&](auto& v) { return sum(square(add_channel_bias(v[0], v[1]))); },
        {x, random_tensor({3}, rng)});
}

// d/dw of ||d f/dx||^2 through create_graph, against finite differences of the
// first-order gradient norm. This is the structure of a gradient penalty.
TEST(GradCheck, SecondOrderThroughConvNet) {
  Rng rng(5);
  Tensor x0 = random_tensor({2, 2, 4, 4}, rng);
  Tensor w1 = random_tensor({3, 2, 3, 3}, rng, 0.5);
  Tensor w2 = random_tensor({1, 3, 2, 2}, rng, 0.5);

  auto penalty = [&](const std::vector<Var>& v) {
    Var x = Var::leaf(x0);
    Var h = tanh(conv2d(x, v[0], {1, 1}));
    h = avg_pool2x(sqrt(add_scalar(square(h), 1.0)));
    Var out = sum(conv2d(h, v[1], {1, 0}));
    Var gx = grad(out, {x}, {}, /*create_graph=*/true)[0];
    return mean(square(add_scalar(sqrt(sum_per_sample(square(gx))), -1.0)));
  };
  EXPECT_LT(gradcheck(penalty, {w1, w2}, 1e-5), 1e-5);
}

TEST(Autograd, UnreachedInputsGetZeros) {
  Var a = Var::leaf(Tensor({2}, 1.0));
  Var b = Var::leaf(Tensor({3}, 1.0));
  auto g = grad(sum(a), {a, b});
  EXPECT_EQ(g[1].value(), Tensor({3}, 0.0));
  EXPECT_EQ(g[0].value(), Tensor({2}, 1.0));
}

TEST(Autograd, NoGradGuardStopsRecording) {
  Var a = Var::leaf(Tensor({2}, 1.0));
  NoGradGuard guard;
  Var b = scale(a, 2.0);
  EXPECT_FALSE(b.requires_grad());
}

TEST(Layers, LerpEndpointsAreExact) {
  Rng rng(6);
  Var lo = Var::constant(random_tensor({1, 3, 4, 4}, rng));
  Var hi = Var::constant(random_tensor({1, 3, 4, 4}, rng));
  EXPECT_EQ(lerp(lo, hi, 0.0).value(), lo.value());
  EXPECT_EQ(lerp(lo, hi, 1.0).value(), hi.value());
}

#pragma once

#include <memory>
#include <vector>

#include "bpa/nn/autograd.hpp"

namespace bpa::nn {

// Flat index map shared between a gather and its adjoint scatter_add.
// Entries < 0 mean "no source" (gather yields 0, scatter drops the value).
using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

// Elementwise, shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// Multiplies by a constant tensor of the same shape (masks, per-sample weights).
Var mul_const(const Var& a, std::shared_ptr<const Tensor> c);
Var mul_const(const Var& a, Tensor c);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var relu(const Var& a);
// Gradient flows only where lo <= a <= hi.
Var clamp(const Var& a, double lo, double hi);

Var reshape(const Var& a, Shape shape);

// out[i] = a[map[i]]; map size equals numel(out_shape).
Var gather(const Var& a, IndexMap map, Shape out_shape);
// out[map[i]] += a[i]; map size equals a.numel().
Var scatter_add(const Var& a, IndexMap map, Shape out_shape);

// 2-D matrix product op(a) * op(b).
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

// x: [N, Cin, H, W], w: [Cout, Cin, K, K] -> [N, Cout, Ho, Wo]; zero padding.
Var conv2d(const Var& x, const Var& w, ConvGeometry geom);
// Adjoint of conv2d in its input: g: [N, Cout, Ho, Wo], w: [Cout, Cin, K, K] -> [N, Cin, out_h, out_w].
// Also serves as a transposed-convolution layer.
Var conv_transpose2d(const Var& g, const Var& w, ConvGeometry geom, int64_t out_h, int64_t out_w);
// Adjoint of conv2d in its weight: x: [N, Cin, H, W], g: [N, Cout, Ho, Wo] -> [Cout, Cin, K, K].
Var conv2d_weight(const Var& x, const Var& g, ConvGeometry geom, int64_t kernel);

int64_t conv_out_size(int64_t in, int64_t kernel, ConvGeometry geom);

// Reductions to shape [1].
Var sum(const Var& a);
Var mean(const Var& a);
// Broadcast a [1] tensor to `shape`.
Var expand_scalar(const Var& a, Shape shape);

// NCHW helpers, all built on gather / scatter_add.
Var add_channel_bias(const Var& x, const Var& bias);     // bias: [C]
Var sum_channels(const Var& x);                          // -> [N,1,H,W]
Var expand_channels(const Var& x, int64_t channels);     // [N,1,H,W] -> [N,C,H,W]
Var sum_spatial(const Var& x);                           // -> [N,C,1,1]
Var expand_spatial(const Var& x, int64_t h, int64_t w);  // [N,C,1,1] -> [N,C,H,W]
Var sum_batch(const Var& x);                             // [N,...] -> [1,...]
Var expand_batch(const Var& x, int64_t n);               // [1,...] -> [N,...]
Var sum_per_sample(const Var& x);                        // [N,...] -> [N]
Var expand_per_sample(const Var& x, const Shape& shape); // [N] -> shape
Var upsample_nearest2x(const Var& x);
Var avg_pool2x(const Var& x);
Var reflect_pad(const Var& x, int64_t pad);
Var concat_channels(const Var& a, const Var& b);

// Plain-tensor nearest-neighbour 2x upsampling (used by tests and the fade-in path).
Tensor upsample_nearest2x(const Tensor& x);

}  // namespace bpa::nn

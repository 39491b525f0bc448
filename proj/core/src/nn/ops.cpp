#include "bpa/nn/ops.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace bpa::nn {
namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void check_rank(const Var& a, size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(a.shape()));
  }
}

template <class F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* pa = a.ptr();
  double* po = out.ptr();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

// Output of `self` as a Var: recomputed differentiably when a graph is being
// recorded, otherwise the cached forward value.
template <class F>
Var output_of(const Node& self, F recompute) {
  if (grad_enabled()) return recompute();
  return Var::constant(self.value);
}

// Index maps are pure functions of (kind, shape, extra) so they are cached.
using MapKey = std::tuple<int, Shape, int64_t>;

template <class Build>
IndexMap cached_map(int kind, const Shape& shape, int64_t extra, Build build) {
  thread_local std::map<MapKey, IndexMap> cache;
  MapKey key{kind, shape, extra};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 512) cache.clear();
  auto map = std::make_shared<const std::vector<int64_t>>(build());
  cache.emplace(std::move(key), map);
  return map;
}

enum MapKind : int {
  kChannelBias = 1,
  kSumChannels,
  kSumSpatial,
  kSumBatch,
  kPerSample,
  kUpsample,
  kReflect,
  kConcatA,
  kConcatB,
  kScalar,
};

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op("add", map2(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                 [](const Node&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op("sub", map2(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                 [](const Node&, const Var& g) { return std::vector<Var>{g, scale(g, -1.0)}; });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_op("mul", map2(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                 [](const Node& self, const Var& g) {
                   const Var& x = self.inputs[0];
                   const Var& y = self.inputs[1];
                   return std::vector<Var>{x.requires_grad() ? mul(g, y) : Var{},
                                           y.requires_grad() ? mul(g, x) : Var{}};
                 });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  return make_op("div", map2(a.value(), b.value(), [](double x, double y) { return x / y; }), {a, b},
                 [](const Node& self, const Var& g) {
                   const Var& x = self.inputs[0];
                   const Var& y = self.inputs[1];
                   Var gx = x.requires_grad() ? div(g, y) : Var{};
                   Var gy;
                   if (y.requires_grad()) {
                     Var q = output_of(self, [&] { return div(x, y); });
                     gy = scale(div(mul(g, q), y), -1.0);
                   }
                   return std::vector<Var>{gx, gy};
                 });
}

Var scale(const Var& a, double s) {
  return make_op("scale", map1(a.value(), [s](double x) { return x * s; }), {a},
                 [s](const Node&, const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  return make_op("add_scalar", map1(a.value(), [s](double x) { return x + s; }), {a},
                 [](const Node&, const Var& g) { return std::vector<Var>{g}; });
}

Var mul_const(const Var& a, std::shared_ptr<const Tensor> c) {
  if (c->shape() != a.shape()) {
    throw std::invalid_argument("mul_const: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(c->shape()));
  }
  Tensor out = map2(a.value(), *c, [](double x, double y) { return x * y; });
  return make_op("mul_const", std::move(out), {a},
                 [c](const Node&, const Var& g) { return std::vector<Var>{mul_const(g, c)}; });
}

Var mul_const(const Var& a, Tensor c) { return mul_const(a, std::make_shared<const Tensor>(std::move(c))); }

Var exp(const Var& a) {
  return make_op("exp", map1(a.value(), [](double x) { return std::exp(x); }), {a},
                 [](const Node& self, const Var& g) {
                   Var y = output_of(self, [&] { return exp(self.inputs[0]); });
                   return std::vector<Var>{mul(g, y)};
                 });
}

Var log(const Var& a) {
  return make_op("log", map1(a.value(), [](double x) { return std::log(x); }), {a},
                 [](const Node& self, const Var& g) { return std::vector<Var>{div(g, self.inputs[0])}; });
}

Var sqrt(const Var& a) {
  return make_op("sqrt", map1(a.value(), [](double x) { return std::sqrt(x); }), {a},
                 [](const Node& self, const Var& g) {
                   Var y = output_of(self, [&] { return sqrt(self.inputs[0]); });
                   return std::vector<Var>{div(scale(g, 0.5), y)};
                 });
}

Var tanh(const Var& a) {
  return make_op("tanh", map1(a.value(), [](double x) { return std::tanh(x); }), {a},
                 [](const Node& self, const Var& g) {
                   Var y = output_of(self, [&] { return tanh(self.inputs[0]); });
                   return std::vector<Var>{mul(g, add_scalar(scale(square(y), -1.0), 1.0))};
                 });
}

Var sigmoid(const Var& a) {
  auto f = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return make_op("sigmoid", map1(a.value(), f), {a}, [](const Node& self, const Var& g) {
    Var y = output_of(self, [&] { return sigmoid(self.inputs[0]); });
    return std::vector<Var>{mul(g, mul(y, add_scalar(scale(y, -1.0), 1.0)))};
  });
}

Var square(const Var& a) { return mul(a, a); }

Var abs(const Var& a) {
  auto sign = std::make_shared<const Tensor>(map1(a.value(), [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }));
  return mul_const(a, sign);
}

Var leaky_relu(const Var& a, double slope) {
  return mul_const(a, map1(a.value(), [slope](double x) { return x > 0 ? 1.0 : slope; }));
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var clamp(const Var& a, double lo, double hi) {
  Tensor out = map1(a.value(), [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); });
  auto mask = std::make_shared<const Tensor>(map1(a.value(), [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }));
  return make_op("clamp", std::move(out), {a},
                 [mask](const Node&, const Var& g) { return std::vector<Var>{mul_const(g, mask)}; });
}

Var reshape(const Var& a, Shape shape) {
  Shape original = a.shape();
  return make_op("reshape", a.value().reshaped(std::move(shape)), {a},
                 [original](const Node&, const Var& g) { return std::vector<Var>{reshape(g, original)}; });
}

Var gather(const Var& a, IndexMap map, Shape out_shape) {
  const int64_t n = numel_of(out_shape);
  if (static_cast<int64_t>(map->size()) != n) throw std::invalid_argument("gather: map size mismatch");
  Tensor out(out_shape);
  const double* src = a.value().ptr();
  const int64_t limit = a.numel();
  double* dst = out.ptr();
  const int64_t* idx = map->data();
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = idx[i];
    if (j >= limit) throw std::out_of_range("gather: index out of range");
    dst[i] = j >= 0 ? src[j] : 0.0;
  }
  Shape in_shape = a.shape();
  return make_op("gather", std::move(out), {a}, [map, in_shape](const Node&, const Var& g) {
    return std::vector<Var>{scatter_add(g, map, in_shape)};
  });
}

Var scatter_add(const Var& a, IndexMap map, Shape out_shape) {
  if (static_cast<int64_t>(map->size()) != a.numel()) throw std::invalid_argument("scatter_add: map size mismatch");
  Tensor out(out_shape, 0.0);
  const int64_t limit = out.numel();
  const double* src = a.value().ptr();
  double* dst = out.ptr();
  const int64_t* idx = map->data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = idx[i];
    if (j >= limit) throw std::out_of_range("scatter_add: index out of range");
    if (j >= 0) dst[j] += src[i];
  }
  Shape in_shape = a.shape();
  return make_op("scatter_add", std::move(out), {a}, [map, in_shape](const Node&, const Var& g) {
    return std::vector<Var>{gather(g, map, in_shape)};
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Shape in_shape = a.shape();
  return make_op("sum", Tensor::scalar(s), {a},
                 [in_shape](const Node&, const Var& g) { return std::vector<Var>{expand_scalar(g, in_shape)}; });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Var expand_scalar(const Var& a, Shape shape) {
  if (a.numel() != 1) throw std::invalid_argument("expand_scalar: input must have one element");
  const int64_t n = numel_of(shape);
  auto map = cached_map(kScalar, {n}, 0, [n] { return std::vector<int64_t>(static_cast<size_t>(n), 0); });
  return gather(reshape(a, {1}), map, std::move(shape));
}

Var add_channel_bias(const Var& x, const Var& bias) {
  check_rank(x, 4, "add_channel_bias");
  const Shape& s = x.shape();
  if (bias.numel() != s[1]) throw std::invalid_argument("add_channel_bias: bias size mismatch");
  auto map = cached_map(kChannelBias, s, 0, [&s] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t hw = s[2] * s[3];
    size_t i = 0;
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t c = 0; c < s[1]; ++c)
        for (int64_t k = 0; k < hw; ++k) m[i++] = c;
    return m;
  });
  return add(x, gather(bias, map, s));
}

namespace {
IndexMap channel_sum_map(const Shape& s) {
  return cached_map(kSumChannels, s, 0, [&s] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t hw = s[2] * s[3];
    size_t i = 0;
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t c = 0; c < s[1]; ++c)
        for (int64_t k = 0; k < hw; ++k) m[i++] = n * hw + k;
    return m;
  });
}

IndexMap spatial_sum_map(const Shape& s) {
  return cached_map(kSumSpatial, s, 0, [&s] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t hw = s[2] * s[3];
    size_t i = 0;
    for (int64_t nc = 0; nc < s[0] * s[1]; ++nc)
      for (int64_t k = 0; k < hw; ++k) m[i++] = nc;
    return m;
  });
}

IndexMap batch_sum_map(const Shape& s) {
  return cached_map(kSumBatch, s, 0, [&s] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t per = s[0] == 0 ? 0 : numel_of(s) / s[0];
    size_t i = 0;
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t k = 0; k < per; ++k) m[i++] = k;
    return m;
  });
}

IndexMap per_sample_map(const Shape& s) {
  return cached_map(kPerSample, s, 0, [&s] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t per = s[0] == 0 ? 0 : numel_of(s) / s[0];
    size_t i = 0;
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t k = 0; k < per; ++k) m[i++] = n;
    return m;
  });
}

// Maps each element of a [N,C,2H,2W] tensor to its source in [N,C,H,W].
IndexMap upsample_map(const Shape& low) {
  return cached_map(kUpsample, low, 0, [&low] {
    const int64_t n = low[0], c = low[1], h = low[2], w = low[3];
    std::vector<int64_t> m(static_cast<size_t>(n * c * h * w * 4));
    size_t i = 0;
    for (int64_t nc = 0; nc < n * c; ++nc)
      for (int64_t y = 0; y < 2 * h; ++y)
        for (int64_t x = 0; x < 2 * w; ++x) m[i++] = (nc * h + y / 2) * w + x / 2;
    return m;
  });
}

int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}
}  // namespace

Var sum_channels(const Var& x) {
  check_rank(x, 4, "sum_channels");
  const Shape& s = x.shape();
  return scatter_add(x, channel_sum_map(s), {s[0], 1, s[2], s[3]});
}

Var expand_channels(const Var& x, int64_t channels) {
  check_rank(x, 4, "expand_channels");
  if (x.shape()[1] != 1) throw std::invalid_argument("expand_channels: expected one channel");
  Shape full{x.shape()[0], channels, x.shape()[2], x.shape()[3]};
  return gather(x, channel_sum_map(full), full);
}

Var sum_spatial(const Var& x) {
  check_rank(x, 4, "sum_spatial");
  const Shape& s = x.shape();
  return scatter_add(x, spatial_sum_map(s), {s[0], s[1], 1, 1});
}

Var expand_spatial(const Var& x, int64_t h, int64_t w) {
  check_rank(x, 4, "expand_spatial");
  Shape full{x.shape()[0], x.shape()[1], h, w};
  return gather(x, spatial_sum_map(full), full);
}

Var sum_batch(const Var& x) {
  Shape out = x.shape();
  out[0] = 1;
  return scatter_add(x, batch_sum_map(x.shape()), out);
}

Var expand_batch(const Var& x, int64_t n) {
  Shape full = x.shape();
  full[0] = n;
  return gather(x, batch_sum_map(full), full);
}

Var sum_per_sample(const Var& x) { return scatter_add(x, per_sample_map(x.shape()), {x.shape()[0]}); }

Var expand_per_sample(const Var& x, const Shape& shape) {
  if (x.value().rank() != 1 || x.shape()[0] != shape[0]) throw std::invalid_argument("expand_per_sample: bad shape");
  return gather(x, per_sample_map(shape), shape);
}

Var upsample_nearest2x(const Var& x) {
  check_rank(x, 4, "upsample_nearest2x");
  const Shape& s = x.shape();
  return gather(x, upsample_map(s), {s[0], s[1], s[2] * 2, s[3] * 2});
}

Tensor upsample_nearest2x(const Tensor& x) {
  NoGradGuard guard;
  return upsample_nearest2x(Var::constant(x)).value();
}

Var avg_pool2x(const Var& x) {
  check_rank(x, 4, "avg_pool2x");
  const Shape& s = x.shape();
  if (s[2] % 2 || s[3] % 2) throw std::invalid_argument("avg_pool2x: odd spatial size " + shape_str(s));
  Shape low{s[0], s[1], s[2] / 2, s[3] / 2};
  return scale(scatter_add(x, upsample_map(low), low), 0.25);
}

Var reflect_pad(const Var& x, int64_t pad) {
  check_rank(x, 4, "reflect_pad");
  const Shape& s = x.shape();
  if (pad >= s[2] || pad >= s[3]) throw std::invalid_argument("reflect_pad: pad too large for " + shape_str(s));
  Shape out{s[0], s[1], s[2] + 2 * pad, s[3] + 2 * pad};
  auto map = cached_map(kReflect, s, pad, [&] {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(out)));
    size_t i = 0;
    for (int64_t nc = 0; nc < s[0] * s[1]; ++nc)
      for (int64_t y = 0; y < out[2]; ++y)
        for (int64_t x = 0; x < out[3]; ++x)
          m[i++] = (nc * s[2] + reflect_index(y - pad, s[2])) * s[3] + reflect_index(x - pad, s[3]);
    return m;
  });
  return gather(x, map, out);
}

Var concat_channels(const Var& a, const Var& b) {
  check_rank(a, 4, "concat_channels");
  check_rank(b, 4, "concat_channels");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw std::invalid_argument("concat_channels: incompatible " + shape_str(sa) + " and " + shape_str(sb));
  }
  Shape out{sa[0], sa[1] + sb[1], sa[2], sa[3]};
  // Place each input at its channel offset via scatter; the adjoint gathers it back.
  auto place = [&out](const Shape& s, int64_t offset) {
    std::vector<int64_t> m(static_cast<size_t>(numel_of(s)));
    const int64_t hw = s[2] * s[3];
    size_t i = 0;
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t c = 0; c < s[1]; ++c)
        for (int64_t k = 0; k < hw; ++k) m[i++] = (n * out[1] + c + offset) * hw + k;
    return m;
  };
  auto ma = cached_map(kConcatA, sa, sb[1], [&] { return place(sa, 0); });
  auto mb = cached_map(kConcatB, sb, sa[1], [&] { return place(sb, sa[1]); });
  return add(scatter_add(a, ma, out), scatter_add(b, mb, out));
}

}  // namespace bpa::nn

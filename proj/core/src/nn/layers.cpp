#include "bpa/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "bpa/archive.hpp"

namespace bpa::nn {
namespace {

Tensor draw_weight(Shape shape, int64_t fan_in, Rng& rng, Init init, double& runtime_scale) {
  double std = 1.0;
  runtime_scale = 1.0;
  switch (init.kind) {
    case Init::Kind::kEqualized:
      runtime_scale = init.value / std::sqrt(static_cast<double>(fan_in));
      break;
    case Init::Kind::kNormal:
      std = init.value;
      break;
    case Init::Kind::kHe:
      std = init.value / std::sqrt(static_cast<double>(fan_in));
      break;
  }
  Tensor w(std::move(shape));
  for (auto& v : w.data()) v = rng.normal() * std;
  return w;
}

Var add_row_bias(const Var& x, const Var& bias) {
  const int64_t n = x.shape()[0];
  const int64_t m = x.shape()[1];
  std::vector<int64_t> map(static_cast<size_t>(n * m));
  for (int64_t i = 0; i < n * m; ++i) map[static_cast<size_t>(i)] = i % m;
  return add(x, gather(bias, std::make_shared<const std::vector<int64_t>>(std::move(map)), x.shape()));
}

}  // namespace

Var ParameterStore::add(const std::string& name, Tensor init) {
  for (const auto& [existing, _] : entries_) {
    if (existing == name) throw std::logic_error("duplicate parameter name " + name);
  }
  Var v = Var::leaf(std::move(init), true);
  entries_.emplace_back(name, v);
  return v;
}

std::vector<Var> ParameterStore::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

int64_t ParameterStore::total_numel() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) throw std::invalid_argument("parameter store size mismatch");
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape() != other.entries_[i].second.shape()) {
      throw std::invalid_argument("parameter mismatch at " + entries_[i].first);
    }
    entries_[i].second.mutable_value() = other.entries_[i].second.value();
  }
}

void save_parameters(Archive& ar, const std::string& prefix, const ParameterStore& store) {
  for (const auto& [name, v] : store.entries()) ar.put(prefix + name, v.value());
}

void load_parameters(const Archive& ar, const std::string& prefix, ParameterStore& store) {
  for (const auto& [name, v] : store.entries()) {
    const Tensor& t = ar.get(prefix + name);
    if (t.shape() != v.shape()) {
      throw std::runtime_error("parameter " + prefix + name + " has shape " + shape_str(t.shape()) + ", expected " +
                               shape_str(v.shape()));
    }
    Var(v).mutable_value() = t;
  }
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int64_t in_channels, int64_t out_channels,
               int64_t kernel, ConvGeometry geom, Rng& rng, Init init, bool bias)
    : geom_(geom), out_channels_(out_channels) {
  weight_ = store.add(name + ".weight", draw_weight({out_channels, in_channels, kernel, kernel},
                                                    in_channels * kernel * kernel, rng, init, runtime_scale_));
  if (bias) bias_ = store.add(name + ".bias", Tensor({out_channels}, 0.0));
}

Var Conv2d::forward(const Var& x) const {
  Var w = runtime_scale_ == 1.0 ? weight_ : scale(weight_, runtime_scale_);
  Var y = conv2d(x, w, geom_);
  return bias_.defined() ? add_channel_bias(y, bias_) : y;
}

ConvTranspose2d::ConvTranspose2d(ParameterStore& store, const std::string& name, int64_t in_channels,
                                 int64_t out_channels, int64_t kernel, ConvGeometry geom, int64_t output_padding,
                                 Rng& rng, Init init, bool bias)
    : geom_(geom), kernel_(kernel), output_padding_(output_padding) {
  weight_ = store.add(name + ".weight", draw_weight({in_channels, out_channels, kernel, kernel},
                                                    in_channels * kernel * kernel, rng, init, runtime_scale_));
  if (bias) bias_ = store.add(name + ".bias", Tensor({out_channels}, 0.0));
}

Var ConvTranspose2d::forward(const Var& x) const {
  const int64_t oh = (x.shape()[2] - 1) * geom_.stride - 2 * geom_.pad + kernel_ + output_padding_;
  const int64_t ow = (x.shape()[3] - 1) * geom_.stride - 2 * geom_.pad + kernel_ + output_padding_;
  Var w = runtime_scale_ == 1.0 ? weight_ : scale(weight_, runtime_scale_);
  Var y = conv_transpose2d(x, w, geom_, oh, ow);
  return bias_.defined() ? add_channel_bias(y, bias_) : y;
}

Linear::Linear(ParameterStore& store, const std::string& name, int64_t in_features, int64_t out_features, Rng& rng,
               Init init, bool bias) {
  weight_ = store.add(name + ".weight", draw_weight({in_features, out_features}, in_features, rng, init, runtime_scale_));
  if (bias) bias_ = store.add(name + ".bias", Tensor({out_features}, 0.0));
}

Var Linear::forward(const Var& x) const {
  Var w = runtime_scale_ == 1.0 ? weight_ : scale(weight_, runtime_scale_);
  Var y = matmul(x, w);
  return bias_.defined() ? add_row_bias(y, bias_) : y;
}

Var pixel_norm(const Var& x, double eps) {
  const Shape& s = x.shape();
  if (s.size() == 2) {
    return reshape(pixel_norm(reshape(x, {s[0], s[1], 1, 1}), eps), s);
  }
  const int64_t c = s[1];
  Var rms = sqrt(add_scalar(scale(sum_channels(square(x)), 1.0 / static_cast<double>(c)), eps));
  return div(x, expand_channels(rms, c));
}

Var instance_norm(const Var& x, double eps) {
  const Shape& s = x.shape();
  const double inv_hw = 1.0 / static_cast<double>(s[2] * s[3]);
  Var mu = expand_spatial(scale(sum_spatial(x), inv_hw), s[2], s[3]);
  Var centered = sub(x, mu);
  Var var = scale(sum_spatial(square(centered)), inv_hw);
  return div(centered, expand_spatial(sqrt(add_scalar(var, eps)), s[2], s[3]));
}

Var minibatch_stddev(const Var& x, double eps) {
  const Shape& s = x.shape();
  const double inv_n = 1.0 / static_cast<double>(s[0]);
  Var mu = expand_batch(scale(sum_batch(x), inv_n), s[0]);
  Var var = scale(sum_batch(square(sub(x, mu))), inv_n);
  Var stddev = mean(sqrt(add_scalar(var, eps)));
  return concat_channels(x, expand_scalar(stddev, {s[0], 1, s[2], s[3]}));
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  return reshape(scale(sum_spatial(x), 1.0 / static_cast<double>(s[2] * s[3])), {s[0], s[1]});
}

Var lerp(const Var& lo, const Var& hi, double alpha) {
  if (alpha <= 0.0) return lo;
  if (alpha >= 1.0) return hi;
  return add(scale(lo, 1.0 - alpha), scale(hi, alpha));
}

}  // namespace bpa::nn

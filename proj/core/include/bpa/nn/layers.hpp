#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bpa/nn/ops.hpp"
#include "bpa/rng.hpp"

namespace bpa {
class Archive;
}

namespace bpa::nn {

// Ordered, named collection of trainable leaves.
class ParameterStore {
 public:
  Var add(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<Var> vars() const;
  size_t size() const { return entries_.size(); }
  int64_t total_numel() const;

  // Copies values from another store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

// Stores every parameter as blob <prefix><name>.
void save_parameters(Archive& ar, const std::string& prefix, const ParameterStore& store);
// Loads values saved by save_parameters; names and shapes must match.
void load_parameters(const Archive& ar, const std::string& prefix, ParameterStore& store);

// How a layer's weight is drawn and scaled.
struct Init {
  enum class Kind {
    kEqualized,  // N(0,1) storage, scaled at runtime by gain / sqrt(fan_in)
    kNormal,     // N(0, std)
    kHe,         // N(0, gain^2 / fan_in)
  };
  Kind kind = Kind::kHe;
  double value = 1.4142135623730951;  // gain or std depending on kind

  static Init equalized(double gain = 1.4142135623730951) { return {Kind::kEqualized, gain}; }
  static Init normal(double std) { return {Kind::kNormal, std}; }
  static Init he(double gain = 1.4142135623730951) { return {Kind::kHe, gain}; }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int64_t in_channels, int64_t out_channels, int64_t kernel,
         ConvGeometry geom, Rng& rng, Init init, bool bias = true);

  Var forward(const Var& x) const;
  int64_t out_channels() const { return out_channels_; }

 private:
  Var weight_;
  Var bias_;
  ConvGeometry geom_;
  double runtime_scale_ = 1.0;
  int64_t out_channels_ = 0;
};

// Learnable upsampling; output spatial size (in-1)*stride - 2*pad + kernel + output_padding.
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore& store, const std::string& name, int64_t in_channels, int64_t out_channels,
                  int64_t kernel, ConvGeometry geom, int64_t output_padding, Rng& rng, Init init, bool bias = true);

  Var forward(const Var& x) const;

 private:
  Var weight_;  // [in, out, k, k]
  Var bias_;
  ConvGeometry geom_;
  int64_t kernel_ = 0;
  int64_t output_padding_ = 0;
  double runtime_scale_ = 1.0;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int64_t in_features, int64_t out_features, Rng& rng,
         Init init, bool bias = true);

  // x: [N, in] -> [N, out]
  Var forward(const Var& x) const;

 private:
  Var weight_;  // [in, out]
  Var bias_;
  double runtime_scale_ = 1.0;
};

// Normalizes each pixel's feature vector to unit RMS over channels.
Var pixel_norm(const Var& x, double eps = 1e-8);
// Per-sample, per-channel spatial normalization without affine parameters.
Var instance_norm(const Var& x, double eps = 1e-5);
// Appends one channel holding the batch-wide mean standard deviation.
Var minibatch_stddev(const Var& x, double eps = 1e-8);
// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);
// Linear interpolation lo + alpha*(hi - lo), written so alpha 0 and 1 are exact.
Var lerp(const Var& lo, const Var& hi, double alpha);

}  // namespace bpa::nn

#pragma once

#include <string>
#include <vector>

#include "bpa/nn/autograd.hpp"

namespace bpa {
class Archive;
}

namespace bpa::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);

  void step(const std::vector<Var>& grads);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t steps() const { return steps_; }

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Heavy-ball momentum SGD with coupled L2 weight decay (decay * w added to the gradient).
class MomentumSgd {
 public:
  MomentumSgd(std::vector<Var> params, double lr, double momentum, double weight_decay);

  void step(const std::vector<Var>& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  std::vector<Var> params_;
  double lr_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace bpa::nn

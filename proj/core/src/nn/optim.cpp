#include "bpa/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "bpa/archive.hpp"

namespace bpa::nn {
namespace {

void check_grads(const std::vector<Var>& params, const std::vector<Var>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer: gradient count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) throw std::invalid_argument("optimizer: gradient shape mismatch");
  }
}

std::vector<Tensor> zeros_like(const std::vector<Var>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape(), 0.0);
  return out;
}

void save_slots(Archive& ar, const std::string& prefix, const std::vector<Tensor>& slots) {
  for (size_t i = 0; i < slots.size(); ++i) ar.put(prefix + std::to_string(i), slots[i]);
}

void load_slots(const Archive& ar, const std::string& prefix, std::vector<Tensor>& slots) {
  for (size_t i = 0; i < slots.size(); ++i) {
    const Tensor& t = ar.get(prefix + std::to_string(i));
    if (t.shape() != slots[i].shape()) throw std::runtime_error("optimizer state shape mismatch at " + prefix);
    slots[i] = t;
  }
}

}  // namespace

Adam::Adam(std::vector<Var> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), m_(zeros_like(params_)), v_(zeros_like(params_)) {}

void Adam::step(const std::vector<Var>& grads) {
  check_grads(params_, grads);
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const double step_size = cfg_.lr * std::sqrt(bc2) / bc1;
  for (size_t i = 0; i < params_.size(); ++i) {
    double* w = params_[i].mutable_value().ptr();
    const double* g = grads[i].value().ptr();
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    const int64_t n = params_[i].numel();
    for (int64_t k = 0; k < n; ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) + cfg_.eps * std::sqrt(bc2));
    }
  }
}

void Adam::save(Archive& ar, const std::string& prefix) const {
  ar.meta()[prefix + "steps"] = steps_;
  ar.meta()[prefix + "lr"] = cfg_.lr;
  save_slots(ar, prefix + "m/", m_);
  save_slots(ar, prefix + "v/", v_);
}

void Adam::load(const Archive& ar, const std::string& prefix) {
  steps_ = ar.meta().at(prefix + "steps").get<int64_t>();
  cfg_.lr = ar.meta().at(prefix + "lr").get<double>();
  load_slots(ar, prefix + "m/", m_);
  load_slots(ar, prefix + "v/", v_);
}

MomentumSgd::MomentumSgd(std::vector<Var> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay),
      velocity_(zeros_like(params_)) {}

void MomentumSgd::step(const std::vector<Var>& grads) {
  check_grads(params_, grads);
  for (size_t i = 0; i < params_.size(); ++i) {
    double* w = params_[i].mutable_value().ptr();
    const double* g = grads[i].value().ptr();
    double* vel = velocity_[i].ptr();
    const int64_t n = params_[i].numel();
    for (int64_t k = 0; k < n; ++k) {
      const double d = g[k] + weight_decay_ * w[k];
      vel[k] = momentum_ * vel[k] + d;
      w[k] -= lr_ * vel[k];
    }
  }
}

void MomentumSgd::save(Archive& ar, const std::string& prefix) const {
  ar.meta()[prefix + "lr"] = lr_;
  save_slots(ar, prefix + "velocity/", velocity_);
}

void MomentumSgd::load(const Archive& ar, const std::string& prefix) {
  lr_ = ar.meta().at(prefix + "lr").get<double>();
  load_slots(ar, prefix + "velocity/", velocity_);
}

}  // namespace bpa::nn

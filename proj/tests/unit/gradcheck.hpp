#pragma once

// Test-only finite-difference oracle for the autograd engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bpa/nn/autograd.hpp"
#include "bpa/rng.hpp"

namespace bpa::testing {

inline nn::Tensor random_tensor(nn::Shape shape, Rng& rng, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal() * scale;
  return t;
}

using ScalarFn = std::function<nn::Var(const std::vector<nn::Var>&)>;

// Largest relative error between autograd gradients and central differences
// over every element of every input. Relative error uses max(|a|,|b|,floor).
inline double gradcheck(const ScalarFn& f, const std::vector<nn::Tensor>& inputs, double eps = 1e-6,
                        double floor = 1e-6) {
  std::vector<nn::Var> vars;
  for (const auto& t : inputs) vars.push_back(nn::Var::leaf(t));
  nn::Var out = f(vars);
  auto analytic = nn::grad(out, vars);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t k = 0; k < inputs[i].numel(); ++k) {
      auto eval = [&](double delta) {
        std::vector<nn::Var> probe;
        for (size_t j = 0; j < inputs.size(); ++j) {
          nn::Tensor t = inputs[j];
          if (j == i) t[k] += delta;
          probe.push_back(nn::Var::constant(std::move(t)));
        }
        return f(probe).item();
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      const double a = analytic[i].value()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace bpa::testing

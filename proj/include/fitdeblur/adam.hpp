#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "fitdeblur/error.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState init_adam(const ParameterSet& params) {
  AdamState s;
  for (const auto& [name, t] : params.tensors) {
    s.m.emplace(name, Tensor<float>(t.shape, 0.0f));
    s.v.emplace(name, Tensor<float>(t.shape, 0.0f));
  }
  return s;
}

// One bias-corrected Adam update; arithmetic in double, storage in float.
inline void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state, double lr) {
  require(lr >= 0.0, ErrorKind::parameter, "learning rate must be >= 0");
  if (state.m.empty()) {
    AdamState fresh = init_adam(params);
    state.m = std::move(fresh.m);
    state.v = std::move(fresh.v);
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params.tensors) {
    auto g = grads.find(name);
    require(g != grads.end(), ErrorKind::shape, "no gradient for parameter '" + name + "'");
    Tensor<float>& m = state.m.at(name);
    Tensor<float>& v = state.v.at(name);
    require(g->second.shape == p.shape && m.shape == p.shape && v.shape == p.shape, ErrorKind::shape,
            "adam: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g->second.data[i];
      const double mi = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      p.data[i] = static_cast<float>(p.data[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps));
    }
  }
  params.step += 1;
}

}  // namespace fitdeblur

#pragma once

#include <cmath>
#include <map>
#include <string>

#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip::ad {

using ParamStore = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// Global L2 norm across all gradient tensors.
inline double grad_global_norm(const GradMap& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.data) acc += x * x;
  return std::sqrt(acc);
}

// Scales all gradients so the global norm is at most max_norm. Returns the
// pre-clip norm.
inline double clip_grad_norm(GradMap& grads, double max_norm) {
  const double norm = grad_global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.data) x *= s;
  }
  return norm;
}

// One Adam update over every parameter. Parameters missing from grads are
// treated as zero-gradient (moments still decay). A NaN gradient entry aborts
// with an error naming the parameter.
inline void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const Tensor* g = nullptr;
    if (auto it = grads.find(name); it != grads.end()) {
      if (it->second.shape != p.shape)
        throw ShapeError("adam_step: gradient for '" + name + "' has shape " +
                         shape_str(it->second.shape) + ", parameter is " + shape_str(p.shape));
      g = &it->second;
    }
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    for (size_t j = 0; j < p.numel(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      if (std::isnan(gj))
        throw NumericError("adam_step: NaN gradient in parameter '" + name + "'");
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace comanip::ad

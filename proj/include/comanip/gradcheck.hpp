#pragma once

#include <algorithm>
#include <map>
#include <string>

#include "comanip/adam.hpp"
#include "comanip/graph.hpp"

namespace comanip::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::map<std::string, double> per_param;
  bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Central finite differences (step h) against reverse-mode gradients for every
// element of every parameter. `params` is perturbed in place and restored.
inline GradCheckReport grad_check(const Graph& g, const Binding& inputs, ParamStore& params,
                                  double h = 1e-5, int out = -1) {
  Binding binds = inputs;
  for (auto& [name, t] : params) binds.set(name, t);

  Evaluation ev(g);
  ev.forward(binds);
  const GradMap ad_grads = ev.backward(out);

  const int out_id = out < 0 ? g.size() - 1 : out;
  GradCheckReport rep;
  for (auto& [name, p] : params) {
    auto it = ad_grads.find(name);
    if (it == ad_grads.end()) continue;  // not a leaf of this graph
    const Tensor& ag = it->second;
    double worst = 0.0;
    for (size_t j = 0; j < p.numel(); ++j) {
      const double keep = p[j];
      p[j] = keep + h;
      ev.forward(binds);
      const double f_plus = ev.value(out_id)[0];
      p[j] = keep - h;
      ev.forward(binds);
      const double f_minus = ev.value(out_id)[0];
      p[j] = keep;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      worst = std::max(worst, rel_err(ag[j], fd));
    }
    rep.per_param[name] = worst;
    if (worst > rep.max_rel_err) {
      rep.max_rel_err = worst;
      rep.worst_param = name;
    }
  }
  // restore a consistent forward state
  ev.forward(binds);
  return rep;
}

}  // namespace comanip::ad

#pragma once

#include <cmath>
#include <vector>

#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip::diff {

// Cosine variance schedule. beta[t-1] covers step t in 1..steps; alpha_bar has
// steps+1 entries with alpha_bar[0] = 1 and alpha_bar[t] the running product
// of (1 - beta) after clipping, so the product identity holds exactly and
// alpha_bar stays positive even though the raw cosine hits zero at t = steps.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  static NoiseSchedule cosine(int steps, double s = 0.008, double beta_clip = 0.999) {
    if (steps < 2) throw ValueError("noise schedule needs at least 2 steps");
    auto f = [&](double t) {
      const double u = (t / steps + s) / (1.0 + s) * M_PI / 2.0;
      const double c = std::cos(u);
      return c * c;
    };
    NoiseSchedule sch;
    sch.steps = steps;
    sch.beta.resize(static_cast<size_t>(steps));
    sch.alpha_bar.resize(static_cast<size_t>(steps) + 1);
    sch.alpha_bar[0] = 1.0;
    const double f0 = f(0.0);
    double prev_raw = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double raw = f(static_cast<double>(t)) / f0;
      double b = 1.0 - raw / prev_raw;
      if (b > beta_clip) b = beta_clip;
      sch.beta[static_cast<size_t>(t - 1)] = b;
      sch.alpha_bar[static_cast<size_t>(t)] = sch.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - b);
      prev_raw = raw;
    }
    return sch;
  }
};

// y_t = sqrt(abar_t) y + sqrt(1 - abar_t) eps, 1 <= t <= steps.
inline Tensor forward_diffuse(const Tensor& y, int t, const NoiseSchedule& sch,
                              const Tensor& eps) {
  if (t < 1 || t > sch.steps)
    throw ValueError("forward_diffuse: t=" + std::to_string(t) + " outside 1.." +
                     std::to_string(sch.steps));
  if (y.shape != eps.shape) throw ShapeError("forward_diffuse: y and eps shapes differ");
  const double ab = sch.alpha_bar[static_cast<size_t>(t)];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(y.shape);
  for (size_t i = 0; i < y.numel(); ++i) out[i] = a * y[i] + b * eps[i];
  return out;
}

// The K deterministic sampling indices, evenly strided from steps down, with
// an implicit final hop to 0. steps=100, K=20 gives 100, 95, ..., 5.
inline std::vector<int> ddim_indices(int steps, int k) {
  if (k < 1 || k > steps) throw ValueError("ddim: K must be in 1..steps");
  std::vector<int> ts(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) ts[static_cast<size_t>(i)] = steps - (i * steps) / k;
  return ts;
}

}  // namespace comanip::diff

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "streamdf/encoder.hpp"

namespace streamdf::testing {

// Guarded relative error: purely relative for healthy magnitudes, absolute
// below the floor so true-zero gradients are not compared against
// finite-difference noise.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences over every parameter entry against an analytic
// gradient; the loss callback re-evaluates with the perturbed parameters.
inline FdReport fd_check(Encoder& encoder, const std::function<double()>& loss_fn,
                         const Parameters& analytic, double step = 1e-5) {
  FdReport report;
  auto tensors = encoder.params().named_tensors();
  auto grads = analytic.named_tensors();
  for (size_t t = 0; t < tensors.size(); ++t) {
    Matrix& m = *tensors[t].second;
    const Matrix& g = *grads[t].second;
    for (size_t i = 0; i < m.data.size(); ++i) {
      double saved = m.data[i];
      m.data[i] = saved + step;
      double up = loss_fn();
      m.data[i] = saved - step;
      double down = loss_fn();
      m.data[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double e = rel_err(g.data[i], numeric);
      if (e > report.max_rel_err)
        report = {e, tensors[t].first, i, g.data[i], numeric};
    }
  }
  return report;
}

}  // namespace streamdf::testing

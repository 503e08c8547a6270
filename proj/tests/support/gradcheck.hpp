#pragma once

// Central finite-difference gradient checking, framework-free so both the
// unit tests and the acceptance suite can use it. The loss function must
// recompute the full forward path from current parameter values.

#include "dct/nn.hpp"

#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dct_test {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;
  int coords_checked = 0;
};

// rel err = |analytic - numeric| / max(1, |analytic|, |numeric|), i.e.
// absolute near zero and relative elsewhere.
template <typename S>
GradCheckReport check_gradients(const std::vector<dct::Param<S>*>& params,
                                const std::function<double()>& loss_fn,
                                const std::function<void()>& compute_grads,
                                double step, double tolerance) {
  dct::zero_grads(params);
  compute_grads();

  GradCheckReport report;
  for (dct::Param<S>* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      S saved = p->value.data()[i];
      p->value.data()[i] = saved + static_cast<S>(step);
      double up = loss_fn();
      p->value.data()[i] = saved - static_cast<S>(step);
      double down = loss_fn();
      p->value.data()[i] = saved;

      double numeric = (up - down) / (2.0 * step);
      double analytic = static_cast<double>(p->grad.data()[i]);
      double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
      double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        std::ostringstream os;
        os << p->name << "[" << i << "] analytic=" << analytic << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  if (report.max_rel_err > tolerance) {
    throw std::runtime_error("gradient check failed: max rel err " +
                             std::to_string(report.max_rel_err) + " at " + report.worst);
  }
  return report;
}

}  // namespace dct_test

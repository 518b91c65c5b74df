#pragma once

#include "mixer/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mixer {

struct GradCheckResult {
  std::string group;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences of `forward` w.r.t. every entry of `param`,
// compared against `analytic`. Returns ||fd - analytic|| / max(||fd|| +
// ||analytic||, floor).
double finite_diff_error(const std::function<double()>& forward, Value param,
                         const Mat& analytic, double step = 1e-5);

// The full suite over fusion, transformation heads and the margin loss
// (d=8, e=4, h2=4, C=8, seeds 0-4). `corrupt` perturbs one analytic
// gradient so the detector itself can be verified.
std::vector<GradCheckResult> run_grad_checks(double tolerance = 1e-4,
                                             bool corrupt = false);

}  // namespace mixer

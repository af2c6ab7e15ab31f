#ifndef DTUNE_AD_GRAD_CHECK_HPP_
#define DTUNE_AD_GRAD_CHECK_HPP_

#include <functional>
#include <string>

#include "dtune/ad/param_set.hpp"
#include "dtune/ad/tape.hpp"

namespace dtune::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Entries whose analytic and numeric values differ by less than this are
  // counted as exact agreement. Parameters with an identically zero gradient
  // (e.g. the key bias under softmax) otherwise produce pure rounding noise
  // in the relative error.
  double abs_floor = 1e-9;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  long worst_index = -1;
  long checked = 0;
  bool passed = true;
};

// Compares reverse-mode gradients of `loss` against central differences on
// every scalar of `params`. `loss` must build its scalar on the given tape
// deterministically (no dropout). Leaves params' values unchanged; their
// gradient slots hold the analytic gradient on return.
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace dtune::ad

#endif  // DTUNE_AD_GRAD_CHECK_HPP_

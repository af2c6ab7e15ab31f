#include "dtune/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dtune::ad {

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, ParamSet& params,
                           const GradCheckOptions& options) {
  params.zero_grads();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&]() {
    Tape tape;
    return loss(tape).scalar();
  };

  GradCheckReport report;
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& w = p.value.data()[i];
      const double saved = w;
      w = saved + options.step;
      const double up = eval();
      w = saved - options.step;
      const double down = eval();
      w = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p.grad.data()[i];
      const double abs_err = std::abs(analytic - numeric);
      double rel = 0.0;
      if (abs_err > options.abs_floor) {
        rel = abs_err / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
      }
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = static_cast<long>(i);
      }
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace dtune::ad

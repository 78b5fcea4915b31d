#ifndef SPARSERNN_GRADCHECK_HPP
#define SPARSERNN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sparsernn/autodiff.hpp"

namespace sparsernn {

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per input tensor
  double tolerance = 0;
  bool passed = false;
  bool numeric_error = false;  // function produced NaN/Inf somewhere
  std::string message;
};

// Compares backward() gradients with central finite differences.
//
// Relative error per element is |analytic - numeric| / max(|analytic|, |numeric|, floor)
// with floor = 1e-6, so entries whose true gradient is zero are judged absolutely.
template <class Scalar>
GradCheckReport grad_check(const std::function<ad::Var<Scalar>(std::span<const ad::Var<Scalar>>)>& fn,
                           std::vector<Tensor<Scalar>> point, double step, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  if (!(step > 0)) throw UsageError("grad_check: step must be positive");
  constexpr double floor = 1e-6;

  auto evaluate = [&](const std::vector<Tensor<Scalar>>& at) -> double {
    std::vector<ad::Var<Scalar>> inputs;
    inputs.reserve(at.size());
    for (const auto& t : at) inputs.push_back(ad::constant<Scalar>(t));
    return static_cast<double>(fn(inputs).item());
  };

  try {
    std::vector<ad::Var<Scalar>> leaves;
    for (const auto& t : point) leaves.push_back(ad::leaf<Scalar>(t));
    ad::Var<Scalar> out = fn(leaves);
    ad::backward(out);

    for (std::size_t k = 0; k < point.size(); ++k) {
      Tensor<Scalar> analytic = leaves[k].grad();
      if (analytic.size() == 0) analytic = Tensor<Scalar>::Zero(point[k].rows(), point[k].cols());
      double worst = 0;
      for (Index i = 0; i < point[k].size(); ++i) {
        auto shifted = point;
        Scalar* data = shifted[k].data();
        const Scalar original = data[i];
        data[i] = original + static_cast<Scalar>(step);
        const double up = evaluate(shifted);
        data[i] = original - static_cast<Scalar>(step);
        const double down = evaluate(shifted);
        if (!std::isfinite(up) || !std::isfinite(down)) {
          report.numeric_error = true;
          report.message = "non-finite function value at input " + std::to_string(k);
          return report;
        }
        const double numeric = (up - down) / (2 * step);
        const double a = static_cast<double>(analytic.data()[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
      report.max_rel_error.push_back(worst);
    }
  } catch (const NumericError& e) {
    report.numeric_error = true;
    report.message = e.what();
    return report;
  }
  report.passed = std::all_of(report.max_rel_error.begin(), report.max_rel_error.end(),
                              [&](double e) { return e <= tolerance; });
  return report;
}

}  // namespace sparsernn

#endif  // SPARSERNN_GRADCHECK_HPP

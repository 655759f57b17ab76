#include "nhop/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nhop {

std::string_view to_string(UpdateRatioForm form) {
  switch (form) {
    case UpdateRatioForm::kConstant: return "constant";
    case UpdateRatioForm::kExponential: return "exponential";
    case UpdateRatioForm::kHyperbolic: return "hyperbolic";
    case UpdateRatioForm::kGeometric: return "geometric";
  }
  return "unknown";
}

UpdateRatioForm parse_update_ratio_form(std::string_view name) {
  for (auto f : {UpdateRatioForm::kConstant, UpdateRatioForm::kExponential, UpdateRatioForm::kHyperbolic,
                 UpdateRatioForm::kGeometric})
    if (to_string(f) == name) return f;
  throw std::invalid_argument("unknown update ratio form '" + std::string(name) + "'");
}

void ScheduleSet::validate() const {
  if (!(c1 > 0.0)) throw std::invalid_argument("c1 must be positive");
  if (c2.empty()) throw std::invalid_argument("c2 needs at least one entry");
  for (double b : c2)
    if (!(b > 0.0 && b <= 1.0)) throw std::invalid_argument("c2 entries must lie in (0, 1]");
  if (!(c3 >= 0.0 && c3 <= 1.0)) throw std::invalid_argument("c3 must lie in [0, 1]");
  switch (u_form) {
    case UpdateRatioForm::kConstant:
      if (!(u_constant >= 0.0 && u_constant < 1.0)) throw std::invalid_argument("constant u must lie in [0, 1)");
      break;
    case UpdateRatioForm::kExponential:
    case UpdateRatioForm::kHyperbolic:
      if (!(c4 > 0.0)) throw std::invalid_argument("c4 must be positive");
      break;
    case UpdateRatioForm::kGeometric:
      if (!(c4 > 0.0 && c4 < 1.0)) throw std::invalid_argument("geometric c4 must lie in (0, 1)");
      break;
  }
}

double ScheduleSet::alpha(std::size_t t) const { return 1.0 / (1.0 + static_cast<double>(t) / c1); }

double ScheduleSet::epsilon(std::size_t learner, std::size_t t) const {
  const double base = c2[std::min(learner, c2.size() - 1)];
  return std::max(std::pow(base, static_cast<double>(t)), c3);
}

double ScheduleSet::update_ratio(std::size_t t) const {
  const double x = static_cast<double>(t);
  switch (u_form) {
    case UpdateRatioForm::kConstant: return u_constant;
    case UpdateRatioForm::kExponential: return -std::expm1(-x / c4);
    case UpdateRatioForm::kHyperbolic: return 1.0 - 1.0 / (1.0 + x / c4);
    case UpdateRatioForm::kGeometric: return 1.0 - std::pow(c4, x);
  }
  return 0.0;
}

std::vector<double> default_epsilon_bases(std::size_t K) {
  if (K == 0) return {};
  if (K == 1) return {0.95};
  if (K == 2) return {0.95, 0.97};
  std::vector<double> out(K, 0.97);
  out.front() = 0.95;
  out.back() = 0.99;
  return out;
}

}  // namespace nhop

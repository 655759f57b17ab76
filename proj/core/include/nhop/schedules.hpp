#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nhop {

enum class UpdateRatioForm {
  kConstant,     ///< u
  kExponential,  ///< 1 - exp(-t / c4)
  kHyperbolic,   ///< 1 - 1 / (1 + t / c4)
  kGeometric,    ///< 1 - c4^t, c4 in (0, 1)
};

std::string_view to_string(UpdateRatioForm form);
/// Accepts "constant", "exponential", "hyperbolic", "geometric".
UpdateRatioForm parse_update_ratio_form(std::string_view name);

/**
 * Step-size, exploration and update-ratio curves:
 *   alpha_t     = 1 / (1 + t / c1)
 *   epsilon_t^n = max(c2[n]^t, c3)
 *   u_t         = one of UpdateRatioForm
 * Learner n uses c2[n]; a list shorter than the ensemble repeats its last entry.
 */
struct ScheduleSet {
  double c1 = 100.0;
  std::vector<double> c2 = {0.95, 0.97, 0.97, 0.99};
  double c3 = 0.01;
  double c4 = 1000.0;
  UpdateRatioForm u_form = UpdateRatioForm::kExponential;
  double u_constant = 0.5;

  /// Throws std::invalid_argument on c1 <= 0, c2 outside (0, 1], c3 outside
  /// [0, 1], or a c4 the chosen form cannot use.
  void validate() const;

  double alpha(std::size_t t) const;
  double epsilon(std::size_t learner, std::size_t t) const;
  double update_ratio(std::size_t t) const;
};

/// Exploration decay bases for K learners ordered from the original
/// environment outwards: 0.95 first, 0.99 last, 0.97 in between.
std::vector<double> default_epsilon_bases(std::size_t K);

}  // namespace nhop

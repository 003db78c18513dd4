#pragma once

#include <cstddef>

namespace obstudy {

struct AdequacyVerdict {
  double achieved_power = 0.0;
  double required_n_per_arm_exact = 0.0;
  std::size_t required_n_per_arm = 0;  // ceiling of the exact value
  bool adequate = false;
};

/// Two-sample normal-approximation power for a standardized effect:
/// required n per arm = 2 (z_{1-alpha/2} + z_power)^2 / effect^2 and
/// achieved power = Phi(effect / sqrt(1/n_t + 1/n_c) - z_{1-alpha/2}).
AdequacyVerdict adequacy_check(std::size_t n_treated, std::size_t n_control, double effect_size, double alpha,
                               double power_target);

}  // namespace obstudy

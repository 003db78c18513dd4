#include "obstudy/power.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "obstudy/error.hpp"

namespace obstudy {

AdequacyVerdict adequacy_check(std::size_t n_treated, std::size_t n_control, double effect_size, double alpha,
                               double power_target) {
  if (n_treated < 1 || n_control < 1) fail(ErrorKind::domain, "arm sizes must be >= 1");
  if (!(alpha > 0 && alpha < 1)) fail(ErrorKind::domain, "alpha must lie in (0,1)");
  if (!(power_target > 0 && power_target < 1)) fail(ErrorKind::domain, "power target must lie in (0,1)");
  if (!(effect_size > 0) || !std::isfinite(effect_size)) fail(ErrorKind::domain, "effect size must be positive");

  const boost::math::normal_distribution<double> z;
  const double z_alpha = boost::math::quantile(z, 1.0 - alpha / 2.0);
  const double z_power = boost::math::quantile(z, power_target);

  AdequacyVerdict v;
  v.required_n_per_arm_exact = 2.0 * (z_alpha + z_power) * (z_alpha + z_power) / (effect_size * effect_size);
  v.required_n_per_arm = static_cast<std::size_t>(std::ceil(v.required_n_per_arm_exact - 1e-9));
  const double se = std::sqrt(1.0 / static_cast<double>(n_treated) + 1.0 / static_cast<double>(n_control));
  v.achieved_power = boost::math::cdf(z, effect_size / se - z_alpha);
  v.adequate = v.achieved_power >= power_target;
  return v;
}

}  // namespace obstudy

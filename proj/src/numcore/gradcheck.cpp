#include "lft/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lft/errors.hpp"

namespace lft {

double check_gradients(const GradientFn& f, std::span<const double> params, double eps) {
  if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("check_gradients: eps outside [1e-6, 1e-3]");
  const std::size_t n = params.size();
  std::vector<double> analytic(n, 0.0);
  std::vector<double> scratch(n, 0.0);
  f(params, analytic);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(analytic[i])) {
      throw NonFiniteGradient("check_gradients: gradient component " + std::to_string(i) +
                              " is not finite");
    }
  }
  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probe[i] = params[i] + eps;
    const double up = f(probe, scratch);
    probe[i] = params[i] - eps;
    const double down = f(probe, scratch);
    probe[i] = params[i];
    const double central = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - central) / (std::abs(central) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace lft
